//! Wrapper feature selection: bitmask chromosomes evolved against the
//! cross-validated accuracy of an SVM trained on the masked columns.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorClass, Result};
use crate::evaluation;
use crate::ga::{evolve_detailed, EvolutionTrace, GaConfig, GeneDomain};
use crate::rng::RngSpec;
use crate::scoring::FeatureScoreTable;
use crate::survey::FeatureMatrix;
use crate::svm::{SvmClassifier, SvmConfig};

/// Roulette selection needs strictly positive fitness, so penalized mask
/// fitness is floored at this value inside the loop. Reported accuracies
/// are never floored.
const FITNESS_FLOOR: f64 = 1e-6;

/// Which columns of a feature matrix a model may see. At least one bit set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub bits: Vec<bool>,
}

impl FeatureMask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.contains(&true) {
            return Err(Error::EmptyMask);
        }
        Ok(FeatureMask { bits })
    }

    pub fn full(width: usize) -> Result<Self> {
        FeatureMask::new(vec![true; width])
    }

    pub fn from_genes(genes: &[u32]) -> Result<Self> {
        FeatureMask::new(genes.iter().map(|&g| g != 0).collect())
    }

    pub fn to_genes(&self) -> Vec<u32> {
        self.bits.iter().map(|&b| b as u32).collect()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Outcome of a selection run over one feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub feature_names: Vec<String>,
    pub best_mask: FeatureMask,
    pub cv_accuracy: f64,
    /// Share of the final population selecting each feature, in [0, 1].
    pub per_feature_frequency: Vec<f64>,
    pub trace: EvolutionTrace,
}

fn majority_share(fm: &FeatureMatrix) -> Result<f64> {
    let labels = fm.labels()?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    Ok(*counts.values().max().unwrap() as f64 / labels.len() as f64)
}

/// Cross-validated SVM accuracy on the masked columns, minus
/// `lambda * popcount / D`. A mask whose columns cannot support training at
/// all (constant features, degenerate folds) scores the majority-class rate
/// instead of failing.
pub fn mask_fitness(
    mask: &FeatureMask,
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
    lambda: f64,
    folds: usize,
    rng: RngSpec,
) -> Result<f64> {
    if folds < 2 {
        return Err(Error::Config { message: format!("need at least 2 folds, got {folds}") });
    }
    let labels = fm.labels()?;
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClassInput);
    }
    let masked = fm.select_columns(&mask.bits)?;
    let classifier = SvmClassifier { config: svm_config.clone() };
    let accuracy = match evaluation::evaluate_pipeline(&masked, &classifier, folds, rng) {
        Ok((report, _)) => report.accuracy,
        Err(Error::SingleClassInput) => majority_share(fm)?,
        Err(e) if e.class() == ErrorClass::Internal => majority_share(fm)?,
        Err(e) => return Err(e),
    };
    Ok(accuracy - lambda * mask.popcount() as f64 / mask.bits.len() as f64)
}

/// Evolves feature masks, scoring each by [`mask_fitness`] with no parsimony
/// penalty. The full mask and every singleton mask are injected into the
/// initial population, so the winner can never score below them.
pub fn select_features(
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
    ga_config: &GaConfig,
    folds: usize,
    rng: RngSpec,
) -> Result<SelectionResult> {
    select_features_penalized(fm, svm_config, ga_config, 0.0, folds, rng)
}

/// [`select_features`] with an explicit parsimony penalty. Ties are broken
/// in favor of fewer features, then the lexicographically smaller mask.
pub fn select_features_penalized(
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
    ga_config: &GaConfig,
    lambda: f64,
    folds: usize,
    rng: RngSpec,
) -> Result<SelectionResult> {
    let width = fm.n_features();
    if width < 2 {
        return Err(Error::Config {
            message: format!("feature selection needs at least 2 features, got {width}"),
        });
    }

    let mut config = ga_config.clone();
    config.gene_count = width;
    config.domain = GeneDomain::bits();

    let mut seeds: Vec<Vec<u32>> = vec![vec![1; width]];
    for i in 0..width {
        let mut genes = vec![0; width];
        genes[i] = 1;
        seeds.push(genes);
    }

    // Every mask's folds come from the same RngSpec, so fitness values are
    // comparable across masks and reproducible by re-deriving the partition.
    let mut accuracy_by_mask: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let penalty = |genes: &[u32]| {
        lambda * genes.iter().filter(|&&g| g != 0).count() as f64 / width as f64
    };
    let run = evolve_detailed(
        |genes: &[u32]| {
            let accuracy = match accuracy_by_mask.get(genes) {
                Some(&a) => a,
                None => {
                    let mask = FeatureMask::from_genes(genes)?;
                    let a = mask_fitness(&mask, fm, svm_config, 0.0, folds, rng)?;
                    accuracy_by_mask.insert(genes.to_vec(), a);
                    a
                }
            };
            Ok((accuracy - penalty(genes)).max(FITNESS_FLOOR))
        },
        &seeds,
        |genes: &mut [u32], repair_rng: &mut ChaCha8Rng| {
            if genes.iter().all(|&g| g == 0) {
                genes[repair_rng.gen_range(0..genes.len())] = 1;
            }
        },
        &config,
        rng,
    )?;

    let mut best: Option<(&Vec<u32>, f64, usize)> = None;
    for (genes, &accuracy) in &accuracy_by_mask {
        let fitness = accuracy - penalty(genes);
        let bits = genes.iter().filter(|&&g| g != 0).count();
        let better = match best {
            None => true,
            Some((_, f, b)) => fitness > f || (fitness == f && bits < b),
        };
        if better {
            best = Some((genes, fitness, bits));
        }
    }
    let (genes, _, _) = best.unwrap();

    let per_feature_frequency = (0..width)
        .map(|j| {
            run.population.iter().filter(|c| c.genes[j] != 0).count() as f64
                / run.population.len() as f64
        })
        .collect();

    Ok(SelectionResult {
        feature_names: fm.feature_names.clone(),
        best_mask: FeatureMask::from_genes(genes)?,
        cv_accuracy: accuracy_by_mask[genes],
        per_feature_frequency,
        trace: run.trace,
    })
}

/// One feature's line in the selection summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub feature: String,
    pub score: f64,
    pub selected: bool,
    pub frequency: f64,
}

/// Joins a score table with a selection outcome, ordered like the score
/// table (score descending, names breaking ties). Both sides must cover
/// exactly the same features.
pub fn selection_report(
    result: &SelectionResult,
    scores: &FeatureScoreTable,
) -> Result<Vec<SelectionRow>> {
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in result.feature_names.iter().enumerate() {
        by_name.insert(name, i);
    }
    if scores.rows.len() != result.feature_names.len() {
        return Err(Error::FeatureUniverseMismatch {
            detail: format!(
                "{} scored features vs {} selectable",
                scores.rows.len(),
                result.feature_names.len()
            ),
        });
    }
    scores
        .rows
        .iter()
        .map(|entry| {
            let &i = by_name.get(entry.feature.as_str()).ok_or_else(|| {
                Error::FeatureUniverseMismatch {
                    detail: format!("scored feature {:?} was never a selection candidate", entry.feature),
                }
            })?;
            Ok(SelectionRow {
                feature: entry.feature.clone(),
                score: entry.score,
                selected: result.best_mask.bits[i],
                frequency: result.per_feature_frequency[i],
            })
        })
        .collect()
}
