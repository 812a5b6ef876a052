//! Feature scoring: a weight per feature is tuned by the GA to minimize the
//! root-mean-square residual between a linear combination of encoded
//! features and each respondent's recommendation target. The tuned weights
//! are reported as the feature scores.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{self, GaConfig, GeneDomain};
use crate::rng::RngSpec;
use crate::survey::FeatureMatrix;

/// Regression instance: encoded features, one target per respondent in
/// [0,1], and the quantization step for GA weight genes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringProblem {
    pub matrix: FeatureMatrix,
    pub targets: Vec<f64>,
    pub weight_resolution: f64,
}

pub const DEFAULT_WEIGHT_RESOLUTION: f64 = 0.01;

impl ScoringProblem {
    pub fn new(matrix: FeatureMatrix, targets: Vec<f64>, weight_resolution: f64) -> Result<Self> {
        if !(weight_resolution > 0.0 && weight_resolution <= 1.0) {
            return Err(Error::Config {
                message: format!("weight resolution {weight_resolution} is outside (0,1]"),
            });
        }
        if targets.len() != matrix.n_rows() {
            return Err(Error::LengthMismatch { left: targets.len(), right: matrix.n_rows() });
        }
        for (i, t) in targets.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::InvalidRange { what: format!("target {t} at row {i}") });
            }
        }
        for (i, row) in matrix.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteFeature { row: i, column: j });
                }
            }
        }
        if matrix.n_rows() < matrix.n_features() {
            log::warn!(
                "scoring {} features from only {} rows; weights may be underdetermined",
                matrix.n_features(),
                matrix.n_rows()
            );
        }
        Ok(ScoringProblem { matrix, targets, weight_resolution })
    }

    /// Targets from class labels, mapped linearly with class 0 (the best) at
    /// 1.0 and the last class at 0.0.
    pub fn from_labeled(matrix: FeatureMatrix, weight_resolution: f64) -> Result<Self> {
        let labels = matrix.labels()?.to_vec();
        let classes = matrix.class_names.len();
        for (i, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::UnknownClass { id: label, class_count: classes });
            }
            let _ = i;
        }
        let targets = labels
            .iter()
            .map(|&label| {
                if classes < 2 {
                    1.0
                } else {
                    (classes - 1 - label) as f64 / (classes - 1) as f64
                }
            })
            .collect();
        ScoringProblem::new(matrix, targets, weight_resolution)
    }

    /// Highest gene value: genes run 0..=levels, decoding to weights 0..=1.
    pub fn gene_levels(&self) -> u32 {
        (1.0 / self.weight_resolution).round() as u32
    }

    pub fn decode(&self, genes: &[u32]) -> Vec<f64> {
        genes.iter().map(|&g| (g as f64 * self.weight_resolution).min(1.0)).collect()
    }

    pub fn quantize(&self, weight: f64) -> u32 {
        ((weight / self.weight_resolution).round() as u32).min(self.gene_levels())
    }
}

/// Residual magnitude and its fitness: fitness = 1/(1 + residual), so a
/// perfect reconstruction scores exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringFitness {
    pub residual: f64,
    pub fitness: f64,
}

/// Per-row residuals of the weighted reconstruction: target minus the
/// weighted feature sum.
pub fn residuals(weights: &[f64], problem: &ScoringProblem) -> Result<Vec<f64>> {
    let d = problem.matrix.n_features();
    if weights.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: weights.len() });
    }
    for w in weights {
        if !(0.0..=1.0).contains(w) {
            return Err(Error::InvalidRange { what: format!("weight {w} outside [0,1]") });
        }
    }
    if problem.matrix.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(problem
        .matrix
        .values
        .iter()
        .zip(&problem.targets)
        .map(|(row, y)| y - row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>())
        .collect())
}

/// Root-mean-square of the residuals and the induced fitness.
pub fn total_residual(weights: &[f64], problem: &ScoringProblem) -> Result<ScoringFitness> {
    let r = residuals(weights, problem)?;
    let residual = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    Ok(ScoringFitness { residual, fitness: ga::fitness_from_objective(residual)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

/// Feature scores sorted descending, ties broken by feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScoreTable {
    pub rows: Vec<FeatureScore>,
}

impl FeatureScoreTable {
    pub fn new(mut rows: Vec<FeatureScore>) -> Self {
        rows.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.feature.cmp(&b.feature))
        });
        FeatureScoreTable { rows }
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.feature == feature).map(|r| r.score)
    }

    /// CSV `feature,score`, scores at four decimal places.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("feature,score\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.4}\n", r.feature, r.score));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "feature,score" => {}
            _ => return Err(Error::MissingHeader),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (feature, score) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
                row,
                message: "expected feature,score".to_string(),
            })?;
            let score: f64 = score.trim().parse().map_err(|e| Error::Parse {
                row,
                message: format!("bad score: {e}"),
            })?;
            rows.push(FeatureScore { feature: feature.to_string(), score });
        }
        Ok(FeatureScoreTable::new(rows))
    }
}

pub fn export_score_table(table: &FeatureScoreTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv_string())?;
    Ok(())
}

pub fn load_score_table(path: &Path) -> Result<FeatureScoreTable> {
    FeatureScoreTable::from_csv_str(&std::fs::read_to_string(path)?)
}

/// Tunes one weight per feature by GA, maximizing the residual fitness, and
/// returns the best weights as the score table. Gene count and domain follow
/// the problem; the remaining GA knobs are taken from `ga`. The equal-weights
/// member is always seeded, so the result never scores below it.
pub fn score_features(
    problem: &ScoringProblem,
    ga: &GaConfig,
    rng: RngSpec,
) -> Result<FeatureScoreTable> {
    let d = problem.matrix.n_features();
    if d == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut config = ga.clone();
    config.gene_count = d;
    config.domain = GeneDomain::new(0, problem.gene_levels())?;

    let equal = problem.quantize(1.0 / d as f64);
    let (best, _) = ga::evolve_seeded(
        |genes| Ok(total_residual(&problem.decode(genes), problem)?.fitness),
        &[vec![equal; d]],
        &config,
        rng,
    )?;

    let weights = problem.decode(&best.genes);
    Ok(FeatureScoreTable::new(
        problem
            .matrix
            .feature_names
            .iter()
            .zip(weights)
            .map(|(feature, score)| FeatureScore { feature: feature.clone(), score })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(values: Vec<Vec<f64>>, names: &[&str]) -> FeatureMatrix {
        FeatureMatrix {
            values,
            labels: None,
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            class_names: Vec::new(),
        }
    }

    fn single_column(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn ga_config(pop: usize, generations: usize) -> GaConfig {
        let mut config = GaConfig::new(pop, 1, GeneDomain::bits());
        config.max_generations = generations;
        config
    }

    #[test]
    fn perfect_reconstruction_hits_fitness_one() {
        let y = vec![0.2, 0.9, 0.5];
        let problem =
            ScoringProblem::new(matrix(single_column(&y), &["f"]), y.clone(), 0.01).unwrap();
        let f = total_residual(&[1.0], &problem).unwrap();
        assert_eq!(f.residual, 0.0);
        assert_eq!(f.fitness, 1.0);
    }

    #[test]
    fn single_large_residual_among_nine() {
        let mut xs = vec![0.0; 9];
        xs[0] = -3.0;
        let problem =
            ScoringProblem::new(matrix(single_column(&xs), &["f"]), vec![0.0; 9], 0.01).unwrap();
        let f = total_residual(&[1.0], &problem).unwrap();
        assert_eq!(f.residual, 1.0);
        assert_eq!(f.fitness, 0.5);
    }

    #[test]
    fn residual_matches_hand_computation() {
        let values = vec![
            vec![0.2, 0.4, 0.6],
            vec![1.0, 0.0, 0.5],
            vec![0.3, 0.3, 0.3],
            vec![0.8, 0.1, 0.0],
            vec![0.5, 0.5, 1.0],
        ];
        let problem =
            ScoringProblem::new(matrix(values, &["a", "b", "c"]), vec![0.5; 5], 0.01).unwrap();
        let f = total_residual(&[0.5, 0.25, 0.25], &problem).unwrap();
        assert!((f.residual - 0.1409787).abs() < 1e-6, "residual {}", f.residual);
        assert!((f.fitness - 1.0 / (1.0 + 0.1409787)).abs() < 1e-6);
    }

    #[test]
    fn weight_vector_validation() {
        let problem =
            ScoringProblem::new(matrix(single_column(&[0.5]), &["f"]), vec![0.5], 0.01).unwrap();
        assert!(matches!(
            total_residual(&[0.5, 0.5], &problem),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(matches!(total_residual(&[1.5], &problem), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn problem_validation() {
        let err = ScoringProblem::new(matrix(single_column(&[0.5]), &["f"]), vec![2.0], 0.01);
        assert!(matches!(err, Err(Error::InvalidRange { .. })));
        let err = ScoringProblem::new(matrix(single_column(&[0.5]), &["f"]), vec![0.5, 0.5], 0.01);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
        let err = ScoringProblem::new(matrix(single_column(&[f64::NAN]), &["f"]), vec![0.5], 0.01);
        assert!(matches!(err, Err(Error::NonFiniteFeature { row: 0, column: 0 })));
        let err = ScoringProblem::new(matrix(single_column(&[0.5]), &["f"]), vec![0.5], 0.0);
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn labeled_targets_map_best_class_to_one() {
        let mut m = matrix(single_column(&[0.1, 0.2, 0.3]), &["f"]);
        m.labels = Some(vec![0, 2, 5]);
        m.class_names = (0..6).map(|i| format!("c{i}")).collect();
        let problem = ScoringProblem::from_labeled(m, 0.01).unwrap();
        assert_eq!(problem.targets, vec![1.0, 0.6, 0.0]);
    }

    #[test]
    fn quantization_round_trips_weights() {
        let problem =
            ScoringProblem::new(matrix(single_column(&[0.5]), &["f"]), vec![0.5], 0.01).unwrap();
        assert_eq!(problem.gene_levels(), 100);
        assert_eq!(problem.quantize(0.56), 56);
        assert_eq!(problem.decode(&[56]), vec![0.56]);
        assert_eq!(problem.decode(&[100]), vec![1.0]);
    }

    #[test]
    fn identity_feature_scores_one() {
        let y = vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.2, 0.8];
        let problem =
            ScoringProblem::new(matrix(single_column(&y), &["f"]), y.clone(), 0.01).unwrap();
        let table = score_features(&problem, &ga_config(8, 30), RngSpec::new(1)).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].score >= 0.99, "score {}", table.rows[0].score);
    }

    #[test]
    fn noise_feature_scores_below_predictive_one() {
        let y: Vec<f64> = (0..30).map(|i| (i % 10) as f64 / 10.0).collect();
        let noise: Vec<f64> = (0..30).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0).collect();
        let values: Vec<Vec<f64>> = y.iter().zip(&noise).map(|(&a, &b)| vec![a, b]).collect();
        let problem =
            ScoringProblem::new(matrix(values, &["signal", "noise"]), y.clone(), 0.01).unwrap();

        let mut signal_scores = Vec::new();
        let mut noise_scores = Vec::new();
        for seed in 0..20 {
            let table = score_features(&problem, &ga_config(10, 25), RngSpec::new(seed)).unwrap();
            signal_scores.push(table.get("signal").unwrap());
            noise_scores.push(table.get("noise").unwrap());
        }
        signal_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        noise_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            noise_scores[10] < signal_scores[10],
            "median noise {} is not below median signal {}",
            noise_scores[10],
            signal_scores[10]
        );
    }

    #[test]
    fn recovers_known_optimum_within_tolerance() {
        // y is built as x * (0.6, 0.3, 0.1) exactly, so that weight vector is
        // the unique least-squares optimum with residual zero.
        let truth = [0.6, 0.3, 0.1];
        let values: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                vec![
                    (i % 4) as f64 / 3.0,
                    ((i / 4) % 3) as f64 / 2.0,
                    ((i * 5 + 2) % 7) as f64 / 6.0,
                ]
            })
            .collect();
        let y: Vec<f64> = values
            .iter()
            .map(|row| row.iter().zip(truth).map(|(x, w)| x * w).sum())
            .collect();
        let problem = ScoringProblem::new(matrix(values, &["a", "b", "c"]), y, 0.01).unwrap();

        let mut config = ga_config(24, 80);
        config.target_fitness = Some(1.0);
        let table = score_features(&problem, &config, RngSpec::new(7)).unwrap();
        for (feature, expected) in ["a", "b", "c"].iter().zip(truth) {
            let got = table.get(feature).unwrap();
            assert!(
                (got - expected).abs() <= 0.05,
                "{feature}: weight {got} strays from optimum {expected}"
            );
        }
    }

    #[test]
    fn result_never_scores_below_equal_weights() {
        let values: Vec<Vec<f64>> =
            (0..10).map(|i| vec![(i % 3) as f64 / 2.0, (i % 5) as f64 / 4.0]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i % 4) as f64 / 3.0).collect();
        let problem = ScoringProblem::new(matrix(values, &["a", "b"]), y, 0.01).unwrap();
        let equal_fitness = total_residual(&[0.5, 0.5], &problem).unwrap().fitness;

        let table = score_features(&problem, &ga_config(6, 10), RngSpec::new(3)).unwrap();
        let weights = vec![table.get("a").unwrap(), table.get("b").unwrap()];
        let best_fitness = total_residual(&weights, &problem).unwrap().fitness;
        assert!(best_fitness >= equal_fitness);
    }

    #[test]
    fn scoring_is_deterministic() {
        let y = vec![0.1, 0.4, 0.8, 0.6];
        let problem =
            ScoringProblem::new(matrix(single_column(&y), &["f"]), y.clone(), 0.01).unwrap();
        let a = score_features(&problem, &ga_config(6, 15), RngSpec::new(5)).unwrap();
        let b = score_features(&problem, &ga_config(6, 15), RngSpec::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_sorts_descending_with_name_ties() {
        let table = FeatureScoreTable::new(vec![
            FeatureScore { feature: "b".into(), score: 0.3 },
            FeatureScore { feature: "a".into(), score: 0.3 },
            FeatureScore { feature: "c".into(), score: 0.9 },
        ]);
        let order: Vec<&str> = table.rows.iter().map(|r| r.feature.as_str()).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
    }

    #[test]
    fn csv_round_trip_preserves_table() {
        let table = FeatureScoreTable::new(vec![
            FeatureScore { feature: "Efficiency".into(), score: 0.56 },
            FeatureScore { feature: "Effectiveness".into(), score: 0.4435 },
            FeatureScore { feature: "Ease of use".into(), score: 0.343 },
            FeatureScore { feature: "Consistency".into(), score: 0.34 },
            FeatureScore { feature: "Memorability".into(), score: 0.23 },
            FeatureScore { feature: "Learnability".into(), score: 0.2134 },
            FeatureScore { feature: "Cognition".into(), score: 0.12 },
        ]);
        let csv = table.to_csv_string();
        assert!(csv.contains("Efficiency,0.5600"));
        assert!(csv.contains("Effectiveness,0.4435"));
        assert!(csv.contains("Learnability,0.2134"));
        let reloaded = FeatureScoreTable::from_csv_str(&csv).unwrap();
        assert_eq!(reloaded.to_csv_string(), csv);
        assert_eq!(reloaded.rows[0].feature, "Efficiency");
    }

    #[test]
    fn empty_table_exports_header_only() {
        assert_eq!(FeatureScoreTable::new(vec![]).to_csv_string(), "feature,score\n");
    }

    #[test]
    fn csv_parse_errors() {
        assert!(matches!(
            FeatureScoreTable::from_csv_str("wrong,header\n"),
            Err(Error::MissingHeader)
        ));
        assert!(matches!(
            FeatureScoreTable::from_csv_str("feature,score\nf,abc\n"),
            Err(Error::Parse { row: 2, .. })
        ));
    }
}
