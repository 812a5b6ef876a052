//! End-to-end orchestration: dataset in, artifacts out. Each stage draws
//! from its own derived stream, so a config plus a master seed pins every
//! byte of the output directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{compare_models, BaselineSpec, ComparisonTable};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_pipeline, ClassifierSpec, ConfusionMatrix, MetricsReport};
use crate::ga::{GaConfig, GeneDomain};
use crate::report::{build_report, BenchmarkTable, RunMetadata, UsabilityReport, VerdictBands};
use crate::rng::RngSpec;
use crate::scoring::{score_features, FeatureScoreTable, ScoringProblem, DEFAULT_WEIGHT_RESOLUTION};
use crate::selection::{select_features, SelectionResult};
use crate::survey::{
    auto_label, encode, generate_synthetic, load_survey, FeatureMatrix, LabelBands, PolarityRow,
    PolarityTable, SurveyDataset, SynthMode,
};
use crate::svm::{grid_search, random_search, SearchEntry, SvmClassifier, SvmConfig};

const STREAM_SYNTH: u64 = 0x5053_594e;
const STREAM_SCORE: u64 = 0x5053_434f;
const STREAM_TUNE: u64 = 0x5054_554e;
const STREAM_SELECT: u64 = 0x5053_454c;
const STREAM_EVAL: u64 = 0x5045_564c;
const STREAM_COMPARE: u64 = 0x5043_4d50;

/// Where the survey rows come from: a CSV on disk or the synthetic
/// generator fed with per-feature polarity counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        path: String,
        /// question column -> feature name
        schema: BTreeMap<String, String>,
    },
    Synthetic {
        polarity: PolarityTable,
        n: usize,
        mode: SynthMode,
    },
}

/// The GA knobs a config file may set; gene count and domain are fixed by
/// the stage using them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaSettings {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub target_fitness: Option<f64>,
}

impl Default for GaSettings {
    fn default() -> Self {
        GaSettings {
            population_size: 20,
            max_generations: 30,
            crossover_rate: 0.25,
            mutation_rate: 0.10,
            elitism: 1,
            target_fitness: None,
        }
    }
}

impl GaSettings {
    fn config(&self) -> GaConfig {
        let mut c = GaConfig::new(self.population_size, 1, GeneDomain::bits());
        c.crossover_rate = self.crossover_rate;
        c.mutation_rate = self.mutation_rate;
        c.elitism = self.elitism;
        c.max_generations = self.max_generations;
        c.target_fitness = self.target_fitness;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TuneSpec {
    Grid { c_values: Vec<f64>, gamma_values: Vec<f64> },
    Random { c_range: (f64, f64), gamma_range: (f64, f64), n_draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub label_bands: Option<LabelBands>,
    #[serde(default = "default_resolution")]
    pub weight_resolution: f64,
    #[serde(default)]
    pub scoring_ga: GaSettings,
    #[serde(default)]
    pub selection_ga: GaSettings,
    #[serde(default)]
    pub svm: Option<SvmConfig>,
    #[serde(default)]
    pub tune: Option<TuneSpec>,
    #[serde(default)]
    pub benchmarks: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub verdict_bands: Option<VerdictBands>,
}

fn default_folds() -> usize {
    3
}

fn default_resolution() -> f64 {
    DEFAULT_WEIGHT_RESOLUTION
}

impl PipelineConfig {
    /// The built-in synthetic setup: seven usability features with fixed
    /// polarity counts, expanded to 120 respondents.
    pub fn bundled() -> Self {
        let counts: [(&str, [u64; 5]); 7] = [
            ("Efficiency", [48, 22, 21, 8, 7]),
            ("Effectiveness", [38, 26, 18, 6, 9]),
            ("Ease of use", [39, 28, 18, 8, 7]),
            ("Learnability", [41, 27, 21, 4, 5]),
            ("Memorability", [29, 10, 9, 7, 13]),
            ("Cognition", [12, 9, 7, 5, 13]),
            ("Consistency", [9, 7, 6, 4, 14]),
        ];
        let polarity = PolarityTable {
            rows: counts
                .iter()
                .map(|&(feature, counts)| PolarityRow { feature: feature.to_string(), counts })
                .collect(),
        };
        PipelineConfig {
            seed: 7,
            dataset: DatasetSpec::Synthetic { polarity, n: 120, mode: SynthMode::Exact },
            folds: 3,
            label_bands: None,
            weight_resolution: DEFAULT_WEIGHT_RESOLUTION,
            scoring_ga: GaSettings { max_generations: 25, ..GaSettings::default() },
            selection_ga: GaSettings {
                population_size: 10,
                max_generations: 6,
                ..GaSettings::default()
            },
            svm: None,
            tune: Some(TuneSpec::Grid {
                c_values: vec![1.0, 10.0],
                gamma_values: vec![0.2, 1.0],
            }),
            benchmarks: None,
            verdict_bands: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config {
                message: format!("need at least 2 folds, got {}", self.folds),
            });
        }
        if let DatasetSpec::Synthetic { n, .. } = &self.dataset {
            if *n < 2 {
                return Err(Error::Config {
                    message: format!("synthetic dataset needs at least 2 rows, got {n}"),
                });
            }
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    config_digest: String,
    dataset_digest: String,
    version: String,
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    Ok(std::fs::write(dir.join(name), text)?)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// Loads the CSV dataset or generates the synthetic one.
pub fn ingest(config: &PipelineConfig) -> Result<SurveyDataset> {
    let master = RngSpec::new(config.seed);
    match &config.dataset {
        DatasetSpec::Csv { path, schema } => load_survey(Path::new(path), schema),
        DatasetSpec::Synthetic { polarity, n, mode } => {
            generate_synthetic(polarity, *n, *mode, master.derive(&[STREAM_SYNTH]))
        }
    }
    .map_err(|e| e.in_stage("ingest"))
}

/// Encodes responses to [0,1] features and attaches band labels.
pub fn labeled_matrix(config: &PipelineConfig, dataset: &SurveyDataset) -> FeatureMatrix {
    let bands = config.label_bands.clone().unwrap_or_else(LabelBands::default_six);
    auto_label(&encode(dataset), &bands)
}

/// Runs the weight-search GA and returns the ranked score table.
pub fn score(config: &PipelineConfig, fm: &FeatureMatrix) -> Result<FeatureScoreTable> {
    let master = RngSpec::new(config.seed);
    let problem = ScoringProblem::from_labeled(fm.clone(), config.weight_resolution)
        .map_err(|e| e.in_stage("score"))?;
    score_features(&problem, &config.scoring_ga.config(), master.derive(&[STREAM_SCORE]))
        .map_err(|e| e.in_stage("score"))
}

/// Picks the SVM hyperparameters: the configured search if present,
/// otherwise the config's (or default) fixed settings. The entries list
/// is empty when no search ran.
pub fn tune(config: &PipelineConfig, fm: &FeatureMatrix) -> Result<(SvmConfig, Vec<SearchEntry>)> {
    let master = RngSpec::new(config.seed);
    match &config.tune {
        None => {
            let base =
                config.svm.clone().unwrap_or_else(|| SvmConfig::default_for(fm.n_features()));
            base.validate().map_err(|e| e.in_stage("tune"))?;
            Ok((base, Vec::new()))
        }
        Some(TuneSpec::Grid { c_values, gamma_values }) => {
            grid_search(fm, c_values, gamma_values, config.folds, master.derive(&[STREAM_TUNE]))
                .map_err(|e| e.in_stage("tune"))
        }
        Some(TuneSpec::Random { c_range, gamma_range, n_draws }) => random_search(
            fm,
            *c_range,
            *gamma_range,
            *n_draws,
            config.folds,
            master.derive(&[STREAM_TUNE]),
        )
        .map_err(|e| e.in_stage("tune")),
    }
}

/// Evolves the feature mask against the tuned SVM.
pub fn select(
    config: &PipelineConfig,
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
) -> Result<SelectionResult> {
    let master = RngSpec::new(config.seed);
    select_features(
        fm,
        svm_config,
        &config.selection_ga.config(),
        config.folds,
        master.derive(&[STREAM_SELECT]),
    )
    .map_err(|e| e.in_stage("select"))
}

/// Cross-validates the tuned SVM on the selected columns.
pub fn evaluate(
    config: &PipelineConfig,
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
    selection: &SelectionResult,
) -> Result<(MetricsReport, ConfusionMatrix)> {
    let master = RngSpec::new(config.seed);
    let masked =
        fm.select_columns(&selection.best_mask.bits).map_err(|e| e.in_stage("evaluate"))?;
    let classifier = SvmClassifier { config: svm_config.clone() };
    evaluate_pipeline(&masked, &classifier, config.folds, master.derive(&[STREAM_EVAL]))
        .map_err(|e| e.in_stage("evaluate"))
}

/// Cross-validates the SVM and the five baselines on one shared fold
/// partition over the selected columns.
pub fn compare(
    config: &PipelineConfig,
    fm: &FeatureMatrix,
    svm_config: &SvmConfig,
    selection: &SelectionResult,
) -> Result<ComparisonTable> {
    let master = RngSpec::new(config.seed);
    let masked =
        fm.select_columns(&selection.best_mask.bits).map_err(|e| e.in_stage("compare"))?;
    let classifier = SvmClassifier { config: svm_config.clone() };
    let baselines = BaselineSpec::default_suite();
    let mut models: Vec<&dyn ClassifierSpec> = vec![&classifier];
    models.extend(baselines.iter().map(|b| b as &dyn ClassifierSpec));
    compare_models(&models, &masked, config.folds, master.derive(&[STREAM_COMPARE]))
        .map_err(|e| e.in_stage("compare"))
}

/// Joins scores, benchmarks, and the evaluation accuracy into the final
/// verdict table.
pub fn assemble_report(
    config: &PipelineConfig,
    scores: &FeatureScoreTable,
    metrics: &MetricsReport,
    dataset_digest: String,
) -> Result<UsabilityReport> {
    let bench = match &config.benchmarks {
        Some(values) => BenchmarkTable::new(values.clone()).map_err(|e| e.in_stage("report"))?,
        None => BenchmarkTable::bundled(),
    };
    let accuracy_percent: BTreeMap<String, f64> = scores
        .rows
        .iter()
        .map(|r| (r.feature.clone(), metrics.accuracy * 100.0))
        .collect();
    let verdict_bands = config.verdict_bands.clone().unwrap_or_default();
    let metadata = RunMetadata {
        seed: config.seed,
        config_digest: sha256_hex(serde_json::to_string(config)?.as_bytes()),
        dataset_digest,
    };
    build_report(scores, &bench, &accuracy_percent, &verdict_bands, metadata)
        .map_err(|e| e.in_stage("report"))
}

/// Digest of the dataset's canonical CSV form, pinned in the manifest.
pub fn dataset_digest(dataset: &SurveyDataset) -> String {
    sha256_hex(dataset.to_csv_string().as_bytes())
}

/// Runs every stage against `config` and writes the artifact set under
/// `out`: report.json/csv, scores.csv, selection.json, confusion.csv,
/// metrics.json, comparison.csv, trace.csv, and a manifest. The same
/// config and seed always produce identical bytes.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<UsabilityReport> {
    config.validate()?;
    let dataset = ingest(config)?;
    let fm = labeled_matrix(config, &dataset);
    let scores = score(config, &fm)?;
    let (svm_config, _) = tune(config, &fm)?;
    let selection = select(config, &fm, &svm_config)?;
    let (metrics, confusion) = evaluate(config, &fm, &svm_config, &selection)?;
    let comparison = compare(config, &fm, &svm_config, &selection)?;
    let report = assemble_report(config, &scores, &metrics, dataset_digest(&dataset))?;

    std::fs::create_dir_all(out).map_err(|e| Error::from(e).in_stage("write"))?;
    let write = || -> Result<()> {
        write_json(out, "report.json", &report)?;
        write_text(out, "report.csv", &report.to_csv_string())?;
        write_text(out, "scores.csv", &scores.to_csv_string())?;
        write_json(out, "selection.json", &selection)?;
        write_text(out, "confusion.csv", &confusion.to_csv_string())?;
        write_json(out, "metrics.json", &metrics)?;
        write_text(out, "comparison.csv", &comparison.to_csv_string())?;
        write_text(out, "trace.csv", &selection.trace.to_csv_string())?;
        write_json(
            out,
            "manifest.json",
            &Manifest {
                seed: config.seed,
                config_digest: report.metadata.config_digest.clone(),
                dataset_digest: report.metadata.dataset_digest.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        )
    };
    write().map_err(|e| e.in_stage("write"))?;

    Ok(report)
}
