//! Support vector machine trained by sequential minimal optimization, with
//! linear and RBF kernels, one-vs-rest multiclass, and grid/random
//! hyperparameter search.
//!
//! Inputs are expected in [0,1] from the survey encoding; nothing is
//! standardized internally.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{self, ClassifierSpec, FittedClassifier};
use crate::rng::RngSpec;
use crate::survey::FeatureMatrix;

const STREAM_OVR: u64 = 0x4f56_5221;
const STREAM_DRAW: u64 = 0x4452_4157;

/// Alphas at or below this are treated as zero and dropped from the model.
const ALPHA_EPS: f64 = 1e-12;
/// Minimum step for a pair update to count as progress.
const STEP_EPS: f64 = 1e-5;
/// Hard cap on optimization sweeps, converged or not.
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { gamma } = self {
            if !(gamma.is_finite() && *gamma > 0.0) {
                return Err(Error::Config { message: format!("rbf gamma {gamma} must be positive") });
            }
        }
        Ok(())
    }
}

/// Kernel value for a pair of points: dot product, or exp(-gamma d^2).
pub fn kernel_eval(kernel: KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: z.len() });
    }
    Ok(match kernel {
        KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
        KernelSpec::Rbf { gamma } => {
            let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            (-gamma * d2).exp()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_passes: usize,
}

impl SvmConfig {
    /// C=1, rbf with gamma = 1/feature-count, tol 1e-3, 100 stagnant passes.
    pub fn default_for(n_features: usize) -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelSpec::Rbf { gamma: 1.0 / n_features.max(1) as f64 },
            tol: 1e-3,
            max_passes: 100,
        }
    }

    pub fn with_kernel(kernel: KernelSpec) -> Self {
        SvmConfig { c: 1.0, kernel, tol: 1e-3, max_passes: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config { message: format!("C {} must be positive", self.c) });
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config { message: format!("tol {} must be positive", self.tol) });
        }
        Ok(())
    }
}

/// Trained binary machine: support vectors with their signed alpha weights.
/// Every kept alpha is strictly positive, so the vector lists are non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
}

/// Signed distance to the separating surface: sum of dual coefficients times
/// kernel values, plus bias.
pub fn decision_function(model: &SvmModel, x: &[f64]) -> Result<f64> {
    let mut value = model.bias;
    for (sv, coef) in model.support_vectors.iter().zip(&model.dual_coefficients) {
        value += coef * kernel_eval(model.kernel, sv, x)?;
    }
    Ok(value)
}

/// Per-alpha record of a training run, kept for optimality checks: the full
/// alpha vector (zeros included) and how the optimization ended.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainDiagnostics {
    pub alphas: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn validate_training_input(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let width = x.first().map_or(0, |r| r.len());
    for (i, row) in x.iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch { expected: width, got: row.len() });
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row: i, column: j });
            }
        }
    }
    for (i, &label) in y.iter().enumerate() {
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidRange { what: format!("label {label} at row {i}") });
        }
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClassInput);
    }
    Ok(())
}

/// Trains a binary machine by simplified sequential minimal optimization:
/// sweep the points, and for each one violating its optimality condition at
/// tol, update it against a random partner. Stops at the first sweep with no
/// violation (the conditions then hold for every point), after max_passes
/// sweeps that change nothing, or at a hard sweep cap.
pub fn train_binary_detailed(
    x: &[Vec<f64>],
    y: &[f64],
    config: &SvmConfig,
    rng: RngSpec,
) -> Result<(SvmModel, TrainDiagnostics)> {
    config.validate()?;
    validate_training_input(x, y)?;
    let n = x.len();
    let c = config.c;
    let tol = config.tol;

    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel_eval(config.kernel, &x[i], &x[j])?;
            gram[i][j] = k;
            gram[j][i] = k;
        }
    }

    let mut alphas = vec![0.0f64; n];
    let mut bias = 0.0f64;
    // f[i] = current decision value at x[i], maintained incrementally
    let mut f = vec![0.0f64; n];
    let mut rng = rng.rng();

    let mut sweeps = 0;
    let mut stagnant = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        let mut violations = 0;
        let mut changed = 0;
        for i in 0..n {
            let r_i = y[i] * f[i] - 1.0;
            if !((r_i < -tol && alphas[i] < c) || (r_i > tol && alphas[i] > 0.0)) {
                continue;
            }
            violations += 1;

            let j = {
                let draw = rng.gen_range(0..n - 1);
                draw + (draw >= i) as usize
            };
            let (lo, hi) = if y[i] != y[j] {
                ((alphas[j] - alphas[i]).max(0.0), (c + alphas[j] - alphas[i]).min(c))
            } else {
                ((alphas[i] + alphas[j] - c).max(0.0), (alphas[i] + alphas[j]).min(c))
            };
            if lo >= hi {
                continue;
            }
            let eta = 2.0 * gram[i][j] - gram[i][i] - gram[j][j];
            if eta >= 0.0 {
                continue;
            }
            let e_i = f[i] - y[i];
            let e_j = f[j] - y[j];
            let new_j = (alphas[j] - y[j] * (e_i - e_j) / eta).clamp(lo, hi);
            if (new_j - alphas[j]).abs() < STEP_EPS * (new_j + alphas[j] + STEP_EPS) {
                continue;
            }
            let new_i = (alphas[i] + y[i] * y[j] * (alphas[j] - new_j)).clamp(0.0, c);
            let delta_i = y[i] * (new_i - alphas[i]);
            let delta_j = y[j] * (new_j - alphas[j]);

            let b1 = bias - e_i - delta_i * gram[i][i] - delta_j * gram[i][j];
            let b2 = bias - e_j - delta_i * gram[i][j] - delta_j * gram[j][j];
            let new_bias = if new_i > 0.0 && new_i < c {
                b1
            } else if new_j > 0.0 && new_j < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };

            for k in 0..n {
                f[k] += delta_i * gram[i][k] + delta_j * gram[j][k] + (new_bias - bias);
            }
            alphas[i] = new_i;
            alphas[j] = new_j;
            bias = new_bias;
            changed += 1;
        }
        sweeps += 1;
        if violations == 0 {
            converged = true;
            break;
        }
        if changed == 0 {
            stagnant += 1;
            if stagnant >= config.max_passes {
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    // The relative progress threshold blocks steps below roughly 2*C*STEP_EPS
    // against a large partner alpha, which can strand an alpha a hair off the
    // bound it was headed for. Round those onto the bound.
    let dust = 4.0 * STEP_EPS * c;
    for a in alphas.iter_mut() {
        if *a <= dust {
            *a = 0.0;
        } else if *a >= c - dust {
            *a = c;
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&i| alphas[i] > ALPHA_EPS).collect();
    if kept.is_empty() {
        return Err(Error::Internal {
            message: "optimization ended with no support vectors".to_string(),
        });
    }
    let model = SvmModel {
        support_vectors: kept.iter().map(|&i| x[i].clone()).collect(),
        dual_coefficients: kept.iter().map(|&i| alphas[i] * y[i]).collect(),
        bias,
        kernel: config.kernel,
    };
    Ok((model, TrainDiagnostics { alphas, sweeps, converged }))
}

pub fn train_binary(x: &[Vec<f64>], y: &[f64], config: &SvmConfig, rng: RngSpec) -> Result<SvmModel> {
    Ok(train_binary_detailed(x, y, config, rng)?.0)
}

/// Largest violation of the optimality conditions over the training points:
/// zero-alpha points must sit at margin or beyond, boundary alphas at margin
/// or inside, and interior alphas on the margin, all at tolerance `tol`.
pub fn kkt_max_violation(
    x: &[Vec<f64>],
    y: &[f64],
    alphas: &[f64],
    model: &SvmModel,
    config: &SvmConfig,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for ((row, &label), &alpha) in x.iter().zip(y).zip(alphas) {
        let r = label * decision_function(model, row)? - 1.0;
        let violation = if alpha <= ALPHA_EPS {
            -r - config.tol
        } else if alpha >= config.c - ALPHA_EPS {
            r - config.tol
        } else {
            r.abs() - config.tol
        };
        worst = worst.max(violation);
    }
    Ok(worst)
}

/// Dual objective of an alpha vector: sum of alphas minus the quadratic
/// kernel term.
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], alphas: &[f64], kernel: KernelSpec) -> Result<f64> {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alphas[j] == 0.0 {
                continue;
            }
            quad += alphas[i] * alphas[j] * y[i] * y[j] * kernel_eval(kernel, &x[i], &x[j])?;
        }
    }
    Ok(alphas.iter().sum::<f64>() - quad / 2.0)
}

/// One binary machine per class present in the training labels, trained
/// one-vs-rest. Classes never seen in training keep no model and lose every
/// argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvm {
    pub models: BTreeMap<usize, SvmModel>,
    pub class_names: Vec<String>,
}

impl MulticlassSvm {
    /// One decision value per class id; negative infinity for classes with
    /// no model.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut values = vec![f64::NEG_INFINITY; self.class_names.len()];
        for (&class, model) in &self.models {
            values[class] = decision_function(model, x)?;
        }
        Ok(values)
    }

    /// Class with the highest decision value; ties go to the lowest id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let values = self.decision_values(x)?;
        let mut best = 0;
        for (class, &value) in values.iter().enumerate() {
            if value > values[best] {
                best = class;
            }
        }
        Ok(best)
    }
}

/// Trains a one-vs-rest machine per class present in the labels.
pub fn train_multiclass(fm: &FeatureMatrix, config: &SvmConfig, rng: RngSpec) -> Result<MulticlassSvm> {
    let labels = fm.labels()?;
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::SingleClassInput);
    }
    for &label in &present {
        if label >= fm.class_names.len() {
            return Err(Error::UnknownClass { id: label, class_count: fm.class_names.len() });
        }
    }

    let mut models = BTreeMap::new();
    for &class in &present {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let model = train_binary(&fm.values, &y, config, rng.derive(&[STREAM_OVR, class as u64]))?;
        models.insert(class, model);
    }
    Ok(MulticlassSvm { models, class_names: fm.class_names.clone() })
}

/// SVM as a pluggable model spec for the evaluation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub config: SvmConfig,
}

struct FittedSvm {
    model: MulticlassSvm,
}

impl ClassifierSpec for SvmClassifier {
    fn name(&self) -> String {
        match self.config.kernel {
            KernelSpec::Linear => "svm_linear".to_string(),
            KernelSpec::Rbf { .. } => "svm_rbf".to_string(),
        }
    }

    fn fit(&self, train: &FeatureMatrix, rng: RngSpec) -> Result<Box<dyn FittedClassifier>> {
        Ok(Box::new(FittedSvm { model: train_multiclass(train, &self.config, rng)? }))
    }
}

impl FittedClassifier for FittedSvm {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| self.model.predict(r)).collect()
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.model.decision_values(r)).collect()
    }
}

/// One hyperparameter evaluation: the configuration and its cross-validated
/// accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

fn best_entry(table: &[SearchEntry]) -> SearchEntry {
    let mut best = table[0].clone();
    for entry in &table[1..] {
        let better = entry.accuracy > best.accuracy
            || (entry.accuracy == best.accuracy
                && (entry.c < best.c || (entry.c == best.c && entry.gamma < best.gamma)));
        if better {
            best = entry.clone();
        }
    }
    best
}

fn cv_accuracy(fm: &FeatureMatrix, config: SvmConfig, folds: usize, rng: RngSpec) -> Result<f64> {
    let (report, _) = evaluation::evaluate_pipeline(fm, &SvmClassifier { config }, folds, rng)?;
    Ok(report.accuracy)
}

/// Cross-validates every (C, gamma) pair of an rbf grid, all on the same
/// fold partition, and returns the winner with the full table. Ties prefer
/// the smaller C, then the smaller gamma.
pub fn grid_search(
    fm: &FeatureMatrix,
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    rng: RngSpec,
) -> Result<(SvmConfig, Vec<SearchEntry>)> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut table = Vec::with_capacity(c_grid.len() * gamma_grid.len());
    for &c in c_grid {
        for &gamma in gamma_grid {
            let config = SvmConfig { c, ..SvmConfig::with_kernel(KernelSpec::Rbf { gamma }) };
            let accuracy = cv_accuracy(fm, config, folds, rng)?;
            table.push(SearchEntry { c, gamma, accuracy });
        }
    }
    let best = best_entry(&table);
    let config = SvmConfig { c: best.c, ..SvmConfig::with_kernel(KernelSpec::Rbf { gamma: best.gamma }) };
    Ok((config, table))
}

fn log_uniform(range: (f64, f64), rng: &mut rand_chacha::ChaCha8Rng, what: &str) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidRange { what: format!("{what} range [{lo}, {hi}]") });
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok((rng.gen_range(lo.ln()..hi.ln())).exp())
}

/// Samples n_draws (C, gamma) pairs log-uniformly from the given ranges and
/// cross-validates each on the same fold partition as grid_search would use.
pub fn random_search(
    fm: &FeatureMatrix,
    c_range: (f64, f64),
    gamma_range: (f64, f64),
    n_draws: usize,
    folds: usize,
    rng: RngSpec,
) -> Result<(SvmConfig, Vec<SearchEntry>)> {
    if n_draws == 0 {
        return Err(Error::InvalidRange { what: "n_draws 0".to_string() });
    }
    let mut draw_rng = rng.derive(&[STREAM_DRAW]).rng();
    let mut table = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let c = log_uniform(c_range, &mut draw_rng, "C")?;
        let gamma = log_uniform(gamma_range, &mut draw_rng, "gamma")?;
        let config = SvmConfig { c, ..SvmConfig::with_kernel(KernelSpec::Rbf { gamma }) };
        let accuracy = cv_accuracy(fm, config, folds, rng)?;
        table.push(SearchEntry { c, gamma, accuracy });
    }
    let best = best_entry(&table);
    let config = SvmConfig { c: best.c, ..SvmConfig::with_kernel(KernelSpec::Rbf { gamma: best.gamma }) };
    Ok((config, table))
}
