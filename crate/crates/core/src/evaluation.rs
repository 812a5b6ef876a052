//! Train/test splitting, stratified k-fold partitions, confusion matrices,
//! and classification metrics (accuracy, per-class precision/recall,
//! one-vs-rest AUC).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::survey::FeatureMatrix;

const STREAM_SPLIT: u64 = 0x5350_4c54;
const STREAM_KFOLD: u64 = 0x4b46_4c44;
const STREAM_FIT: u64 = 0x4649_5446;

/// How to partition a dataset: train fraction, seed, and whether class
/// proportions are preserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: RngSpec,
    pub stratified: bool,
}

impl SplitSpec {
    /// 70/30 stratified split.
    pub fn new(seed: RngSpec) -> Self {
        SplitSpec { train_fraction: 0.7, seed, stratified: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config {
                message: format!("train fraction {} is outside (0,1)", self.train_fraction),
            });
        }
        Ok(())
    }
}

/// Indices grouped per class id, classes in id order. Unlabeled data counts
/// as one group.
fn class_groups(fm: &FeatureMatrix) -> Vec<Vec<usize>> {
    match &fm.labels {
        Some(labels) => {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &label) in labels.iter().enumerate() {
                groups.entry(label).or_default().push(i);
            }
            groups.into_values().collect()
        }
        None => vec![(0..fm.n_rows()).collect()],
    }
}

/// Splits rows into disjoint train/test matrices. The train side takes
/// floor(fraction x N) rows, clamped so neither side is empty; stratified
/// mode apportions that total over classes by largest remainder, keeping
/// class proportions within one row.
pub fn split(fm: &FeatureMatrix, spec: &SplitSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    spec.validate()?;
    let n = fm.n_rows();
    if n < 2 {
        return Err(Error::TooFewSamples { n, k: 2 });
    }
    let train_total = ((spec.train_fraction * n as f64).floor() as usize).clamp(1, n - 1);

    let groups = if spec.stratified && fm.labels.is_some() {
        let groups = class_groups(fm);
        if groups.len() > 1 {
            for group in &groups {
                if group.len() < 2 {
                    return Err(Error::ClassTooSmall {
                        class: fm.labels()?[group[0]],
                        count: group.len(),
                    });
                }
            }
        }
        groups
    } else {
        vec![(0..n).collect()]
    };

    // Largest-remainder apportionment of the train total over the groups.
    let mut quotas: Vec<usize> = Vec::with_capacity(groups.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(groups.len());
    let mut allocated = 0;
    for (g, group) in groups.iter().enumerate() {
        let ideal = train_total as f64 * group.len() as f64 / n as f64;
        let floor = ideal.floor() as usize;
        quotas.push(floor);
        remainders.push((ideal - floor as f64, g));
        allocated += floor;
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, g) in remainders.iter().take(train_total - allocated) {
        quotas[g] += 1;
    }

    let mut train_idx = Vec::with_capacity(train_total);
    let mut test_idx = Vec::with_capacity(n - train_total);
    for (g, group) in groups.iter().enumerate() {
        let mut shuffled = group.clone();
        let mut rng = spec.seed.derive(&[STREAM_SPLIT, g as u64]).rng();
        shuffled.shuffle(&mut rng);
        train_idx.extend_from_slice(&shuffled[..quotas[g].min(shuffled.len())]);
        test_idx.extend_from_slice(&shuffled[quotas[g].min(shuffled.len())..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((fm.subset(&train_idx), fm.subset(&test_idx)))
}

/// K disjoint (train, test) index pairs whose test folds cover every row
/// once, sizes within one of each other, per class when labels are present.
pub fn kfold(fm: &FeatureMatrix, k: usize, spec: &SplitSpec) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = fm.n_rows();
    if k < 2 || n < k {
        return Err(Error::TooFewSamples { n, k });
    }

    let groups = if spec.stratified { class_groups(fm) } else { vec![(0..n).collect()] };
    let mut dealt: Vec<usize> = Vec::with_capacity(n);
    for (g, group) in groups.iter().enumerate() {
        let mut shuffled = group.clone();
        let mut rng = spec.seed.derive(&[STREAM_KFOLD, g as u64]).rng();
        shuffled.shuffle(&mut rng);
        dealt.extend(shuffled);
    }

    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (position, &row) in dealt.iter().enumerate() {
        test_folds[position % k].push(row);
    }
    Ok(test_folds
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            (train, test)
        })
        .collect())
}

/// Prediction-by-truth count matrix: rows are predicted classes, columns are
/// true classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Header row names the true classes; each body row is one predicted
    /// class.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (p, row) in self.counts.iter().enumerate() {
            out.push_str(&self.class_names[p]);
            for c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Tallies (predicted, true) label pairs into a K x K matrix.
pub fn confusion(pred: &[usize], truth: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        for label in [p, t] {
            if label >= k {
                return Err(Error::UnknownClass { id: label, class_count: k });
            }
        }
        counts[p][t] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names: class_names.to_vec() })
}

/// Metric summary of a confusion matrix. Ratios with a zero denominator are
/// omitted from their map rather than reported as zero; macro averages run
/// over the defined entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: BTreeMap<String, f64>,
    pub recall: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_recall: Option<f64>,
    pub auc: BTreeMap<String, f64>,
    /// Accuracy clears 0.80, the retrain bar for a usable classifier.
    pub meets_threshold: bool,
}

fn mean_of(values: &BTreeMap<String, f64>) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.values().sum::<f64>() / values.len() as f64)
    }
}

/// AUC of a binary ranking by average ranks; ties share their rank, which
/// matches the trapezoidal rule over the tied score levels.
fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 =
        ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = positive_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Per-sample decision scores (one value per class) with the true labels,
/// for one-vs-rest AUC.
pub struct ScoredTruth<'a> {
    pub scores: &'a [Vec<f64>],
    pub truth: &'a [usize],
}

/// Accuracy, row-wise precision, column-wise recall, and optional AUC from a
/// confusion matrix.
pub fn metrics(cm: &ConfusionMatrix, scored: Option<ScoredTruth>) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = cm.class_names.len();
    let accuracy = cm.diagonal() as f64 / total as f64;

    let mut precision = BTreeMap::new();
    let mut recall = BTreeMap::new();
    for c in 0..k {
        let row_sum: u64 = cm.counts[c].iter().sum();
        if row_sum > 0 {
            precision.insert(cm.class_names[c].clone(), cm.counts[c][c] as f64 / row_sum as f64);
        }
        let col_sum: u64 = (0..k).map(|p| cm.counts[p][c]).sum();
        if col_sum > 0 {
            recall.insert(cm.class_names[c].clone(), cm.counts[c][c] as f64 / col_sum as f64);
        }
    }

    let mut auc = BTreeMap::new();
    if let Some(scored) = scored {
        if scored.scores.len() != scored.truth.len() {
            return Err(Error::LengthMismatch {
                left: scored.scores.len(),
                right: scored.truth.len(),
            });
        }
        for c in 0..k {
            let class_scores: Vec<f64> = scored.scores.iter().map(|s| s[c]).collect();
            let positive: Vec<bool> = scored.truth.iter().map(|&t| t == c).collect();
            if let Some(value) = auc_binary(&class_scores, &positive) {
                auc.insert(cm.class_names[c].clone(), value);
            }
        }
    }

    Ok(MetricsReport {
        accuracy,
        macro_precision: mean_of(&precision),
        macro_recall: mean_of(&recall),
        precision,
        recall,
        auc,
        meets_threshold: accuracy > 0.80,
    })
}

/// A model configuration that can be trained on a labeled matrix.
pub trait ClassifierSpec {
    fn name(&self) -> String;
    fn fit(&self, train: &FeatureMatrix, rng: RngSpec) -> Result<Box<dyn FittedClassifier>>;
}

/// A trained model: hard labels plus one decision score per class. Classes
/// unseen in training score negative infinity.
pub trait FittedClassifier {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>>;
    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

/// Cross-validates the model: per fold, fits on the train side and predicts
/// the test side, pooling all test predictions into one confusion matrix.
pub fn evaluate_pipeline(
    fm: &FeatureMatrix,
    model: &dyn ClassifierSpec,
    folds: usize,
    rng: RngSpec,
) -> Result<(MetricsReport, ConfusionMatrix)> {
    let truth_all = fm.labels()?;
    let spec = SplitSpec::new(rng);
    let mut pred = Vec::with_capacity(fm.n_rows());
    let mut truth = Vec::with_capacity(fm.n_rows());
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(fm.n_rows());
    for (f, (train_idx, test_idx)) in kfold(fm, folds, &spec)?.into_iter().enumerate() {
        let train = fm.subset(&train_idx);
        let fitted = model.fit(&train, rng.derive(&[STREAM_FIT, f as u64]))?;
        let test_rows: Vec<Vec<f64>> = test_idx.iter().map(|&i| fm.values[i].clone()).collect();
        pred.extend(fitted.predict(&test_rows)?);
        truth.extend(test_idx.iter().map(|&i| truth_all[i]));
        scores.extend(fitted.decision_scores(&test_rows)?);
    }
    let cm = confusion(&pred, &truth, &fm.class_names)?;
    let report = metrics(&cm, Some(ScoredTruth { scores: &scores, truth: &truth }))?;
    Ok((report, cm))
}
