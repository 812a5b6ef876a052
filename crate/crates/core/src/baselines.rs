//! From-scratch baseline classifiers for the comparison table: k-nearest
//! neighbors, Gaussian naive Bayes, a Gini decision tree, a bootstrap
//! forest, and softmax logistic regression.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{self, ClassifierSpec, FittedClassifier};
use crate::rng::RngSpec;
use crate::survey::FeatureMatrix;

const STREAM_TREE: u64 = 0x5452_4545;

const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BaselineSpec {
    Knn { k: usize },
    GaussianNb,
    Tree { max_depth: usize },
    Forest { n_trees: usize, max_depth: usize },
    Logreg { learning_rate: f64, epochs: usize },
}

impl BaselineSpec {
    pub fn knn_default() -> Self {
        BaselineSpec::Knn { k: 5 }
    }

    pub fn tree_default() -> Self {
        BaselineSpec::Tree { max_depth: 10 }
    }

    pub fn forest_default() -> Self {
        BaselineSpec::Forest { n_trees: 100, max_depth: 10 }
    }

    pub fn logreg_default() -> Self {
        BaselineSpec::Logreg { learning_rate: 0.1, epochs: 500 }
    }

    /// All five baselines at their default settings.
    pub fn default_suite() -> Vec<BaselineSpec> {
        vec![
            BaselineSpec::knn_default(),
            BaselineSpec::GaussianNb,
            BaselineSpec::tree_default(),
            BaselineSpec::forest_default(),
            BaselineSpec::logreg_default(),
        ]
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BaselineSpec::Knn { k } => {
                if k == 0 || k % 2 == 0 {
                    return Err(Error::Config { message: format!("knn k {k} must be odd") });
                }
            }
            BaselineSpec::Forest { n_trees, .. } => {
                if n_trees == 0 {
                    return Err(Error::Config { message: "forest needs at least one tree".into() });
                }
            }
            BaselineSpec::Logreg { learning_rate, .. } => {
                if !(learning_rate.is_finite() && learning_rate > 0.0) {
                    return Err(Error::Config {
                        message: format!("learning rate {learning_rate} must be positive"),
                    });
                }
            }
            BaselineSpec::GaussianNb | BaselineSpec::Tree { .. } => {}
        }
        Ok(())
    }
}

fn validate_matrix(fm: &FeatureMatrix, needs_two_classes: bool) -> Result<()> {
    if fm.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    for (i, row) in fm.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row: i, column: j });
            }
        }
    }
    let labels = fm.labels()?;
    for &label in labels {
        if label >= fm.class_names.len() {
            return Err(Error::UnknownClass { id: label, class_count: fm.class_names.len() });
        }
    }
    if needs_two_classes {
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            return Err(Error::SingleClassInput);
        }
    }
    Ok(())
}

fn check_width(rows: &[Vec<f64>], expected: usize) -> Result<()> {
    for row in rows {
        if row.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: row.len() });
        }
    }
    Ok(())
}

/// Index of the highest score; ties go to the lowest class id.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

impl ClassifierSpec for BaselineSpec {
    fn name(&self) -> String {
        match self {
            BaselineSpec::Knn { .. } => "knn".to_string(),
            BaselineSpec::GaussianNb => "gaussian_nb".to_string(),
            BaselineSpec::Tree { .. } => "tree".to_string(),
            BaselineSpec::Forest { .. } => "forest".to_string(),
            BaselineSpec::Logreg { .. } => "logreg".to_string(),
        }
    }

    fn fit(&self, train: &FeatureMatrix, rng: RngSpec) -> Result<Box<dyn FittedClassifier>> {
        self.validate()?;
        validate_matrix(train, !matches!(self, BaselineSpec::Knn { .. }))?;
        Ok(match *self {
            BaselineSpec::Knn { k } => Box::new(KnnModel {
                k,
                rows: train.values.clone(),
                labels: train.labels()?.to_vec(),
                classes: train.class_names.len(),
            }),
            BaselineSpec::GaussianNb => Box::new(NbModel::fit(train)?),
            BaselineSpec::Tree { max_depth } => {
                let all: Vec<usize> = (0..train.n_rows()).collect();
                Box::new(TreeModel {
                    root: grow_tree(train, &all, max_depth, &mut None),
                    width: train.n_features(),
                })
            }
            BaselineSpec::Forest { n_trees, max_depth } => {
                Box::new(ForestModel::fit(train, n_trees, max_depth, rng))
            }
            BaselineSpec::Logreg { learning_rate, epochs } => {
                Box::new(LogregModel::fit(train, learning_rate, epochs))
            }
        })
    }
}

struct KnnModel {
    k: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
}

impl KnnModel {
    /// Vote share per class among the k nearest training rows; distance ties
    /// resolved by training index.
    fn votes(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows[0].len() {
            return Err(Error::DimensionMismatch { expected: self.rows[0].len(), got: x.len() });
        }
        let mut by_distance: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let k = self.k.min(by_distance.len());
        let mut counts = vec![0.0; self.classes];
        for &(_, i) in &by_distance[..k] {
            counts[self.labels[i]] += 1.0 / k as f64;
        }
        Ok(counts)
    }
}

impl FittedClassifier for KnnModel {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| Ok(argmax(&self.votes(r)?))).collect()
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.votes(r)).collect()
    }
}

struct NbModel {
    /// per present class: (class id, log prior, per-feature mean, variance)
    classes: Vec<(usize, f64, Vec<f64>, Vec<f64>)>,
    class_count: usize,
    width: usize,
}

impl NbModel {
    fn fit(train: &FeatureMatrix) -> Result<NbModel> {
        let labels = train.labels()?;
        let n = train.n_rows() as f64;
        let d = train.n_features();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        let classes = groups
            .into_iter()
            .map(|(class, members)| {
                let m = members.len() as f64;
                let mut means = vec![0.0; d];
                for &i in &members {
                    for (j, v) in train.values[i].iter().enumerate() {
                        means[j] += v / m;
                    }
                }
                let mut vars = vec![0.0; d];
                for &i in &members {
                    for (j, v) in train.values[i].iter().enumerate() {
                        vars[j] += (v - means[j]) * (v - means[j]) / m;
                    }
                }
                for v in &mut vars {
                    *v = v.max(VARIANCE_FLOOR);
                }
                (class, (m / n).ln(), means, vars)
            })
            .collect();
        Ok(NbModel { classes, class_count: train.class_names.len(), width: d })
    }

    fn log_posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, got: x.len() });
        }
        let mut scores = vec![f64::NEG_INFINITY; self.class_count];
        for (class, log_prior, means, vars) in &self.classes {
            let mut score = *log_prior;
            for ((v, mean), var) in x.iter().zip(means).zip(vars) {
                score += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - mean) * (v - mean) / var);
            }
            scores[*class] = score;
        }
        Ok(scores)
    }
}

impl FittedClassifier for NbModel {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| Ok(argmax(&self.log_posteriors(r)?))).collect()
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.log_posteriors(r)).collect()
    }
}

enum TreeNode {
    Leaf { distribution: Vec<f64> },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

fn gini(labels: &FeatureMatrix, members: &[usize]) -> f64 {
    let lab = labels.labels.as_ref().unwrap();
    let mut counts = vec![0.0; labels.class_names.len()];
    for &i in members {
        counts[lab[i]] += 1.0;
    }
    let n = members.len() as f64;
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

fn class_distribution(fm: &FeatureMatrix, members: &[usize]) -> Vec<f64> {
    let labels = fm.labels.as_ref().unwrap();
    let mut counts = vec![0.0; fm.class_names.len()];
    for &i in members {
        counts[labels[i]] += 1.0 / members.len() as f64;
    }
    counts
}

/// Recursively grows a Gini tree over the member rows. Candidate thresholds
/// are midpoints between consecutive distinct values; ties prefer the lower
/// feature index, then the lower threshold. `sampler` restricts each split
/// to a random feature subset when present (forest mode).
fn grow_tree(
    fm: &FeatureMatrix,
    members: &[usize],
    depth_left: usize,
    sampler: &mut Option<(usize, ChaCha8Rng)>,
) -> TreeNode {
    let parent_gini = gini(fm, members);
    if depth_left == 0 || members.len() < 2 || parent_gini == 0.0 {
        return TreeNode::Leaf { distribution: class_distribution(fm, members) };
    }

    let features: Vec<usize> = match sampler {
        Some((m, rng)) => {
            let mut sampled: Vec<usize> =
                rand::seq::index::sample(rng, fm.n_features(), (*m).min(fm.n_features())).into_vec();
            sampled.sort_unstable();
            sampled
        }
        None => (0..fm.n_features()).collect(),
    };

    let mut best: Option<(f64, usize, f64)> = None;
    for &feature in &features {
        let mut values: Vec<f64> = members.iter().map(|&i| fm.values[i][feature]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&i| fm.values[i][feature] <= threshold);
            let weighted = (left.len() as f64 * gini(fm, &left)
                + right.len() as f64 * gini(fm, &right))
                / members.len() as f64;
            if best.as_ref().map_or(true, |&(w, _, _)| weighted < w) {
                best = Some((weighted, feature, threshold));
            }
        }
    }

    match best {
        Some((weighted, feature, threshold)) if weighted < parent_gini => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&i| fm.values[i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow_tree(fm, &left, depth_left - 1, sampler)),
                right: Box::new(grow_tree(fm, &right, depth_left - 1, sampler)),
            }
        }
        _ => TreeNode::Leaf { distribution: class_distribution(fm, members) },
    }
}

struct TreeModel {
    root: TreeNode,
    width: usize,
}

impl TreeModel {
    fn distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, got: x.len() });
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { distribution } => return Ok(distribution.clone()),
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl FittedClassifier for TreeModel {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| Ok(argmax(&self.distribution(r)?))).collect()
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.distribution(r)).collect()
    }
}

struct ForestModel {
    trees: Vec<TreeModel>,
    classes: usize,
}

impl ForestModel {
    fn fit(train: &FeatureMatrix, n_trees: usize, max_depth: usize, rng: RngSpec) -> ForestModel {
        let n = train.n_rows();
        let split_features = (train.n_features() as f64).sqrt().round().max(1.0) as usize;
        let trees = (0..n_trees)
            .map(|t| {
                let mut tree_rng = rng.derive(&[STREAM_TREE, t as u64]).rng();
                let sample: Vec<usize> = (0..n).map(|_| tree_rng.gen_range(0..n)).collect();
                let bootstrap = train.subset(&sample);
                let all: Vec<usize> = (0..n).collect();
                let mut sampler = Some((split_features, tree_rng));
                TreeModel {
                    root: grow_tree(&bootstrap, &all, max_depth, &mut sampler),
                    width: train.n_features(),
                }
            })
            .collect();
        ForestModel { trees, classes: train.class_names.len() }
    }

    /// Plurality vote share across the trees' predicted classes.
    fn votes(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut counts = vec![0.0; self.classes];
        for tree in &self.trees {
            counts[argmax(&tree.distribution(x)?)] += 1.0 / self.trees.len() as f64;
        }
        Ok(counts)
    }
}

impl FittedClassifier for ForestModel {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter().map(|r| Ok(argmax(&self.votes(r)?))).collect()
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.votes(r)).collect()
    }
}

struct LogregModel {
    /// weights[c] is the logit row for class c; the last entry is the bias
    weights: Vec<Vec<f64>>,
}

impl LogregModel {
    fn fit(train: &FeatureMatrix, learning_rate: f64, epochs: usize) -> LogregModel {
        let labels = train.labels.as_ref().unwrap();
        let n = train.n_rows();
        let d = train.n_features();
        let k = train.class_names.len();
        let mut weights = vec![vec![0.0; d + 1]; k];
        for _ in 0..epochs {
            let mut grad = vec![vec![0.0; d + 1]; k];
            for (row, &label) in train.values.iter().zip(labels) {
                let probs = softmax(&logits(&weights, row));
                for (c, g) in grad.iter_mut().enumerate() {
                    let delta = probs[c] - if c == label { 1.0 } else { 0.0 };
                    for (j, v) in row.iter().enumerate() {
                        g[j] += delta * v / n as f64;
                    }
                    g[d] += delta / n as f64;
                }
            }
            for (w, g) in weights.iter_mut().zip(&grad) {
                for (wj, gj) in w.iter_mut().zip(g) {
                    *wj -= learning_rate * gj;
                }
            }
        }
        LogregModel { weights }
    }
}

fn logits(weights: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| w[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[x.len()])
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

impl FittedClassifier for LogregModel {
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.decision_scores(rows)?.iter().map(|s| argmax(s)).collect())
    }

    fn decision_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let width = self.weights[0].len() - 1;
        check_width(rows, width)?;
        Ok(rows.iter().map(|r| logits(&self.weights, r)).collect())
    }
}

/// One comparison row: a model's pooled cross-validation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_recall: Option<f64>,
}

/// Cross-validation results for a set of models on one fold partition,
/// sorted by accuracy descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("model,accuracy,macro_precision,macro_recall\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.model,
                r.accuracy,
                fmt(r.macro_precision),
                fmt(r.macro_recall)
            ));
        }
        out
    }
}

/// Cross-validates every model on the same fold partition (all models see
/// byte-identical train/test splits) and tabulates accuracy with macro
/// precision/recall, best accuracy first.
pub fn compare_models(
    models: &[&dyn ClassifierSpec],
    fm: &FeatureMatrix,
    folds: usize,
    rng: RngSpec,
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let (report, _) = evaluation::evaluate_pipeline(fm, *model, folds, rng)?;
        rows.push(ComparisonRow {
            model: model.name(),
            accuracy: report.accuracy,
            macro_precision: report.macro_precision,
            macro_recall: report.macro_recall,
        });
    }
    rows.sort_by(|a, b| {
        b.accuracy
            .partial_cmp(&a.accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(ComparisonTable { rows })
}
