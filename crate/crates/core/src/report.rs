//! Final report assembly: feature scores on a 0-10 scale against benchmark
//! values, signed deltas, verdict labels, and averaged weights from repeated
//! runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::FeatureScoreTable;

/// Per-feature reference scores on a 0-10 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub values: BTreeMap<String, f64>,
}

impl BenchmarkTable {
    pub fn new(values: BTreeMap<String, f64>) -> Result<Self> {
        for (feature, &v) in &values {
            if !(0.0..=10.0).contains(&v) {
                return Err(Error::Config {
                    message: format!("benchmark for {feature:?} is {v}, outside 0-10"),
                });
            }
        }
        Ok(BenchmarkTable { values })
    }

    /// Reference values for the seven usability features of the bundled
    /// study setup.
    pub fn bundled() -> Self {
        let values = [
            ("Efficiency", 8.5),
            ("Effectiveness", 7.0),
            ("Ease of use", 8.0),
            ("Learnability", 6.6),
            ("Memorability", 7.0),
            ("Cognition", 6.0),
            ("Consistency", 5.0),
        ];
        BenchmarkTable {
            values: values.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBand {
    /// Smallest delta that still earns this verdict.
    pub threshold: f64,
    pub label: String,
}

/// Maps a score-minus-benchmark delta to a verdict label: the first band
/// whose threshold the delta reaches wins, anything lower gets `fallback`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBands {
    pub bands: Vec<VerdictBand>,
    pub fallback: String,
}

impl VerdictBands {
    pub fn new(bands: Vec<VerdictBand>, fallback: String) -> Result<Self> {
        for pair in bands.windows(2) {
            if pair[1].threshold >= pair[0].threshold {
                return Err(Error::NonMonotoneBands);
            }
        }
        Ok(VerdictBands { bands, fallback })
    }

    pub fn verdict_for(&self, delta: f64) -> &str {
        self.bands
            .iter()
            .find(|b| delta >= b.threshold)
            .map(|b| b.label.as_str())
            .unwrap_or(&self.fallback)
    }
}

impl Default for VerdictBands {
    fn default() -> Self {
        let bands = [(0.5, "Very good"), (0.0, "Good"), (-0.5, "Fair"), (-1.5, "Average")]
            .iter()
            .map(|&(threshold, label)| VerdictBand { threshold, label: label.to_string() })
            .collect();
        VerdictBands { bands, fallback: "Poor".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature: String,
    /// Feature score rescaled to the benchmark's 0-10 scale.
    pub score: f64,
    pub benchmark: f64,
    pub delta: f64,
    pub accuracy_percent: f64,
    pub verdict: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
}

/// The final per-feature comparison, rows sorted by score descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsabilityReport {
    pub rows: Vec<ReportRow>,
    pub metadata: RunMetadata,
}

impl UsabilityReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("feature,score,benchmark,delta,accuracy_percent,verdict\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.feature, r.score, r.benchmark, r.delta, r.accuracy_percent, r.verdict
            ));
        }
        out
    }
}

/// Builds the report: scores move to the 0-10 scale (x10), delta is
/// score minus benchmark to full precision, and the verdict follows the
/// bands. All three inputs must cover the same features.
pub fn build_report(
    scores: &FeatureScoreTable,
    bench: &BenchmarkTable,
    accuracy_percent: &BTreeMap<String, f64>,
    bands: &VerdictBands,
    metadata: RunMetadata,
) -> Result<UsabilityReport> {
    let lookup = |map: &BTreeMap<String, f64>, feature: &str, what: &str| {
        map.get(feature).copied().ok_or_else(|| Error::FeatureUniverseMismatch {
            detail: format!("no {what} value for scored feature {feature:?}"),
        })
    };
    if bench.values.len() != scores.rows.len() {
        return Err(Error::FeatureUniverseMismatch {
            detail: format!(
                "{} benchmarks vs {} scored features",
                bench.values.len(),
                scores.rows.len()
            ),
        });
    }
    if accuracy_percent.len() != scores.rows.len() {
        return Err(Error::FeatureUniverseMismatch {
            detail: format!(
                "{} accuracy values vs {} scored features",
                accuracy_percent.len(),
                scores.rows.len()
            ),
        });
    }
    let rows = scores
        .rows
        .iter()
        .map(|entry| {
            let score = entry.score * 10.0;
            let benchmark = lookup(&bench.values, &entry.feature, "benchmark")?;
            let delta = score - benchmark;
            Ok(ReportRow {
                feature: entry.feature.clone(),
                score,
                benchmark,
                delta,
                accuracy_percent: lookup(accuracy_percent, &entry.feature, "accuracy")?,
                verdict: bands.verdict_for(delta).to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UsabilityReport { rows, metadata })
}

/// Per-feature mean of several weight vectors, with the features whose mean
/// reaches the threshold marked selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAggregate {
    pub means: Vec<f64>,
    pub selection_threshold: f64,
}

pub fn aggregate_weights(runs: &[Vec<f64>], threshold: f64) -> Result<(WeightAggregate, Vec<usize>)> {
    let first = runs.first().ok_or(Error::EmptyRuns)?;
    for run in runs {
        if run.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: run.len() });
        }
    }
    let means: Vec<f64> = (0..first.len())
        .map(|d| runs.iter().map(|r| r[d]).sum::<f64>() / runs.len() as f64)
        .collect();
    let selected = means
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= threshold)
        .map(|(d, _)| d)
        .collect();
    Ok((WeightAggregate { means, selection_threshold: threshold }, selected))
}
