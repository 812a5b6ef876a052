//! Likert survey ingestion, aggregation, encoding, labeling, and synthesis.
//!
//! Input CSV shape: header `id,department,q1..qM`, one row per respondent,
//! responses in 1..=5 with 1 = strongly agree. Invalid rows abort the load;
//! nothing is imputed, since silent repair would corrupt polarity counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSpec;

const STREAM_SYNTH_EXACT: u64 = 0x5359_4e45;
const STREAM_SYNTH_SAMPLE: u64 = 0x5359_4e53;

/// One survey question and the usability feature it probes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionMeta {
    pub id: String,
    pub feature: String,
}

/// One respondent's row: id, department, and a complete response map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub id: String,
    pub department: String,
    /// question-id -> Likert response in 1..=5
    pub responses: BTreeMap<String, u8>,
}

/// A validated survey: every respondent answers every question, ids unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub respondents: Vec<RespondentRecord>,
    /// Questions in header order.
    pub questions: Vec<QuestionMeta>,
    /// question-id -> feature name (restriction of the schema to this survey).
    pub feature_map: BTreeMap<String, String>,
}

impl SurveyDataset {
    /// Feature names in order of first appearance among the questions.
    pub fn features(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for q in &self.questions {
            if seen.insert(q.feature.clone()) {
                out.push(q.feature.clone());
            }
        }
        out
    }

    /// Question ids mapped to `feature`, in header order.
    pub fn questions_for(&self, feature: &str) -> Vec<&str> {
        self.questions
            .iter()
            .filter(|q| q.feature == feature)
            .map(|q| q.id.as_str())
            .collect()
    }

    /// Respondent count per department, sorted by department name.
    pub fn department_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.respondents {
            *counts.entry(r.department.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Dataset as CSV in the same shape `load_survey` reads.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id,department");
        for q in &self.questions {
            out.push(',');
            out.push_str(&q.id);
        }
        out.push('\n');
        for r in &self.respondents {
            out.push_str(&r.id);
            out.push(',');
            out.push_str(&r.department);
            for q in &self.questions {
                out.push(',');
                out.push_str(&r.responses[&q.id].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Per-feature histogram of Likert levels 1..=5 across all responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityTable {
    pub rows: Vec<PolarityRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityRow {
    pub feature: String,
    /// counts[l-1] = number of responses at Likert level l
    pub counts: [u64; 5],
}

impl PolarityTable {
    pub fn row(&self, feature: &str) -> Option<&PolarityRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    /// CSV with one row per feature: `feature,level1..level5`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("feature,level1,level2,level3,level4,level5\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.feature, r.counts[0], r.counts[1], r.counts[2], r.counts[3], r.counts[4]
            ));
        }
        out
    }
}

/// Encoded respondents-by-features matrix; labels appear after `auto_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// N rows of D values, each in [0,1].
    pub values: Vec<Vec<f64>>,
    /// Class id per row, present once labeled. Every id < class_names.len().
    pub labels: Option<Vec<usize>>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    /// Row subset in the given index order; feature and class metadata carry
    /// over.
    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Keeps the columns whose mask bit is set; labels carry over.
    pub fn select_columns(&self, mask: &[bool]) -> Result<FeatureMatrix> {
        if mask.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: mask.len() });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        let keep: Vec<usize> =
            mask.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j).collect();
        Ok(FeatureMatrix {
            values: self
                .values
                .iter()
                .map(|row| keep.iter().map(|&j| row[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
            class_names: self.class_names.clone(),
        })
    }
}

/// Ordered labeling bands: each row's mean falls into the first band whose
/// threshold it reaches; rows below every threshold take the last band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBands {
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub threshold: f64,
    pub class: String,
}

impl LabelBands {
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::EmptyBands);
        }
        for pair in bands.windows(2) {
            if pair[1].threshold >= pair[0].threshold {
                return Err(Error::NonMonotoneBands);
            }
        }
        Ok(LabelBands { bands })
    }

    /// Six recommendation classes over the [0,1] encoded scale.
    pub fn default_six() -> Self {
        let spec = [
            (0.85, "Highly Recommended"),
            (0.70, "Recommended"),
            (0.50, "Neutral"),
            (0.35, "Not Recommended"),
            (0.20, "Highly Not Recommended"),
            (0.00, "highly Not Recommended"),
        ];
        LabelBands {
            bands: spec
                .iter()
                .map(|&(threshold, class)| Band {
                    threshold,
                    class: class.to_string(),
                })
                .collect(),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.bands.iter().map(|b| b.class.clone()).collect()
    }

    /// Class id for a row mean: first band whose threshold the mean reaches.
    pub fn label_for(&self, mean: f64) -> usize {
        for (i, band) in self.bands.iter().enumerate() {
            if mean >= band.threshold {
                return i;
            }
        }
        self.bands.len() - 1
    }
}

/// Parses and validates a survey CSV against a question -> feature schema.
///
/// Schema entries for questions absent from the header are ignored; header
/// questions missing from the schema are an error.
pub fn load_survey(path: &Path, schema: &BTreeMap<String, String>) -> Result<SurveyDataset> {
    let text = std::fs::read_to_string(path)?;
    load_survey_str(&text, schema)
}

/// Same as [`load_survey`] but from an in-memory string.
pub fn load_survey_str(text: &str, schema: &BTreeMap<String, String>) -> Result<SurveyDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(Error::MissingHeader)?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 2 || fields[0] != "id" || fields[1] != "department" {
        return Err(Error::MissingHeader);
    }

    let mut questions = Vec::new();
    let mut seen_questions = BTreeSet::new();
    for &column in &fields[2..] {
        if !seen_questions.insert(column.to_string()) {
            return Err(Error::DuplicateQuestionColumn {
                column: column.to_string(),
            });
        }
        let feature = schema.get(column).ok_or_else(|| Error::UnknownQuestionColumn {
            column: column.to_string(),
        })?;
        questions.push(QuestionMeta {
            id: column.to_string(),
            feature: feature.clone(),
        });
    }

    let mut respondents = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (row, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != fields.len() {
            return Err(Error::RaggedRow {
                row,
                expected: fields.len(),
                got: cells.len(),
            });
        }
        let id = cells[0].to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(Error::DuplicateRespondentId { id });
        }
        let mut responses = BTreeMap::new();
        for (q, &cell) in questions.iter().zip(&cells[2..]) {
            let value: u8 = cell.parse().map_err(|_| Error::OutOfRangeResponse {
                row,
                column: q.id.clone(),
            })?;
            if !(1..=5).contains(&value) {
                return Err(Error::OutOfRangeResponse {
                    row,
                    column: q.id.clone(),
                });
            }
            responses.insert(q.id.clone(), value);
        }
        respondents.push(RespondentRecord {
            id,
            department: cells[1].to_string(),
            responses,
        });
    }

    let feature_map = questions
        .iter()
        .map(|q| (q.id.clone(), q.feature.clone()))
        .collect();
    Ok(SurveyDataset {
        respondents,
        questions,
        feature_map,
    })
}

/// Counts responses at each Likert level per feature, summed over the
/// feature's questions. Row order follows feature order of first appearance.
pub fn polarity_table(ds: &SurveyDataset) -> PolarityTable {
    let features = ds.features();
    let mut rows: Vec<PolarityRow> = features
        .iter()
        .map(|f| PolarityRow {
            feature: f.clone(),
            counts: [0; 5],
        })
        .collect();
    let index: BTreeMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    for r in &ds.respondents {
        for q in &ds.questions {
            let level = r.responses[&q.id];
            rows[index[q.feature.as_str()]].counts[level as usize - 1] += 1;
        }
    }
    PolarityTable { rows }
}

/// Encodes a response: 1 (strongly agree) -> 1.0 down to 5 -> 0.0.
fn encode_response(r: u8) -> f64 {
    (5 - r) as f64 / 4.0
}

/// Encodes the survey into an N x D matrix in [0,1]; a feature's value is the
/// mean of its questions' encoded responses. Labels stay unset.
pub fn encode(ds: &SurveyDataset) -> FeatureMatrix {
    let features = ds.features();
    let values = ds
        .respondents
        .iter()
        .map(|r| {
            features
                .iter()
                .map(|f| {
                    let qs = ds.questions_for(f);
                    let sum: f64 = qs.iter().map(|q| encode_response(r.responses[*q])).sum();
                    sum / qs.len() as f64
                })
                .collect()
        })
        .collect();
    FeatureMatrix {
        values,
        labels: None,
        feature_names: features,
        class_names: Vec::new(),
    }
}

/// Labels each row by its mean encoded value against the bands. Row order is
/// irrelevant to any single row's label.
pub fn auto_label(fm: &FeatureMatrix, bands: &LabelBands) -> FeatureMatrix {
    let labels = fm
        .values
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
            bands.label_for(mean)
        })
        .collect();
    let mut labeled = fm.clone();
    labeled.labels = Some(labels);
    labeled.class_names = bands.class_names();
    labeled
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// Allocate responses so the polarity table reproduces the input counts
    /// (rescaled by largest remainder when a row's sum differs from n).
    Exact,
    /// Draw each response from the feature's multinomial.
    Sampled,
}

/// Rescales counts to sum to `n` by largest remainder; ties prefer the lower
/// Likert level. Exact when the counts already sum to `n`.
fn rescale_counts(counts: &[u64; 5], n: u64) -> [u64; 5] {
    let total: u64 = counts.iter().sum();
    if total == n {
        return *counts;
    }
    let mut scaled = [0u64; 5];
    let mut remainders = [(0u64, 0usize); 5];
    let mut allocated = 0;
    for (i, &c) in counts.iter().enumerate() {
        scaled[i] = c * n / total;
        remainders[i] = (c * n % total, i);
        allocated += scaled[i];
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take((n - allocated) as usize) {
        scaled[i] += 1;
    }
    scaled
}

/// Generates an n-respondent survey with one question per feature whose
/// polarity table matches `pt`: exactly in `Exact` mode, in distribution in
/// `Sampled` mode. Deterministic for a given `rng`.
pub fn generate_synthetic(
    pt: &PolarityTable,
    n: usize,
    mode: SynthMode,
    rng: RngSpec,
) -> Result<SurveyDataset> {
    let questions: Vec<QuestionMeta> = pt
        .rows
        .iter()
        .enumerate()
        .map(|(j, row)| QuestionMeta {
            id: format!("q{}", j + 1),
            feature: row.feature.clone(),
        })
        .collect();

    // columns[j][i] = respondent i's response to question j
    let mut columns: Vec<Vec<u8>> = Vec::with_capacity(pt.rows.len());
    for (j, row) in pt.rows.iter().enumerate() {
        let total: u64 = row.counts.iter().sum();
        if total == 0 && n > 0 {
            return Err(Error::InconsistentCounts {
                feature: row.feature.clone(),
            });
        }
        let column = match mode {
            SynthMode::Exact => {
                let counts = rescale_counts(&row.counts, n as u64);
                let mut responses: Vec<u8> = Vec::with_capacity(n);
                for (level, &c) in counts.iter().enumerate() {
                    responses.extend(std::iter::repeat(level as u8 + 1).take(c as usize));
                }
                let mut rng = rng.derive(&[STREAM_SYNTH_EXACT, j as u64]).rng();
                responses.shuffle(&mut rng);
                responses
            }
            SynthMode::Sampled => {
                let mut rng = rng.derive(&[STREAM_SYNTH_SAMPLE, j as u64]).rng();
                (0..n)
                    .map(|_| {
                        let mut draw = rng.gen_range(0..total);
                        for (level, &c) in row.counts.iter().enumerate() {
                            if draw < c {
                                return level as u8 + 1;
                            }
                            draw -= c;
                        }
                        unreachable!("draw below total is always covered")
                    })
                    .collect()
            }
        };
        columns.push(column);
    }

    let respondents = (0..n)
        .map(|i| {
            let responses = questions
                .iter()
                .zip(&columns)
                .map(|(q, col)| (q.id.clone(), col[i]))
                .collect();
            RespondentRecord {
                id: format!("r{:04}", i + 1),
                department: format!("dept{}", i % 5 + 1),
                responses,
            }
        })
        .collect();

    let feature_map = questions
        .iter()
        .map(|q| (q.id.clone(), q.feature.clone()))
        .collect();
    Ok(SurveyDataset {
        respondents,
        questions,
        feature_map,
    })
}
