//! Annotation records and their aggregation into per-document scores, plus
//! reliability statistics (Krippendorff's alpha, MACE).

mod alpha;
mod mace;

pub use alpha::{
    alpha_by_dimension, krippendorff_alpha, per_annotator_alpha, AlphaMetric, AlphaReport, RatingMatrix,
    BLOCKING_THRESHOLD,
};
pub use mace::{mace_em, mace_p, LabelMatrix, MaceConfig, MaceResult};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Dimension;
use crate::util::{fmt_opt, numbered_lines, parse_opt};

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("mix score needs both group means")]
    UndefinedMix,
    #[error("empty input")]
    Empty,
    #[error("weights: {0}")]
    BadWeights(String),
    #[error("invalid MACE configuration: {0}")]
    BadConfig(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("unknown label {0}")]
    UnknownLabel(i64),
}

/// Annotator population an annotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Expert,
    Crowd,
    Unspecified,
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "expert" => Ok(Group::Expert),
            "crowd" => Ok(Group::Crowd),
            "" | "unspecified" => Ok(Group::Unspecified),
            other => Err(format!("unknown group `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rating {
    Score(i64),
    /// Abstention; excluded from every statistic.
    CannotJudge,
}

impl Rating {
    pub fn value(self) -> Option<i64> {
        match self {
            Rating::Score(v) => Some(v),
            Rating::CannotJudge => None,
        }
    }
}

/// Rating scale in effect for an annotation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    FivePoint,
    ThreePoint,
    Binary,
}

impl Scale {
    pub fn bounds(self) -> (i64, i64) {
        match self {
            Scale::FivePoint => (1, 5),
            Scale::ThreePoint => (1, 3),
            Scale::Binary => (0, 1),
        }
    }

    pub fn contains(self, v: i64) -> bool {
        let (lo, hi) = self.bounds();
        (lo..=hi).contains(&v)
    }

    pub fn labels(self) -> Vec<i64> {
        let (lo, hi) = self.bounds();
        (lo..=hi).collect()
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "five" | "five_point" | "5" => Ok(Scale::FivePoint),
            "three" | "three_point" | "3" => Ok(Scale::ThreePoint),
            "binary" | "2" => Ok(Scale::Binary),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

/// One annotator's ratings of one document. Dimensions the annotator did not
/// see are absent from `ratings`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub doc_id: String,
    pub annotator_id: String,
    pub group: Group,
    pub ratings: BTreeMap<Dimension, Rating>,
}

impl AnnotationRecord {
    pub fn rating(&self, dim: Dimension) -> Option<i64> {
        self.ratings.get(&dim).and_then(|r| r.value())
    }

    pub fn to_json(&self) -> Value {
        let scores: serde_json::Map<String, Value> = self
            .ratings
            .iter()
            .map(|(d, r)| (d.as_str().to_string(), r.value().map(Value::from).unwrap_or(Value::Null)))
            .collect();
        serde_json::json!({
            "doc_id": self.doc_id,
            "annotator_id": self.annotator_id,
            "group": match self.group {
                Group::Expert => "expert",
                Group::Crowd => "crowd",
                Group::Unspecified => "unspecified",
            },
            "scores": scores,
        })
    }
}

pub fn parse_annotations(path: impl AsRef<Path>, scale: Scale) -> Result<Vec<AnnotationRecord>, AggregationError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AggregationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_annotations_str(&text, scale)
}

pub fn parse_annotations_str(text: &str, scale: Scale) -> Result<Vec<AnnotationRecord>, AggregationError> {
    #[derive(Deserialize)]
    struct Raw {
        doc_id: String,
        annotator_id: String,
        #[serde(default)]
        group: Option<String>,
        scores: BTreeMap<String, Option<i64>>,
    }

    let mut out = Vec::new();
    for (line, raw) in numbered_lines(text) {
        let bad = |message: String| AggregationError::Malformed { line, message };
        let r: Raw = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let group = r.group.as_deref().unwrap_or("").parse().map_err(bad)?;
        let mut ratings = BTreeMap::new();
        for (k, v) in r.scores {
            let dim: Dimension = k.parse().map_err(bad)?;
            let rating = match v {
                None => Rating::CannotJudge,
                Some(v) if scale.contains(v) => Rating::Score(v),
                Some(v) => return Err(bad(format!("{dim} rating {v} outside {:?}", scale.bounds()))),
            };
            ratings.insert(dim, rating);
        }
        out.push(AnnotationRecord {
            doc_id: r.doc_id,
            annotator_id: r.annotator_id,
            group,
            ratings,
        });
    }
    Ok(out)
}

pub fn serialize_annotations(records: &[AnnotationRecord]) -> String {
    records.iter().map(|r| r.to_json().to_string() + "\n").collect()
}

/// Mean of the non-abstaining ratings; `None` when nothing is left.
pub fn mean_rating(ratings: &[Rating]) -> Option<f64> {
    let (sum, n) = ratings
        .iter()
        .filter_map(|r| r.value())
        .fold((0i64, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Average of the expert-group and crowd-group means.
pub fn mix_score(expert_mean: Option<f64>, crowd_mean: Option<f64>) -> Result<f64, AggregationError> {
    match (expert_mean, crowd_mean) {
        (Some(e), Some(c)) => Ok((e + c) / 2.0),
        _ => Err(AggregationError::UndefinedMix),
    }
}

/// Most frequent label; ties go to the smaller label.
pub fn majority_vote(labels: &[i64]) -> Result<i64, AggregationError> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // BTreeMap iterates ascending, so `max_by_key` would keep the last max;
    // fold keeps the first.
    counts
        .into_iter()
        .fold(None, |best: Option<(i64, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l)
        .ok_or(AggregationError::Empty)
}

/// `Σ w_i r_i / Σ w_i`, uniform weights when `weights` is `None`.
pub fn weighted_average(ratings: &[f64], weights: Option<&[f64]>) -> Result<f64, AggregationError> {
    if ratings.is_empty() {
        return Err(AggregationError::Empty);
    }
    match weights {
        None => Ok(ratings.iter().sum::<f64>() / ratings.len() as f64),
        Some(w) => {
            if w.len() != ratings.len() {
                return Err(AggregationError::BadWeights(format!(
                    "{} weights for {} ratings",
                    w.len(),
                    ratings.len()
                )));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(AggregationError::BadWeights("weights must be finite and non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                return Err(AggregationError::BadWeights("all weights are zero".into()));
            }
            Ok(ratings.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / total)
        }
    }
}

/// Provenance of an aggregated score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ExpertMean,
    CrowdMean,
    Mix,
    Majority,
    MaceP,
    WeightedAvg,
}

impl Source {
    pub const ALL: [Source; 6] = [
        Source::ExpertMean,
        Source::CrowdMean,
        Source::Mix,
        Source::Majority,
        Source::MaceP,
        Source::WeightedAvg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::ExpertMean => "expert_mean",
            Source::CrowdMean => "crowd_mean",
            Source::Mix => "mix",
            Source::Majority => "majority",
            Source::MaceP => "mace_p",
            Source::WeightedAvg => "weighted_avg",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert_mean" | "expert" => Ok(Source::ExpertMean),
            "crowd_mean" | "crowd" => Ok(Source::CrowdMean),
            "mix" => Ok(Source::Mix),
            "majority" => Ok(Source::Majority),
            "mace_p" | "mace" => Ok(Source::MaceP),
            "weighted_avg" | "wa" => Ok(Source::WeightedAvg),
            other => Err(format!("unknown aggregation source `{other}`")),
        }
    }
}

/// Real-valued per-dimension scores for one document. Dimensions without a
/// defined value are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedScores {
    pub doc_id: String,
    pub source: Source,
    pub scores: BTreeMap<Dimension, f64>,
}

/// doc id → dimension → score.
pub type ScoreTable = BTreeMap<String, BTreeMap<Dimension, f64>>;

pub fn to_table(rows: &[AggregatedScores], source: Source) -> ScoreTable {
    rows.iter()
        .filter(|r| r.source == source)
        .map(|r| (r.doc_id.clone(), r.scores.clone()))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    pub scale: Scale,
    /// Reliability weights for `WeightedAvg`, keyed by annotator id.
    /// Missing annotators get weight 1.
    pub annotator_weights: Option<BTreeMap<String, f64>>,
    pub mace: MaceConfig,
}

/// Aggregates `records` into one row per document (sorted by id) for
/// `source`. Documents with no defined dimension are omitted.
///
/// For `MaceP` the score is the posterior mean of the label values, which is
/// the posterior probability of label 1 on binary data.
pub fn aggregate(
    records: &[AnnotationRecord],
    source: Source,
    opts: &AggregateOptions,
) -> Result<Vec<AggregatedScores>, AggregationError> {
    let mut by_doc: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_doc.entry(r.doc_id.as_str()).or_default().push(r);
    }
    let dims_present: BTreeSet<Dimension> = records.iter().flat_map(|r| r.ratings.keys().copied()).collect();

    let mut mace_scores: BTreeMap<Dimension, BTreeMap<String, f64>> = BTreeMap::new();
    if source == Source::MaceP {
        for &dim in &dims_present {
            let matrix = LabelMatrix::from_records(records, dim, &opts.scale.labels());
            if matrix.items.is_empty() {
                continue;
            }
            let result = mace_em(&matrix, &opts.mace)?;
            let per_item = matrix
                .items
                .iter()
                .zip(&result.posteriors)
                .map(|(id, post)| {
                    let m: f64 = post.iter().zip(&matrix.labels).map(|(p, &l)| p * l as f64).sum();
                    (id.clone(), m)
                })
                .collect();
            mace_scores.insert(dim, per_item);
        }
    }

    let group_mean = |rs: &[&AnnotationRecord], dim: Dimension, group: Group| {
        let ratings: Vec<Rating> = rs
            .iter()
            .filter(|r| r.group == group)
            .filter_map(|r| r.ratings.get(&dim).copied())
            .collect();
        mean_rating(&ratings)
    };

    let mut out = Vec::new();
    for (doc, rs) in by_doc {
        let mut scores = BTreeMap::new();
        for &dim in &dims_present {
            let value = match source {
                Source::ExpertMean => group_mean(&rs, dim, Group::Expert),
                Source::CrowdMean => group_mean(&rs, dim, Group::Crowd),
                Source::Mix => mix_score(
                    group_mean(&rs, dim, Group::Expert),
                    group_mean(&rs, dim, Group::Crowd),
                )
                .ok(),
                Source::Majority => {
                    let labels: Vec<i64> = rs.iter().filter_map(|r| r.rating(dim)).collect();
                    majority_vote(&labels).ok().map(|l| l as f64)
                }
                Source::WeightedAvg => {
                    let (vals, ws): (Vec<f64>, Vec<f64>) = rs
                        .iter()
                        .filter_map(|r| {
                            let w = opts
                                .annotator_weights
                                .as_ref()
                                .and_then(|m| m.get(&r.annotator_id).copied())
                                .unwrap_or(1.0);
                            r.rating(dim).map(|v| (v as f64, w))
                        })
                        .unzip();
                    match weighted_average(&vals, opts.annotator_weights.as_ref().map(|_| ws.as_slice())) {
                        Ok(v) => Some(v),
                        Err(AggregationError::Empty) => None,
                        Err(AggregationError::BadWeights(_)) => None,
                        Err(e) => return Err(e),
                    }
                }
                Source::MaceP => mace_scores.get(&dim).and_then(|m| m.get(doc).copied()),
            };
            if let Some(v) = value {
                scores.insert(dim, v);
            }
        }
        if !scores.is_empty() {
            out.push(AggregatedScores {
                doc_id: doc.to_string(),
                source,
                scores,
            });
        }
    }
    Ok(out)
}

/// Training target per document: the mix score where both groups rated it,
/// otherwise whichever group mean exists.
pub fn training_targets(records: &[AnnotationRecord]) -> Result<ScoreTable, AggregationError> {
    let opts = AggregateOptions::default();
    let mut table = to_table(&aggregate(records, Source::CrowdMean, &opts)?, Source::CrowdMean);
    for row in aggregate(records, Source::ExpertMean, &opts)? {
        let entry = table.entry(row.doc_id).or_default();
        for (dim, e) in row.scores {
            entry
                .entry(dim)
                .and_modify(|c| *c = mix_score(Some(e), Some(*c)).expect("both defined"))
                .or_insert(e);
        }
    }
    Ok(table)
}

const SCORES_HEADER: &str = "doc_id\tsource\tcogency\teffectiveness\treasonableness\toverall";

pub fn scores_to_tsv(rows: &[AggregatedScores]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.doc_id);
        out.push('\t');
        out.push_str(r.source.as_str());
        for d in Dimension::ALL {
            out.push('\t');
            out.push_str(&fmt_opt(r.scores.get(&d).copied()));
        }
        out.push('\n');
    }
    out
}

pub fn scores_from_tsv(text: &str) -> Result<Vec<AggregatedScores>, AggregationError> {
    let mut out = Vec::new();
    for (line, raw) in numbered_lines(text) {
        if raw.starts_with("doc_id\t") {
            continue;
        }
        let bad = |message: String| AggregationError::Malformed { line, message };
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", fields.len())));
        }
        let source: Source = fields[1].parse().map_err(bad)?;
        let mut scores = BTreeMap::new();
        for (d, f) in Dimension::ALL.iter().zip(&fields[2..]) {
            if let Some(v) = parse_opt(f).map_err(|e| bad(e.to_string()))? {
                scores.insert(*d, v);
            }
        }
        out.push(AggregatedScores {
            doc_id: fields[0].to_string(),
            source,
            scores,
        });
    }
    Ok(out)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<AggregatedScores>, AggregationError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AggregationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    scores_from_tsv(&text)
}
