//! Correlation metrics, evaluation tables and experiment orchestration.

mod experiment;
mod grid;

pub use experiment::{
    fit_model, load_experiment_spec, run_experiment, train_model, Checkpoint, CorpusInputs, DocFeaturizer, Encoding, ExperimentError,
    ExperimentOutcome, ExperimentSpec, InputContext, Labeled, ModelFamily, Scope, SvrPredictor, TrainOutcome, TrainedModel,
};
pub use grid::{grid_rows, grid_search, CellParams, CellResult, GridOutcome, Grids, NeuralGrid, SvrGrid, GRID_HEADER};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{ScoreTable, Source};
use crate::corpus::{Dimension, Domain};
use crate::util::{fmt_opt, numbered_lines, parse_opt};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired values, got {0}")]
    TooFew(usize),
    #[error("{dimension} vs {reference}: only {n} ids shared between predictions and reference")]
    SmallIntersection {
        dimension: Dimension,
        reference: Reference,
        n: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("every grid cell failed: {0}")]
    GridFailed(String),
}

/// Pearson's r. `Ok(None)` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(EvalError::TooFew(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Reference annotation a prediction is correlated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Crowd,
    Expert,
    Mix,
    /// Weighted average of binary judgments.
    #[serde(rename = "wa", alias = "weighted_avg")]
    WeightedAvg,
    MaceP,
}

impl Reference {
    pub fn as_str(self) -> &'static str {
        match self {
            Reference::Crowd => "crowd",
            Reference::Expert => "expert",
            Reference::Mix => "mix",
            Reference::WeightedAvg => "wa",
            Reference::MaceP => "mace_p",
        }
    }

    pub fn source(self) -> Source {
        match self {
            Reference::Crowd => Source::CrowdMean,
            Reference::Expert => Source::ExpertMean,
            Reference::Mix => Source::Mix,
            Reference::WeightedAvg => Source::WeightedAvg,
            Reference::MaceP => Source::MaceP,
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crowd" => Ok(Reference::Crowd),
            "expert" => Ok(Reference::Expert),
            "mix" => Ok(Reference::Mix),
            "wa" | "weighted_avg" => Ok(Reference::WeightedAvg),
            "mace_p" | "mace" => Ok(Reference::MaceP),
            other => Err(format!("unknown reference `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub domain: Domain,
    pub dimension: Dimension,
    pub reference: Reference,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rows: Vec<EvalRow>,
}

impl EvalResult {
    pub fn get(&self, domain: Domain, dimension: Dimension, reference: Reference) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.domain == domain && r.dimension == dimension && r.reference == reference)
    }

    pub fn extend(&mut self, other: EvalResult) {
        self.rows.extend(other.rows);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("domain\tdimension\treference\tpearson\tspearman\tn\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.domain,
                r.dimension,
                r.reference,
                fmt_opt(r.pearson),
                fmt_opt(r.spearman),
                r.n
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, EvalError> {
        let mut rows = Vec::new();
        for (line, raw) in numbered_lines(text) {
            if raw.starts_with("domain\t") {
                continue;
            }
            let bad = |message: String| EvalError::Malformed { line, message };
            let f: Vec<&str> = raw.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 columns, got {}", f.len())));
            }
            rows.push(EvalRow {
                domain: f[0].parse().map_err(bad)?,
                dimension: f[1].parse().map_err(bad)?,
                reference: f[2].parse().map_err(bad)?,
                pearson: parse_opt(f[3]).map_err(|e| bad(e.to_string()))?,
                spearman: parse_opt(f[4]).map_err(|e| bad(e.to_string()))?,
                n: f[5].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            });
        }
        Ok(EvalResult { rows })
    }
}

/// doc id → dimension → predicted score.
pub type Predictions = BTreeMap<String, BTreeMap<Dimension, f64>>;

const PREDICTIONS_HEADER: &str = "doc_id\tcogency\teffectiveness\treasonableness\toverall";

/// One row per document; dimensions without a prediction are `NA`.
pub fn predictions_to_tsv(preds: &Predictions) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for (id, scores) in preds {
        out.push_str(id);
        for d in Dimension::ALL {
            out.push('\t');
            out.push_str(&fmt_opt(scores.get(&d).copied()));
        }
        out.push('\n');
    }
    out
}

pub fn predictions_from_tsv(text: &str) -> Result<Predictions, EvalError> {
    let mut out = Predictions::new();
    for (line, raw) in numbered_lines(text) {
        if raw == PREDICTIONS_HEADER {
            continue;
        }
        let bad = |message: String| EvalError::Malformed { line, message };
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let mut scores = BTreeMap::new();
        for (d, f) in Dimension::ALL.iter().zip(&fields[1..]) {
            if let Some(v) = parse_opt(f).map_err(|e| bad(e.to_string()))? {
                scores.insert(*d, v);
            }
        }
        out.insert(fields[0].to_string(), scores);
    }
    Ok(out)
}

/// How predicted dimensions are paired with reference columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Each predicted dimension against the same reference dimension.
    #[default]
    SameDimension,
    /// Every predicted dimension against one reference column, e.g. the
    /// single quality score of a binary-judgment corpus.
    AgainstReference(Dimension),
}

/// One row per (predicted dimension × reference), ids aligned by
/// intersection.
pub fn evaluate(
    predictions: &Predictions,
    references: &BTreeMap<Reference, ScoreTable>,
    domain: Domain,
    pairing: Pairing,
) -> Result<EvalResult, EvalError> {
    let dims: std::collections::BTreeSet<Dimension> = predictions.values().flat_map(|m| m.keys().copied()).collect();
    let mut rows = Vec::new();
    for &dimension in &dims {
        let ref_dim = match pairing {
            Pairing::SameDimension => dimension,
            Pairing::AgainstReference(d) => d,
        };
        for (&reference, table) in references {
            let (pred, gold): (Vec<f64>, Vec<f64>) = predictions
                .iter()
                .filter_map(|(id, p)| Some((*p.get(&dimension)?, *table.get(id)?.get(&ref_dim)?)))
                .unzip();
            let n = pred.len();
            if n < 2 {
                return Err(EvalError::SmallIntersection { dimension, reference, n });
            }
            rows.push(EvalRow {
                domain,
                dimension,
                reference,
                pearson: pearson(&pred, &gold)?,
                spearman: spearman(&pred, &gold)?,
                n,
            });
        }
    }
    Ok(EvalResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn predictions_tsv_round_trip() {
        let mut p = Predictions::new();
        p.insert("a".into(), [(Dimension::Overall, 2.5), (Dimension::Cogency, -1.0)].into_iter().collect());
        p.insert("b".into(), BTreeMap::new());
        let t = predictions_to_tsv(&p);
        assert!(t.contains("a\t-1\tNA\tNA\t2.5"));
        assert_eq!(predictions_from_tsv(&t).unwrap(), p);
        assert!(predictions_from_tsv("x\t1\t2").is_err());
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), Some(1.0));
        assert_eq!(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), Some(-1.0));
        let r = pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap().unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(pearson(&[1., 1., 1.], &[1., 2., 3.]).unwrap(), None);
        assert!(matches!(pearson(&[1.], &[1., 2.]), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(pearson(&[1.], &[1.]), Err(EvalError::TooFew(1))));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1., 2., 3.], &[10., 20., 300.]).unwrap(), Some(1.0));
        let rho = spearman(&[1., 2., 3.], &[1., 3., 2.]).unwrap().unwrap();
        assert!((rho - 0.5).abs() < 1e-15);
        assert_eq!(spearman(&[1., 2., 3.], &[4., 4., 4.]).unwrap(), None);
    }

    #[test]
    fn ties_share_mean_rank() {
        assert_eq!(average_ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    proptest! {
        #[test]
        fn pearson_affine(x in prop::collection::vec(-10.0f64..10.0, 3..30), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!(a.abs() > 1e-3);
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + i as f64 * 0.1).collect();
            if let Some(r) = pearson(&x, &y).unwrap() {
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&ax, &y).unwrap().unwrap();
                prop_assert!((r2 - a.signum() * r).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_monotone_invariance(x in prop::collection::vec(-3.0f64..3.0, 3..30)) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 1.7 + i as f64).cos()).collect();
            let fx: Vec<f64> = x.iter().map(|v| v.exp() * 2.0 + 1.0).collect();
            prop_assert_eq!(spearman(&x, &y).unwrap(), spearman(&fx, &y).unwrap());
        }
    }

    fn table(pairs: &[(&str, f64)]) -> ScoreTable {
        pairs
            .iter()
            .map(|(id, v)| (id.to_string(), [(Dimension::Overall, *v)].into_iter().collect()))
            .collect()
    }

    #[test]
    fn evaluate_aligns_by_id() {
        let preds: Predictions = table(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("z", 9.0)]);
        let mut refs = BTreeMap::new();
        refs.insert(Reference::Mix, table(&[("c", 3.0), ("a", 1.0), ("b", 2.0)]));
        refs.insert(Reference::Crowd, table(&[("a", 3.0), ("b", 1.0), ("c", 2.0)]));
        let res = evaluate(&preds, &refs, Domain::Cqa, Pairing::SameDimension).unwrap();
        assert_eq!(res.rows.len(), 2);
        let mix = res.get(Domain::Cqa, Dimension::Overall, Reference::Mix).unwrap();
        assert_eq!((mix.pearson, mix.spearman, mix.n), (Some(1.0), Some(1.0), 3));
        assert_eq!(EvalResult::from_tsv(&res.to_tsv()).unwrap(), res);

        refs.insert(Reference::Expert, table(&[("a", 1.0)]));
        assert!(matches!(
            evaluate(&preds, &refs, Domain::Cqa, Pairing::SameDimension),
            Err(EvalError::SmallIntersection { n: 1, .. })
        ));
    }
}
