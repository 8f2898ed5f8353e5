use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnnotationRecord;
use crate::corpus::Dimension;

/// Annotators whose average agreement with the rest falls below this are
/// blocked.
pub const BLOCKING_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Ordinal,
    Nominal,
}

/// Items × annotators with missing cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingMatrix {
    pub cells: Vec<Vec<Option<f64>>>,
}

impl RatingMatrix {
    pub fn new(cells: Vec<Vec<Option<f64>>>) -> Self {
        RatingMatrix { cells }
    }

    /// Builds the matrix for one dimension; rows follow sorted doc ids,
    /// columns sorted annotator ids. Abstentions are missing cells.
    pub fn from_records(records: &[AnnotationRecord], dim: Dimension) -> Self {
        let docs: BTreeSet<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
        let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
        let row_of: BTreeMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let col_of: BTreeMap<&str, usize> = annotators.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut cells = vec![vec![None; annotators.len()]; docs.len()];
        for r in records {
            if let Some(v) = r.rating(dim) {
                cells[row_of[r.doc_id.as_str()]][col_of[r.annotator_id.as_str()]] = Some(v as f64);
            }
        }
        RatingMatrix { cells }
    }

    /// Units carrying at least two ratings.
    pub fn pairable_units(&self) -> usize {
        self.cells.iter().filter(|row| row.iter().flatten().count() >= 2).count()
    }
}

/// Krippendorff's alpha via the coincidence matrix. `None` when there are
/// fewer than two pairable values or the expected disagreement is zero.
pub fn krippendorff_alpha(matrix: &RatingMatrix, metric: AlphaMetric) -> Option<f64> {
    let mut values: Vec<f64> = matrix.cells.iter().flatten().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let k = values.len();
    let index = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value collected above");

    let mut coincidences = vec![vec![0.0f64; k]; k];
    let mut counts = vec![0.0f64; k];
    for row in &matrix.cells {
        let m = row.iter().flatten().count();
        if m < 2 {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0.0);
        for v in row.iter().flatten() {
            counts[index(*v)] += 1.0;
        }
        let scale = 1.0 / (m as f64 - 1.0);
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            for e in 0..k {
                let pairs = if c == e { counts[c] * (counts[c] - 1.0) } else { counts[c] * counts[e] };
                coincidences[c][e] += pairs * scale;
            }
        }
    }

    let marginals: Vec<f64> = coincidences.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return None;
    }

    let delta = |c: usize, e: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => (values[c] - values[e]).powi(2),
            AlphaMetric::Nominal => f64::from(u8::from(c != e)),
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= e { (c, e) } else { (e, c) };
                let between: f64 = marginals[lo..=hi].iter().sum();
                (between - (marginals[c] + marginals[e]) / 2.0).powi(2)
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for e in 0..k {
            if c == e {
                continue;
            }
            let d = delta(c, e);
            observed += coincidences[c][e] * d;
            expected += marginals[c] * marginals[e] * d;
        }
    }
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - (n - 1.0) * observed / expected)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    /// Mean of the per-dimension group alphas that are defined.
    pub alpha: Option<f64>,
    pub by_dimension: BTreeMap<Dimension, Option<f64>>,
    pub n_units: usize,
    pub metric: AlphaMetric,
    pub threshold: f64,
    pub per_annotator: BTreeMap<String, f64>,
    pub blocked: BTreeSet<String>,
    /// Annotators with no shared items (or no defined alpha), left out of
    /// `per_annotator`.
    pub excluded: BTreeSet<String>,
}

pub fn alpha_by_dimension(
    records: &[AnnotationRecord],
    dims: &[Dimension],
    metric: AlphaMetric,
) -> BTreeMap<Dimension, Option<f64>> {
    dims.iter()
        .map(|&d| (d, krippendorff_alpha(&RatingMatrix::from_records(records, d), metric)))
        .collect()
}

/// Agreement of each annotator with the mean of the remaining annotators on
/// shared items, as a two-rater alpha per dimension averaged over `dims`.
/// Annotators averaging below `threshold` are blocked.
pub fn per_annotator_alpha(
    records: &[AnnotationRecord],
    dims: &[Dimension],
    threshold: f64,
    metric: AlphaMetric,
) -> AlphaReport {
    let by_dimension = alpha_by_dimension(records, dims, metric);
    let defined: Vec<f64> = by_dimension.values().flatten().copied().collect();
    let alpha = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let n_units = dims
        .iter()
        .map(|&d| RatingMatrix::from_records(records, d).pairable_units())
        .max()
        .unwrap_or(0);

    let mut by_doc: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_doc.entry(r.doc_id.as_str()).or_default().push(r);
    }
    let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();

    let mut per_annotator = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    for &who in &annotators {
        let mut alphas = Vec::new();
        for &dim in dims {
            let mut rows = Vec::new();
            for (_, rs) in by_doc.iter().filter(|(_, rs)| rs.iter().any(|r| r.annotator_id == who)) {
                let own = rs.iter().find(|r| r.annotator_id == who).and_then(|r| r.rating(dim));
                let rest: Vec<f64> = rs
                    .iter()
                    .filter(|r| r.annotator_id != who)
                    .filter_map(|r| r.rating(dim))
                    .map(|v| v as f64)
                    .collect();
                if let (Some(own), false) = (own, rest.is_empty()) {
                    let rest_mean = rest.iter().sum::<f64>() / rest.len() as f64;
                    rows.push(vec![Some(own as f64), Some(rest_mean)]);
                }
            }
            if let Some(a) = krippendorff_alpha(&RatingMatrix::new(rows), metric) {
                alphas.push(a);
            }
        }
        if alphas.is_empty() {
            excluded.insert(who.to_string());
        } else {
            per_annotator.insert(who.to_string(), alphas.iter().sum::<f64>() / alphas.len() as f64);
        }
    }
    let blocked = per_annotator
        .iter()
        .filter(|(_, a)| **a < threshold)
        .map(|(who, _)| who.clone())
        .collect();

    AlphaReport {
        alpha,
        by_dimension,
        n_units,
        metric,
        threshold,
        per_annotator,
        blocked,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{Group, Rating};

    fn two_raters(a: &[f64], b: &[f64]) -> RatingMatrix {
        RatingMatrix::new(a.iter().zip(b).map(|(x, y)| vec![Some(*x), Some(*y)]).collect())
    }

    #[test]
    fn perfect_agreement_is_one() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(krippendorff_alpha(&two_raters(&v, &v), AlphaMetric::Interval), Some(1.0));
        assert_eq!(krippendorff_alpha(&two_raters(&v, &v), AlphaMetric::Nominal), Some(1.0));
        assert_eq!(krippendorff_alpha(&two_raters(&v, &v), AlphaMetric::Ordinal), Some(1.0));
    }

    #[test]
    fn constant_ratings_are_undefined() {
        let v = [3.0; 4];
        assert_eq!(krippendorff_alpha(&two_raters(&v, &v), AlphaMetric::Interval), None);
        assert_eq!(krippendorff_alpha(&RatingMatrix::default(), AlphaMetric::Interval), None);
    }

    #[test]
    fn textbook_nominal_example() {
        // Krippendorff's reliability-data example (4 coders, 12 units,
        // nominal alpha = 0.743).
        let rows: Vec<[Option<f64>; 4]> = vec![
            [Some(1.), Some(1.), None, Some(1.)],
            [Some(2.), Some(2.), Some(3.), Some(2.)],
            [Some(3.), Some(3.), Some(3.), Some(3.)],
            [Some(3.), Some(3.), Some(3.), Some(3.)],
            [Some(2.), Some(2.), Some(2.), Some(2.)],
            [Some(1.), Some(2.), Some(3.), Some(4.)],
            [Some(4.), Some(4.), Some(4.), Some(4.)],
            [Some(1.), Some(1.), Some(2.), Some(1.)],
            [Some(2.), Some(2.), Some(2.), Some(2.)],
            [None, Some(5.), Some(5.), Some(5.)],
            [None, None, Some(1.), Some(1.)],
            [None, Some(3.), None, None],
        ];
        let m = RatingMatrix::new(rows.into_iter().map(|r| r.to_vec()).collect());
        let a = krippendorff_alpha(&m, AlphaMetric::Nominal).unwrap();
        assert!((a - 0.743).abs() < 5e-4, "{a}");
        let interval = krippendorff_alpha(&m, AlphaMetric::Interval).unwrap();
        assert!((interval - 0.849).abs() < 5e-4, "{interval}");
        let ordinal = krippendorff_alpha(&m, AlphaMetric::Ordinal).unwrap();
        assert!((ordinal - 0.815).abs() < 5e-4, "{ordinal}");
    }

    fn rec(doc: usize, who: &str, v: i64) -> AnnotationRecord {
        AnnotationRecord {
            doc_id: format!("d{doc}"),
            annotator_id: who.into(),
            group: Group::Crowd,
            ratings: [(Dimension::Overall, Rating::Score(v))].into_iter().collect(),
        }
    }

    #[test]
    fn group_copy_is_not_blocked() {
        let mut recs = Vec::new();
        for doc in 0..20 {
            let v = (doc % 5) as i64 + 1;
            for who in ["a", "b", "c"] {
                recs.push(rec(doc, who, v));
            }
        }
        recs.push(rec(99, "lonely", 3));
        let report = per_annotator_alpha(&recs, &[Dimension::Overall], BLOCKING_THRESHOLD, AlphaMetric::Interval);
        for who in ["a", "b", "c"] {
            assert_eq!(report.per_annotator[who], 1.0);
        }
        assert!(report.blocked.is_empty());
        assert!(report.excluded.contains("lonely"));
        assert_eq!(report.alpha, Some(1.0));
    }

    #[test]
    fn contrarian_is_blocked() {
        let mut recs = Vec::new();
        for doc in 0..30 {
            let v = (doc % 5) as i64 + 1;
            for who in ["a", "b", "c", "d"] {
                recs.push(rec(doc, who, v));
            }
            recs.push(rec(doc, "flip", 6 - v));
        }
        let report = per_annotator_alpha(&recs, &[Dimension::Overall], 0.1, AlphaMetric::Interval);
        assert!(report.per_annotator["flip"] < 0.0);
        assert_eq!(report.blocked, BTreeSet::from(["flip".to_string()]));
    }
}
