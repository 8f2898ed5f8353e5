//! MACE: latent true label per item, per-annotator competence (probability of
//! copying the true label) and a spamming distribution used otherwise.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AggregationError, AnnotationRecord};
use crate::corpus::Dimension;
use crate::util::derived_rng;

/// Sparse items × annotators matrix of discrete labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    /// Label values; ratings refer to positions in this list.
    pub labels: Vec<i64>,
    /// Per item: `(annotator index, label index)`.
    pub ratings: Vec<Vec<(usize, usize)>>,
}

impl LabelMatrix {
    /// Items without any rating for `dim` are dropped.
    pub fn from_records(records: &[AnnotationRecord], dim: Dimension, labels: &[i64]) -> Self {
        let annotators: Vec<String> = records
            .iter()
            .map(|r| r.annotator_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut per_item: std::collections::BTreeMap<&str, Vec<(usize, usize)>> = Default::default();
        for r in records {
            let Some(v) = r.rating(dim) else { continue };
            let Some(l) = labels.iter().position(|&x| x == v) else { continue };
            let a = annotators.binary_search(&r.annotator_id).expect("collected above");
            per_item.entry(r.doc_id.as_str()).or_default().push((a, l));
        }
        LabelMatrix {
            items: per_item.keys().map(|s| s.to_string()).collect(),
            annotators,
            labels: labels.to_vec(),
            ratings: per_item.into_values().collect(),
        }
    }

    /// Dense form: `rows[i][j]` is annotator `j`'s label index on item `i`.
    pub fn from_dense(rows: &[Vec<Option<usize>>], k: usize) -> Self {
        let n_annotators = rows.iter().map(Vec::len).max().unwrap_or(0);
        LabelMatrix {
            items: (0..rows.len()).map(|i| format!("item{i}")).collect(),
            annotators: (0..n_annotators).map(|j| format!("annotator{j}")).collect(),
            labels: (0..k as i64).collect(),
            ratings: rows
                .iter()
                .map(|row| row.iter().enumerate().filter_map(|(j, l)| l.map(|l| (j, l))).collect())
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaceConfig {
    pub restarts: usize,
    pub iterations: usize,
    /// Pseudo-count added to expected counts; `None` means `0.1 / k`.
    pub smoothing: Option<f64>,
    pub seed: u64,
}

impl Default for MaceConfig {
    fn default() -> Self {
        MaceConfig {
            restarts: 10,
            iterations: 50,
            smoothing: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaceResult {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    pub labels: Vec<i64>,
    /// Probability that each annotator copies the true label.
    pub competence: Vec<f64>,
    /// Per annotator, label distribution used when not copying.
    pub spam: Vec<Vec<f64>>,
    pub posteriors: Vec<Vec<f64>>,
    /// Penalised log-likelihood of the selected run: data log-likelihood plus
    /// the log-density of the Beta/Dirichlet priors implied by `smoothing`.
    /// Equals the plain data log-likelihood when smoothing is zero.
    pub log_likelihood: f64,
    pub data_log_likelihood: f64,
    pub best_restart: usize,
    /// Objective after every E-step, one trace per restart.
    pub traces: Vec<Vec<f64>>,
}

impl MaceResult {
    pub fn argmax_labels(&self) -> Vec<i64> {
        self.posteriors
            .iter()
            .map(|p| {
                let best = p
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
                self.labels[best]
            })
            .collect()
    }
}

/// Posterior probability of `positive_label` for `item`.
pub fn mace_p(result: &MaceResult, item: &str, positive_label: i64) -> Result<f64, AggregationError> {
    let i = result
        .items
        .iter()
        .position(|x| x == item)
        .ok_or_else(|| AggregationError::UnknownItem(item.to_string()))?;
    let l = result
        .labels
        .iter()
        .position(|&x| x == positive_label)
        .ok_or(AggregationError::UnknownLabel(positive_label))?;
    Ok(result.posteriors[i][l])
}

struct Run {
    competence: Vec<f64>,
    spam: Vec<Vec<f64>>,
    posteriors: Vec<Vec<f64>>,
    objective: f64,
    data_ll: f64,
    trace: Vec<f64>,
}

pub fn mace_em(matrix: &LabelMatrix, config: &MaceConfig) -> Result<MaceResult, AggregationError> {
    let k = matrix.k();
    if k < 2 {
        return Err(AggregationError::BadConfig("need at least two labels".into()));
    }
    if config.restarts < 1 {
        return Err(AggregationError::BadConfig("restarts must be >= 1".into()));
    }
    if config.iterations < 1 {
        return Err(AggregationError::BadConfig("iterations must be >= 1".into()));
    }
    let smoothing = config.smoothing.unwrap_or(0.1 / k as f64);
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(AggregationError::BadConfig("smoothing must be finite and >= 0".into()));
    }
    if let Some(i) = matrix.ratings.iter().position(Vec::is_empty) {
        return Err(AggregationError::BadConfig(format!("item `{}` has no ratings", matrix.items[i])));
    }

    let runs: Vec<Run> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_em(matrix, smoothing, config.iterations, config.seed, r as u64))
        .collect();
    let (best_restart, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bo), (i, run)| {
            if run.objective > bo {
                (i, run.objective)
            } else {
                (bi, bo)
            }
        });
    let traces = runs.iter().map(|r| r.trace.clone()).collect();
    let best = runs.into_iter().nth(best_restart).expect("restarts >= 1");
    Ok(MaceResult {
        items: matrix.items.clone(),
        annotators: matrix.annotators.clone(),
        labels: matrix.labels.clone(),
        competence: best.competence,
        spam: best.spam,
        posteriors: best.posteriors,
        log_likelihood: best.objective,
        data_log_likelihood: best.data_ll,
        best_restart,
        traces,
    })
}

fn run_em(matrix: &LabelMatrix, smoothing: f64, iterations: usize, seed: u64, restart: u64) -> Run {
    let k = matrix.k();
    let n_ann = matrix.annotators.len();
    let mut rng = derived_rng(seed, restart);
    let mut competence: Vec<f64> = (0..n_ann).map(|_| rng.gen_range(0.05..0.95)).collect();
    let mut spam: Vec<Vec<f64>> = (0..n_ann)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();

    let log_prior = -(k as f64).ln();
    let mut posteriors = vec![vec![0.0; k]; matrix.items.len()];
    let mut trace = Vec::with_capacity(iterations + 1);
    let mut data_ll = 0.0;
    let mut objective = f64::NEG_INFINITY;

    for step in 0..=iterations {
        // E-step
        data_ll = 0.0;
        let mut logp = vec![0.0; k];
        for (item, post) in matrix.ratings.iter().zip(posteriors.iter_mut()) {
            for (t, lp) in logp.iter_mut().enumerate() {
                *lp = log_prior
                    + item
                        .iter()
                        .map(|&(j, a)| {
                            let copy = if a == t { competence[j] } else { 0.0 };
                            (copy + (1.0 - competence[j]) * spam[j][a]).ln()
                        })
                        .sum::<f64>();
            }
            let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logp.iter().map(|lp| (lp - m).exp()).sum();
            data_ll += m + z.ln();
            for (p, lp) in post.iter_mut().zip(&logp) {
                *p = (lp - m).exp() / z;
            }
        }
        objective = data_ll + log_prior_density(&competence, &spam, smoothing);
        trace.push(objective);
        if step == iterations {
            break;
        }

        // M-step
        let mut know = vec![0.0; n_ann];
        let mut total = vec![0.0; n_ann];
        let mut spam_counts = vec![vec![0.0; k]; n_ann];
        for (item, post) in matrix.ratings.iter().zip(&posteriors) {
            for &(j, a) in item {
                let copy = competence[j];
                let p_copy_given_true = copy / (copy + (1.0 - copy) * spam[j][a]);
                let known = post[a] * p_copy_given_true;
                know[j] += known;
                total[j] += 1.0;
                spam_counts[j][a] += 1.0 - known;
            }
        }
        for j in 0..n_ann {
            competence[j] = (know[j] + smoothing) / (total[j] + 2.0 * smoothing);
            let s: f64 = spam_counts[j].iter().sum::<f64>() + k as f64 * smoothing;
            if s > 0.0 {
                for (x, c) in spam[j].iter_mut().zip(&spam_counts[j]) {
                    *x = (c + smoothing) / s;
                }
            }
        }
    }

    Run {
        competence,
        spam,
        posteriors,
        objective,
        data_ll,
        trace,
    }
}

fn log_prior_density(competence: &[f64], spam: &[Vec<f64>], smoothing: f64) -> f64 {
    if smoothing == 0.0 {
        return 0.0;
    }
    let theta: f64 = competence.iter().map(|t| t.ln() + (1.0 - t).ln()).sum();
    let xi: f64 = spam.iter().flatten().map(|x| x.ln()).sum();
    smoothing * (theta + xi)
}
