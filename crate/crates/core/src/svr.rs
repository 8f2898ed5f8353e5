//! Epsilon-insensitive support vector regression solved in the dual with
//! SMO (maximal violating pair working-set selection).
//!
//! The dual is handled in the usual 2n-variable form: `β = (α, α*)`, signs
//! `s = (+1…, −1…)`, minimise `½ βᵀQβ + pᵀβ` with
//! `Q_uv = s_u s_v K(u mod n, v mod n)`, `p = (ε − y, ε + y)`, subject to
//! `0 ≤ β ≤ C` and `Σ s_u β_u = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

pub const FORMAT_VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("no training data")]
    Empty,
    #[error("{0} inputs but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    BadParam(String),
    #[error("model file: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> f64 {
        match *self {
            Kernel::Linear => a.dot(b),
            Kernel::Rbf { gamma } => {
                let d2 = (a.norm_sq() + b.norm_sq() - 2.0 * a.dot(b)).max(0.0);
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice before fitting; an RBF without `gamma` uses
/// `1 / (d · Var(X))` over all entries of the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { gamma: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            kernel: KernelSpec::default(),
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub format_version: u32,
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub dim: usize,
    /// `α_i − α_i*` for each support vector.
    pub dual_coef: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub support_vectors: Vec<FeatureVector>,
    pub bias: f64,
    /// Primal weights, present for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective (maximisation form) at the returned iterate.
    pub dual_objective: f64,
}

impl SvrModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, SvrError> {
        let m: SvrModel = serde_json::from_str(text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(SvrError::Version(m.format_version));
        }
        Ok(m)
    }
}

/// Per-iteration record, collected when requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoTrace {
    /// Dual objective (maximisation form) after each update.
    pub objective: Vec<f64>,
    /// Worst box-constraint violation seen at any iteration.
    pub max_box_violation: f64,
    /// Worst `|Σ (α_i − α_i*)|` seen at any iteration.
    pub max_equality_violation: f64,
}

pub fn default_gamma(x: &[FeatureVector]) -> f64 {
    let dim = x.first().map(FeatureVector::dim).unwrap_or(0);
    let cells = (x.len() * dim) as f64;
    if cells == 0.0 {
        return 1.0;
    }
    let sum: f64 = x.iter().flat_map(|v| v.entries()).map(|e| e.1).sum();
    let sum_sq: f64 = x.iter().map(FeatureVector::norm_sq).sum();
    let mean = sum / cells;
    let var = sum_sq / cells - mean * mean;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

pub fn svr_fit(x: &[FeatureVector], y: &[f64], params: &SvrParams) -> Result<SvrModel, SvrError> {
    fit_inner(x, y, params, None)
}

pub fn svr_fit_traced(x: &[FeatureVector], y: &[f64], params: &SvrParams) -> Result<(SvrModel, SmoTrace), SvrError> {
    let mut trace = SmoTrace::default();
    let model = fit_inner(x, y, params, Some(&mut trace))?;
    Ok((model, trace))
}

fn fit_inner(
    x: &[FeatureVector],
    y: &[f64],
    params: &SvrParams,
    mut trace: Option<&mut SmoTrace>,
) -> Result<SvrModel, SvrError> {
    if x.is_empty() {
        return Err(SvrError::Empty);
    }
    if x.len() != y.len() {
        return Err(SvrError::LengthMismatch(x.len(), y.len()));
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(SvrError::BadParam(format!("C must be > 0, got {}", params.c)));
    }
    if !(params.epsilon >= 0.0) {
        return Err(SvrError::BadParam(format!("epsilon must be >= 0, got {}", params.epsilon)));
    }
    if !(params.tol > 0.0) {
        return Err(SvrError::BadParam(format!("tol must be > 0, got {}", params.tol)));
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(SvrError::DimensionMismatch { expected: dim, got: bad.dim() });
    }

    let kernel = match params.kernel {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
        KernelSpec::Rbf { gamma: None } => Kernel::Rbf { gamma: default_gamma(x) },
    };

    let n = x.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kernel.eval(&x[i], &x[j])).collect())
        .collect();

    let l = 2 * n;
    let c = params.c;
    let sign = |u: usize| if u < n { 1.0 } else { -1.0 };
    let q = |u: usize, v: usize| sign(u) * sign(v) * gram[u % n][v % n];
    let p: Vec<f64> = (0..l)
        .map(|u| if u < n { params.epsilon - y[u] } else { params.epsilon + y[u - n] })
        .collect();

    let mut beta = vec![0.0; l];
    let mut grad = p.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        let (mut g_max, mut i_sel) = (f64::NEG_INFINITY, usize::MAX);
        let (mut g_min, mut j_sel) = (f64::INFINITY, usize::MAX);
        for u in 0..l {
            let s = sign(u);
            let v = -s * grad[u];
            let up = if s > 0.0 { beta[u] < c } else { beta[u] > 0.0 };
            let low = if s > 0.0 { beta[u] > 0.0 } else { beta[u] < c };
            if up && v > g_max {
                g_max = v;
                i_sel = u;
            }
            if low && v < g_min {
                g_min = v;
                j_sel = u;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || g_max - g_min < params.tol {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (beta[i], beta[j]);
        let mut quad = q(i, i) + q(j, j) - 2.0 * sign(i) * sign(j) * q(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }

        if sign(i) != sign(j) {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }

        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for (u, g) in grad.iter_mut().enumerate() {
            *g += q(u, i) * di + q(u, j) * dj;
        }
        iterations += 1;

        if let Some(t) = trace.as_deref_mut() {
            t.objective.push(dual_objective(&beta, &grad, &p));
            let box_violation = beta.iter().map(|&b| (-b).max(b - c).max(0.0)).fold(0.0, f64::max);
            let eq: f64 = (0..n).map(|k| beta[k] - beta[k + n]).sum();
            t.max_box_violation = t.max_box_violation.max(box_violation);
            t.max_equality_violation = t.max_equality_violation.max(eq.abs());
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tol {}", params.tol);
    }

    // Bias from free variables, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for u in 0..l {
        let yg = sign(u) * grad[u];
        if beta[u] >= c {
            if sign(u) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[u] <= 0.0 {
            if sign(u) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };

    let mut dual_coef = Vec::new();
    let mut support_indices = Vec::new();
    let mut support_vectors = Vec::new();
    for k in 0..n {
        let coef = beta[k] - beta[k + n];
        if coef != 0.0 {
            dual_coef.push(coef);
            support_indices.push(k);
            support_vectors.push(x[k].clone());
        }
    }
    let weights = matches!(kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; dim];
        for (sv, coef) in support_vectors.iter().zip(&dual_coef) {
            for &(i, v) in sv.entries() {
                w[i] += coef * v;
            }
        }
        w
    });

    Ok(SvrModel {
        format_version: FORMAT_VERSION,
        kernel,
        c,
        epsilon: params.epsilon,
        dim,
        dual_coef,
        support_indices,
        support_vectors,
        bias: -rho,
        weights,
        converged,
        iterations,
        dual_objective: dual_objective(&beta, &grad, &p),
    })
}

/// `−(½ βᵀQβ + pᵀβ)`, using `G = Qβ + p`.
fn dual_objective(beta: &[f64], grad: &[f64], p: &[f64]) -> f64 {
    -0.5 * beta.iter().zip(grad.iter().zip(p)).map(|(b, (g, p))| b * (g + p)).sum::<f64>()
}

pub fn svr_predict(model: &SvrModel, x: &FeatureVector) -> Result<f64, SvrError> {
    if x.dim() != model.dim {
        return Err(SvrError::DimensionMismatch {
            expected: model.dim,
            got: x.dim(),
        });
    }
    if let Some(w) = &model.weights {
        return Ok(x.dot_dense(w) + model.bias);
    }
    Ok(model
        .support_vectors
        .iter()
        .zip(&model.dual_coef)
        .map(|(sv, coef)| coef * model.kernel.eval(sv, x))
        .sum::<f64>()
        + model.bias)
}

/// Mean epsilon-insensitive loss `max(0, |f(x) − y| − ε)`.
pub fn eps_loss(model: &SvrModel, x: &[FeatureVector], y: &[f64]) -> Result<f64, SvrError> {
    if x.len() != y.len() {
        return Err(SvrError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(SvrError::Empty);
    }
    let mut total = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        total += ((svr_predict(model, xi)? - yi).abs() - model.epsilon).max(0.0);
    }
    Ok(total / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Vec<FeatureVector> {
        points.iter().map(|&v| FeatureVector::from_dense(&[v])).collect()
    }

    fn linear(c: f64, epsilon: f64) -> SvrParams {
        SvrParams {
            c,
            epsilon,
            kernel: KernelSpec::Linear,
            tol: 1e-6,
            ..Default::default()
        }
    }

    #[test]
    fn tube_fixture_recovers_half_slope() {
        let x = line(&[0.0, 1.0, 2.0]);
        let y = [0.0, 1.0, 2.0];
        let m = svr_fit(&x, &y, &linear(10.0, 0.5)).unwrap();
        let w = m.weights.as_ref().unwrap()[0];
        assert!((w - 0.5).abs() < 1e-3, "w = {w}");
        assert!((m.bias - 0.5).abs() < 1e-3, "b = {}", m.bias);
        assert!(m.converged);
        let p = svr_predict(&m, &FeatureVector::from_dense(&[2.0])).unwrap();
        assert!((p - 1.5).abs() < 1e-3);
        assert!(eps_loss(&m, &x, &y).unwrap() < 1e-6);
    }

    #[test]
    fn zero_tube_interpolates() {
        let x = line(&[0.0, 1.0, 2.0]);
        let m = svr_fit(&x, &[0.0, 1.0, 2.0], &linear(1000.0, 0.0)).unwrap();
        assert!((m.weights.as_ref().unwrap()[0] - 1.0).abs() < 1e-3);
        assert!(m.bias.abs() < 1e-3);
    }

    #[test]
    fn single_point_is_constant() {
        for eps in [0.0, 0.3, 2.0] {
            let m = svr_fit(&line(&[4.0]), &[2.5], &linear(1.0, eps)).unwrap();
            assert!(m.dual_coef.is_empty());
            assert!((m.bias - 2.5).abs() < 1e-12);
            assert_eq!(svr_predict(&m, &FeatureVector::from_dense(&[-9.0])).unwrap(), m.bias);
        }
    }

    #[test]
    fn linear_predict_matches_kernel_expansion() {
        let x: Vec<FeatureVector> = (0..8)
            .map(|i| FeatureVector::from_dense(&[i as f64 * 0.3, (i as f64).sin(), 0.0]))
            .collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).cos()).collect();
        let m = svr_fit(&x, &y, &linear(1.0, 0.05)).unwrap();
        let mut expanded = m.clone();
        expanded.weights = None;
        for xi in &x {
            let a = svr_predict(&m, xi).unwrap();
            let b = svr_predict(&expanded, xi).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constraints_and_monotone_objective() {
        let x: Vec<FeatureVector> = (0..12)
            .map(|i| FeatureVector::from_dense(&[(i as f64 * 1.3).sin(), (i as f64 * 0.4).cos()]))
            .collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.9).sin() * 2.0).collect();
        let params = SvrParams { c: 0.5, epsilon: 0.1, ..Default::default() };
        let (m, trace) = svr_fit_traced(&x, &y, &params).unwrap();
        assert!(trace.max_box_violation <= 0.0);
        assert!(trace.max_equality_violation < 1e-8);
        for w in trace.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        assert!(m.dual_coef.iter().all(|a| a.abs() <= params.c));
        assert!(m.dual_coef.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn errors() {
        let x = line(&[1.0, 2.0]);
        assert!(matches!(svr_fit(&x, &[1.0], &SvrParams::default()), Err(SvrError::LengthMismatch(2, 1))));
        assert!(matches!(svr_fit(&[], &[], &SvrParams::default()), Err(SvrError::Empty)));
        let bad_c = SvrParams { c: 0.0, ..Default::default() };
        assert!(matches!(svr_fit(&x, &[1.0, 2.0], &bad_c), Err(SvrError::BadParam(_))));
        let ragged = vec![FeatureVector::from_dense(&[1.0]), FeatureVector::from_dense(&[1.0, 2.0])];
        assert!(matches!(svr_fit(&ragged, &[1.0, 2.0], &SvrParams::default()), Err(SvrError::DimensionMismatch { .. })));
        let m = svr_fit(&x, &[1.0, 2.0], &SvrParams::default()).unwrap();
        assert!(svr_predict(&m, &FeatureVector::from_dense(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn zero_coefficient_model_predicts_bias() {
        let m = SvrModel {
            format_version: FORMAT_VERSION,
            kernel: Kernel::Rbf { gamma: 1.0 },
            c: 1.0,
            epsilon: 0.1,
            dim: 2,
            dual_coef: vec![],
            support_indices: vec![],
            support_vectors: vec![],
            bias: 3.25,
            weights: None,
            converged: true,
            iterations: 0,
            dual_objective: 0.0,
        };
        for v in [[0.0, 0.0], [5.0, -1.0]] {
            assert_eq!(svr_predict(&m, &FeatureVector::from_dense(&v)).unwrap(), 3.25);
        }
        assert_eq!(SvrModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn residuals_two_eps() {
        let m = svr_fit(&line(&[0.0]), &[1.0], &linear(1.0, 0.5)).unwrap();
        // f ≡ 1; residuals 0 and 2ε = 1.0.
        let loss = eps_loss(&m, &line(&[0.0, 0.0]), &[1.0, 2.0]).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
    }
}
