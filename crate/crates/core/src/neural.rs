//! Linear regression heads over a document encoder, trained single-task,
//! flat multi-task (sum of per-dimension MSEs) or hierarchically (the three
//! sub-dimension predictions are appended to the document representation
//! before the overall head).
//!
//! The encoder sits behind a vector boundary: averaged word embeddings, a
//! trainable `tanh(A·e + c)` projection of them, or representations
//! precomputed elsewhere and read from file.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dimension;
use crate::eval::{pearson, Predictions};
use crate::util::{derived_rng, fmt_opt, numbered_lines};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("missing loss for {0}")]
    MissingDimension(Dimension),
    #[error("example `{id}` has no {dimension} target")]
    MissingTarget { id: String, dimension: Dimension },
    #[error("no representation for doc `{0}`")]
    MissingInput(String),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("encoder mismatch: {0}")]
    EncoderMismatch(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Encoder {
    /// Identity over averaged word embeddings; nothing to train.
    MeanEmbedding { dim: usize },
    /// `h = tanh(A·e + c)` with `A` stored row-major (`hidden × input_dim`).
    Projection {
        input_dim: usize,
        hidden: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Identity over externally computed document representations.
    Precomputed { dim: usize },
}

impl Encoder {
    /// Uniform `±1/√input_dim` initialisation from `seed`; bias zero.
    pub fn projection(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = derived_rng(seed, 0x5eed);
        let bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        Encoder::Projection {
            input_dim,
            hidden,
            weights: (0..hidden * input_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::MeanEmbedding { dim } | Encoder::Precomputed { dim } => *dim,
            Encoder::Projection { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::MeanEmbedding { dim } | Encoder::Precomputed { dim } => *dim,
            Encoder::Projection { hidden, .. } => *hidden,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Encoder::Projection { .. })
    }

    fn n_params(&self) -> usize {
        match self {
            Encoder::Projection { weights, bias, .. } => weights.len() + bias.len(),
            _ => 0,
        }
    }

    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if input.len() != self.input_dim() {
            return Err(NeuralError::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(match self {
            Encoder::MeanEmbedding { .. } | Encoder::Precomputed { .. } => input.to_vec(),
            Encoder::Projection {
                input_dim,
                weights,
                bias,
                ..
            } => weights
                .chunks_exact(*input_dim)
                .zip(bias)
                .map(|(row, b)| (row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b).tanh())
                .collect(),
        })
    }

    /// Same architecture and shapes.
    fn compatible(&self, other: &Encoder) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
            && self.input_dim() == other.input_dim()
            && self.output_dim() == other.output_dim()
    }
}

/// Linear regression layer `ŷ = h·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub dimension: Dimension,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Head {
    pub fn zeros(dimension: Dimension, input: usize) -> Self {
        Head {
            dimension,
            weights: vec![0.0; input],
            bias: 0.0,
        }
    }
}

pub fn head_predict(h: &[f64], head: &Head) -> Result<f64, NeuralError> {
    if h.len() != head.weights.len() {
        return Err(NeuralError::Shape {
            expected: head.weights.len(),
            got: h.len(),
        });
    }
    Ok(h.iter().zip(&head.weights).map(|(a, w)| a * w).sum::<f64>() + head.bias)
}

/// `(1/k) Σ (y − ŷ)²`.
pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<f64, NeuralError> {
    if preds.len() != targets.len() {
        return Err(NeuralError::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(NeuralError::Empty);
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / preds.len() as f64)
}

/// Sum of the four per-dimension losses.
pub fn flat_loss(task_losses: &BTreeMap<Dimension, f64>) -> Result<f64, NeuralError> {
    Dimension::ALL.iter().try_fold(0.0, |acc, d| {
        task_losses
            .get(d)
            .map(|l| acc + l)
            .ok_or(NeuralError::MissingDimension(*d))
    })
}

/// Sub-dimension scores from `sub_heads` (Cogency, Effectiveness,
/// Reasonableness) and the overall score from `overall_head` applied to
/// `h_D` concatenated with those three scores.
pub fn hier_forward(h: &[f64], sub_heads: &[Head; 3], overall_head: &Head) -> Result<BTreeMap<Dimension, f64>, NeuralError> {
    let mut out = BTreeMap::new();
    let mut informed = h.to_vec();
    for (dim, head) in Dimension::SUB.iter().zip(sub_heads) {
        let y = head_predict(h, head)?;
        out.insert(*dim, y);
        informed.push(y);
    }
    out.insert(Dimension::Overall, head_predict(&informed, overall_head)?);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "dimension", rename_all = "snake_case")]
pub enum Variant {
    St(Dimension),
    Flat,
    Hier,
}

impl Variant {
    pub fn dimensions(self) -> Vec<Dimension> {
        match self {
            Variant::St(d) => vec![d],
            Variant::Flat | Variant::Hier => Dimension::ALL.to_vec(),
        }
    }

    /// Dimension used for model selection.
    pub fn primary(self) -> Dimension {
        match self {
            Variant::St(d) => d,
            Variant::Flat | Variant::Hier => Dimension::Overall,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam-style adaptive moments with bias correction.
    AdaptiveMoments { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::AdaptiveMoments {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    /// Hierarchical two-stage mode: train only the sub-dimension losses for
    /// this many epochs, then freeze the sub-heads and add the overall loss.
    /// `None` trains all four losses jointly from the start.
    #[serde(default)]
    pub hier_warmup_epochs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            epochs: 3,
            batch_size: 16,
            optimizer: Optimizer::default(),
            seed: 0,
            hier_warmup_epochs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(NeuralError::BadConfig(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs < 1 {
            return Err(NeuralError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NeuralError::BadConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtModel {
    pub format_version: u32,
    pub variant: Variant,
    pub encoder: Encoder,
    /// Ordered by dimension; the hierarchical overall head has `H + 3` inputs.
    pub heads: Vec<Head>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
}

impl MtModel {
    /// Zero-initialised heads for `variant` on top of `encoder`.
    pub fn new(variant: Variant, encoder: Encoder) -> Self {
        let h = encoder.output_dim();
        let heads = match variant {
            Variant::St(d) => vec![Head::zeros(d, h)],
            Variant::Flat => Dimension::ALL.iter().map(|&d| Head::zeros(d, h)).collect(),
            Variant::Hier => Dimension::ALL
                .iter()
                .map(|&d| Head::zeros(d, if d.is_root() { h + 3 } else { h }))
                .collect(),
        };
        MtModel {
            format_version: FORMAT_VERSION,
            variant,
            encoder,
            heads,
            train_config: None,
        }
    }

    pub fn head(&self, dim: Dimension) -> Option<&Head> {
        self.heads.iter().find(|h| h.dimension == dim)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let m: MtModel = serde_json::from_str(text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(NeuralError::Version(m.format_version));
        }
        Ok(m)
    }

    /// Scores for the variant's dimensions; unclamped.
    pub fn predict(&self, input: &[f64]) -> Result<BTreeMap<Dimension, f64>, NeuralError> {
        let h = self.encoder.encode(input)?;
        self.predict_from_hidden(&h)
    }

    fn predict_from_hidden(&self, h: &[f64]) -> Result<BTreeMap<Dimension, f64>, NeuralError> {
        match self.variant {
            Variant::Hier => {
                let sub = [self.heads[0].clone(), self.heads[1].clone(), self.heads[2].clone()];
                hier_forward(h, &sub, &self.heads[3])
            }
            _ => self
                .heads
                .iter()
                .map(|head| Ok((head.dimension, head_predict(h, head)?)))
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.heads.iter().map(|h| h.weights.len() + 1).sum::<usize>()
    }

    /// Encoder parameters (row-major `A`, then `c`) followed by each head's
    /// weights and bias in head order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        if let Encoder::Projection { weights, bias, .. } = &self.encoder {
            out.extend_from_slice(weights);
            out.extend_from_slice(bias);
        }
        for h in &self.heads {
            out.extend_from_slice(&h.weights);
            out.push(h.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let mut it = params.iter().copied();
        if let Encoder::Projection { weights, bias, .. } = &mut self.encoder {
            weights.iter_mut().chain(bias.iter_mut()).for_each(|w| *w = it.next().unwrap());
        }
        for h in &mut self.heads {
            h.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            h.bias = it.next().unwrap();
        }
    }
}

/// One training/evaluation instance: encoder input and per-dimension
/// targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub input: Vec<f64>,
    pub targets: BTreeMap<Dimension, f64>,
}

/// Which losses are active during a training phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Joint,
    /// Hierarchical warm-up: sub-dimension losses only.
    SubOnly,
    /// Hierarchical second phase: all losses, sub-heads frozen.
    FrozenSub,
}

fn active_dims(variant: Variant, stage: Stage) -> Vec<Dimension> {
    match (variant, stage) {
        (Variant::Hier, Stage::SubOnly) => Dimension::SUB.to_vec(),
        _ => variant.dimensions(),
    }
}

/// Loss of `variant` on `batch`: the task MSE for single-task models, the sum
/// of the four MSEs otherwise.
pub fn batch_loss(model: &MtModel, batch: &[&Example]) -> Result<f64, NeuralError> {
    loss_and_grad_staged(model, batch, Stage::Joint, false).map(|(l, _)| l)
}

/// Loss and its gradient with respect to [`MtModel::params`].
pub fn loss_and_grad(model: &MtModel, batch: &[&Example]) -> Result<(f64, Vec<f64>), NeuralError> {
    loss_and_grad_staged(model, batch, Stage::Joint, true)
}

fn loss_and_grad_staged(
    model: &MtModel,
    batch: &[&Example],
    stage: Stage,
    want_grad: bool,
) -> Result<(f64, Vec<f64>), NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::Empty);
    }
    let dims = active_dims(model.variant, stage);
    let k = batch.len() as f64;
    let hdim = model.encoder.output_dim();
    let enc_params = model.encoder.n_params();

    let mut grad = if want_grad { vec![0.0; model.n_params()] } else { Vec::new() };
    let head_offsets: Vec<usize> = model
        .heads
        .iter()
        .scan(enc_params, |off, h| {
            let start = *off;
            *off += h.weights.len() + 1;
            Some(start)
        })
        .collect();

    let mut sq_err: BTreeMap<Dimension, f64> = dims.iter().map(|&d| (d, 0.0)).collect();
    for ex in batch {
        for &d in &dims {
            if !ex.targets.contains_key(&d) {
                return Err(NeuralError::MissingTarget {
                    id: ex.id.clone(),
                    dimension: d,
                });
            }
        }
        let h = model.encoder.encode(&ex.input)?;
        let preds = model.predict_from_hidden(&h)?;
        let mut d_pred: BTreeMap<Dimension, f64> = BTreeMap::new();
        for &d in &dims {
            let err = preds[&d] - ex.targets[&d];
            *sq_err.get_mut(&d).unwrap() += err * err;
            d_pred.insert(d, 2.0 * err / k);
        }
        if !want_grad {
            continue;
        }

        let mut d_hidden = vec![0.0; hdim];
        if model.variant == Variant::Hier {
            // Overall head sees [h, ŷ_cog, ŷ_eff, ŷ_rea]; route its gradient
            // back into the three sub-scores.
            let overall = &model.heads[3];
            let g_over = d_pred.get(&Dimension::Overall).copied().unwrap_or(0.0);
            for (s, dim) in Dimension::SUB.iter().enumerate() {
                *d_pred.entry(*dim).or_insert(0.0) += g_over * overall.weights[hdim + s];
            }
        }
        for (hi, head) in model.heads.iter().enumerate() {
            let g = d_pred.get(&head.dimension).copied().unwrap_or(0.0);
            if g == 0.0 {
                continue;
            }
            let frozen = stage == Stage::FrozenSub && !head.dimension.is_root();
            if !frozen {
                let off = head_offsets[hi];
                for (j, hv) in h.iter().enumerate() {
                    grad[off + j] += g * hv;
                }
                if head.weights.len() > hdim {
                    for (s, dim) in Dimension::SUB.iter().enumerate() {
                        grad[off + hdim + s] += g * preds[dim];
                    }
                }
                grad[off + head.weights.len()] += g;
            }
            for (dh, w) in d_hidden.iter_mut().zip(&head.weights[..hdim]) {
                *dh += g * w;
            }
        }
        if let Encoder::Projection { input_dim, .. } = &model.encoder {
            let bias_off = hdim * input_dim;
            for (r, (dh, hv)) in d_hidden.iter().zip(&h).enumerate() {
                let dz = dh * (1.0 - hv * hv);
                for (s, x) in ex.input.iter().enumerate() {
                    grad[r * input_dim + s] += dz * x;
                }
                grad[bias_off + r] += dz;
            }
        }
    }
    let loss = sq_err.values().map(|s| s / k).sum();
    Ok((loss, grad))
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences, `|g_a − g_fd| / max(1e-8, |g_a| + |g_fd|)`.
pub fn grad_check(model: &MtModel, batch: &[&Example], fd_eps: f64) -> Result<f64, NeuralError> {
    let (_, analytic) = loss_and_grad(model, batch)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, g_a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + fd_eps;
        probe.set_params(&p);
        let up = batch_loss(&probe, batch)?;
        p[i] = base[i] - fd_eps;
        probe.set_params(&p);
        let down = batch_loss(&probe, batch)?;
        let g_fd = (up - down) / (2.0 * fd_eps);
        worst = worst.max((g_a - g_fd).abs() / (g_a.abs() + g_fd.abs()).max(1e-8));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub dimension: Option<Dimension>,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,dimension,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.split,
                r.dimension.map(|d| d.as_str()).unwrap_or("all"),
                r.metric,
                fmt_opt(r.value)
            ));
        }
        out
    }

    pub fn dev_pearson(&self, epoch: usize, dim: Dimension) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.epoch == epoch && r.split == "dev" && r.dimension == Some(dim) && r.metric == "pearson")
            .and_then(|r| r.value)
    }
}

struct OptimState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Parameters updated in `stage`; frozen ones keep their value even when
/// optimiser momentum is non-zero.
fn trainable_mask(model: &MtModel, stage: Stage) -> Vec<bool> {
    let mut mask = vec![true; model.encoder.n_params()];
    for h in &model.heads {
        let on = match stage {
            Stage::Joint => true,
            Stage::SubOnly => !h.dimension.is_root(),
            Stage::FrozenSub => h.dimension.is_root(),
        };
        mask.extend(std::iter::repeat_n(on, h.weights.len() + 1));
    }
    mask
}

fn apply_update(params: &mut [f64], grad: &[f64], mask: &[bool], lr: f64, opt: Optimizer, state: &mut OptimState) {
    match opt {
        Optimizer::Sgd => {
            for i in (0..params.len()).filter(|&i| mask[i]) {
                params[i] -= lr * grad[i];
            }
        }
        Optimizer::AdaptiveMoments { beta1, beta2, eps } => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            for i in (0..params.len()).filter(|&i| mask[i]) {
                let g = grad[i];
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                params[i] -= lr * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Mini-batch training of the variant's loss. Examples are ordered by id
/// before the per-epoch seeded shuffle, so input order does not matter.
pub fn train(
    model: &MtModel,
    train_data: &[Example],
    dev_data: &[Example],
    config: &TrainConfig,
) -> Result<(MtModel, History), NeuralError> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(NeuralError::Empty);
    }
    let mut ordered: Vec<&Example> = train_data.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut model = model.clone();
    model.train_config = Some(config.clone());
    let mut params = model.params();
    let mut state = OptimState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut history = History::default();

    for epoch in 0..config.epochs {
        let stage = match (model.variant, config.hier_warmup_epochs) {
            (Variant::Hier, Some(w)) if epoch < w => Stage::SubOnly,
            (Variant::Hier, Some(_)) => Stage::FrozenSub,
            _ => Stage::Joint,
        };
        let mut rng = derived_rng(config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..ordered.len()).collect();
        order.shuffle(&mut rng);
        let mask = trainable_mask(&model, stage);

        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| ordered[i]).collect();
            let (loss, grad) = loss_and_grad_staged(&model, &batch, stage, true)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::NonFinite { epoch, step });
            }
            apply_update(&mut params, &grad, &mask, config.learning_rate, config.optimizer, &mut state);
            model.set_params(&params);
        }

        let train_loss = loss_and_grad_staged(&model, &ordered, stage, false)?.0;
        if !train_loss.is_finite() {
            return Err(NeuralError::NonFinite { epoch, step: usize::MAX });
        }
        history.rows.push(HistoryRow {
            epoch: epoch + 1,
            split: "train".into(),
            dimension: None,
            metric: "loss".into(),
            value: Some(train_loss),
        });
        if !dev_data.is_empty() {
            for (dim, r) in dev_pearson(&model, dev_data)? {
                history.rows.push(HistoryRow {
                    epoch: epoch + 1,
                    split: "dev".into(),
                    dimension: Some(dim),
                    metric: "pearson".into(),
                    value: r,
                });
            }
        }
    }
    Ok((model, history))
}

/// Pearson of predictions against targets per model dimension.
pub fn dev_pearson(model: &MtModel, data: &[Example]) -> Result<BTreeMap<Dimension, Option<f64>>, NeuralError> {
    let mut out = BTreeMap::new();
    let preds: Vec<BTreeMap<Dimension, f64>> = data.iter().map(|ex| model.predict(&ex.input)).collect::<Result<_, _>>()?;
    for dim in model.variant.dimensions() {
        let (p, t): (Vec<f64>, Vec<f64>) = data
            .iter()
            .zip(&preds)
            .filter_map(|(ex, p)| Some((p[&dim], *ex.targets.get(&dim)?)))
            .unzip();
        out.insert(dim, if p.len() >= 2 { pearson(&p, &t).ok().flatten() } else { None });
    }
    Ok(out)
}

/// Continues training from `source`'s encoder: `template` fixes the target
/// variant and encoder shape, its heads are reset to zero.
pub fn stilt_transfer(
    source: &MtModel,
    template: &MtModel,
    target_train: &[Example],
    target_dev: &[Example],
    config: &TrainConfig,
) -> Result<(MtModel, History), NeuralError> {
    if !source.encoder.compatible(&template.encoder) {
        return Err(NeuralError::EncoderMismatch(format!(
            "source encoder {}→{} does not fit target {}→{}",
            source.encoder.input_dim(),
            source.encoder.output_dim(),
            template.encoder.input_dim(),
            template.encoder.output_dim()
        )));
    }
    if !source.encoder.is_trainable() {
        log::warn!("source encoder has no trainable parameters; transfer reduces to training from scratch");
    }
    let init = MtModel::new(template.variant, source.encoder.clone());
    train(&init, target_train, target_dev, config)
}

/// Predictions for `ids`, optionally clamped to `[lo, hi]`.
pub fn predict_all(
    model: &MtModel,
    inputs: &BTreeMap<String, Vec<f64>>,
    ids: &[String],
    clamp: Option<(f64, f64)>,
) -> Result<Predictions, NeuralError> {
    let mut out = Predictions::new();
    for id in ids {
        let x = inputs.get(id).ok_or_else(|| NeuralError::MissingInput(id.clone()))?;
        let mut p = model.predict(x)?;
        if let Some((lo, hi)) = clamp {
            p.values_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
        out.insert(id.clone(), p);
    }
    Ok(out)
}

/// Parses `{"id": ..., "vec": [...]}` lines; all vectors must share a length.
pub fn parse_representations(text: &str) -> Result<BTreeMap<String, Vec<f64>>, NeuralError> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        vec: Vec<f64>,
    }
    let mut out = BTreeMap::new();
    let mut width = None;
    for (line, raw) in numbered_lines(text) {
        let bad = |message: String| NeuralError::Malformed { line, message };
        let l: Line = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        match width {
            None => width = Some(l.vec.len()),
            Some(w) if w != l.vec.len() => return Err(bad(format!("vector of length {} (expected {w})", l.vec.len()))),
            _ => {}
        }
        if out.insert(l.id.clone(), l.vec).is_some() {
            return Err(bad(format!("duplicate id `{}`", l.id)));
        }
    }
    Ok(out)
}

pub fn load_representations(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>, NeuralError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NeuralError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_representations(&text)
}

pub fn representations_to_jsonl(reps: &BTreeMap<String, Vec<f64>>) -> String {
    reps.iter()
        .map(|(id, v)| serde_json::json!({ "id": id, "vec": v }).to_string() + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head(dim: Dimension, w: &[f64], b: f64) -> Head {
        Head {
            dimension: dim,
            weights: w.to_vec(),
            bias: b,
        }
    }

    #[test]
    fn head_predict_examples() {
        assert_eq!(head_predict(&[1.0, 0.0], &head(Dimension::Overall, &[2.0, 5.0], 1.0)).unwrap(), 3.0);
        assert_eq!(head_predict(&[7.0, -3.0], &head(Dimension::Overall, &[0.0, 0.0], 4.2)).unwrap(), 4.2);
        assert_eq!(head_predict(&[1.0, 1.0], &head(Dimension::Overall, &[0.5, 0.5], 0.0)).unwrap(), 1.0);
        assert!(head_predict(&[1.0], &head(Dimension::Overall, &[0.5, 0.5], 0.0)).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mse_loss(&[2.0], &[5.0]).unwrap(), 9.0);
        assert!(matches!(mse_loss(&[], &[]), Err(NeuralError::Empty)));
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(NeuralError::LengthMismatch(1, 2))));
    }

    #[test]
    fn flat_loss_examples() {
        let losses: BTreeMap<Dimension, f64> = Dimension::ALL.iter().zip([1.0, 2.0, 3.0, 4.0]).map(|(d, l)| (*d, l)).collect();
        assert_eq!(flat_loss(&losses).unwrap(), 10.0);
        let zeros: BTreeMap<Dimension, f64> = Dimension::ALL.iter().map(|d| (*d, 0.0)).collect();
        assert_eq!(flat_loss(&zeros).unwrap(), 0.0);
        let mut missing = losses.clone();
        missing.remove(&Dimension::Reasonableness);
        assert!(matches!(flat_loss(&missing), Err(NeuralError::MissingDimension(Dimension::Reasonableness))));
    }

    #[test]
    fn hier_forward_concatenates_in_order() {
        let sub = [
            head(Dimension::Cogency, &[0.0, 0.0], 2.0),
            head(Dimension::Effectiveness, &[0.0, 0.0], 3.0),
            head(Dimension::Reasonableness, &[0.0, 0.0], 4.0),
        ];
        let overall = head(Dimension::Overall, &[1.0; 5], 0.0);
        let out = hier_forward(&[1.0, 0.0], &sub, &overall).unwrap();
        assert_eq!(out[&Dimension::Overall], 10.0);
        assert_eq!(out[&Dimension::Effectiveness], 3.0);

        // Only the Effectiveness slot weighted: picks out ŷ_eff.
        let pick = head(Dimension::Overall, &[0.0, 0.0, 0.0, 1.0, 0.0], 0.0);
        assert_eq!(hier_forward(&[5.0, 5.0], &sub, &pick).unwrap()[&Dimension::Overall], 3.0);

        let bad = head(Dimension::Overall, &[1.0; 4], 0.0);
        assert!(hier_forward(&[1.0, 0.0], &sub, &bad).is_err());
    }

    #[test]
    fn hier_overall_without_sub_weights_is_plain_head() {
        let sub = [
            head(Dimension::Cogency, &[0.3, -1.0], 0.5),
            head(Dimension::Effectiveness, &[2.0, 0.1], -1.0),
            head(Dimension::Reasonableness, &[0.0, 4.0], 2.0),
        ];
        let overall = head(Dimension::Overall, &[0.7, -0.2, 0.0, 0.0, 0.0], 0.3);
        let plain = head(Dimension::Overall, &[0.7, -0.2], 0.3);
        for h in [[0.0, 1.0], [3.0, -2.0], [0.25, 0.5]] {
            let a = hier_forward(&h, &sub, &overall).unwrap()[&Dimension::Overall];
            assert_eq!(a, head_predict(&h, &plain).unwrap());
        }
    }

    #[test]
    fn model_shapes() {
        let enc = Encoder::Precomputed { dim: 5 };
        let st = MtModel::new(Variant::St(Dimension::Cogency), enc.clone());
        assert_eq!(st.heads.len(), 1);
        let flat = MtModel::new(Variant::Flat, enc.clone());
        assert!(flat.heads.iter().all(|h| h.weights.len() == 5));
        let hier = MtModel::new(Variant::Hier, enc);
        assert_eq!(hier.heads.iter().map(|h| h.weights.len()).collect::<Vec<_>>(), vec![5, 5, 5, 8]);
        assert_eq!(hier.predict(&[0.0; 5]).unwrap().len(), 4);
        assert!(hier.predict(&[0.0; 4]).is_err());
        assert_eq!(MtModel::from_json(&hier.to_json()).unwrap(), hier);
    }

    fn random_examples(n: usize, d: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Example {
                id: format!("ex{i:03}"),
                input: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                targets: Dimension::ALL.iter().map(|&dim| (dim, rng.gen_range(1.0..5.0))).collect(),
            })
            .collect()
    }

    fn randomise(model: &mut MtModel, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..model.n_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        model.set_params(&p);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = random_examples(6, 4, 1);
        let batch: Vec<&Example> = data.iter().collect();
        for variant in [Variant::St(Dimension::Effectiveness), Variant::Flat, Variant::Hier] {
            for enc in [Encoder::MeanEmbedding { dim: 4 }, Encoder::projection(4, 3, 9)] {
                let mut m = MtModel::new(variant, enc);
                randomise(&mut m, 5);
                let err = grad_check(&m, &batch, 1e-5).unwrap();
                assert!(err < 1e-5, "{variant:?}: {err}");
            }
        }
    }

    #[test]
    fn zero_residual_bias_gradient_is_zero() {
        let mut m = MtModel::new(Variant::St(Dimension::Overall), Encoder::Precomputed { dim: 2 });
        m.heads[0] = head(Dimension::Overall, &[1.0, -1.0], 0.5);
        let data: Vec<Example> = [[1.0, 2.0], [0.0, 3.0]]
            .iter()
            .enumerate()
            .map(|(i, x)| Example {
                id: i.to_string(),
                input: x.to_vec(),
                targets: [(Dimension::Overall, x[0] - x[1] + 0.5)].into_iter().collect(),
            })
            .collect();
        let batch: Vec<&Example> = data.iter().collect();
        let (loss, grad) = loss_and_grad(&m, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(*grad.last().unwrap(), 0.0);
    }

    #[test]
    fn flat_loss_is_sum_of_single_task_losses() {
        let data = random_examples(5, 3, 2);
        let batch: Vec<&Example> = data.iter().collect();
        let mut flat = MtModel::new(Variant::Flat, Encoder::Precomputed { dim: 3 });
        randomise(&mut flat, 3);
        let mut sum = 0.0;
        for h in &flat.heads {
            let mut st = MtModel::new(Variant::St(h.dimension), Encoder::Precomputed { dim: 3 });
            st.heads[0] = h.clone();
            sum += batch_loss(&st, &batch).unwrap();
        }
        assert_eq!(batch_loss(&flat, &batch).unwrap(), sum);
    }

    #[test]
    fn identity_regression_converges() {
        let data: Vec<Example> = (0..40)
            .map(|i| {
                let x = i as f64 / 20.0 - 1.0;
                Example {
                    id: format!("{i}"),
                    input: vec![x],
                    targets: [(Dimension::Overall, 3.0 * x)].into_iter().collect(),
                }
            })
            .collect();
        let m = MtModel::new(Variant::St(Dimension::Overall), Encoder::MeanEmbedding { dim: 1 });
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 8,
            ..Default::default()
        };
        let (trained, hist) = train(&m, &data, &data, &cfg).unwrap();
        let batch: Vec<&Example> = data.iter().collect();
        assert!(batch_loss(&trained, &batch).unwrap() < 1e-4);
        assert_eq!(hist.rows.iter().filter(|r| r.split == "train").count(), 200);
        assert!(hist.dev_pearson(200, Dimension::Overall).unwrap() > 0.999);
    }

    #[test]
    fn identical_targets_give_identical_heads() {
        let mut data = random_examples(30, 3, 4);
        for ex in &mut data {
            let v = ex.targets[&Dimension::Overall];
            ex.targets.values_mut().for_each(|t| *t = v);
        }
        let m = MtModel::new(Variant::Flat, Encoder::MeanEmbedding { dim: 3 });
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 20, batch_size: 4, ..Default::default() };
        let (trained, _) = train(&m, &data, &[], &cfg).unwrap();
        for h in &trained.heads[1..] {
            let gap = h
                .weights
                .iter()
                .zip(&trained.heads[0].weights)
                .map(|(a, b)| (a - b).abs())
                .fold((h.bias - trained.heads[0].bias).abs(), f64::max);
            assert!(gap < 1e-3);
        }
    }

    #[test]
    fn training_is_deterministic_and_order_free() {
        let data = random_examples(25, 4, 6);
        let m = MtModel::new(Variant::Hier, Encoder::projection(4, 3, 1));
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, batch_size: 4, seed: 11, ..Default::default() };
        let (a, ha) = train(&m, &data, &data[..5], &cfg).unwrap();
        let mut reversed = data.clone();
        reversed.reverse();
        let (b, hb) = train(&m, &reversed, &data[..5], &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ha, hb);
        let other = TrainConfig { seed: 12, ..cfg };
        assert_ne!(train(&m, &data, &[], &other).unwrap().0.params(), a.params());
    }

    #[test]
    fn two_stage_hier_freezes_sub_heads() {
        let data = random_examples(20, 3, 8);
        let m = MtModel::new(Variant::Hier, Encoder::MeanEmbedding { dim: 3 });
        let warm = TrainConfig {
            learning_rate: 0.01,
            epochs: 2,
            batch_size: 5,
            hier_warmup_epochs: Some(2),
            ..Default::default()
        };
        let (stage1, _) = train(&m, &data, &[], &warm).unwrap();
        assert_eq!(stage1.heads[3], m.heads[3], "overall head untouched during warm-up");
        let full = TrainConfig { epochs: 4, ..warm };
        let (stage2, _) = train(&m, &data, &[], &full).unwrap();
        assert_eq!(&stage2.heads[..3], &stage1.heads[..3]);
        assert_ne!(stage2.heads[3], m.heads[3]);
    }

    #[test]
    fn bad_inputs() {
        let m = MtModel::new(Variant::Flat, Encoder::MeanEmbedding { dim: 2 });
        let cfg = TrainConfig::default();
        assert!(matches!(train(&m, &[], &[], &cfg), Err(NeuralError::Empty)));
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        let data = random_examples(3, 2, 0);
        assert!(matches!(train(&m, &data, &[], &bad), Err(NeuralError::BadConfig(_))));
        let mut partial = data.clone();
        partial[1].targets.remove(&Dimension::Cogency);
        assert!(matches!(train(&m, &partial, &[], &cfg), Err(NeuralError::MissingTarget { .. })));
        let mut huge = data.clone();
        huge[0].input = vec![f64::INFINITY, 0.0];
        let hot = TrainConfig { learning_rate: 0.1, ..Default::default() };
        assert!(matches!(train(&m, &huge, &[], &hot), Err(NeuralError::NonFinite { .. })));
    }

    #[test]
    fn stilt_copies_encoder_and_resets_heads() {
        let data = random_examples(20, 4, 3);
        let src = MtModel::new(Variant::St(Dimension::Overall), Encoder::projection(4, 3, 2));
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 2, batch_size: 5, ..Default::default() };
        let (src, _) = train(&src, &data, &[], &cfg).unwrap();

        let template = MtModel::new(Variant::Flat, Encoder::projection(4, 3, 77));
        let init = MtModel::new(template.variant, src.encoder.clone());
        assert_eq!(init.encoder, src.encoder);
        assert!(init.heads.iter().all(|h| h.bias == 0.0 && h.weights.iter().all(|w| *w == 0.0)));
        let (a, _) = stilt_transfer(&src, &template, &data, &[], &cfg).unwrap();
        let (b, _) = train(&init, &data, &[], &cfg).unwrap();
        assert_eq!(a, b);

        let wrong = MtModel::new(Variant::Flat, Encoder::projection(4, 5, 0));
        assert!(matches!(stilt_transfer(&src, &wrong, &data, &[], &cfg), Err(NeuralError::EncoderMismatch(_))));
    }

    #[test]
    fn stilt_with_frozen_encoder_equals_scratch() {
        let data = random_examples(20, 3, 4);
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 2, batch_size: 5, ..Default::default() };
        let src = MtModel::new(Variant::St(Dimension::Overall), Encoder::MeanEmbedding { dim: 3 });
        let (src, _) = train(&src, &data, &[], &cfg).unwrap();
        let template = MtModel::new(Variant::Flat, Encoder::MeanEmbedding { dim: 3 });
        let stilt = stilt_transfer(&src, &template, &data, &data, &cfg).unwrap();
        let scratch = train(&template, &data, &data, &cfg).unwrap();
        assert_eq!(stilt, scratch);
    }

    #[test]
    fn predict_all_contract() {
        let mut m = MtModel::new(Variant::Hier, Encoder::Precomputed { dim: 2 });
        m.heads[3].bias = 9.0;
        let inputs: BTreeMap<String, Vec<f64>> = [("a".to_string(), vec![1.0, 2.0])].into_iter().collect();
        let out = predict_all(&m, &inputs, &["a".into()], None).unwrap();
        assert_eq!(out["a"].len(), 4);
        assert_eq!(out["a"][&Dimension::Overall], 9.0);
        let clamped = predict_all(&m, &inputs, &["a".into()], Some((1.0, 5.0))).unwrap();
        assert_eq!(clamped["a"][&Dimension::Overall], 5.0);
        assert_eq!(out, predict_all(&m, &inputs, &["a".into()], None).unwrap());
        assert!(matches!(predict_all(&m, &inputs, &["b".into()], None), Err(NeuralError::MissingInput(_))));
    }

    #[test]
    fn representation_file() {
        let text = "{\"id\":\"a\",\"vec\":[1,2]}\n{\"id\":\"b\",\"vec\":[0.5,-1]}\n";
        let reps = parse_representations(text).unwrap();
        assert_eq!(reps["b"], vec![0.5, -1.0]);
        assert_eq!(parse_representations(&representations_to_jsonl(&reps)).unwrap(), reps);
        assert!(parse_representations("{\"id\":\"a\",\"vec\":[1]}\n{\"id\":\"b\",\"vec\":[1,2]}").is_err());
    }
}
