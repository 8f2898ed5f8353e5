//! Hyperparameter grids and dev-set model selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::util::{fmt_float, fmt_opt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for SvrGrid {
    fn default() -> Self {
        SvrGrid {
            c: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            epsilon: vec![0.001, 0.01, 0.1, 1.0],
        }
    }
}

impl SvrGrid {
    /// Row-major over `c`, then `epsilon`.
    pub fn cells(&self) -> Vec<CellParams> {
        self.c
            .iter()
            .flat_map(|&c| self.epsilon.iter().map(move |&epsilon| CellParams::Svr { c, epsilon }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralGrid {
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for NeuralGrid {
    fn default() -> Self {
        NeuralGrid {
            learning_rate: vec![2e-5, 3e-5],
            epochs: vec![3, 4],
        }
    }
}

impl NeuralGrid {
    pub fn cells(&self) -> Vec<CellParams> {
        self.learning_rate
            .iter()
            .flat_map(|&learning_rate| {
                self.epochs
                    .iter()
                    .map(move |&epochs| CellParams::Neural { learning_rate, epochs })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    #[serde(default)]
    pub svr: SvrGrid,
    #[serde(default)]
    pub neural: NeuralGrid,
}

impl Grids {
    pub fn validate(&self) -> Result<(), String> {
        if self.svr.c.is_empty() || self.svr.epsilon.is_empty() {
            return Err("svr grid has an empty axis".into());
        }
        if self.neural.learning_rate.is_empty() || self.neural.epochs.is_empty() {
            return Err("neural grid has an empty axis".into());
        }
        if self.svr.c.iter().any(|c| !(*c > 0.0)) || self.svr.epsilon.iter().any(|e| !(*e >= 0.0)) {
            return Err("svr grid needs C > 0 and epsilon >= 0".into());
        }
        if self.neural.learning_rate.iter().any(|l| !(*l > 0.0)) || self.neural.epochs.contains(&0) {
            return Err("neural grid needs learning rate > 0 and epochs >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellParams {
    Svr { c: f64, epsilon: f64 },
    Neural { learning_rate: f64, epochs: usize },
    /// Parameter-free models.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub params: CellParams,
    pub dev_pearson: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<M> {
    pub best: usize,
    pub cells: Vec<CellResult>,
    pub model: M,
}

/// Fits every cell in parallel and keeps the one with the highest dev
/// Pearson. Ties and all-undefined scores go to the earliest cell; failed
/// cells are recorded but never selected.
pub fn grid_search<M, F>(cells: &[CellParams], fit: F) -> Result<GridOutcome<M>, EvalError>
where
    M: Send,
    F: Fn(&CellParams) -> Result<(M, Option<f64>), String> + Sync,
{
    if cells.is_empty() {
        return Err(EvalError::GridFailed("empty grid".into()));
    }
    let fitted: Vec<Result<(M, Option<f64>), String>> = cells.par_iter().map(&fit).collect();

    let mut results = Vec::with_capacity(cells.len());
    let mut best: Option<(usize, Option<f64>)> = None;
    let mut models: Vec<Option<M>> = Vec::with_capacity(cells.len());
    for (index, (params, outcome)) in cells.iter().zip(fitted).enumerate() {
        match outcome {
            Ok((model, score)) => {
                let better = match best {
                    None => true,
                    Some((_, None)) => score.is_some(),
                    Some((_, Some(b))) => score.is_some_and(|s| s > b),
                };
                if better {
                    best = Some((index, score));
                }
                results.push(CellResult { index, params: *params, dev_pearson: score, error: None });
                models.push(Some(model));
            }
            Err(e) => {
                log::warn!("grid cell {index} failed: {e}");
                results.push(CellResult { index, params: *params, dev_pearson: None, error: Some(e) });
                models.push(None);
            }
        }
    }
    let Some((best, _)) = best else {
        let diagnostics = results
            .iter()
            .map(|r| format!("cell {}: {}", r.index, r.error.as_deref().unwrap_or("?")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(EvalError::GridFailed(diagnostics));
    };
    let model = models.swap_remove(best).expect("selected cell has a model");
    Ok(GridOutcome { best, cells: results, model })
}

pub const GRID_HEADER: &str = "target\tcell\tc\tepsilon\tlearning_rate\tepochs\tdev_pearson\tselected\tstatus";

/// Grid table rows for one selection target (a dimension or model name).
pub fn grid_rows(target: &str, cells: &[CellResult], best: usize) -> String {
    let mut out = String::new();
    for r in cells {
        let (c, eps, lr, ep) = match r.params {
            CellParams::Svr { c, epsilon } => (fmt_float(c), fmt_float(epsilon), "NA".into(), "NA".into()),
            CellParams::Neural { learning_rate, epochs } => ("NA".into(), "NA".into(), fmt_float(learning_rate), epochs.to_string()),
            CellParams::Fixed => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
        };
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
        };
        out.push_str(&format!(
            "{target}\t{}\t{c}\t{eps}\t{lr}\t{ep}\t{}\t{}\t{status}\n",
            r.index,
            fmt_opt(r.dev_pearson),
            u8::from(r.index == best)
        ));
    }
    out
}
