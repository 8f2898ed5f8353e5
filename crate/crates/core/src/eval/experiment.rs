//! Experiment specs and the end-to-end train/select/evaluate driver.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{grid_rows, grid_search, CellParams, Grids, GRID_HEADER};
use super::{evaluate, pearson, EvalError, EvalResult, Pairing, Predictions, Reference};
use crate::aggregation::{load_scores, to_table, AggregationError, ScoreTable};
use crate::corpus::{parse_corpus, ArgumentDoc, CorpusError, Dimension, Domain, Split, SplitAssignment};
use crate::features::{
    char_length, embed_average, fit_tfidf, tokenize, transform_tfidf, EmbeddingTable, FeatureError,
    FeatureVector, Vocabulary, WachsmuthFeaturizer,
};
use crate::neural::{
    dev_pearson, load_representations, stilt_transfer, train, Encoder, Example, History, MtModel, NeuralError, TrainConfig,
    Variant,
};
use crate::svr::{svr_fit, svr_predict, KernelSpec, SvrError, SvrModel, SvrParams};
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corpus {
        path: String,
        #[source]
        source: CorpusError,
    },
    #[error("{path}: {source}")]
    Scores {
        path: String,
        #[source]
        source: AggregationError,
    },
    #[error("{0}")]
    Features(#[from] FeatureError),
    #[error("{0}")]
    Svr(#[from] SvrError),
    #[error("{0}")]
    Neural(#[from] NeuralError),
    #[error("{0}")]
    Eval(#[from] EvalError),
}

impl ExperimentError {
    /// Bad inputs or configuration, as opposed to a failure while fitting.
    pub fn is_validation(&self) -> bool {
        match self {
            ExperimentError::Spec(_)
            | ExperimentError::Io { .. }
            | ExperimentError::Corpus { .. }
            | ExperimentError::Scores { .. }
            | ExperimentError::Features(_) => true,
            ExperimentError::Neural(e) => !matches!(e, NeuralError::NonFinite { .. }),
            ExperimentError::Svr(_) => false,
            ExperimentError::Eval(e) => !matches!(e, EvalError::GridFailed(_)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    ArgLength,
    SvrTfidf,
    SvrEmbd,
    WachsmuthCfs,
    NeuralSt,
    NeuralMtFlat,
    NeuralMtHier,
}

impl ModelFamily {
    pub fn is_neural(self) -> bool {
        matches!(self, ModelFamily::NeuralSt | ModelFamily::NeuralMtFlat | ModelFamily::NeuralMtHier)
    }

    fn uses_embeddings(self, encoding: Encoding) -> bool {
        self == ModelFamily::SvrEmbd || (self.is_neural() && encoding != Encoding::Precomputed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scope {
    InDomain { domain: Domain },
    AllDomains,
    /// Train on `source`, predict zero-shot on every other corpus.
    CrossCorpus { source: Domain },
    /// Pretrain on `source`, fine-tune and evaluate on `target`.
    Stilt { source: Domain, target: Domain },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    MeanEmbedding,
    Projection { hidden: usize },
    Precomputed,
}

/// One corpus with its split file and reference score tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInputs {
    pub domain: Domain,
    pub corpus: PathBuf,
    /// Absent for evaluation-only corpora, whose documents all count as test.
    #[serde(default)]
    pub splits: Option<PathBuf>,
    pub references: BTreeMap<Reference, PathBuf>,
    /// Training targets; defaults to `mix`, else the first reference.
    #[serde(default)]
    pub target: Option<Reference>,
    /// Correlate every predicted dimension against this single reference
    /// column (binary-judgment corpora).
    #[serde(default)]
    pub against: Option<Dimension>,
}

fn all_dimensions() -> Vec<Dimension> {
    Dimension::ALL.to_vec()
}

fn default_ngram_range() -> (usize, usize) {
    (1, 2)
}

fn default_min_df() -> usize {
    2
}

fn default_cfs_k() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: ModelFamily,
    pub scope: Scope,
    pub corpora: Vec<CorpusInputs>,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// JSONL `{"id", "vec"}` document representations.
    #[serde(default)]
    pub representations: Option<PathBuf>,
    #[serde(default)]
    pub encoding: Encoding,
    /// Dimensions modelled by single-task families.
    #[serde(default = "all_dimensions")]
    pub dimensions: Vec<Dimension>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub svr_kernel: KernelSpec,
    /// Batch size, optimiser and warm-up for neural families; learning rate
    /// and epochs come from the grid.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_ngram_range")]
    pub ngram_range: (usize, usize),
    #[serde(default = "default_min_df")]
    pub min_df: usize,
    #[serde(default = "default_cfs_k")]
    pub cfs_k: usize,
    #[serde(default)]
    pub clamp: Option<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(family: ModelFamily, scope: Scope, corpora: Vec<CorpusInputs>) -> Self {
        ExperimentSpec {
            family,
            scope,
            corpora,
            embeddings: None,
            representations: None,
            encoding: Encoding::default(),
            dimensions: all_dimensions(),
            grids: Grids::default(),
            svr_kernel: KernelSpec::default(),
            train: TrainConfig::default(),
            ngram_range: default_ngram_range(),
            min_df: default_min_df(),
            cfs_k: default_cfs_k(),
            clamp: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Spec(m));
        self.grids.validate().map_err(ExperimentError::Spec)?;
        if self.corpora.is_empty() {
            return bad("no corpora".into());
        }
        if self.dimensions.is_empty() {
            return bad("no dimensions".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.corpora {
            if !seen.insert(c.domain) {
                return bad(format!("corpus for {} listed twice", c.domain));
            }
            if c.references.is_empty() {
                return bad(format!("corpus {} has no reference tables", c.domain));
            }
            if let Some(t) = c.target {
                if !c.references.contains_key(&t) {
                    return bad(format!("target reference {t} missing for {}", c.domain));
                }
            }
        }
        let have = |d: Domain| self.corpora.iter().any(|c| c.domain == d);
        let trainable = |d: Domain| self.corpora.iter().any(|c| c.domain == d && c.splits.is_some());
        match self.scope {
            Scope::InDomain { domain } if !trainable(domain) => {
                return bad(format!("in-domain scope needs a split corpus for {domain}"))
            }
            Scope::AllDomains if !self.corpora.iter().any(|c| c.splits.is_some()) => {
                return bad("all-domains scope needs at least one split corpus".into())
            }
            Scope::CrossCorpus { source } if !trainable(source) => {
                return bad(format!("cross-corpus source {source} needs a split corpus"))
            }
            Scope::CrossCorpus { .. } if self.corpora.len() < 2 => {
                return bad("cross-corpus scope needs a second corpus".into())
            }
            Scope::Stilt { source, target } => {
                if !self.family.is_neural() {
                    return bad("stilt scope needs a neural family".into());
                }
                if !trainable(source) || !trainable(target) || !have(target) {
                    return bad("stilt source and target need split corpora".into());
                }
            }
            _ => {}
        }
        if self.family.uses_embeddings(self.encoding) && self.embeddings.is_none() {
            return bad("this family needs an embeddings file".into());
        }
        if self.family.is_neural() && self.encoding == Encoding::Precomputed && self.representations.is_none() {
            return bad("precomputed encoding needs a representations file".into());
        }
        if let Encoding::Projection { hidden: 0 } = self.encoding {
            return bad("projection needs hidden > 0".into());
        }
        self.train
            .validate()
            .map_err(|e| ExperimentError::Spec(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.corpora {
            fix(&mut c.corpus);
            c.splits.iter_mut().for_each(fix);
            c.references.values_mut().for_each(fix);
        }
        self.embeddings.iter_mut().for_each(fix);
        self.representations.iter_mut().for_each(fix);
    }

    fn input_files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        for c in &self.corpora {
            out.push(&c.corpus);
            out.extend(c.splits.as_deref());
            out.extend(c.references.values().map(PathBuf::as_path));
        }
        out.extend(self.embeddings.as_deref());
        out.extend(self.representations.as_deref());
        out
    }
}

/// Reads a spec; relative paths are taken relative to the spec's directory.
pub fn load_experiment_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec, ExperimentError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| ExperimentError::Spec(format!("{}: {e}", path.display())))?;
    spec.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    spec.validate()?;
    Ok(spec)
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Embeddings and representations shared by every corpus.
#[derive(Debug, Clone, Default)]
pub struct InputContext {
    pub embeddings: Option<EmbeddingTable>,
    pub representations: Option<BTreeMap<String, Vec<f64>>>,
}

impl InputContext {
    pub fn load(embeddings: Option<&Path>, representations: Option<&Path>) -> Result<Self, ExperimentError> {
        Ok(InputContext {
            embeddings: embeddings.map(EmbeddingTable::load).transpose()?,
            representations: representations.map(load_representations).transpose()?,
        })
    }

    fn table(&self) -> Result<&EmbeddingTable, ExperimentError> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| ExperimentError::Spec("no embeddings loaded".into()))
    }

    fn dense(&self, doc: &ArgumentDoc, encoding: Encoding) -> Result<Vec<f64>, ExperimentError> {
        match encoding {
            Encoding::Precomputed => {
                let reps = self
                    .representations
                    .as_ref()
                    .ok_or_else(|| ExperimentError::Spec("no representations loaded".into()))?;
                reps.get(&doc.id)
                    .cloned()
                    .ok_or_else(|| NeuralError::MissingInput(doc.id.clone()).into())
            }
            _ => Ok(embed_average(&tokenize(&doc.text), self.table()?).0),
        }
    }

    fn input_dim(&self, encoding: Encoding) -> Result<usize, ExperimentError> {
        match encoding {
            Encoding::Precomputed => Ok(self
                .representations
                .as_ref()
                .and_then(|r| r.values().next())
                .map(Vec::len)
                .unwrap_or(0)),
            _ => Ok(self.table()?.dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DocFeaturizer {
    Tfidf { vocab: Vocabulary },
    Embedding,
    Wachsmuth { featurizer: WachsmuthFeaturizer },
}

impl DocFeaturizer {
    fn featurize(&self, doc: &ArgumentDoc, ctx: &InputContext) -> Result<FeatureVector, ExperimentError> {
        Ok(match self {
            DocFeaturizer::Tfidf { vocab } => transform_tfidf(vocab, &tokenize(&doc.text)),
            DocFeaturizer::Embedding => FeatureVector::from_dense(&ctx.dense(doc, Encoding::MeanEmbedding)?),
            DocFeaturizer::Wachsmuth { featurizer } => featurizer.transform(doc),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrPredictor {
    pub featurizer: DocFeaturizer,
    pub model: SvrModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    /// Character length as the score for every dimension.
    ArgLength { dimensions: Vec<Dimension> },
    Svr { models: BTreeMap<Dimension, SvrPredictor> },
    Neural { encoding: Encoding, models: Vec<MtModel> },
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub family: ModelFamily,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| ExperimentError::Spec(format!("checkpoint: {e}")))?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(ExperimentError::Spec(format!("unsupported checkpoint version {}", c.format_version)));
        }
        Ok(c)
    }
}

impl TrainedModel {
    pub fn predict(
        &self,
        docs: &[&ArgumentDoc],
        ctx: &InputContext,
        clamp: Option<(f64, f64)>,
    ) -> Result<Predictions, ExperimentError> {
        let mut out = Predictions::new();
        for doc in docs {
            let mut scores = BTreeMap::new();
            match self {
                TrainedModel::ArgLength { dimensions } => {
                    let len = char_length(doc) as f64;
                    scores.extend(dimensions.iter().map(|&d| (d, len)));
                }
                TrainedModel::Svr { models } => {
                    for (&dim, p) in models {
                        scores.insert(dim, svr_predict(&p.model, &p.featurizer.featurize(doc, ctx)?)?);
                    }
                }
                TrainedModel::Neural { encoding, models } => {
                    let x = ctx.dense(doc, *encoding)?;
                    for m in models {
                        scores.extend(m.predict(&x)?);
                    }
                }
            }
            if let Some((lo, hi)) = clamp {
                scores.values_mut().for_each(|v| *v = v.clamp(lo, hi));
            }
            out.insert(doc.id.clone(), scores);
        }
        Ok(out)
    }
}

/// A document paired with its training targets.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub doc: &'a ArgumentDoc,
    pub targets: &'a BTreeMap<Dimension, f64>,
}

struct LoadedCorpus {
    domain: Domain,
    docs: Vec<ArgumentDoc>,
    splits: Option<SplitAssignment>,
    references: BTreeMap<Reference, ScoreTable>,
    target: Reference,
    pairing: Pairing,
}

impl LoadedCorpus {
    fn load(inputs: &CorpusInputs) -> Result<Self, ExperimentError> {
        let mut docs = parse_corpus(&inputs.corpus, inputs.domain).map_err(|source| ExperimentError::Corpus {
            path: inputs.corpus.display().to_string(),
            source,
        })?;
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let splits = inputs
            .splits
            .as_ref()
            .map(|p| {
                SplitAssignment::load(p).map_err(|source| ExperimentError::Corpus {
                    path: p.display().to_string(),
                    source,
                })
            })
            .transpose()?;
        let mut references = BTreeMap::new();
        for (&reference, path) in &inputs.references {
            let rows = load_scores(path).map_err(|source| ExperimentError::Scores {
                path: path.display().to_string(),
                source,
            })?;
            let table = to_table(&rows, reference.source());
            if table.is_empty() {
                return Err(ExperimentError::Spec(format!(
                    "{}: no `{}` rows for reference {reference}",
                    path.display(),
                    reference.source()
                )));
            }
            references.insert(reference, table);
        }
        let target = inputs
            .target
            .or_else(|| references.contains_key(&Reference::Mix).then_some(Reference::Mix))
            .unwrap_or_else(|| *references.keys().next().expect("validated non-empty"));
        Ok(LoadedCorpus {
            domain: inputs.domain,
            docs,
            splits,
            references,
            target,
            pairing: inputs.against.map(Pairing::AgainstReference).unwrap_or_default(),
        })
    }

    fn docs_in(&self, split: Split) -> Vec<&ArgumentDoc> {
        match &self.splits {
            Some(s) => self.docs.iter().filter(|d| s.get(&d.id) == Some(split)).collect(),
            None if split == Split::Test => self.docs.iter().collect(),
            None => Vec::new(),
        }
    }

    fn labeled(&self, split: Split) -> Vec<Labeled<'_>> {
        let table = &self.references[&self.target];
        self.docs_in(split)
            .into_iter()
            .filter_map(|doc| Some(Labeled { doc, targets: table.get(&doc.id)? }))
            .collect()
    }
}

/// Grid tables are accumulated as TSV rows.
struct Fitted {
    model: TrainedModel,
    grid: String,
    history: Option<History>,
}

fn svr_cells(spec: &ExperimentSpec) -> Vec<CellParams> {
    spec.grids.svr.cells()
}

fn fit_svr_family(
    spec: &ExperimentSpec,
    ctx: &InputContext,
    train_set: &[Labeled],
    dev_set: &[Labeled],
) -> Result<Fitted, ExperimentError> {
    let shared = match spec.family {
        ModelFamily::SvrTfidf => {
            let tokens: Vec<Vec<String>> = train_set.iter().map(|l| tokenize(&l.doc.text)).collect();
            Some(DocFeaturizer::Tfidf {
                vocab: fit_tfidf(&tokens, spec.ngram_range, spec.min_df)?,
            })
        }
        ModelFamily::SvrEmbd => Some(DocFeaturizer::Embedding),
        _ => None,
    };
    let mut models = BTreeMap::new();
    let mut grid = String::new();
    for &dim in &spec.dimensions {
        let rows: Vec<&Labeled> = train_set.iter().filter(|l| l.targets.contains_key(&dim)).collect();
        let dev: Vec<&Labeled> = dev_set.iter().filter(|l| l.targets.contains_key(&dim)).collect();
        if rows.is_empty() {
            return Err(ExperimentError::Spec(format!("no training targets for {dim}")));
        }
        let y: Vec<f64> = rows.iter().map(|l| l.targets[&dim]).collect();
        let y_dev: Vec<f64> = dev.iter().map(|l| l.targets[&dim]).collect();
        let featurizer = match &shared {
            Some(f) => f.clone(),
            None => {
                let docs: Vec<&ArgumentDoc> = rows.iter().map(|l| l.doc).collect();
                DocFeaturizer::Wachsmuth {
                    featurizer: WachsmuthFeaturizer::fit(&docs, &y, spec.cfs_k, spec.min_df)?,
                }
            }
        };
        let x: Vec<FeatureVector> = rows.iter().map(|l| featurizer.featurize(l.doc, ctx)).collect::<Result<_, _>>()?;
        let x_dev: Vec<FeatureVector> = dev.iter().map(|l| featurizer.featurize(l.doc, ctx)).collect::<Result<_, _>>()?;
        let outcome = grid_search(&svr_cells(spec), |cell| {
            let CellParams::Svr { c, epsilon } = *cell else {
                return Err("not an svr cell".to_string());
            };
            let params = SvrParams {
                c,
                epsilon,
                kernel: spec.svr_kernel,
                ..SvrParams::default()
            };
            let model = svr_fit(&x, &y, &params).map_err(|e| e.to_string())?;
            let preds: Vec<f64> = x_dev
                .iter()
                .map(|v| svr_predict(&model, v))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            Ok((model, dev_score(&preds, &y_dev)))
        })?;
        grid.push_str(&grid_rows(dim.as_str(), &outcome.cells, outcome.best));
        models.insert(
            dim,
            SvrPredictor {
                featurizer,
                model: outcome.model,
            },
        );
    }
    Ok(Fitted {
        model: TrainedModel::Svr { models },
        grid,
        history: None,
    })
}

fn dev_score(preds: &[f64], gold: &[f64]) -> Option<f64> {
    if preds.len() < 2 {
        return None;
    }
    pearson(preds, gold).ok().flatten()
}

fn fit_arg_length(spec: &ExperimentSpec, dev_set: &[Labeled]) -> Fitted {
    let mut grid = String::new();
    for &dim in &spec.dimensions {
        let (p, g): (Vec<f64>, Vec<f64>) = dev_set
            .iter()
            .filter_map(|l| Some((char_length(l.doc) as f64, *l.targets.get(&dim)?)))
            .unzip();
        let cells = [super::grid::CellResult {
            index: 0,
            params: CellParams::Fixed,
            dev_pearson: dev_score(&p, &g),
            error: None,
        }];
        grid.push_str(&grid_rows(dim.as_str(), &cells, 0));
    }
    Fitted {
        model: TrainedModel::ArgLength {
            dimensions: spec.dimensions.clone(),
        },
        grid,
        history: None,
    }
}

fn variants(spec: &ExperimentSpec) -> Vec<Variant> {
    match spec.family {
        ModelFamily::NeuralSt => spec.dimensions.iter().map(|&d| Variant::St(d)).collect(),
        ModelFamily::NeuralMtFlat => vec![Variant::Flat],
        _ => vec![Variant::Hier],
    }
}

fn variant_name(v: Variant) -> String {
    match v {
        Variant::St(d) => d.as_str().to_string(),
        Variant::Flat => "mt_flat".into(),
        Variant::Hier => "mt_hier".into(),
    }
}

fn encoder_template(encoding: Encoding, input_dim: usize, seed: u64) -> Encoder {
    match encoding {
        Encoding::MeanEmbedding => Encoder::MeanEmbedding { dim: input_dim },
        Encoding::Projection { hidden } => Encoder::projection(input_dim, hidden, seed),
        Encoding::Precomputed => Encoder::Precomputed { dim: input_dim },
    }
}

fn examples(set: &[Labeled], ctx: &InputContext, spec: &ExperimentSpec, dims: &[Dimension]) -> Result<Vec<Example>, ExperimentError> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for l in set {
        if !dims.iter().all(|d| l.targets.contains_key(d)) {
            skipped += 1;
            continue;
        }
        out.push(Example {
            id: l.doc.id.clone(),
            input: ctx.dense(l.doc, spec.encoding)?,
            targets: dims.iter().map(|d| (*d, l.targets[d])).collect(),
        });
    }
    if skipped > 0 {
        log::info!("skipped {skipped} documents without all of {dims:?}");
    }
    Ok(out)
}

/// Grid search over one neural variant, optionally initialised from a
/// pretrained source model.
fn fit_neural_variant(
    spec: &ExperimentSpec,
    variant: Variant,
    input_dim: usize,
    train_ex: &[Example],
    dev_ex: &[Example],
    source: Option<&MtModel>,
    tag: &str,
) -> Result<(MtModel, History, String), ExperimentError> {
    if train_ex.is_empty() {
        return Err(ExperimentError::Spec(format!("no training examples for {}", variant_name(variant))));
    }
    let template = MtModel::new(variant, encoder_template(spec.encoding, input_dim, spec.seed));
    let outcome = grid_search(&spec.grids.neural.cells(), |cell| {
        let CellParams::Neural { learning_rate, epochs } = *cell else {
            return Err("not a neural cell".to_string());
        };
        let config = TrainConfig {
            learning_rate,
            epochs,
            seed: spec.seed,
            ..spec.train.clone()
        };
        let (model, history) = match source {
            Some(src) => stilt_transfer(src, &template, train_ex, dev_ex, &config),
            None => train(&template, train_ex, dev_ex, &config),
        }
        .map_err(|e| e.to_string())?;
        let score = if dev_ex.len() >= 2 {
            dev_pearson(&model, dev_ex).map_err(|e| e.to_string())?[&variant.primary()]
        } else {
            None
        };
        Ok(((model, history), score))
    })?;
    let grid = grid_rows(&format!("{tag}{}", variant_name(variant)), &outcome.cells, outcome.best);
    let (model, history) = outcome.model;
    Ok((model, history, grid))
}

fn fit_neural_family(
    spec: &ExperimentSpec,
    ctx: &InputContext,
    train_set: &[Labeled],
    dev_set: &[Labeled],
    pretrain: Option<(&[Labeled], &[Labeled])>,
) -> Result<Fitted, ExperimentError> {
    let input_dim = ctx.input_dim(spec.encoding)?;
    let mut models = Vec::new();
    let mut grid = String::new();
    let mut history = History::default();
    for variant in variants(spec) {
        let dims = variant.dimensions();
        let source = match pretrain {
            Some((src_train, src_dev)) => {
                let (m, _, g) = fit_neural_variant(
                    spec,
                    variant,
                    input_dim,
                    &examples(src_train, ctx, spec, &dims)?,
                    &examples(src_dev, ctx, spec, &dims)?,
                    None,
                    "source:",
                )?;
                grid.push_str(&g);
                Some(m)
            }
            None => None,
        };
        let tag = if source.is_some() { "target:" } else { "" };
        let (m, h, g) = fit_neural_variant(
            spec,
            variant,
            input_dim,
            &examples(train_set, ctx, spec, &dims)?,
            &examples(dev_set, ctx, spec, &dims)?,
            source.as_ref(),
            tag,
        )?;
        grid.push_str(&g);
        history.rows.extend(h.rows);
        models.push(m);
    }
    Ok(Fitted {
        model: TrainedModel::Neural {
            encoding: spec.encoding,
            models,
        },
        grid,
        history: Some(history),
    })
}

/// Fits `spec.family` with grid search on the dev set.
pub fn fit_model(
    spec: &ExperimentSpec,
    ctx: &InputContext,
    train_set: &[Labeled],
    dev_set: &[Labeled],
) -> Result<(TrainedModel, String, Option<History>), ExperimentError> {
    let f = fit(spec, ctx, train_set, dev_set, None)?;
    Ok((f.model, format!("{GRID_HEADER}\n{}", f.grid), f.history))
}

fn fit(
    spec: &ExperimentSpec,
    ctx: &InputContext,
    train_set: &[Labeled],
    dev_set: &[Labeled],
    pretrain: Option<(&[Labeled], &[Labeled])>,
) -> Result<Fitted, ExperimentError> {
    if train_set.is_empty() {
        return Err(ExperimentError::Spec("empty training set".into()));
    }
    match spec.family {
        ModelFamily::ArgLength => Ok(fit_arg_length(spec, dev_set)),
        ModelFamily::SvrTfidf | ModelFamily::SvrEmbd | ModelFamily::WachsmuthCfs => fit_svr_family(spec, ctx, train_set, dev_set),
        _ => fit_neural_family(spec, ctx, train_set, dev_set, pretrain),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub eval: EvalResult,
    /// Grid table with header.
    pub grid: String,
    pub checkpoint: Checkpoint,
    pub history: Option<History>,
    pub manifest: serde_json::Value,
}

fn load_inputs(spec: &ExperimentSpec) -> Result<(Vec<LoadedCorpus>, InputContext), ExperimentError> {
    let corpora: Vec<LoadedCorpus> = spec.corpora.iter().map(LoadedCorpus::load).collect::<Result<_, _>>()?;
    let ctx = if spec.family.uses_embeddings(spec.encoding) || spec.family.is_neural() {
        InputContext::load(spec.embeddings.as_deref(), spec.representations.as_deref())?
    } else {
        InputContext::default()
    };
    Ok((corpora, ctx))
}

/// Fits according to the scope; returns the corpora to evaluate on.
fn fit_scope<'c>(
    spec: &ExperimentSpec,
    corpora: &'c [LoadedCorpus],
    ctx: &InputContext,
) -> Result<(Fitted, Vec<&'c LoadedCorpus>), ExperimentError> {
    let by_domain = |d: Domain| corpora.iter().find(|c| c.domain == d).expect("validated");
    Ok(match spec.scope {
        Scope::InDomain { domain } => {
            let c = by_domain(domain);
            (fit(spec, ctx, &c.labeled(Split::Train), &c.labeled(Split::Dev), None)?, vec![c])
        }
        Scope::AllDomains => {
            let split: Vec<&LoadedCorpus> = corpora.iter().filter(|c| c.splits.is_some()).collect();
            let tr: Vec<Labeled> = split.iter().flat_map(|c| c.labeled(Split::Train)).collect();
            let dv: Vec<Labeled> = split.iter().flat_map(|c| c.labeled(Split::Dev)).collect();
            (fit(spec, ctx, &tr, &dv, None)?, split)
        }
        Scope::CrossCorpus { source } => {
            let c = by_domain(source);
            let others = corpora.iter().filter(|o| o.domain != source).collect();
            (fit(spec, ctx, &c.labeled(Split::Train), &c.labeled(Split::Dev), None)?, others)
        }
        Scope::Stilt { source, target } => {
            let (s, t) = (by_domain(source), by_domain(target));
            let (s_tr, s_dv) = (s.labeled(Split::Train), s.labeled(Split::Dev));
            let f = fit(spec, ctx, &t.labeled(Split::Train), &t.labeled(Split::Dev), Some((&s_tr, &s_dv)))?;
            (f, vec![t])
        }
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Grid table with header.
    pub grid: String,
    pub history: Option<History>,
}

/// Fits and selects a model for the spec's scope without touching test data.
pub fn train_model(spec: &ExperimentSpec) -> Result<TrainOutcome, ExperimentError> {
    spec.validate()?;
    let (corpora, ctx) = load_inputs(spec)?;
    let (fitted, _) = fit_scope(spec, &corpora, &ctx)?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            format_version: CHECKPOINT_VERSION,
            family: spec.family,
            model: fitted.model,
        },
        grid: format!("{GRID_HEADER}\n{}", fitted.grid),
        history: fitted.history,
    })
}

/// Runs the spec's scope end to end. With `out_dir`, writes `eval.tsv`,
/// `grid.tsv`, `model.json`, `manifest.json` and (neural) `history.csv`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentOutcome, ExperimentError> {
    spec.validate()?;
    let (corpora, ctx) = load_inputs(spec)?;
    let (fitted, tests) = fit_scope(spec, &corpora, &ctx)?;

    let mut eval = EvalResult::default();
    for c in tests {
        let docs = c.docs_in(Split::Test);
        let preds = fitted.model.predict(&docs, &ctx, spec.clamp)?;
        eval.extend(evaluate(&preds, &c.references, c.domain, c.pairing)?);
    }

    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        family: spec.family,
        model: fitted.model,
    };
    let grid = format!("{GRID_HEADER}\n{}", fitted.grid);
    let manifest = manifest(spec)?;

    if let Some(dir) = out_dir {
        let write = |name: &str, body: &str| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|source| ExperimentError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write("eval.tsv", &eval.to_tsv())?;
        write("grid.tsv", &grid)?;
        write("model.json", &checkpoint.to_json())?;
        write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"))?;
        if let Some(h) = &fitted.history {
            write("history.csv", &h.to_csv())?;
        }
    }
    Ok(ExperimentOutcome {
        eval,
        grid,
        checkpoint,
        history: fitted.history,
        manifest,
    })
}

fn manifest(spec: &ExperimentSpec) -> Result<serde_json::Value, ExperimentError> {
    let mut inputs = serde_json::Map::new();
    for p in spec.input_files() {
        let bytes = std::fs::read(p).map_err(|source| ExperimentError::Io {
            path: p.display().to_string(),
            source,
        })?;
        inputs.insert(p.display().to_string(), sha256_hex(&bytes).into());
    }
    Ok(serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": spec.seed,
        "spec": spec,
        "inputs": inputs,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(domain: Domain) -> CorpusInputs {
        CorpusInputs {
            domain,
            corpus: "c.jsonl".into(),
            splits: Some("s.tsv".into()),
            references: [(Reference::Mix, PathBuf::from("mix.tsv"))].into_iter().collect(),
            target: None,
            against: None,
        }
    }

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let json = r#"{
            "family": "neural_mt_hier",
            "scope": {"type": "stilt", "source": "debates", "target": "cqa"},
            "corpora": [
                {"domain": "cqa", "corpus": "cqa.jsonl", "splits": "cqa.tsv", "references": {"mix": "m.tsv", "wa": "w.tsv"}},
                {"domain": "debates", "corpus": "d.jsonl", "splits": "d.tsv", "references": {"mix": "dm.tsv"}}
            ],
            "embeddings": "emb.txt",
            "seed": 5
        }"#;
        let spec: ExperimentSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.grids, Grids::default());
        assert_eq!(spec.dimensions.len(), 4);
        assert!(spec.corpora[0].references.contains_key(&Reference::WeightedAvg));
        spec.validate().unwrap();
        let back: ExperimentSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn scope_must_match_corpora() {
        let mut spec = ExperimentSpec::new(ModelFamily::ArgLength, Scope::InDomain { domain: Domain::Reviews }, vec![inputs(Domain::Cqa)]);
        assert!(spec.validate().is_err());
        spec.scope = Scope::InDomain { domain: Domain::Cqa };
        spec.validate().unwrap();
        spec.scope = Scope::Stilt { source: Domain::Cqa, target: Domain::Cqa };
        assert!(spec.validate().unwrap_err().to_string().contains("neural"));
        spec.family = ModelFamily::SvrEmbd;
        spec.scope = Scope::InDomain { domain: Domain::Cqa };
        assert!(spec.validate().unwrap_err().to_string().contains("embeddings"));
        spec.family = ModelFamily::SvrTfidf;
        spec.grids.svr.c.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn missing_spec_file_names_path() {
        let err = load_experiment_spec("/nonexistent/missing.json").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("missing.json"));
    }
}
