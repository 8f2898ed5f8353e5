use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aq_core::aggregation::{
    self, aggregate as aggregate_records, parse_annotations, per_annotator_alpha, AggregateOptions, AlphaMetric,
    AnnotationRecord, MaceConfig, BLOCKING_THRESHOLD,
};
use aq_core::corpus::{
    self, build_splits, parse_corpus, validate_corpus, validate_test_groups, word_count_filter, SplitCounts,
    DEFAULT_TRAIN_FRACTION, MAX_WORDS, MIN_WORDS,
};
use aq_core::eval::{
    evaluate as evaluate_predictions, load_experiment_spec, predictions_from_tsv, predictions_to_tsv, run_experiment,
    train_model, Checkpoint, CorpusInputs, Encoding, EvalResult, ExperimentSpec, Grids, InputContext, ModelFamily, NeuralGrid,
    Pairing, Predictions, Scope,
};
use aq_core::features as feat;
use aq_core::neural::TrainConfig;
use aq_core::svr::KernelSpec;
use aq_core::synth::{planted_corpus, PlantedConfig};
use aq_core::{Dimension, Domain, Reference, Scale, Source, Split, SplitAssignment};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::failure::{CmdResult, Failure, ResultExt};
use crate::settings::{input_path, required};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Tsv,
    Json,
}

fn write_file(dir: &Path, name: &str, body: &str) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Writes `body` to `<out>/<stem>.<ext>`, or to stdout without `--out`.
fn emit(out: Option<&Path>, stem: &str, format: Format, body: &str) -> CmdResult {
    match out {
        Some(dir) => {
            let ext = match format {
                Format::Tsv => "tsv",
                Format::Json => "json",
            };
            write_file(dir, &format!("{stem}.{ext}"), body)
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn to_json_text<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

fn load_annotations(path: &Path, scale: Scale) -> CmdResult<Vec<AnnotationRecord>> {
    parse_annotations(input_path(path), scale).usage()
}

macro_rules! opt_args {
    ($(#[$meta:meta])* pub struct $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

opt_args! {
    pub struct IngestArgs {
        /// Corpus JSONL file
        #[arg(long)]
        corpus: PathBuf,
        /// Default domain for documents without one
        #[arg(long)]
        domain: Domain,
        /// Annotation JSONL; documents rated by both groups become test data
        #[arg(long)]
        annotations: PathBuf,
        /// Rating scale of the annotation file (five, three, binary)
        #[arg(long)]
        scale: Scale,
        #[arg(long)]
        min_words: usize,
        #[arg(long)]
        max_words: usize,
        /// Share of non-test documents assigned to train
        #[arg(long)]
        train_fraction: f64,
        /// Check portion sizes against the published counts for the domain
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        expect_published_counts: bool,
        #[arg(long)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn ingest(a: &IngestArgs) -> CmdResult {
    let path = input_path(&required(a.corpus.clone(), "corpus")?);
    let domain = required(a.domain, "domain")?;
    let out = required(a.out.clone(), "out")?;
    let (min, max) = (a.min_words.unwrap_or(MIN_WORDS), a.max_words.unwrap_or(MAX_WORDS));
    let docs = parse_corpus(&path, domain).usage()?;
    let total = docs.len();
    let docs: Vec<_> = docs.into_iter().filter(|d| word_count_filter(d, min, max)).collect();
    log::info!("kept {} of {total} documents with {min}..={max} words", docs.len());

    let annotations = match &a.annotations {
        Some(p) => load_annotations(p, a.scale.unwrap_or_default())?,
        None => {
            log::warn!("no annotations given; every document goes to train/dev");
            Vec::new()
        }
    };
    let kept: std::collections::HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let annotations: Vec<AnnotationRecord> = annotations.into_iter().filter(|r| kept.contains(r.doc_id.as_str())).collect();
    let splits = build_splits(
        &docs,
        &annotations,
        a.seed.unwrap_or(0),
        a.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
    )
    .usage()?;
    let expected = if a.expect_published_counts.unwrap_or(false) {
        SplitCounts::reference(domain)
    } else {
        None
    };
    let mut report = validate_corpus(&docs, &splits, expected);
    report.violations.extend(validate_test_groups(&splits, &annotations));

    write_file(&out, "corpus.jsonl", &corpus::serialize_corpus(&docs))?;
    write_file(&out, "splits.tsv", &splits.to_tsv())?;
    write_file(&out, "validation.json", &to_json_text(&report))?;
    let c = splits.counts();
    log::info!("train {} / dev {} / test {}", c.train, c.dev, c.test);
    if report.is_valid() {
        Ok(())
    } else {
        for v in &report.violations {
            log::error!("{v}");
        }
        Err(Failure::usage(format!("{} validation violations", report.violations.len())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Mean over all annotators
    Mean,
    Expert,
    Crowd,
    /// Average of the expert and crowd means
    Mix,
    Majority,
    /// MACE posterior (mean label; P(1) on binary data)
    Mace,
    /// Weighted average using --weights
    Wa,
}

opt_args! {
    pub struct AggregateArgs {
        /// Annotation JSONL file
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        scale: Scale,
        /// TSV of `annotator<TAB>weight` for --method wa
        #[arg(long)]
        weights: PathBuf,
        /// MACE random restarts
        #[arg(long)]
        restarts: usize,
        /// MACE EM iterations
        #[arg(long)]
        iterations: usize,
        /// MACE pseudo-count (default 0.1 / number of labels)
        #[arg(long)]
        smoothing: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        format: Format,
        /// Output directory (stdout when absent)
        #[arg(long)]
        out: PathBuf,
    }
}

fn parse_weights(path: &Path) -> CmdResult<BTreeMap<String, f64>> {
    let path = input_path(path);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut f = line.split('\t');
        let (Some(id), Some(w), None) = (f.next(), f.next(), f.next()) else {
            return Err(Failure::usage(format!("{}:{}: expected annotator<TAB>weight", path.display(), i + 1)));
        };
        match w.trim().parse::<f64>() {
            Ok(v) => {
                out.insert(id.to_string(), v);
            }
            Err(_) if i == 0 => {} // header
            Err(e) => return Err(Failure::usage(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn aggregate(a: &AggregateArgs) -> CmdResult {
    let scale = a.scale.unwrap_or_default();
    let records = load_annotations(&required(a.annotations.clone(), "annotations")?, scale)?;
    let method = required(a.method, "method")?;
    let defaults = MaceConfig::default();
    let mut opts = AggregateOptions {
        scale,
        annotator_weights: None,
        mace: MaceConfig {
            restarts: a.restarts.unwrap_or(defaults.restarts),
            iterations: a.iterations.unwrap_or(defaults.iterations),
            smoothing: a.smoothing.or(defaults.smoothing),
            seed: a.seed.unwrap_or(defaults.seed),
        },
    };
    let source = match method {
        Method::Mean => Source::WeightedAvg,
        Method::Expert => Source::ExpertMean,
        Method::Crowd => Source::CrowdMean,
        Method::Mix => Source::Mix,
        Method::Majority => Source::Majority,
        Method::Mace => Source::MaceP,
        Method::Wa => {
            let w = required(a.weights.as_deref(), "weights")?;
            opts.annotator_weights = Some(parse_weights(w)?);
            Source::WeightedAvg
        }
    };
    let rows = aggregate_records(&records, source, &opts).usage()?;
    log::info!("{} documents aggregated with {source}", rows.len());
    let format = a.format.unwrap_or_default();
    let body = match format {
        Format::Tsv => aggregation::scores_to_tsv(&rows),
        Format::Json => to_json_text(
            &rows
                .iter()
                .map(|r| serde_json::json!({ "doc_id": r.doc_id, "source": r.source, "scores": r.scores }))
                .collect::<Vec<_>>(),
        ),
    };
    emit(a.out.as_deref(), "scores", format, &body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Interval,
    Ordinal,
    Nominal,
}

impl From<MetricArg> for AlphaMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Interval => AlphaMetric::Interval,
            MetricArg::Ordinal => AlphaMetric::Ordinal,
            MetricArg::Nominal => AlphaMetric::Nominal,
        }
    }
}

opt_args! {
    pub struct IaaArgs {
        /// Annotation JSONL file
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        scale: Scale,
        /// Annotators whose average alpha falls below this are blocked
        #[arg(long)]
        threshold: f64,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Comma-separated dimensions (default: all present)
        #[arg(long, value_delimiter = ',')]
        dimensions: Vec<Dimension>,
        #[arg(long, value_enum)]
        format: Format,
        /// Output directory (stdout when absent)
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn iaa(a: &IaaArgs) -> CmdResult {
    let records = load_annotations(&required(a.annotations.clone(), "annotations")?, a.scale.unwrap_or_default())?;
    let dims = match &a.dimensions {
        Some(d) if !d.is_empty() => d.clone(),
        _ => Dimension::ALL
            .into_iter()
            .filter(|d| records.iter().any(|r| r.ratings.contains_key(d)))
            .collect(),
    };
    let threshold = a.threshold.unwrap_or(BLOCKING_THRESHOLD);
    let report = per_annotator_alpha(&records, &dims, threshold, a.metric.unwrap_or(MetricArg::Interval).into());
    match report.alpha {
        Some(v) => log::info!("group alpha {v:.4} over {} units", report.n_units),
        None => log::warn!("group alpha undefined"),
    }
    let format = a.format.unwrap_or_default();
    let body = match format {
        Format::Json => to_json_text(&report),
        Format::Tsv => {
            let mut t = String::from("annotator\talpha\tstatus\n");
            for (who, v) in &report.per_annotator {
                let status = if report.blocked.contains(who) { "blocked" } else { "ok" };
                t.push_str(&format!("{who}\t{v}\t{status}\n"));
            }
            for who in &report.excluded {
                t.push_str(&format!("{who}\tNA\texcluded\n"));
            }
            t
        }
    };
    if !report.blocked.is_empty() {
        log::warn!("blocked: {}", report.blocked.iter().cloned().collect::<Vec<_>>().join(", "));
    }
    emit(a.out.as_deref(), "iaa", format, &body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Sparse tf-idf vectors plus the fitted vocabulary
    Tfidf,
    /// Mean word embeddings, usable as `--representations`
    Embedding,
    /// Character length, token count and type/token ratio
    Length,
}

opt_args! {
    pub struct FeaturesArgs {
        /// Corpus JSONL file
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Domain,
        #[arg(long, value_enum)]
        kind: FeatureKind,
        /// Fit the tf-idf vocabulary on the train portion of this split file
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Smallest and largest n-gram order, e.g. 1,2
        #[arg(long, value_delimiter = ',', num_args = 2)]
        ngram_range: Vec<usize>,
        #[arg(long)]
        min_df: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn features(a: &FeaturesArgs) -> CmdResult {
    let docs = parse_corpus(input_path(&required(a.corpus.clone(), "corpus")?), required(a.domain, "domain")?).usage()?;
    let out = required(a.out.clone(), "out")?;
    let tokens: Vec<Vec<String>> = docs.iter().map(|d| feat::tokenize(&d.text)).collect();
    match a.kind.unwrap_or(FeatureKind::Tfidf) {
        FeatureKind::Tfidf => {
            let range = match a.ngram_range.as_deref() {
                None | Some([]) => (1, 2),
                Some([lo, hi]) => (*lo, *hi),
                Some(_) => return Err(Failure::usage("--ngram-range needs LO,HI")),
            };
            let fit_on: Vec<Vec<String>> = match &a.splits {
                Some(p) => {
                    let splits = SplitAssignment::load(input_path(p)).usage()?;
                    docs.iter()
                        .zip(&tokens)
                        .filter(|(d, _)| splits.get(&d.id) == Some(Split::Train))
                        .map(|(_, t)| t.clone())
                        .collect()
                }
                None => tokens.clone(),
            };
            let vocab = feat::fit_tfidf(&fit_on, range, a.min_df.unwrap_or(2)).usage()?;
            let mut lines = String::new();
            for (d, t) in docs.iter().zip(&tokens) {
                let v = feat::transform_tfidf(&vocab, t);
                let (idx, val): (Vec<usize>, Vec<f64>) = v.entries().iter().copied().unzip();
                lines.push_str(&serde_json::json!({ "id": d.id, "dim": v.dim(), "indices": idx, "values": val }).to_string());
                lines.push('\n');
            }
            write_file(&out, "vocabulary.json", &vocab.to_json())?;
            write_file(&out, "features.jsonl", &lines)
        }
        FeatureKind::Embedding => {
            let path = input_path(&required(a.embeddings.clone(), "embeddings")?);
            let table = feat::EmbeddingTable::load(&path).usage()?;
            let mut reps = BTreeMap::new();
            let mut unknown = 0;
            for (d, t) in docs.iter().zip(&tokens) {
                let (v, hits) = feat::embed_average(t, &table);
                unknown += usize::from(hits == 0);
                reps.insert(d.id.clone(), v);
            }
            if unknown > 0 {
                log::warn!("{unknown} documents have no known tokens; their vectors are zero");
            }
            write_file(&out, "representations.jsonl", &aq_core::neural::representations_to_jsonl(&reps))
        }
        FeatureKind::Length => {
            let mut t = String::from("doc_id\tchar_length\ttokens\ttype_token_ratio\n");
            for (d, tok) in docs.iter().zip(&tokens) {
                t.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    d.id,
                    feat::char_length(d),
                    tok.len(),
                    feat::type_token_ratio(tok)
                ));
            }
            write_file(&out, "features.tsv", &t)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    ArgLength,
    SvrTfidf,
    SvrEmbd,
    WachsmuthCfs,
    NeuralSt,
    NeuralMtFlat,
    NeuralMtHier,
}

impl From<FamilyArg> for ModelFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::ArgLength => ModelFamily::ArgLength,
            FamilyArg::SvrTfidf => ModelFamily::SvrTfidf,
            FamilyArg::SvrEmbd => ModelFamily::SvrEmbd,
            FamilyArg::WachsmuthCfs => ModelFamily::WachsmuthCfs,
            FamilyArg::NeuralSt => ModelFamily::NeuralSt,
            FamilyArg::NeuralMtFlat => ModelFamily::NeuralMtFlat,
            FamilyArg::NeuralMtHier => ModelFamily::NeuralMtHier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    Mean,
    Projection,
    Precomputed,
}

opt_args! {
    pub struct TrainArgs {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Corpus JSONL file
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Domain,
        /// Split TSV (`doc_id<TAB>split`)
        #[arg(long)]
        splits: PathBuf,
        /// Scores TSV with the training targets
        #[arg(long)]
        targets: PathBuf,
        /// Which reference the targets file holds (default mix)
        #[arg(long)]
        target_reference: Reference,
        /// Word-embedding text file
        #[arg(long)]
        embeddings: PathBuf,
        /// Precomputed representations JSONL
        #[arg(long)]
        representations: PathBuf,
        #[arg(long, value_enum)]
        encoding: EncodingArg,
        /// Hidden size of the projection encoder
        #[arg(long)]
        hidden: usize,
        /// Comma-separated dimensions for single-task families
        #[arg(long, value_delimiter = ',')]
        dimensions: Vec<Dimension>,
        #[arg(long)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Hyperparameter grids (config file only)
        #[arg(skip)]
        grids: Grids,
        /// Neural batch size / optimiser (config file only)
        #[arg(skip)]
        train: TrainConfig,
        #[arg(skip)]
        svr_kernel: KernelSpec,
        #[arg(skip)]
        ngram_range: (usize, usize),
        #[arg(skip)]
        min_df: usize,
        #[arg(skip)]
        cfs_k: usize,
    }
}

fn encoding(arg: Option<EncodingArg>, hidden: Option<usize>) -> Encoding {
    match arg.unwrap_or(EncodingArg::Mean) {
        EncodingArg::Mean => Encoding::MeanEmbedding,
        EncodingArg::Projection => Encoding::Projection { hidden: hidden.unwrap_or(32) },
        EncodingArg::Precomputed => Encoding::Precomputed,
    }
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let domain = required(a.domain, "domain")?;
    let reference = a.target_reference.unwrap_or(Reference::Mix);
    let inputs = CorpusInputs {
        domain,
        corpus: input_path(&required(a.corpus.clone(), "corpus")?),
        splits: Some(input_path(&required(a.splits.clone(), "splits")?)),
        references: [(reference, input_path(&required(a.targets.clone(), "targets")?))].into_iter().collect(),
        target: Some(reference),
        against: None,
    };
    let out = required(a.out.clone(), "out")?;
    let mut spec = ExperimentSpec::new(required(a.family, "family")?.into(), Scope::InDomain { domain }, vec![inputs]);
    spec.embeddings = a.embeddings.as_deref().map(input_path);
    spec.representations = a.representations.as_deref().map(input_path);
    spec.encoding = encoding(a.encoding, a.hidden);
    if let Some(d) = a.dimensions.clone().filter(|d| !d.is_empty()) {
        spec.dimensions = d;
    }
    spec.seed = a.seed.unwrap_or(0);
    if let Some(g) = &a.grids {
        spec.grids = g.clone();
    }
    if let Some(t) = &a.train {
        spec.train = t.clone();
    }
    spec.svr_kernel = a.svr_kernel.unwrap_or(spec.svr_kernel);
    spec.ngram_range = a.ngram_range.unwrap_or(spec.ngram_range);
    spec.min_df = a.min_df.unwrap_or(spec.min_df);
    spec.cfs_k = a.cfs_k.unwrap_or(spec.cfs_k);

    let outcome = train_model(&spec)?;
    write_file(&out, "model.json", &outcome.checkpoint.to_json())?;
    write_file(&out, "grid.tsv", &outcome.grid)?;
    if let Some(h) = &outcome.history {
        write_file(&out, "history.csv", &h.to_csv())?;
    }
    Ok(())
}

opt_args! {
    pub struct PredictArgs {
        /// Checkpoint written by `train` or `experiment`
        #[arg(long)]
        model: PathBuf,
        /// Corpus JSONL file
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: Domain,
        /// Only score documents of --split from this split file
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        split: Split,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        representations: PathBuf,
        /// Clamp predictions to LO,HI
        #[arg(long, value_delimiter = ',', num_args = 2)]
        clamp: Vec<f64>,
        #[arg(long, value_enum)]
        format: Format,
        /// Output directory (stdout when absent)
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let model_path = input_path(&required(a.model.clone(), "model")?);
    let text = std::fs::read_to_string(&model_path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", model_path.display())))?;
    let checkpoint = Checkpoint::from_json(&text)?;
    let docs = parse_corpus(input_path(&required(a.corpus.clone(), "corpus")?), required(a.domain, "domain")?).usage()?;
    let docs: Vec<_> = match (&a.splits, a.split) {
        (Some(p), Some(s)) => {
            let splits = SplitAssignment::load(input_path(p)).usage()?;
            docs.into_iter().filter(|d| splits.get(&d.id) == Some(s)).collect()
        }
        (None, None) => docs,
        _ => return Err(Failure::usage("--splits and --split go together")),
    };
    let ctx = InputContext::load(
        a.embeddings.as_deref().map(input_path).as_deref(),
        a.representations.as_deref().map(input_path).as_deref(),
    )?;
    let clamp = match a.clamp.as_deref() {
        None | Some([]) => None,
        Some([lo, hi]) if lo <= hi => Some((*lo, *hi)),
        Some(_) => return Err(Failure::usage("--clamp needs LO,HI with LO <= HI")),
    };
    let refs: Vec<_> = docs.iter().collect();
    let preds = checkpoint.model.predict(&refs, &ctx, clamp)?;
    let format = a.format.unwrap_or_default();
    let body = match format {
        Format::Tsv => predictions_to_tsv(&preds),
        Format::Json => to_json_text(&preds),
    };
    emit(a.out.as_deref(), "predictions", format, &body)
}

opt_args! {
    pub struct EvaluateArgs {
        /// Predictions TSV written by `predict`
        #[arg(long)]
        predictions: PathBuf,
        /// Reference scores as NAME=PATH (crowd, expert, mix, wa, mace_p); repeatable
        #[arg(long = "reference")]
        references: Vec<String>,
        #[arg(long)]
        domain: Domain,
        /// Correlate every predicted dimension against this reference column
        #[arg(long)]
        against: Dimension,
        #[arg(long, value_enum)]
        format: Format,
        /// Output directory (stdout when absent)
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let pred_path = input_path(&required(a.predictions.clone(), "predictions")?);
    let text = std::fs::read_to_string(&pred_path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", pred_path.display())))?;
    let preds: Predictions = predictions_from_tsv(&text).usage()?;
    let specs = required(a.references.clone().filter(|r| !r.is_empty()), "reference")?;
    let mut tables = BTreeMap::new();
    for s in specs {
        let (name, path) = s
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--reference `{s}` is not NAME=PATH")))?;
        let reference: Reference = name.parse().map_err(Failure::usage)?;
        let rows = aggregation::load_scores(input_path(Path::new(path))).usage()?;
        let table = aggregation::to_table(&rows, reference.source());
        if table.is_empty() {
            return Err(Failure::usage(format!("{path}: no `{}` rows", reference.source())));
        }
        tables.insert(reference, table);
    }
    let pairing = a.against.map(Pairing::AgainstReference).unwrap_or_default();
    let result: EvalResult = evaluate_predictions(&preds, &tables, required(a.domain, "domain")?, pairing).usage()?;
    let format = a.format.unwrap_or_default();
    let body = match format {
        Format::Tsv => result.to_tsv(),
        Format::Json => to_json_text(&result),
    };
    emit(a.out.as_deref(), "eval", format, &body)
}

opt_args! {
    pub struct ExperimentArgs {
        /// Experiment spec JSON
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's seed
        #[arg(long)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn experiment(a: &ExperimentArgs) -> CmdResult {
    let spec_path = input_path(&required(a.spec.clone(), "spec")?);
    let out = required(a.out.clone(), "out")?;
    let mut spec = load_experiment_spec(&spec_path)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let outcome = run_experiment(&spec, Some(&out))?;
    for row in &outcome.eval.rows {
        log::info!(
            "{} {} vs {}: r = {:?} (n = {})",
            row.domain,
            row.dimension,
            row.reference,
            row.pearson,
            row.n
        );
    }
    Ok(())
}

opt_args! {
    pub struct DemoArgs {
        /// Documents per domain
        #[arg(long)]
        docs_per_domain: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    }
}

pub fn demo(a: &DemoArgs) -> CmdResult {
    let out = required(a.out.clone(), "out")?;
    let config = PlantedConfig {
        docs_per_domain: a.docs_per_domain.unwrap_or(100),
        seed: a.seed.unwrap_or(0),
        ..PlantedConfig::default()
    };
    if config.docs_per_domain < 10 {
        return Err(Failure::usage("--docs-per-domain must be at least 10"));
    }
    let corpus = planted_corpus(&config);
    let inputs = corpus.write(&out).runtime()?;
    write_file(&out, "annotations.jsonl", &aggregation::serialize_annotations(&corpus.annotations()))?;

    // Spec paths are relative to the spec file so the directory can move.
    let relative: Vec<CorpusInputs> = inputs
        .into_iter()
        .map(|mut c| {
            let strip = |p: &mut PathBuf| *p = PathBuf::from(p.file_name().expect("file"));
            strip(&mut c.corpus);
            c.splits.iter_mut().for_each(strip);
            c.references.values_mut().for_each(strip);
            c
        })
        .collect();
    let mut spec = ExperimentSpec::new(ModelFamily::NeuralMtFlat, Scope::AllDomains, relative);
    spec.embeddings = Some("embeddings.txt".into());
    spec.grids.neural = NeuralGrid {
        learning_rate: vec![0.003, 0.01],
        epochs: vec![20],
    };
    spec.seed = config.seed;
    write_file(&out, "experiment.json", &to_json_text(&spec))
}
