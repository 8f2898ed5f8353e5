//! Document representations: length statistics, tf-idf n-grams, averaged
//! word embeddings and correlation-based feature selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArgumentDoc;
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid n-gram range ({0}, {1})")]
    BadRange(usize, usize),
    #[error("k must be at least 1")]
    BadK,
    #[error("{0} feature rows but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("need at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("embedding line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error("vocabulary: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Number of Unicode scalar values, whitespace included.
pub fn char_length(doc: &ArgumentDoc) -> usize {
    doc.text.chars().count()
}

/// Lower-cased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn type_token_ratio(tokens: &[String]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let distinct: std::collections::HashSet<&str> = tokens.iter().map(String::as_str).collect();
    distinct.len() as f64 / tokens.len() as f64
}

/// Sparse vector with sorted, unique indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Duplicate indices are summed; zeros dropped.
    ///
    /// # Panics
    /// If an index is `>= dim`.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            assert!(i < dim, "index {i} out of range for dimension {dim}");
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        FeatureVector { dim, entries: merged }
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector { dim, entries: Vec::new() }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        FeatureVector {
            dim: v.len(),
            entries: v.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    /// Merge-join over the non-zero indices of both vectors.
    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * w[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn scale(&mut self, c: f64) {
        if c == 0.0 {
            self.entries.clear();
        } else {
            self.entries.iter_mut().for_each(|e| e.1 *= c);
        }
    }

    /// Keeps `indices` (in the given order) as the new coordinates `0..len`.
    pub fn select(&self, indices: &[usize]) -> FeatureVector {
        FeatureVector::new(
            indices.len(),
            indices
                .iter()
                .enumerate()
                .filter_map(|(new, &old)| {
                    let v = self.get(old);
                    (v != 0.0).then_some((new, v))
                })
                .collect(),
        )
    }
}

/// Space-joined n-grams of every order in `lo..=hi`.
pub fn ngrams(tokens: &[String], lo: usize, hi: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in lo..=hi {
        if n == 0 || n > tokens.len() {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub index: usize,
    pub df: usize,
}

/// Fitted n-gram vocabulary with smoothed idf weights:
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    pub ngram_range: (usize, usize),
    pub min_df: usize,
    pub n_docs: usize,
    pub terms: BTreeMap<String, TermStats>,
    /// Hash of the token lists the vocabulary was fitted on.
    pub fitted_on: String,
    #[serde(skip)]
    idf: Vec<f64>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    ngram_range: (usize, usize),
    min_df: usize,
    n_docs: usize,
    terms: BTreeMap<String, TermStats>,
    fitted_on: String,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let mut v = Vocabulary {
            ngram_range: r.ngram_range,
            min_df: r.min_df,
            n_docs: r.n_docs,
            terms: r.terms,
            fitted_on: r.fitted_on,
            idf: Vec::new(),
        };
        v.rebuild_idf();
        v
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.terms.get(term).map(|t| self.idf[t.index])
    }

    fn rebuild_idf(&mut self) {
        let n = self.n_docs as f64;
        self.idf = vec![0.0; self.terms.len()];
        for t in self.terms.values() {
            self.idf[t.index] = ((1.0 + n) / (1.0 + t.df as f64)).ln() + 1.0;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let mut v: Vocabulary = serde_json::from_str(text)?;
        v.rebuild_idf();
        Ok(v)
    }
}

pub fn fit_tfidf(corpus: &[Vec<String>], ngram_range: (usize, usize), min_df: usize) -> Result<Vocabulary, FeatureError> {
    let (lo, hi) = ngram_range;
    if lo < 1 || hi < lo {
        return Err(FeatureError::BadRange(lo, hi));
    }
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut grams = ngrams(doc, lo, hi);
        grams.sort_unstable();
        grams.dedup();
        for g in grams {
            *df.entry(g).or_default() += 1;
        }
    }
    let terms = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df.max(1))
        .enumerate()
        .map(|(index, (g, df))| (g, TermStats { index, df }))
        .collect();

    let mut fingerprint_src = String::new();
    for doc in corpus {
        fingerprint_src.push_str(&doc.join("\u{1f}"));
        fingerprint_src.push('\u{1e}');
    }
    let mut vocab = Vocabulary {
        ngram_range,
        min_df,
        n_docs: corpus.len(),
        terms,
        fitted_on: sha256_hex(fingerprint_src.as_bytes()),
        idf: Vec::new(),
    };
    vocab.rebuild_idf();
    Ok(vocab)
}

/// Raw-count tf × idf, L2-normalised. Unknown n-grams are ignored.
pub fn transform_tfidf(vocab: &Vocabulary, tokens: &[String]) -> FeatureVector {
    let (lo, hi) = vocab.ngram_range;
    let entries = ngrams(tokens, lo, hi)
        .iter()
        .filter_map(|g| vocab.terms.get(g).map(|t| (t.index, vocab.idf[t.index])))
        .collect();
    let mut v = FeatureVector::new(vocab.len(), entries);
    let norm = v.norm_sq().sqrt();
    if norm > 0.0 {
        v.scale(1.0 / norm);
    }
    v
}

/// Token → dense vector, all of length `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "embedding length mismatch");
        self.vectors.insert(token.into(), v);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Textual word2vec format with an optional `N d` header line.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let lines: Vec<(usize, &str)> = crate::util::numbered_lines(text).collect();
        let mut start = 0;
        let mut declared: Option<(usize, usize)> = None;
        if let Some(&(_, first)) = lines.first() {
            let f: Vec<&str> = first.split_whitespace().collect();
            if let [n, d] = f[..] {
                if let (Ok(n), Ok(d)) = (n.parse::<usize>(), d.parse::<usize>()) {
                    let next_width = lines.get(1).map(|l| l.1.split_whitespace().count());
                    if next_width.is_none_or(|w| w == d + 1) {
                        declared = Some((n, d));
                        start = 1;
                    }
                }
            }
        }

        let mut table = EmbeddingTable::new(declared.map(|x| x.1).unwrap_or(0));
        for &(line, raw) in &lines[start..] {
            let bad = |message: String| FeatureError::Embedding { line, message };
            let mut fields = raw.split_whitespace();
            let token = fields.next().ok_or_else(|| bad("empty line".into()))?;
            let v = fields
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            if table.dim == 0 && table.vectors.is_empty() {
                table.dim = v.len();
            }
            if v.len() != table.dim {
                return Err(bad(format!("expected {} values, got {}", table.dim, v.len())));
            }
            table.vectors.insert(token.to_string(), v);
        }
        if let Some((n, _)) = declared {
            if n != table.vectors.len() {
                log::warn!("embedding header declares {n} vectors, found {}", table.vectors.len());
            }
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut out = format!("{} {}\n", keys.len(), self.dim);
        for k in keys {
            out.push_str(k);
            for v in &self.vectors[k] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of the in-vocabulary token vectors and the number of hits; the zero
/// vector when nothing is found.
pub fn embed_average(tokens: &[String], table: &EmbeddingTable) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; table.dim];
    let mut hits = 0;
    for t in tokens {
        if let Some(v) = table.vectors.get(t) {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            hits += 1;
        }
    }
    if hits > 0 {
        acc.iter_mut().for_each(|a| *a /= hits as f64);
    }
    (acc, hits)
}

/// Ranks features by `|r|` against `y` and keeps the top `k`. Constant
/// columns score 0; ties go to the lower index.
pub fn cfs_select(x: &[FeatureVector], y: &[f64], k: usize) -> Result<Vec<usize>, FeatureError> {
    if k < 1 {
        return Err(FeatureError::BadK);
    }
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooFewRows(x.len()));
    }
    let scores = feature_correlations(x, y);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// `|Pearson r|` of every column against `y`, from sparse sufficient
/// statistics.
pub fn feature_correlations(x: &[FeatureVector], y: &[f64]) -> Vec<f64> {
    let dim = x.iter().map(FeatureVector::dim).max().unwrap_or(0);
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let syy: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();

    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut sum_xy = vec![0.0; dim];
    for (row, &yi) in x.iter().zip(y) {
        for &(j, v) in row.entries() {
            sum[j] += v;
            sum_sq[j] += v * v;
            sum_xy[j] += v * (yi - y_mean);
        }
    }
    (0..dim)
        .map(|j| {
            let sxx = sum_sq[j] - sum[j] * sum[j] / n;
            // sum_xy is already centred in y, so Σ(x-x̄)(y-ȳ) = Σ x (y-ȳ).
            let sxy = sum_xy[j];
            if sxx <= 1e-12 * sum_sq[j].max(f64::MIN_POSITIVE) || syy == 0.0 {
                0.0
            } else {
                (sxy / (sxx * syy).sqrt()).abs().min(1.0)
            }
        })
        .collect()
}

/// Reduced feature-rich baseline: token 1-3 gram tf-idf plus standardised
/// character length, word count and type-token ratio, filtered by CFS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WachsmuthFeaturizer {
    pub vocab: Vocabulary,
    pub stat_means: [f64; 3],
    pub stat_stds: [f64; 3],
    pub selected: Vec<usize>,
}

impl WachsmuthFeaturizer {
    pub const NGRAM_RANGE: (usize, usize) = (1, 3);

    pub fn fit(docs: &[&ArgumentDoc], targets: &[f64], k: usize, min_df: usize) -> Result<Self, FeatureError> {
        let tokens: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
        let vocab = fit_tfidf(&tokens, Self::NGRAM_RANGE, min_df)?;
        let stats: Vec<[f64; 3]> = docs.iter().zip(&tokens).map(|(d, t)| doc_stats(d, t)).collect();
        let mut stat_means = [0.0; 3];
        let mut stat_stds = [0.0; 3];
        for c in 0..3 {
            let n = stats.len() as f64;
            let m = stats.iter().map(|s| s[c]).sum::<f64>() / n;
            let var = stats.iter().map(|s| (s[c] - m).powi(2)).sum::<f64>() / n;
            stat_means[c] = m;
            stat_stds[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let mut f = WachsmuthFeaturizer {
            vocab,
            stat_means,
            stat_stds,
            selected: Vec::new(),
        };
        let full: Vec<FeatureVector> = docs.iter().zip(&tokens).map(|(d, t)| f.full_vector(d, t)).collect();
        f.selected = cfs_select(&full, targets, k)?;
        Ok(f)
    }

    fn full_vector(&self, doc: &ArgumentDoc, tokens: &[String]) -> FeatureVector {
        let base = self.vocab.len();
        let tfidf = transform_tfidf(&self.vocab, tokens);
        let s = doc_stats(doc, tokens);
        let mut entries = tfidf.entries().to_vec();
        for c in 0..3 {
            entries.push((base + c, (s[c] - self.stat_means[c]) / self.stat_stds[c]));
        }
        FeatureVector::new(base + 3, entries)
    }

    pub fn transform(&self, doc: &ArgumentDoc) -> FeatureVector {
        let tokens = tokenize(&doc.text);
        self.full_vector(doc, &tokens).select(&self.selected)
    }
}

fn doc_stats(doc: &ArgumentDoc, tokens: &[String]) -> [f64; 3] {
    [char_length(doc) as f64, doc.word_count as f64, type_token_ratio(tokens)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::eval::pearson;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn char_length_counts_scalars() {
        let d = |t: &str| ArgumentDoc::new("x", Domain::Cqa, t);
        assert_eq!(char_length(&d("abc")), 3);
        assert_eq!(char_length(&d("")), 0);
        assert_eq!(char_length(&d("a b")), 3);
        assert_eq!(char_length(&d("naïve")), 5);
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, world!"), toks(&["hello", "world"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't"), toks(&["don", "t"]));
    }

    #[test]
    fn idf_values() {
        let corpus = vec![toks(&["a", "b"]), toks(&["a"])];
        let v = fit_tfidf(&corpus, (1, 1), 1).unwrap();
        assert_eq!(v.idf("a"), Some(1.0));
        let b = (3.0f64 / 2.0).ln() + 1.0;
        assert!((v.idf("b").unwrap() - b).abs() < 1e-15);
        assert!((b - 1.4055).abs() < 1e-4);

        let pruned = fit_tfidf(&corpus, (1, 1), 2).unwrap();
        assert!(pruned.idf("b").is_none());
        assert_eq!(pruned.terms["a"].index, 0);

        let bi = fit_tfidf(&[toks(&["a", "b"])], (2, 2), 1).unwrap();
        assert_eq!(bi.terms.keys().collect::<Vec<_>>(), vec!["a b"]);

        assert!(matches!(fit_tfidf(&[], (1, 1), 1), Err(FeatureError::EmptyCorpus)));
        assert!(matches!(fit_tfidf(&corpus, (2, 1), 1), Err(FeatureError::BadRange(2, 1))));
        assert!(matches!(fit_tfidf(&corpus, (0, 1), 1), Err(FeatureError::BadRange(0, 1))));
    }

    #[test]
    fn vocabulary_survives_json() {
        let corpus = vec![toks(&["a", "b", "c"]), toks(&["a", "c"])];
        let v = fit_tfidf(&corpus, (1, 2), 1).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(transform_tfidf(&back, &corpus[0]), transform_tfidf(&v, &corpus[0]));
    }

    #[test]
    fn transform_normalises() {
        let corpus = vec![toks(&["a", "b"]), toks(&["a"])];
        let v = fit_tfidf(&corpus, (1, 1), 1).unwrap();
        let b = (1.5f64).ln() + 1.0;
        let norm = (1.0 + b * b).sqrt();
        let fv = transform_tfidf(&v, &toks(&["a", "b"]));
        assert!((fv.get(0) - 1.0 / norm).abs() < 1e-15);
        assert!((fv.get(1) - b / norm).abs() < 1e-15);

        assert_eq!(transform_tfidf(&v, &toks(&["zzz"])).nnz(), 0);

        let dup = transform_tfidf(&v, &toks(&["a", "a", "b"]));
        let norm2 = (4.0 + b * b).sqrt();
        assert!((dup.get(0) - 2.0 / norm2).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let corpus = vec![toks(&["x", "y", "z"]), toks(&["y", "z"])];
        let v = fit_tfidf(&corpus, (1, 2), 1).unwrap();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.idf("y z"), v.idf("y z"));
    }

    #[test]
    fn embedding_average_cases() {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 0.0]);
        t.insert("b", vec![0.0, 1.0]);
        assert_eq!(embed_average(&toks(&["a", "b"]), &t), (vec![0.5, 0.5], 2));
        assert_eq!(embed_average(&toks(&["q", "r"]), &t), (vec![0.0, 0.0], 0));
        assert_eq!(embed_average(&toks(&["a", "a"]), &t).0, vec![1.0, 0.0]);
    }

    #[test]
    fn embedding_file_formats() {
        let with_header = "2 3\nfoo 1 2 3\nbar 0.5 -1 2e-1\n";
        let t = EmbeddingTable::parse(with_header).unwrap();
        assert_eq!(t.dim, 3);
        assert_eq!(t.vectors["bar"], vec![0.5, -1.0, 0.2]);
        let no_header = "foo 1 2\nbar 3 4\n";
        assert_eq!(EmbeddingTable::parse(no_header).unwrap().dim, 2);
        let ragged = "foo 1 2\nbar 3\n";
        assert!(matches!(EmbeddingTable::parse(ragged), Err(FeatureError::Embedding { line: 2, .. })));
        assert_eq!(EmbeddingTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn cfs_ranks_by_abs_correlation() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        // column 0: constant; column 1: half-correlated; column 2: -y.
        let half = [1.0, 3.0, 2.0, 2.0, 6.0, 1.0];
        let x: Vec<FeatureVector> = (0..6).map(|i| FeatureVector::from_dense(&[7.0, half[i], -y[i]])).collect();
        let sel = cfs_select(&x, &y, 2).unwrap();
        assert_eq!(sel, vec![2, 1]);
        let r_half = pearson(&half, &y).unwrap().unwrap().abs();
        let scores = feature_correlations(&x, &y);
        assert!((scores[1] - r_half).abs() < 1e-12);
        assert_eq!(scores[0], 0.0);
        assert!(matches!(cfs_select(&x, &y, 0), Err(FeatureError::BadK)));
        assert!(cfs_select(&x[..1], &y[..1], 1).is_err());
    }

    #[test]
    fn cfs_engineered_columns() {
        // |r| = 1.0, 0.5 and 0.0 against y = (1, 2, 3).
        let y = [1.0, 2.0, 3.0];
        let c1 = [2.0, 4.0, 6.0];
        let c2 = [1.0, 3.0, 2.0];
        let c3 = [1.0, -2.0, 1.0];
        for (c, expect) in [(&c1, 1.0), (&c2, 0.5), (&c3, 0.0)] {
            let r = pearson(c, &y).unwrap().unwrap();
            assert!((r.abs() - expect).abs() < 1e-12, "{r}");
        }
        let x: Vec<FeatureVector> = (0..3).map(|i| FeatureVector::from_dense(&[c3[i], c2[i], c1[i]])).collect();
        assert_eq!(cfs_select(&x, &y, 2).unwrap(), vec![2, 1]);
    }

    proptest! {
        #[test]
        fn tfidf_norm_is_zero_or_one(docs in prop::collection::vec(prop::collection::vec("[a-e]", 0..8), 1..6),
                                     query in prop::collection::vec("[a-g]", 0..10)) {
            let v = fit_tfidf(&docs, (1, 2), 1).unwrap();
            let n = transform_tfidf(&v, &query).norm_sq().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn embed_average_order_and_scale(perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(), c in -3.0f64..3.0) {
            let mut t = EmbeddingTable::new(3);
            let words = ["p", "q", "r", "s", "t"];
            for (i, w) in words.iter().enumerate() {
                t.insert(*w, vec![i as f64, 1.0 - i as f64, 0.5 * i as f64]);
            }
            let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            let shuffled: Vec<String> = perm.iter().map(|&i| tokens[i].clone()).collect();
            let (a, _) = embed_average(&tokens, &t);
            let (b, _) = embed_average(&shuffled, &t);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let mut scaled = t.clone();
            scaled.vectors.values_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= c));
            let (s, _) = embed_average(&tokens, &scaled);
            for (x, y) in a.iter().zip(&s) {
                prop_assert!((x * c - y).abs() < 1e-12);
            }
        }
    }
}
