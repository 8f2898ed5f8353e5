//! Argument corpora: JSON-lines parsing, length filtering, split
//! construction and validation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::aggregation::{AnnotationRecord, Group};
use crate::util::numbered_lines;

/// Default inclusive word-count bounds for admissible arguments.
pub const MIN_WORDS: usize = 70;
pub const MAX_WORDS: usize = 200;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("annotation references unknown doc id \"{0}\"")]
    UnknownDoc(String),
    #[error("train fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
}

/// Source domain of an argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Cqa,
    Debates,
    Reviews,
    /// Corpora from outside the three forums, e.g. binary-judgment rankings.
    External,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Cqa, Domain::Debates, Domain::Reviews, Domain::External];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Cqa => "cqa",
            Domain::Debates => "debates",
            Domain::Reviews => "reviews",
            Domain::External => "external",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cqa" | "qa" => Ok(Domain::Cqa),
            "debates" | "debate" => Ok(Domain::Debates),
            "reviews" | "review" => Ok(Domain::Reviews),
            "external" => Ok(Domain::External),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// Quality dimension. `Overall` is the root of the taxonomy; the other
/// three are its sub-dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Cogency,
    Effectiveness,
    Reasonableness,
    Overall,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Cogency,
        Dimension::Effectiveness,
        Dimension::Reasonableness,
        Dimension::Overall,
    ];
    /// Sub-dimensions in the fixed order used for hierarchical concatenation.
    pub const SUB: [Dimension; 3] = [Dimension::Cogency, Dimension::Effectiveness, Dimension::Reasonableness];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Cogency => "cogency",
            Dimension::Effectiveness => "effectiveness",
            Dimension::Reasonableness => "reasonableness",
            Dimension::Overall => "overall",
        }
    }

    pub fn is_root(self) -> bool {
        self == Dimension::Overall
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cogency" | "cog" => Ok(Dimension::Cogency),
            "effectiveness" | "eff" => Ok(Dimension::Effectiveness),
            "reasonableness" | "rea" => Ok(Dimension::Reasonableness),
            "overall" | "ov" => Ok(Dimension::Overall),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

/// One argumentative text.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgumentDoc {
    pub id: String,
    pub domain: Domain,
    pub text: String,
    pub title: Option<String>,
    pub stance: Option<String>,
    pub stars: Option<u8>,
    pub word_count: usize,
    /// Unrecognised keys, kept so that serialisation round-trips.
    pub extra: Map<String, Value>,
}

impl ArgumentDoc {
    pub fn new(id: impl Into<String>, domain: Domain, text: impl Into<String>) -> Self {
        let text = text.into();
        ArgumentDoc {
            id: id.into(),
            domain,
            word_count: count_words(&text),
            text,
            title: None,
            stance: None,
            stars: None,
            extra: Map::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("domain".into(), Value::String(self.domain.as_str().into()));
        obj.insert("text".into(), Value::String(self.text.clone()));
        if let Some(t) = &self.title {
            obj.insert("title".into(), Value::String(t.clone()));
        }
        if let Some(s) = &self.stance {
            obj.insert("stance".into(), Value::String(s.clone()));
        }
        if let Some(s) = self.stars {
            obj.insert("stars".into(), Value::from(s));
        }
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }
}

/// Number of whitespace-separated tokens.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Inclusive length filter on `word_count`.
pub fn word_count_filter(doc: &ArgumentDoc, min: usize, max: usize) -> bool {
    debug_assert!(min <= max);
    (min..=max).contains(&doc.word_count)
}

pub fn parse_corpus(path: impl AsRef<Path>, default_domain: Domain) -> Result<Vec<ArgumentDoc>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus_str(&text, default_domain)
}

/// Parses JSON-lines corpus text. A per-line `domain` key overrides
/// `default_domain`.
pub fn parse_corpus_str(text: &str, default_domain: Domain) -> Result<Vec<ArgumentDoc>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in numbered_lines(text) {
        let doc = parse_doc_line(line, raw, default_domain)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: doc.id });
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn parse_doc_line(line: usize, raw: &str, default_domain: Domain) -> Result<ArgumentDoc, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };
    let value: Value = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(malformed("expected a JSON object".into()));
    };

    let mut take_string = |key: &'static str| -> Result<Option<String>, CorpusError> {
        match obj.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(CorpusError::Malformed {
                line,
                message: format!("`{key}` must be a string, got {other}"),
            }),
        }
    };
    let id = take_string("id")?.ok_or(CorpusError::MissingField { line, field: "id" })?;
    let text = take_string("text")?.ok_or(CorpusError::MissingField { line, field: "text" })?;
    let title = take_string("title")?;
    let stance = take_string("stance")?;
    let domain = match take_string("domain")? {
        Some(d) => d.parse().map_err(malformed)?,
        None => default_domain,
    };
    let stars = match obj.remove("stars") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(s @ 1..=5) => Some(s as u8),
            _ => return Err(malformed(format!("`stars` must be an integer in 1..=5, got {v}"))),
        },
    };

    Ok(ArgumentDoc {
        word_count: count_words(&text),
        id,
        domain,
        text,
        title,
        stance,
        stars,
        extra: obj,
    })
}

pub fn serialize_corpus(docs: &[ArgumentDoc]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&d.to_json().to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Doc id → split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment(pub BTreeMap<String, Split>);

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.0.get(id).copied()
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.0
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in self.0.values() {
            match s {
                Split::Train => c.train += 1,
                Split::Dev => c.dev += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// TSV `id<TAB>split`, sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, s) in &self.0 {
            out.push_str(id);
            out.push('\t');
            out.push_str(s.as_str());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for (line, raw) in numbered_lines(text) {
            let (id, split) = raw.split_once('\t').ok_or_else(|| CorpusError::Malformed {
                line,
                message: "expected `id<TAB>split`".into(),
            })?;
            let split: Split = split
                .trim()
                .parse()
                .map_err(|message| CorpusError::Malformed { line, message })?;
            if map.insert(id.to_string(), split).is_some() {
                return Err(CorpusError::DuplicateId { line, id: id.to_string() });
            }
        }
        Ok(SplitAssignment(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const fn new(train: usize, dev: usize, test: usize) -> Self {
        SplitCounts { train, dev, test }
    }

    /// Published portion sizes of the three forum domains.
    pub fn reference(domain: Domain) -> Option<SplitCounts> {
        match domain {
            Domain::Cqa => Some(SplitCounts::new(1109, 476, 500)),
            Domain::Debates => Some(SplitCounts::new(1093, 469, 538)),
            Domain::Reviews => Some(SplitCounts::new(700, 300, 100)),
            Domain::External => None,
        }
    }
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Docs rated by both expert and crowd annotators go to `Test`; the rest is
/// shuffled with `seed` and cut into train/dev at `train_fraction`.
pub fn build_splits(
    docs: &[ArgumentDoc],
    annotations: &[AnnotationRecord],
    seed: u64,
    train_fraction: f64,
) -> Result<SplitAssignment, CorpusError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    let known: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let mut groups: BTreeMap<&str, BTreeSet<Group>> = BTreeMap::new();
    for a in annotations {
        if !known.contains(a.doc_id.as_str()) {
            return Err(CorpusError::UnknownDoc(a.doc_id.clone()));
        }
        groups.entry(a.doc_id.as_str()).or_default().insert(a.group);
    }
    let dual = |id: &str| {
        groups
            .get(id)
            .is_some_and(|g| g.contains(&Group::Expert) && g.contains(&Group::Crowd))
    };

    let mut map = BTreeMap::new();
    let mut rest = Vec::new();
    for d in docs {
        if dual(&d.id) {
            map.insert(d.id.clone(), Split::Test);
        } else {
            rest.push(d.id.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n_train = (rest.len() as f64 * train_fraction).round() as usize;
    for (i, id) in rest.into_iter().enumerate() {
        map.insert(id, if i < n_train { Split::Train } else { Split::Dev });
    }
    Ok(SplitAssignment(map))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId { id: String },
    WordCount { id: String, stored: usize, actual: usize },
    Unassigned { id: String },
    UnknownSplitId { id: String },
    TestMissingGroup { id: String, group: Group },
    CountMismatch { split: Split, expected: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate id {id}"),
            Violation::WordCount { id, stored, actual } => {
                write!(f, "{id}: word_count {stored} but text has {actual} words")
            }
            Violation::Unassigned { id } => write!(f, "{id}: not assigned to any split"),
            Violation::UnknownSplitId { id } => write!(f, "{id}: in split file but not in corpus"),
            Violation::TestMissingGroup { id, group } => {
                write!(f, "{id}: test instance lacks {group:?} annotations")
            }
            Violation::CountMismatch { split, expected, actual } => {
                write!(f, "{split}: expected {expected} instances, found {actual}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_corpus(
    docs: &[ArgumentDoc],
    splits: &SplitAssignment,
    expected: Option<SplitCounts>,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            violations.push(Violation::DuplicateId { id: d.id.clone() });
        }
        let actual = count_words(&d.text);
        if actual != d.word_count {
            violations.push(Violation::WordCount {
                id: d.id.clone(),
                stored: d.word_count,
                actual,
            });
        }
        if splits.get(&d.id).is_none() {
            violations.push(Violation::Unassigned { id: d.id.clone() });
        }
    }
    for id in splits.0.keys() {
        if !seen.contains(id.as_str()) {
            violations.push(Violation::UnknownSplitId { id: id.clone() });
        }
    }
    if let Some(exp) = expected {
        let got = splits.counts();
        for (split, e, a) in [
            (Split::Train, exp.train, got.train),
            (Split::Dev, exp.dev, got.dev),
            (Split::Test, exp.test, got.test),
        ] {
            if e != a {
                violations.push(Violation::CountMismatch { split, expected: e, actual: a });
            }
        }
    }
    ValidationReport { violations }
}

/// Every test instance must carry both expert and crowd annotations when
/// group metadata is present.
pub fn validate_test_groups(splits: &SplitAssignment, annotations: &[AnnotationRecord]) -> Vec<Violation> {
    if annotations.iter().all(|a| a.group == Group::Unspecified) {
        return Vec::new();
    }
    let mut groups: BTreeMap<&str, BTreeSet<Group>> = BTreeMap::new();
    for a in annotations {
        groups.entry(a.doc_id.as_str()).or_default().insert(a.group);
    }
    let mut out = Vec::new();
    for id in splits.ids(Split::Test) {
        let g = groups.get(id);
        for group in [Group::Expert, Group::Crowd] {
            if !g.is_some_and(|g| g.contains(&group)) {
                out.push(Violation::TestMissingGroup { id: id.to_string(), group });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Rating;

    fn ann(doc: &str, annotator: &str, group: Group) -> AnnotationRecord {
        AnnotationRecord {
            doc_id: doc.into(),
            annotator_id: annotator.into(),
            group,
            ratings: [(Dimension::Overall, Rating::Score(3))].into_iter().collect(),
        }
    }

    #[test]
    fn parses_minimal_line() {
        let docs = parse_corpus_str(r#"{"id":"a1","text":"I think so"}"#, Domain::Cqa).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].word_count, 3);
        assert_eq!(docs[0].domain, Domain::Cqa);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse_corpus_str("", Domain::Cqa).unwrap().is_empty());
        assert!(parse_corpus_str("\n\n", Domain::Cqa).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let text = "{\"id\":\"a1\",\"text\":\"x\"}\n{\"id\":\"a1\",\"text\":\"y\"}\n";
        let err = parse_corpus_str(text, Domain::Cqa).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
        assert!(err.to_string().contains("\"a1\""));
    }

    #[test]
    fn missing_fields_and_bad_json_report_lines() {
        let err = parse_corpus_str("{\"id\":\"a\",\"text\":\"t\"}\n{\"text\":\"t\"}", Domain::Cqa).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { line: 2, field: "id" }));
        let err = parse_corpus_str("{\"id\":\"a\"}", Domain::Cqa).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { line: 1, field: "text" }));
        let err = parse_corpus_str("{oops", Domain::Cqa).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
        let err = parse_corpus_str(r#"{"id":"a","text":"t","stars":9}"#, Domain::Cqa).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn optional_fields_and_unknown_keys_round_trip() {
        let line = r#"{"id":"r","text":"great phone","title":"T","stance":"pro","stars":4,"domain":"reviews","thread":7}"#;
        let docs = parse_corpus_str(line, Domain::Cqa).unwrap();
        let d = &docs[0];
        assert_eq!(d.domain, Domain::Reviews);
        assert_eq!(d.stars, Some(4));
        assert_eq!(d.extra.get("thread"), Some(&Value::from(7)));
        let again = parse_corpus_str(&serialize_corpus(&docs), Domain::Cqa).unwrap();
        assert_eq!(again, docs);
    }

    #[test]
    fn length_filter_bounds_are_inclusive() {
        let doc = |n: usize| ArgumentDoc::new("x", Domain::Cqa, vec!["w"; n].join(" "));
        assert!(!word_count_filter(&doc(69), MIN_WORDS, MAX_WORDS));
        assert!(word_count_filter(&doc(70), MIN_WORDS, MAX_WORDS));
        assert!(word_count_filter(&doc(200), MIN_WORDS, MAX_WORDS));
        assert!(!word_count_filter(&doc(201), MIN_WORDS, MAX_WORDS));
    }

    #[test]
    fn unicode_whitespace_separates_words() {
        assert_eq!(count_words("a\u{00A0}b\u{2003}c\td\n e"), 5);
    }

    #[test]
    fn dual_annotated_doc_goes_to_test() {
        let docs: Vec<_> = ["d0", "d1", "d2", "d3"]
            .iter()
            .map(|id| ArgumentDoc::new(*id, Domain::Cqa, "text"))
            .collect();
        let anns = vec![
            ann("d0", "e1", Group::Expert),
            ann("d0", "c1", Group::Crowd),
            ann("d1", "c1", Group::Crowd),
            ann("d2", "e1", Group::Expert),
            ann("d3", "c2", Group::Crowd),
        ];
        let s = build_splits(&docs, &anns, 0, DEFAULT_TRAIN_FRACTION).unwrap();
        assert_eq!(s.get("d0"), Some(Split::Test));
        assert_eq!(s.counts(), SplitCounts::new(2, 1, 1));
        assert_eq!(s, build_splits(&docs, &anns, 0, DEFAULT_TRAIN_FRACTION).unwrap());
        assert!(validate_test_groups(&s, &anns).is_empty());
    }

    #[test]
    fn no_dual_docs_means_empty_test() {
        let docs: Vec<_> = (0..5).map(|i| ArgumentDoc::new(format!("d{i}"), Domain::Cqa, "t")).collect();
        let anns: Vec<_> = (0..5).map(|i| ann(&format!("d{i}"), "c", Group::Crowd)).collect();
        let s = build_splits(&docs, &anns, 3, 0.7).unwrap();
        assert_eq!(s.counts().test, 0);
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn unknown_doc_in_annotations_is_an_error() {
        let docs = vec![ArgumentDoc::new("d0", Domain::Cqa, "t")];
        let err = build_splits(&docs, &[ann("zz", "c", Group::Crowd)], 0, 0.7).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownDoc(id) if id == "zz"));
    }

    #[test]
    fn validation_reports_missing_ids_and_counts() {
        let docs: Vec<_> = (0..3).map(|i| ArgumentDoc::new(format!("d{i}"), Domain::Cqa, "t")).collect();
        let mut s = SplitAssignment::default();
        s.0.insert("d0".into(), Split::Train);
        s.0.insert("d1".into(), Split::Dev);
        s.0.insert("d2".into(), Split::Test);
        assert!(validate_corpus(&docs, &s, Some(SplitCounts::new(1, 1, 1))).is_valid());
        s.0.remove("d2");
        let report = validate_corpus(&docs, &s, None);
        assert_eq!(report.violations, vec![Violation::Unassigned { id: "d2".into() }]);
        let report = validate_corpus(&docs, &s, Some(SplitCounts::new(1, 1, 1)));
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn reference_counts_match() {
        let cqa = SplitCounts::reference(Domain::Cqa).unwrap();
        assert_eq!(cqa, SplitCounts::new(1109, 476, 500));
        let mut s = SplitAssignment::default();
        for i in 0..(1109 + 476 + 500) {
            let split = if i < 1109 {
                Split::Train
            } else if i < 1109 + 476 {
                Split::Dev
            } else {
                Split::Test
            };
            s.0.insert(format!("d{i:05}"), split);
        }
        assert_eq!(s.counts(), cqa);
    }

    #[test]
    fn split_tsv_round_trip() {
        let tsv = "a\ttrain\nb\tdev\nc\ttest\n";
        let s = SplitAssignment::from_tsv(tsv).unwrap();
        assert_eq!(s.to_tsv(), tsv);
        assert!(SplitAssignment::from_tsv("a\tholdout").is_err());
    }
}
