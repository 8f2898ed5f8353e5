//! Synthetic data with planted structure: argument corpora whose quality is
//! a noisy linear function of a lexical marker rate, annotation pools with
//! known annotator behaviour, and MACE matrices with planted competence.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::aggregation::{AggregatedScores, AnnotationRecord, Group, LabelMatrix, Rating, ScoreTable};
use crate::corpus::{ArgumentDoc, Dimension, Domain, Split, SplitAssignment};
use crate::eval::{CorpusInputs, Reference};
use crate::features::EmbeddingTable;
use crate::util::derived_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub domains: Vec<Domain>,
    pub docs_per_domain: usize,
    /// Inclusive document length range in words.
    pub words: (usize, usize),
    pub embedding_dim: usize,
    pub marker_vocab: usize,
    pub neutral_vocab: usize,
    /// Per-document marker rates are drawn from `U(0, max_marker_rate)`.
    pub max_marker_rate: f64,
    /// Expected Pearson r between the realised marker rate and the mix
    /// score; sets the noise level.
    pub oracle_r: f64,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    /// Prefix for document ids, to keep several corpora disjoint.
    pub id_prefix: String,
    pub seed: u64,
    /// Embeddings come from their own seed so corpora drawn with different
    /// `seed`s share one table.
    pub embedding_seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            domains: vec![Domain::Cqa, Domain::Debates, Domain::Reviews],
            docs_per_domain: 200,
            words: (70, 120),
            embedding_dim: 16,
            marker_vocab: 12,
            neutral_vocab: 150,
            max_marker_rate: 0.5,
            oracle_r: 0.8,
            train_fraction: 0.6,
            dev_fraction: 0.2,
            id_prefix: String::new(),
            seed: 0,
            embedding_seed: 0,
        }
    }
}

impl PlantedConfig {
    /// Quality is `1 + slope · rate`, mapping the rate range onto 1..5.
    fn slope(&self) -> f64 {
        4.0 / self.max_marker_rate
    }

    /// Noise s.d. on the mix score that yields `oracle_r` in expectation.
    pub fn mix_noise_sd(&self) -> f64 {
        let signal_sd = self.slope() * self.max_marker_rate / 12f64.sqrt();
        signal_sd * (1.0 / (self.oracle_r * self.oracle_r) - 1.0).sqrt()
    }
}

fn marker(i: usize) -> String {
    format!("qmark{i}")
}

fn neutral(domain: Domain, i: usize) -> String {
    format!("{}w{i}", domain.as_str())
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub config: PlantedConfig,
    /// Sorted by id.
    pub docs: Vec<ArgumentDoc>,
    /// Realised marker rate per document.
    pub signal: BTreeMap<String, f64>,
    /// Expert, crowd and mix score tables over all documents.
    pub references: BTreeMap<Reference, ScoreTable>,
    pub splits: BTreeMap<Domain, SplitAssignment>,
    pub embeddings: EmbeddingTable,
}

fn gaussian_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Marker tokens cluster around a signal direction `u`; each domain's
/// neutral tokens cluster around a domain centre orthogonal to `u`.
pub fn planted_embeddings(config: &PlantedConfig) -> EmbeddingTable {
    let d = config.embedding_dim;
    let mut rng = derived_rng(config.embedding_seed, 0xe3b);
    let u = unit(gaussian_vec(&mut rng, d));
    let mut table = EmbeddingTable::new(d);
    for i in 0..config.marker_vocab {
        let noise = gaussian_vec(&mut rng, d);
        table.insert(marker(i), u.iter().zip(noise).map(|(a, z)| a + 0.3 * z).collect());
    }
    for domain in Domain::ALL {
        let raw = gaussian_vec(&mut rng, d);
        let along: f64 = raw.iter().zip(&u).map(|(a, b)| a * b).sum();
        let centre = unit(raw.iter().zip(&u).map(|(a, b)| a - along * b).collect());
        for i in 0..config.neutral_vocab {
            let noise = gaussian_vec(&mut rng, d);
            table.insert(neutral(domain, i), centre.iter().zip(noise).map(|(c, z)| c + 0.5 * z).collect());
        }
    }
    table
}

pub fn planted_corpus(config: &PlantedConfig) -> PlantedCorpus {
    let mut rng = derived_rng(config.seed, 0xc0);
    let sd = config.mix_noise_sd();
    // Expert and crowd noise are independent, so their average has `sd`.
    let group_noise = Normal::new(0.0, sd * 2f64.sqrt()).expect("finite sd");
    let mut docs = Vec::new();
    let mut signal = BTreeMap::new();
    let mut references: BTreeMap<Reference, ScoreTable> = BTreeMap::new();
    let mut splits = BTreeMap::new();

    for &domain in &config.domains {
        let mut ids = Vec::with_capacity(config.docs_per_domain);
        for i in 0..config.docs_per_domain {
            let id = format!("{}{}-{i:04}", config.id_prefix, domain.as_str());
            let n_words = rng.gen_range(config.words.0..=config.words.1);
            let rate = rng.gen_range(0.0..config.max_marker_rate);
            let mut hits = 0;
            let words: Vec<String> = (0..n_words)
                .map(|_| {
                    if rng.gen_bool(rate) {
                        hits += 1;
                        marker(rng.gen_range(0..config.marker_vocab))
                    } else {
                        neutral(domain, rng.gen_range(0..config.neutral_vocab))
                    }
                })
                .collect();
            let realised = hits as f64 / n_words as f64;
            let quality = 1.0 + config.slope() * realised;
            for dim in Dimension::ALL {
                let e = quality + group_noise.sample(&mut rng);
                let c = quality + group_noise.sample(&mut rng);
                for (r, v) in [(Reference::Expert, e), (Reference::Crowd, c), (Reference::Mix, (e + c) / 2.0)] {
                    references.entry(r).or_default().entry(id.clone()).or_default().insert(dim, v);
                }
            }
            let mut doc = ArgumentDoc::new(id.clone(), domain, words.join(" "));
            doc.title = Some(format!("synthetic {} {i}", domain.as_str()));
            signal.insert(id.clone(), realised);
            docs.push(doc);
            ids.push(id);
        }
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        let n_train = (n * config.train_fraction).round() as usize;
        let n_dev = (n * config.dev_fraction).round() as usize;
        let assignment = ids
            .into_iter()
            .enumerate()
            .map(|(k, id)| {
                let s = if k < n_train {
                    Split::Train
                } else if k < n_train + n_dev {
                    Split::Dev
                } else {
                    Split::Test
                };
                (id, s)
            })
            .collect();
        splits.insert(domain, SplitAssignment(assignment));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    PlantedCorpus {
        config: config.clone(),
        docs,
        signal,
        references,
        splits,
        embeddings: planted_embeddings(config),
    }
}

impl PlantedCorpus {
    pub fn docs_in(&self, domain: Domain) -> Vec<&ArgumentDoc> {
        self.docs.iter().filter(|d| d.domain == domain).collect()
    }

    /// Integer 1..5 ratings around the expert and crowd scores: three crowd
    /// workers on every document, two experts on test documents.
    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        let mut rng = derived_rng(self.config.seed, 0xa7);
        let jitter = Normal::new(0.0, 0.4).expect("finite sd");
        let mut out = Vec::new();
        for doc in &self.docs {
            let is_test = self.splits[&doc.domain].get(&doc.id) == Some(Split::Test);
            let mut raters = vec![(Group::Crowd, Reference::Crowd, "crowd1"), (Group::Crowd, Reference::Crowd, "crowd2"), (Group::Crowd, Reference::Crowd, "crowd3")];
            if is_test {
                raters.push((Group::Expert, Reference::Expert, "expert1"));
                raters.push((Group::Expert, Reference::Expert, "expert2"));
            }
            for (group, reference, who) in raters {
                let scores = &self.references[&reference][&doc.id];
                let ratings = Dimension::ALL
                    .iter()
                    .map(|d| {
                        let v: f64 = scores[d] + jitter.sample(&mut rng);
                        (*d, Rating::Score(v.round().clamp(1.0, 5.0) as i64))
                    })
                    .collect();
                out.push(AnnotationRecord {
                    doc_id: doc.id.clone(),
                    annotator_id: who.to_string(),
                    group,
                    ratings,
                });
            }
        }
        out
    }

    /// Writes `<domain>.jsonl`, `<domain>.splits.tsv`,
    /// `<domain>.<reference>.tsv` per domain and `embeddings.txt`; returns
    /// the matching experiment inputs.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<CorpusInputs>> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("embeddings.txt"), self.embeddings.to_text())?;
        let mut inputs = Vec::new();
        for &domain in &self.config.domains {
            let name = domain.as_str();
            let docs: Vec<ArgumentDoc> = self.docs_in(domain).into_iter().cloned().collect();
            std::fs::write(dir.join(format!("{name}.jsonl")), crate::corpus::serialize_corpus(&docs))?;
            std::fs::write(dir.join(format!("{name}.splits.tsv")), self.splits[&domain].to_tsv())?;
            let mut references = BTreeMap::new();
            for (&r, table) in &self.references {
                let rows: Vec<AggregatedScores> = docs
                    .iter()
                    .map(|d| AggregatedScores {
                        doc_id: d.id.clone(),
                        source: r.source(),
                        scores: table[&d.id].clone(),
                    })
                    .collect();
                let file = format!("{name}.{}.tsv", r.as_str());
                std::fs::write(dir.join(&file), crate::aggregation::scores_to_tsv(&rows))?;
                references.insert(r, dir.join(file));
            }
            inputs.push(CorpusInputs {
                domain,
                corpus: dir.join(format!("{name}.jsonl")),
                splits: Some(dir.join(format!("{name}.splits.tsv"))),
                references,
                target: None,
                against: None,
            });
        }
        Ok(inputs)
    }
}

/// Binary labels from annotators with known behaviour.
#[derive(Debug, Clone)]
pub struct PlantedLabels {
    pub matrix: LabelMatrix,
    pub truth: Vec<usize>,
    /// Empirical accuracy of each annotator against `truth`.
    pub accuracy: Vec<f64>,
    pub spammer: Vec<bool>,
}

/// `n_copiers` annotators copy the true label with probability `copy_p` and
/// otherwise answer uniformly; `n_spammers` always answer uniformly.
pub fn planted_competence(n_items: usize, n_copiers: usize, copy_p: f64, n_spammers: usize, seed: u64) -> PlantedLabels {
    let mut rng = derived_rng(seed, 0x3ace);
    let n_ann = n_copiers + n_spammers;
    let truth: Vec<usize> = (0..n_items).map(|_| rng.gen_range(0..2)).collect();
    let spammer: Vec<bool> = (0..n_ann).map(|j| j >= n_copiers).collect();
    let mut correct = vec![0usize; n_ann];
    let rows: Vec<Vec<Option<usize>>> = truth
        .iter()
        .map(|&t| {
            (0..n_ann)
                .map(|j| {
                    let label = if !spammer[j] && rng.gen_bool(copy_p) { t } else { rng.gen_range(0..2) };
                    correct[j] += usize::from(label == t);
                    Some(label)
                })
                .collect()
        })
        .collect();
    PlantedLabels {
        matrix: LabelMatrix::from_dense(&rows, 2),
        truth,
        accuracy: correct.iter().map(|&c| c as f64 / n_items as f64).collect(),
        spammer,
    }
}

/// Five-point Overall ratings: `n_structured` annotators rate a latent
/// item quality with small noise, plus one uniformly random annotator
/// (`random`) and one copying the rounded structured-group mean (`copier`).
pub fn qc_pool(n_items: usize, n_structured: usize, seed: u64) -> Vec<AnnotationRecord> {
    let mut rng = derived_rng(seed, 0x9c);
    let noise = Normal::new(0.0, 0.6).expect("finite sd");
    let rec = |item: usize, who: String, v: i64| AnnotationRecord {
        doc_id: format!("item{item:04}"),
        annotator_id: who,
        group: Group::Crowd,
        ratings: [(Dimension::Overall, Rating::Score(v))].into_iter().collect(),
    };
    let mut out = Vec::new();
    for item in 0..n_items {
        let quality: f64 = rng.gen_range(1..=5) as f64;
        let ratings: Vec<i64> = (0..n_structured)
            .map(|_| (quality + noise.sample(&mut rng)).round().clamp(1.0, 5.0) as i64)
            .collect();
        let mean = ratings.iter().sum::<i64>() as f64 / n_structured as f64;
        for (j, &v) in ratings.iter().enumerate() {
            out.push(rec(item, format!("s{j}"), v));
        }
        out.push(rec(item, "random".into(), rng.gen_range(1..=5)));
        out.push(rec(item, "copier".into(), mean.round() as i64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{validate_corpus, word_count_filter, MAX_WORDS, MIN_WORDS};
    use crate::eval::pearson;

    #[test]
    fn planted_corpus_shape_and_oracle() {
        let cfg = PlantedConfig::default();
        let c = planted_corpus(&cfg);
        assert_eq!(c.docs.len(), 600);
        assert!(c.docs.iter().all(|d| word_count_filter(d, MIN_WORDS, MAX_WORDS)));
        for d in &cfg.domains {
            let counts = c.splits[d].counts();
            assert_eq!((counts.train, counts.dev, counts.test), (120, 40, 40));
            let docs: Vec<ArgumentDoc> = c.docs_in(*d).into_iter().cloned().collect();
            assert!(validate_corpus(&docs, &c.splits[d], None).is_valid());
        }
        let (f, y): (Vec<f64>, Vec<f64>) = c
            .docs
            .iter()
            .map(|d| (c.signal[&d.id], c.references[&Reference::Mix][&d.id][&Dimension::Overall]))
            .unzip();
        let r = pearson(&f, &y).unwrap().unwrap();
        assert!((0.72..0.88).contains(&r), "{r}");
    }

    #[test]
    fn corpora_share_embeddings_across_seeds() {
        let a = planted_corpus(&PlantedConfig { seed: 1, ..Default::default() });
        let b = planted_corpus(&PlantedConfig { seed: 2, ..Default::default() });
        assert_eq!(a.embeddings, b.embeddings);
        assert_ne!(a.docs[0].text, b.docs[0].text);
    }

    #[test]
    fn planted_competence_accuracies() {
        let p = planted_competence(500, 8, 0.9, 2, 3);
        assert_eq!(p.matrix.annotators.len(), 10);
        for (acc, spam) in p.accuracy.iter().zip(&p.spammer) {
            if *spam {
                assert!((acc - 0.5).abs() < 0.1);
            } else {
                assert!((acc - 0.95).abs() < 0.05);
            }
        }
    }

    #[test]
    fn qc_pool_layout() {
        let recs = qc_pool(50, 4, 0);
        assert_eq!(recs.len(), 50 * 6);
        assert!(recs.iter().any(|r| r.annotator_id == "copier"));
    }

    #[test]
    fn annotations_cover_test_docs_with_both_groups() {
        let c = planted_corpus(&PlantedConfig { docs_per_domain: 20, ..Default::default() });
        let recs = c.annotations();
        let test_docs = c.splits[&Domain::Cqa].ids(Split::Test);
        for id in test_docs {
            assert!(recs.iter().any(|r| r.doc_id == id && r.group == Group::Expert));
        }
    }
}
