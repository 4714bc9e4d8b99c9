//! LDA topic model fitted by collapsed Gibbs sampling, plus the annotation
//! workflow used to keep only posts from ideological topics.
//!
//! The sampler keeps exact integer counts: `topic_word_counts[k][w]`,
//! `doc_topic_counts[d][k]` and `topic_totals[k]`, and every token carries its
//! current topic in `assignments`. Given the same corpus order, seed and
//! hyperparameters the fitted model is bit-identical.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use libm::lgamma;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Post};
use crate::seed::{self, derive_seed, fnv1a_extend, Rng};

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary is empty after pruning (min_count {min_count})")]
    EmptyVocabulary { min_count: usize },
    #[error("invalid LDA config: {0}")]
    InvalidConfig(String),
    #[error("post `{0}` has no in-vocabulary tokens")]
    NoKnownTokens(String),
    #[error("topic {0} has no annotation labels")]
    EmptyLabels(usize),
    #[error("topic {topic}: label {label} not in {{-1, 0, 1}}")]
    InvalidLabel { topic: usize, label: i64 },
    #[error("cannot select {k} topics from {available} scores")]
    TooManySelected { k: usize, available: usize },
    #[error("topic {topic} out of range for a {num_topics}-topic model")]
    UnknownTopic { topic: usize, num_topics: usize },
    #[error("count invariant violated: {0}")]
    Audit(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Common English function words removed before topic modelling only.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having",
    "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it",
    "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
    "your", "yours", "yourself", "yourselves", "'s", "n't", "'re", "'m", "'ll", "'ve", "'d", "it's", "don't",
    "i'm", "that's", "can't", "also", "get", "got", "like", "one", "even", "much", "many", "us",
];

fn default_topics() -> usize {
    30
}
fn default_beta() -> f64 {
    0.01
}
fn default_iterations() -> usize {
    1000
}
fn default_min_count() -> usize {
    5
}
fn default_fold_in() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_chains() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    #[serde(default = "default_topics")]
    pub num_topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / num_topics`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Tokens occurring fewer times than this in the training corpus are dropped.
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_true")]
    pub remove_stopwords: bool,
    #[serde(default)]
    pub extra_stopwords: Vec<String>,
    /// Gibbs sweeps used when folding in an unseen document.
    #[serde(default = "default_fold_in")]
    pub fold_in_sweeps: usize,
    /// Independent chains to run; the final state with the highest log joint is kept.
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_topics: default_topics(),
            alpha: None,
            beta: default_beta(),
            iterations: default_iterations(),
            min_count: default_min_count(),
            remove_stopwords: true,
            extra_stopwords: Vec::new(),
            fold_in_sweeps: default_fold_in(),
            chains: default_chains(),
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn with_topics(num_topics: usize) -> Self {
        LdaConfig { num_topics, ..Default::default() }
    }

    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.num_topics as f64)
    }

    pub fn validate(&self) -> Result<(), TopicsError> {
        let bad = |m: &str| Err(TopicsError::InvalidConfig(m.to_string()));
        if self.num_topics == 0 || self.num_topics > usize::from(u16::MAX) {
            return bad("num_topics must be in 1..=65535");
        }
        let alpha = self.effective_alpha();
        if !(alpha.is_finite() && alpha > 0.0) || !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("alpha and beta must be positive and finite");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.fold_in_sweeps == 0 || self.chains == 0 {
            return bad("fold_in_sweeps and chains must be at least 1");
        }
        Ok(())
    }
}

/// Builds the LDA vocabulary: stopwords removed, tokens with count ≥ `min_count`,
/// sorted lexicographically.
pub fn build_vocabulary(corpus: &Corpus, config: &LdaConfig) -> Vec<String> {
    let stop: BTreeSet<&str> = if config.remove_stopwords {
        DEFAULT_STOPWORDS.iter().copied().chain(config.extra_stopwords.iter().map(String::as_str)).collect()
    } else {
        config.extra_stopwords.iter().map(String::as_str).collect()
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for post in corpus.posts() {
        for t in &post.tokens {
            if !stop.contains(t.as_str()) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count.max(1))
        .map(|(t, _)| t.to_string())
        .collect()
}

/// Collapsed Gibbs sampler state. `fit_lda` drives it for the configured
/// number of sweeps; it is public so callers can inspect the chain.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    num_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u16>>,
    /// Word-major: `word_topic[w * K + k]`.
    word_topic: Vec<u32>,
    doc_topic: Vec<u32>,
    topic_totals: Vec<u64>,
    rng: Rng,
    weights: Vec<f64>,
    sweeps: usize,
}

impl GibbsSampler {
    /// Random initial assignment of every token. `docs` hold word ids `< vocab_size`.
    pub fn new(docs: Vec<Vec<u32>>, vocab_size: usize, num_topics: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let k = num_topics;
        let mut word_topic = vec![0u32; vocab_size * k];
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut topic_totals = vec![0u64; k];
        let mut assignments = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let z: Vec<u16> = doc
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    word_topic[w as usize * k + t] += 1;
                    doc_topic[d * k + t] += 1;
                    topic_totals[t] += 1;
                    t as u16
                })
                .collect();
            assignments.push(z);
        }
        GibbsSampler {
            num_topics,
            vocab_size,
            alpha,
            beta,
            docs,
            assignments,
            word_topic,
            doc_topic,
            topic_totals,
            rng,
            weights: vec![0.0; k],
            sweeps: 0,
        }
    }

    /// One full pass resampling every token's topic from its collapsed conditional.
    pub fn sweep(&mut self) {
        let k = self.num_topics;
        let v_beta = self.vocab_size as f64 * self.beta;
        for d in 0..self.docs.len() {
            let dt = &mut self.doc_topic[d * k..(d + 1) * k];
            for (i, &w) in self.docs[d].iter().enumerate() {
                let old = self.assignments[d][i] as usize;
                let wt = &mut self.word_topic[w as usize * k..(w as usize + 1) * k];
                dt[old] -= 1;
                wt[old] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (f64::from(dt[t]) + self.alpha) * (f64::from(wt[t]) + self.beta)
                        / (self.topic_totals[t] as f64 + v_beta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.weights.iter().position(|&c| c > u).unwrap_or(k - 1);

                dt[new] += 1;
                wt[new] += 1;
                self.topic_totals[new] += 1;
                self.assignments[d][i] = new as u16;
            }
        }
        self.sweeps += 1;
        #[cfg(debug_assertions)]
        self.audit().expect("Gibbs sweep broke the count invariants");
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn assignments(&self) -> &[Vec<u16>] {
        &self.assignments
    }

    pub fn doc_topic_counts(&self, doc: usize) -> &[u32] {
        &self.doc_topic[doc * self.num_topics..(doc + 1) * self.num_topics]
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    /// Collapsed log joint `ln p(w, z)` of the current state.
    pub fn log_joint(&self) -> f64 {
        let k = self.num_topics as f64;
        let v = self.vocab_size as f64;
        let (a, b) = (self.alpha, self.beta);
        let mut ll = 0.0;
        for (d, doc) in self.docs.iter().enumerate() {
            ll += lgamma(k * a) - lgamma(doc.len() as f64 + k * a) - k * lgamma(a);
            ll += self.doc_topic_counts(d).iter().map(|&n| lgamma(f64::from(n) + a)).sum::<f64>();
        }
        ll += k * (lgamma(v * b) - v * lgamma(b));
        ll += self.word_topic.iter().map(|&n| lgamma(f64::from(n) + b)).sum::<f64>();
        ll -= self.topic_totals.iter().map(|&n| lgamma(n as f64 + v * b)).sum::<f64>();
        ll
    }

    /// Recounts everything from the assignments and compares with the running counts.
    pub fn audit(&self) -> Result<(), TopicsError> {
        let k = self.num_topics;
        let mut wt = vec![0u32; self.vocab_size * k];
        let mut dt = vec![0u32; self.docs.len() * k];
        let mut tt = vec![0u64; k];
        for (d, (doc, z)) in self.docs.iter().zip(&self.assignments).enumerate() {
            if doc.len() != z.len() {
                return Err(TopicsError::Audit(format!("doc {d}: assignment length mismatch")));
            }
            for (&w, &t) in doc.iter().zip(z) {
                let t = t as usize;
                if t >= k {
                    return Err(TopicsError::Audit(format!("doc {d}: topic {t} out of range")));
                }
                wt[w as usize * k + t] += 1;
                dt[d * k + t] += 1;
                tt[t] += 1;
            }
        }
        if wt != self.word_topic {
            return Err(TopicsError::Audit("topic-word counts".into()));
        }
        if dt != self.doc_topic {
            return Err(TopicsError::Audit("doc-topic counts".into()));
        }
        if tt != self.topic_totals {
            return Err(TopicsError::Audit("topic totals".into()));
        }
        Ok(())
    }
}

/// Fitted LDA statistics over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LdaModelRepr", into = "LdaModelRepr")]
pub struct LdaModel {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub fold_in_sweeps: usize,
    pub seed: u64,
    pub vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// K × V.
    pub topic_word_counts: Vec<Vec<u32>>,
    /// D × K, rows aligned with `doc_ids`.
    pub doc_topic_counts: Vec<Vec<u32>>,
    pub topic_totals: Vec<u64>,
    pub doc_ids: Vec<String>,
    pub docs: Vec<Vec<u32>>,
    pub assignments: Vec<Vec<u16>>,
    /// Training posts with no in-vocabulary tokens, excluded from the fit.
    pub skipped_docs: Vec<String>,
    pub warnings: Vec<String>,
    /// Collapsed log joint of the final state.
    pub log_joint: f64,
}

#[derive(Serialize, Deserialize)]
struct LdaModelRepr {
    num_topics: usize,
    alpha: f64,
    beta: f64,
    iterations: usize,
    fold_in_sweeps: usize,
    seed: u64,
    vocab: Vec<String>,
    topic_word_counts: Vec<Vec<u32>>,
    doc_topic_counts: Vec<Vec<u32>>,
    topic_totals: Vec<u64>,
    doc_ids: Vec<String>,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u16>>,
    #[serde(default)]
    skipped_docs: Vec<String>,
    #[serde(default)]
    warnings: Vec<String>,
    #[serde(default)]
    log_joint: f64,
}

impl From<LdaModelRepr> for LdaModel {
    fn from(r: LdaModelRepr) -> Self {
        let index = index_of(&r.vocab);
        LdaModel {
            num_topics: r.num_topics,
            alpha: r.alpha,
            beta: r.beta,
            iterations: r.iterations,
            fold_in_sweeps: r.fold_in_sweeps,
            seed: r.seed,
            vocab: r.vocab,
            index,
            topic_word_counts: r.topic_word_counts,
            doc_topic_counts: r.doc_topic_counts,
            topic_totals: r.topic_totals,
            doc_ids: r.doc_ids,
            docs: r.docs,
            assignments: r.assignments,
            skipped_docs: r.skipped_docs,
            warnings: r.warnings,
            log_joint: r.log_joint,
        }
    }
}

impl From<LdaModel> for LdaModelRepr {
    fn from(m: LdaModel) -> Self {
        LdaModelRepr {
            num_topics: m.num_topics,
            alpha: m.alpha,
            beta: m.beta,
            iterations: m.iterations,
            fold_in_sweeps: m.fold_in_sweeps,
            seed: m.seed,
            vocab: m.vocab,
            topic_word_counts: m.topic_word_counts,
            doc_topic_counts: m.doc_topic_counts,
            topic_totals: m.topic_totals,
            doc_ids: m.doc_ids,
            docs: m.docs,
            assignments: m.assignments,
            skipped_docs: m.skipped_docs,
            warnings: m.warnings,
            log_joint: m.log_joint,
        }
    }
}

fn index_of(vocab: &[String]) -> HashMap<String, u32> {
    vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect()
}

fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fits LDA with collapsed Gibbs sampling for `config.iterations` sweeps.
pub fn fit_lda(corpus: &Corpus, config: &LdaConfig) -> Result<LdaModel, TopicsError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TopicsError::EmptyCorpus);
    }
    let vocab = build_vocabulary(corpus, config);
    if vocab.is_empty() {
        return Err(TopicsError::EmptyVocabulary { min_count: config.min_count });
    }
    let index = index_of(&vocab);

    let mut docs = Vec::with_capacity(corpus.len());
    let mut doc_ids = Vec::with_capacity(corpus.len());
    let mut skipped_docs = Vec::new();
    for post in corpus.posts() {
        let ids: Vec<u32> = post.tokens.iter().filter_map(|t| index.get(t).copied()).collect();
        if ids.is_empty() {
            skipped_docs.push(post.id.clone());
        } else {
            docs.push(ids);
            doc_ids.push(post.id.clone());
        }
    }

    let k = config.num_topics;
    let mut warnings = Vec::new();
    if k > docs.len() {
        warnings.push(format!("num_topics {k} exceeds document count {}", docs.len()));
    }
    if !skipped_docs.is_empty() {
        warnings.push(format!("{} documents had no in-vocabulary tokens", skipped_docs.len()));
    }

    let alpha = config.effective_alpha();
    let mut best: Option<(GibbsSampler, f64)> = None;
    for chain in 0..config.chains {
        let chain_seed = if chain == 0 { config.seed } else { derive_seed(config.seed, &format!("chain{chain}")) };
        let mut sampler = GibbsSampler::new(docs.clone(), vocab.len(), k, alpha, config.beta, chain_seed);
        for _ in 0..config.iterations {
            sampler.sweep();
        }
        let ll = sampler.log_joint();
        if best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((sampler, ll));
        }
    }
    let (sampler, log_joint) = best.expect("at least one chain");

    let v = vocab.len();
    let mut topic_word_counts = vec![vec![0u32; v]; k];
    for w in 0..v {
        for (t, row) in topic_word_counts.iter_mut().enumerate() {
            row[w] = sampler.word_topic[w * k + t];
        }
    }
    let doc_topic_counts = sampler.doc_topic.chunks(k).map(<[u32]>::to_vec).collect();

    Ok(LdaModel {
        num_topics: k,
        alpha,
        beta: config.beta,
        iterations: config.iterations,
        fold_in_sweeps: config.fold_in_sweeps,
        seed: config.seed,
        vocab,
        index,
        topic_word_counts,
        doc_topic_counts,
        topic_totals: sampler.topic_totals,
        doc_ids,
        docs: sampler.docs,
        assignments: sampler.assignments,
        skipped_docs,
        warnings,
        log_joint,
    })
}

impl LdaModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Argmax of the final training-state topic counts for training doc `doc`.
    pub fn training_topic(&self, doc: usize) -> usize {
        argmax_lowest(&self.doc_topic_counts[doc])
    }

    /// Checks every count invariant against the stored assignments.
    pub fn audit(&self) -> Result<(), TopicsError> {
        let k = self.num_topics;
        let v = self.vocab.len();
        if self.topic_word_counts.len() != k || self.topic_totals.len() != k {
            return Err(TopicsError::Audit("topic dimension mismatch".into()));
        }
        for (t, row) in self.topic_word_counts.iter().enumerate() {
            let sum: u64 = row.iter().map(|&c| u64::from(c)).sum();
            if row.len() != v || sum != self.topic_totals[t] {
                return Err(TopicsError::Audit(format!("topic {t} row does not sum to its total")));
            }
        }
        let mut twc = vec![vec![0u32; v]; k];
        for (d, (doc, z)) in self.docs.iter().zip(&self.assignments).enumerate() {
            let row = &self.doc_topic_counts[d];
            if row.len() != k || row.iter().map(|&c| c as usize).sum::<usize>() != doc.len() {
                return Err(TopicsError::Audit(format!("doc {d} topic counts do not sum to its length")));
            }
            let mut recount = vec![0u32; k];
            for (&w, &t) in doc.iter().zip(z) {
                recount[t as usize] += 1;
                twc[t as usize][w as usize] += 1;
            }
            if &recount != row {
                return Err(TopicsError::Audit(format!("doc {d} counts disagree with assignments")));
            }
        }
        if twc != self.topic_word_counts {
            return Err(TopicsError::Audit("topic-word counts disagree with assignments".into()));
        }
        Ok(())
    }

    /// Folds a token list into the frozen model and returns its smoothed
    /// topic proportions, averaged over the second half of the fold-in sweeps.
    pub fn infer(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let ids: Vec<u32> = tokens.iter().filter_map(|t| self.word_id(t)).collect();
        if ids.is_empty() {
            return None;
        }
        let k = self.num_topics;
        let v_beta = self.vocab.len() as f64 * self.beta;
        let doc_hash = ids.iter().fold(0xcbf2_9ce4_8422_2325, |h, w| fnv1a_extend(h, &w.to_le_bytes()));
        let mut rng = seed::rng(derive_seed(self.seed ^ doc_hash, "fold-in"));

        let mut z: Vec<usize> = ids.iter().map(|_| rng.gen_range(0..k)).collect();
        let mut counts = vec![0u32; k];
        for &t in &z {
            counts[t] += 1;
        }
        let mut weights = vec![0.0; k];
        let mut accumulated = vec![0.0; k];
        let burn_in = self.fold_in_sweeps / 2;
        for sweep in 0..self.fold_in_sweeps {
            for (i, &w) in ids.iter().enumerate() {
                counts[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (f64::from(counts[t]) + self.alpha)
                        * (f64::from(self.topic_word_counts[t][w as usize]) + self.beta)
                        / (self.topic_totals[t] as f64 + v_beta);
                    total += p;
                    weights[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                let new = weights.iter().position(|&c| c > u).unwrap_or(k - 1);
                counts[new] += 1;
                z[i] = new;
            }
            if sweep >= burn_in {
                for (a, &c) in accumulated.iter_mut().zip(&counts) {
                    *a += f64::from(c);
                }
            }
        }
        let samples = (self.fold_in_sweeps - burn_in) as f64;
        let denom = ids.len() as f64 + k as f64 * self.alpha;
        Some(accumulated.iter().map(|&a| (a / samples + self.alpha) / denom).collect())
    }

    /// Highest-probability topic for a post; ties go to the lowest topic id.
    pub fn assign_topic(&self, post: &Post) -> Result<usize, TopicsError> {
        self.infer(&post.tokens)
            .map(|p| argmax_lowest(&p))
            .ok_or_else(|| TopicsError::NoKnownTokens(post.id.clone()))
    }

    /// `n` highest-count words for `topic`; ties in lexicographic order.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<String>, TopicsError> {
        let row = self.topic_word_counts.get(topic).ok_or(TopicsError::UnknownTopic {
            topic,
            num_topics: self.num_topics,
        })?;
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].cmp(&row[a]).then_with(|| self.vocab[a].cmp(&self.vocab[b])));
        Ok(order.into_iter().take(n).map(|w| self.vocab[w].clone()).collect())
    }

    pub fn read_json(path: &Path) -> Result<LdaModel, TopicsError> {
        let file = File::open(path).map_err(|source| TopicsError::Io { path: path.display().to_string(), source })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| TopicsError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Convenience wrapper over [`LdaModel::top_words`].
pub fn top_words(model: &LdaModel, topic: usize, n: usize) -> Result<Vec<String>, TopicsError> {
    model.top_words(topic, n)
}

pub fn assign_topic(model: &LdaModel, post: &Post) -> Result<usize, TopicsError> {
    model.assign_topic(post)
}

/// Topic of every post, `None` for posts without in-vocabulary tokens.
pub fn assign_all(model: &LdaModel, corpus: &Corpus) -> Vec<Option<usize>> {
    corpus.posts().iter().map(|p| model.assign_topic(p).ok()).collect()
}

/// Per-topic annotation samples: topic id → sampled post ids.
pub type AnnotationSample = BTreeMap<usize, Vec<String>>;

/// Uniform sample without replacement of up to `per_topic` posts per topic.
pub fn sample_for_annotation(model: &LdaModel, corpus: &Corpus, per_topic: usize, seed: u64) -> AnnotationSample {
    let assigned = assign_all(model, corpus);
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); model.num_topics];
    for (i, t) in assigned.iter().enumerate() {
        if let Some(t) = t {
            by_topic[*t].push(i);
        }
    }
    by_topic
        .into_iter()
        .enumerate()
        .map(|(topic, members)| {
            let mut rng = seed::rng(derive_seed(seed, &format!("annotate/{topic}")));
            let take = per_topic.min(members.len());
            let picked = index::sample(&mut rng, members.len(), take)
                .into_iter()
                .map(|j| corpus.posts()[members[j]].id.clone())
                .collect();
            (topic, picked)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic_id: usize,
    pub labels: Vec<i8>,
    pub mean: f64,
}

impl TopicScore {
    fn sum(&self) -> i64 {
        self.labels.iter().map(|&l| i64::from(l)).sum()
    }

    /// Exact comparison of means as rationals.
    fn cmp_mean(&self, other: &TopicScore) -> Ordering {
        let lhs = i128::from(self.sum()) * other.labels.len() as i128;
        let rhs = i128::from(other.sum()) * self.labels.len() as i128;
        lhs.cmp(&rhs)
    }
}

/// Mean annotation per topic, sorted by mean descending then topic id ascending.
pub fn score_topics(annotations: &BTreeMap<usize, Vec<i64>>) -> Result<Vec<TopicScore>, TopicsError> {
    let mut scores = Vec::with_capacity(annotations.len());
    for (&topic, labels) in annotations {
        if labels.is_empty() {
            return Err(TopicsError::EmptyLabels(topic));
        }
        let labels = labels
            .iter()
            .map(|&l| match l {
                -1..=1 => Ok(l as i8),
                _ => Err(TopicsError::InvalidLabel { topic, label: l }),
            })
            .collect::<Result<Vec<i8>, _>>()?;
        let sum: i64 = labels.iter().map(|&l| i64::from(l)).sum();
        let mean = sum as f64 / labels.len() as f64;
        scores.push(TopicScore { topic_id: topic, labels, mean });
    }
    scores.sort_by(|a, b| b.cmp_mean(a).then(a.topic_id.cmp(&b.topic_id)));
    Ok(scores)
}

/// The `k` best-scoring topics; boundary ties go to the lower topic id.
pub fn select_topics(scores: &[TopicScore], k: usize) -> Result<BTreeSet<usize>, TopicsError> {
    if k > scores.len() {
        return Err(TopicsError::TooManySelected { k, available: scores.len() });
    }
    let mut sorted: Vec<&TopicScore> = scores.iter().collect();
    sorted.sort_by(|a, b| b.cmp_mean(a).then(a.topic_id.cmp(&b.topic_id)));
    Ok(sorted.into_iter().take(k).map(|s| s.topic_id).collect())
}

/// Outcome of topic filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicFiltered {
    pub corpus: Corpus,
    /// Posts dropped because none of their tokens are in the model vocabulary.
    pub dropped_unassignable: usize,
}

/// Keeps posts whose assigned topic is in `selected`.
pub fn filter_by_topics(corpus: Corpus, model: &LdaModel, selected: &BTreeSet<usize>) -> TopicFiltered {
    let assigned = assign_all(model, &corpus);
    let dropped_unassignable = assigned.iter().filter(|a| a.is_none()).count();
    let mut it = assigned.into_iter();
    let corpus = corpus.filter(|_| it.next().flatten().is_some_and(|t| selected.contains(&t)));
    TopicFiltered { corpus, dropped_unassignable }
}

/// One line of the annotation exchange file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub topic_id: usize,
    pub post_id: String,
    pub label: i64,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, TopicsError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| TopicsError::Io { path: display.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TopicsError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| TopicsError::Malformed {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(mut out: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups annotation records into per-topic label lists, in file order.
pub fn group_annotations(records: &[AnnotationRecord]) -> BTreeMap<usize, Vec<i64>> {
    let mut map: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for r in records {
        map.entry(r.topic_id).or_default().push(r.label);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use proptest::prelude::*;

    fn toy(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Post::new(format!("d{i}"), *t, "s", Domain::Forum))
                .collect(),
        )
        .unwrap()
    }

    fn cfg(k: usize, iterations: usize) -> LdaConfig {
        LdaConfig {
            num_topics: k,
            iterations,
            min_count: 1,
            remove_stopwords: false,
            ..LdaConfig::default()
        }
    }

    #[test]
    fn single_topic_takes_everything() {
        let m = fit_lda(&toy(&["a a b"]), &cfg(1, 5)).unwrap();
        assert!(m.assignments[0].iter().all(|&t| t == 0));
        assert_eq!(m.topic_totals, [3]);
        assert_eq!(m.top_words(0, 10).unwrap(), ["a", "b"]);
        assert!(m.top_words(0, 0).unwrap().is_empty());
        assert_eq!(m.assign_topic(&m_post("x", "b b a")).unwrap(), 0);
        m.audit().unwrap();
    }

    fn m_post(id: &str, text: &str) -> Post {
        Post::new(id, text, "s", Domain::Forum)
    }

    #[test]
    fn oov_post_is_an_error() {
        let m = fit_lda(&toy(&["a a b"]), &cfg(1, 2)).unwrap();
        assert!(matches!(m.assign_topic(&m_post("z", "zzz qqq")), Err(TopicsError::NoKnownTokens(_))));
        assert!(matches!(m.top_words(3, 1), Err(TopicsError::UnknownTopic { .. })));
    }

    #[test]
    fn fit_errors_and_warnings() {
        assert!(matches!(fit_lda(&Corpus::empty(), &cfg(2, 1)), Err(TopicsError::EmptyCorpus)));
        let c = toy(&["a b", "c d"]);
        let strict = LdaConfig { min_count: 5, ..cfg(2, 1) };
        assert!(matches!(fit_lda(&c, &strict), Err(TopicsError::EmptyVocabulary { .. })));
        assert!(matches!(fit_lda(&c, &cfg(2, 0)), Err(TopicsError::InvalidConfig(_))));
        let m = fit_lda(&c, &cfg(5, 1)).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("exceeds document count")));
    }

    #[test]
    fn vocabulary_prunes_rare_tokens_and_stopwords() {
        let c = toy(&["the cat the cat the cat the cat the cat dog"]);
        let v = build_vocabulary(&c, &LdaConfig::default());
        assert_eq!(v, ["cat"]);
    }

    #[test]
    fn deterministic_fit() {
        let c = toy(&["a b c a b", "d e f d e", "a b d e f", "c c c a a"]);
        let a = fit_lda(&c, &LdaConfig { seed: 9, ..cfg(3, 50) }).unwrap();
        let b = fit_lda(&c, &LdaConfig { seed: 9, ..cfg(3, 50) }).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let back: LdaModel = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.word_id("c"), a.word_id("c"));
    }

    #[test]
    fn score_examples() {
        let ann = BTreeMap::from([(0, vec![1, 1, 0, -1]), (1, vec![-1, -1]), (2, vec![1; 11].into_iter().chain(vec![0; 9]).collect())]);
        let s = score_topics(&ann).unwrap();
        let by_id: BTreeMap<_, _> = s.iter().map(|t| (t.topic_id, t.mean)).collect();
        assert_eq!(by_id[&0], 0.25);
        assert_eq!(by_id[&1], -1.0);
        assert_eq!(by_id[&2], 0.55);
        assert_eq!(s.iter().map(|t| t.topic_id).collect::<Vec<_>>(), [2, 0, 1]);
    }

    #[test]
    fn score_errors() {
        assert!(matches!(score_topics(&BTreeMap::from([(4, vec![])])), Err(TopicsError::EmptyLabels(4))));
        assert!(matches!(
            score_topics(&BTreeMap::from([(1, vec![2])])),
            Err(TopicsError::InvalidLabel { topic: 1, label: 2 })
        ));
    }

    #[test]
    fn select_tie_and_bounds() {
        let s = score_topics(&BTreeMap::from([(3, vec![1]), (1, vec![1]), (2, vec![0])])).unwrap();
        assert_eq!(select_topics(&s, 1).unwrap(), BTreeSet::from([1]));
        assert_eq!(select_topics(&s, 3).unwrap(), BTreeSet::from([1, 2, 3]));
        assert!(matches!(select_topics(&s, 4), Err(TopicsError::TooManySelected { .. })));
    }

    #[test]
    fn filter_all_or_nothing() {
        let c = toy(&["a a b", "b b a", "zzz"]);
        let m = fit_lda(&c, &LdaConfig { min_count: 2, ..cfg(2, 10) }).unwrap();
        let all = filter_by_topics(c.clone(), &m, &BTreeSet::from([0, 1]));
        assert_eq!(all.corpus.len(), 2);
        assert_eq!(all.dropped_unassignable, 1);
        assert!(filter_by_topics(c, &m, &BTreeSet::new()).corpus.is_empty());
    }

    #[test]
    fn annotation_sample_sizes() {
        let texts: Vec<String> = (0..5).map(|i| format!("a b a b {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = toy(&refs);
        let m = fit_lda(&c, &cfg(3, 10)).unwrap();
        let s = sample_for_annotation(&m, &c, 20, 1);
        assert_eq!(s.len(), 3);
        assert_eq!(s.values().map(Vec::len).sum::<usize>(), 5);
        assert_eq!(s, sample_for_annotation(&m, &c, 20, 1));
        let s2 = sample_for_annotation(&m, &c, 1, 1);
        assert!(s2.values().all(|v| v.len() <= 1));
    }

    #[test]
    fn annotations_group_in_order() {
        let recs = vec![
            AnnotationRecord { topic_id: 2, post_id: "a".into(), label: 1 },
            AnnotationRecord { topic_id: 0, post_id: "b".into(), label: -1 },
            AnnotationRecord { topic_id: 2, post_id: "c".into(), label: 0 },
        ];
        let g = group_annotations(&recs);
        assert_eq!(g[&2], [1, 0]);
        assert_eq!(g[&0], [-1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sweeps_preserve_counts(docs in prop::collection::vec(prop::collection::vec(0u32..6, 1..12), 1..8), k in 1usize..5, seed in any::<u64>()) {
            let total: usize = docs.iter().map(Vec::len).sum();
            let mut s = GibbsSampler::new(docs, 6, k, 0.5, 0.1, seed);
            for _ in 0..5 {
                s.sweep();
                prop_assert!(s.audit().is_ok());
                prop_assert_eq!(s.topic_totals().iter().sum::<u64>() as usize, total);
            }
        }

        #[test]
        fn selection_is_nested(labels in prop::collection::vec(prop::collection::vec(-1i64..=1, 1..6), 1..12)) {
            let ann: BTreeMap<usize, Vec<i64>> = labels.into_iter().enumerate().collect();
            let scores = score_topics(&ann).unwrap();
            for s in &scores {
                prop_assert!((-1.0..=1.0).contains(&s.mean));
            }
            for k in 0..scores.len() {
                let a = select_topics(&scores, k).unwrap();
                let b = select_topics(&scores, k + 1).unwrap();
                prop_assert!(a.is_subset(&b));
            }
        }
    }
}
