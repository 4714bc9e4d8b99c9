//! Hashed n-gram features and a logistic-regression classifier trained by
//! mini-batch SGD, keeping the epoch with the best development-set ROC AUC.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Post;
use crate::eval::{roc_auc, ScoredSet};
use crate::sampling::{base_id, LabeledDataset};
use crate::seed::{self, derive_seed, fnv1a_extend};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training data must contain both classes (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("development split of {dev} examples lacks one class; use more data or a larger dev fraction")]
    DevSingleClass { dev: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dev score {score} for epoch {epoch} is outside [0, 1]")]
    InvalidDevScore { epoch: usize, score: f64 },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model artifact: {0}")]
    Artifact(String),
}

fn default_order() -> usize {
    2
}
fn default_bits() -> u32 {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default = "default_order")]
    pub max_order: usize,
    /// Feature space has `2^bits` dimensions.
    #[serde(default = "default_bits")]
    pub bits: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { max_order: default_order(), bits: default_bits() }
    }
}

impl FeatureConfig {
    pub fn dimension(&self) -> usize {
        1usize << self.bits
    }
}

/// Sparse n-gram counts, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    pub entries: Vec<(u32, u32)>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, c)| weights[i as usize] * f64::from(c)).sum()
    }
}

const NGRAM_SEPARATOR: u8 = 0x1f;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Counts every n-gram of order 1..=max_order, hashed with FNV-1a into `2^bits` buckets.
/// Tokens inside an n-gram are joined by the 0x1F unit separator before hashing.
pub fn featurize(tokens: &[String], config: &FeatureConfig) -> FeatureVector {
    let mask = (1u64 << config.bits) - 1;
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for start in 0..tokens.len() {
        let mut h = FNV_OFFSET;
        for (n, tok) in tokens[start..].iter().take(config.max_order).enumerate() {
            if n > 0 {
                h = fnv1a_extend(h, &[NGRAM_SEPARATOR]);
            }
            h = fnv1a_extend(h, tok.as_bytes());
            *counts.entry((h & mask) as u32).or_default() += 1;
        }
    }
    FeatureVector { entries: counts.into_iter().collect() }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of logit `z` against label `y`: softplus(z) - y z.
fn log_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Anything that maps a token list to a positive-class logit.
pub trait Scorer {
    fn logit(&self, tokens: &[String]) -> f64;

    /// Probability of the positive class, kept strictly inside (0, 1).
    fn probability(&self, tokens: &[String]) -> f64 {
        sigmoid(self.logit(tokens)).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    }
}

pub(crate) const PROBABILITY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub dev_auc: Vec<f64>,
    pub seed: u64,
    pub train_size: usize,
    pub dev_size: usize,
    /// Dev examples whose original post (before duplication) also appears in training.
    pub duplicate_leak: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub features: FeatureConfig,
    pub meta: TrainingMeta,
}

impl LinearModel {
    pub fn zeros(features: FeatureConfig) -> Self {
        LinearModel { weights: vec![0.0; features.dimension()], bias: 0.0, features, meta: TrainingMeta::default() }
    }

    pub fn logit_features(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, post: &Post) -> f64 {
        self.probability(&post.tokens)
    }

    pub fn to_artifact(&self) -> ModelArtifact {
        ModelArtifact {
            format_version: MODEL_FORMAT_VERSION,
            features: self.features,
            bias: self.bias,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, &w)| (i as u32, w))
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_artifact(a: ModelArtifact) -> Result<Self, ClassifierError> {
        if a.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::UnsupportedVersion(a.format_version));
        }
        if a.features.bits == 0 || a.features.bits > MAX_BITS {
            return Err(ClassifierError::Artifact(format!("feature bits {} out of range", a.features.bits)));
        }
        let mut weights = vec![0.0; a.features.dimension()];
        for (i, w) in a.weights {
            let slot = weights
                .get_mut(i as usize)
                .ok_or_else(|| ClassifierError::Artifact(format!("weight index {i} out of range")))?;
            if !w.is_finite() {
                return Err(ClassifierError::Artifact(format!("non-finite weight at {i}")));
            }
            *slot = w;
        }
        Ok(LinearModel { weights, bias: a.bias, features: a.features, meta: a.meta })
    }

    pub fn read_json(path: &Path) -> Result<Self, ClassifierError> {
        let file = File::open(path).map_err(|e| ClassifierError::Artifact(format!("{}: {e}", path.display())))?;
        let artifact: ModelArtifact = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| ClassifierError::Artifact(format!("{}: {e}", path.display())))?;
        Self::from_artifact(artifact)
    }
}

impl Scorer for LinearModel {
    fn logit(&self, tokens: &[String]) -> f64 {
        self.logit_features(&featurize(tokens, &self.features))
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_BITS: u32 = 30;

/// Serialized model: nonzero weights only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub features: FeatureConfig,
    pub bias: f64,
    pub weights: Vec<(u32, f64)>,
    pub meta: TrainingMeta,
}

pub fn predict_proba(model: &LinearModel, post: &Post) -> f64 {
    model.predict_proba(post)
}

/// Objective value and gradient for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Data term of the weight gradient, sparse and sorted by index.
    pub data: Vec<(u32, f64)>,
    pub bias: f64,
    pub l2: f64,
}

impl LossGradient {
    /// Full gradient component for weight `i` (data term plus `l2 * w_i`).
    pub fn weight(&self, model: &LinearModel, i: u32) -> f64 {
        let data = self.data.binary_search_by_key(&i, |&(j, _)| j).map_or(0.0, |k| self.data[k].1);
        data + self.l2 * model.weights[i as usize]
    }
}

/// Mean binary cross-entropy over `batch` plus `(l2/2)·‖w‖²`, with its gradient.
/// The bias is not regularized.
pub fn loss_and_gradient(model: &LinearModel, batch: &[(&FeatureVector, u8)], l2: f64) -> LossGradient {
    assert!(!batch.is_empty(), "loss_and_gradient needs a non-empty batch");
    let n = batch.len() as f64;
    let mut grad: BTreeMap<u32, f64> = BTreeMap::new();
    let mut loss = 0.0;
    let mut bias = 0.0;
    for &(x, y) in batch {
        let y = f64::from(y);
        let z = model.logit_features(x);
        loss += log_loss(z, y);
        let r = (sigmoid(z) - y) / n;
        bias += r;
        for &(i, c) in &x.entries {
            *grad.entry(i).or_default() += r * f64::from(c);
        }
    }
    let sq: f64 = model.weights.iter().map(|w| w * w).sum();
    LossGradient { loss: loss / n + 0.5 * l2 * sq, data: grad.into_iter().collect(), bias, l2 }
}

fn default_lr() -> f64 {
    0.1
}
fn default_batch() -> usize {
    16
}
fn default_epochs() -> usize {
    5
}
fn default_dev() -> f64 {
    0.10
}
fn default_l2() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_dev")]
    pub dev_fraction: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            dev_fraction: default_dev(),
            l2: default_l2(),
            seed: 0,
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::InvalidConfig(m));
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad(format!("dev_fraction {} must lie in (0, 1)", self.dev_fraction));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0 && self.learning_rate * self.l2 < 1.0) {
            return bad(format!("l2 {} must be non-negative with learning_rate * l2 < 1", self.l2));
        }
        if self.features.bits == 0 || self.features.bits > MAX_BITS || self.features.max_order == 0 {
            return bad("feature bits must be in 1..=30 and max_order at least 1".into());
        }
        Ok(())
    }

    /// Size of the development split for `n` examples.
    pub fn dev_size(&self, n: usize) -> usize {
        (self.dev_fraction * n as f64).round() as usize
    }
}

/// Observation and injection points for a training run.
pub trait TrainHooks {
    /// Dataset indices of the train and dev splits.
    fn on_split(&mut self, _train: &[usize], _dev: &[usize]) {}
    /// `epoch` is 1-based; `batch` is 0-based within the epoch.
    fn on_batch(&mut self, _epoch: usize, _batch: usize, _size: usize, _loss: f64) {}
    /// Dev score used for epoch selection; defaults to the computed ROC AUC.
    fn dev_score(&mut self, _epoch: usize, _model: &LinearModel, dev_auc: f64) -> f64 {
        dev_auc
    }
    fn on_epoch(&mut self, _epoch: usize, _model: &LinearModel, _dev_score: f64) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// w = scale · v, so L2 decay is O(1) per step.
struct SgdState {
    v: Vec<f64>,
    scale: f64,
    sq_norm_v: f64,
    bias: f64,
}

impl SgdState {
    fn new(dim: usize) -> Self {
        SgdState { v: vec![0.0; dim], scale: 1.0, sq_norm_v: 0.0, bias: 0.0 }
    }

    fn logit(&self, x: &FeatureVector) -> f64 {
        self.scale * x.dot(&self.v) + self.bias
    }

    fn sq_norm(&self) -> f64 {
        self.scale * self.scale * self.sq_norm_v
    }

    fn step(&mut self, grad: &BTreeMap<u32, f64>, bias_grad: f64, lr: f64, l2: f64) {
        self.scale *= 1.0 - lr * l2;
        for (&i, &g) in grad {
            let slot = &mut self.v[i as usize];
            let old = *slot;
            *slot -= lr * g / self.scale;
            self.sq_norm_v += *slot * *slot - old * old;
        }
        self.bias -= lr * bias_grad;
        if self.scale < 1e-9 {
            for w in self.v.iter_mut() {
                *w *= self.scale;
            }
            self.scale = 1.0;
            self.sq_norm_v = self.v.iter().map(|w| w * w).sum();
        }
    }

    fn snapshot(&self, features: FeatureConfig, meta: TrainingMeta) -> LinearModel {
        LinearModel {
            weights: self.v.iter().map(|w| w * self.scale).collect(),
            bias: self.bias,
            features,
            meta,
        }
    }
}

pub fn train(dataset: &LabeledDataset, config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    train_with_hooks(dataset, config, &mut NoHooks)
}

/// Seeded shuffle, dev split off the front, up to `max_epochs` of SGD; returns
/// the snapshot of the epoch with the highest dev score (earliest on ties).
pub fn train_with_hooks(
    dataset: &LabeledDataset,
    config: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<LinearModel, ClassifierError> {
    config.validate()?;
    let (positives, negatives) = (dataset.positives(), dataset.negatives());
    if positives == 0 || negatives == 0 {
        return Err(ClassifierError::SingleClass { positives, negatives });
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(derive_seed(config.seed, "split")));
    let n_dev = config.dev_size(n);
    let (dev_idx, train_idx) = order.split_at(n_dev);
    if train_idx.is_empty() {
        return Err(ClassifierError::InvalidConfig(format!("no training examples left after a {n_dev}-example dev split")));
    }
    let dev_labels: Vec<u8> = dev_idx.iter().map(|&i| dataset.examples[i].label).collect();
    if !dev_labels.contains(&0) || !dev_labels.contains(&1) {
        return Err(ClassifierError::DevSingleClass { dev: n_dev });
    }
    hooks.on_split(train_idx, dev_idx);

    let train_bases: HashSet<&str> = train_idx.iter().map(|&i| base_id(&dataset.examples[i].post.id)).collect();
    let duplicate_leak = dev_idx
        .iter()
        .filter(|&&i| train_bases.contains(base_id(&dataset.examples[i].post.id)))
        .count();

    let features: Vec<FeatureVector> = dataset
        .examples
        .iter()
        .map(|e| featurize(&e.post.tokens, &config.features))
        .collect();

    let mut meta = TrainingMeta {
        best_epoch: 0,
        dev_auc: Vec::new(),
        seed: config.seed,
        train_size: train_idx.len(),
        dev_size: n_dev,
        duplicate_leak,
    };
    let mut state = SgdState::new(config.features.dimension());
    let mut epoch_rng = seed::rng(derive_seed(config.seed, "epochs"));
    let mut train_order = train_idx.to_vec();
    let mut best: Option<(f64, LinearModel)> = None;

    for epoch in 1..=config.max_epochs {
        train_order.shuffle(&mut epoch_rng);
        for (b, chunk) in train_order.chunks(config.batch_size).enumerate() {
            let m = chunk.len() as f64;
            let mut grad: BTreeMap<u32, f64> = BTreeMap::new();
            let mut bias_grad = 0.0;
            let mut loss = 0.0;
            for &i in chunk {
                let x = &features[i];
                let y = f64::from(dataset.examples[i].label);
                let z = state.logit(x);
                loss += log_loss(z, y);
                let r = (sigmoid(z) - y) / m;
                bias_grad += r;
                for &(j, c) in &x.entries {
                    *grad.entry(j).or_default() += r * f64::from(c);
                }
            }
            let loss = loss / m + 0.5 * config.l2 * state.sq_norm();
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch: b });
            }
            hooks.on_batch(epoch, b, chunk.len(), loss);
            state.step(&grad, bias_grad, config.learning_rate, config.l2);
        }

        let snapshot = state.snapshot(config.features, meta.clone());
        let scored = ScoredSet::from_scores(
            "dev",
            dev_idx.iter().map(|&i| (snapshot.logit_features(&features[i]), dataset.examples[i].label)),
        )
        .map_err(|_| ClassifierError::NonFiniteLoss { epoch, batch: usize::MAX })?;
        let auc = roc_auc(&scored).map_err(|_| ClassifierError::DevSingleClass { dev: n_dev })?;
        let score = hooks.dev_score(epoch, &snapshot, auc);
        if !(0.0..=1.0).contains(&score) {
            return Err(ClassifierError::InvalidDevScore { epoch, score });
        }
        meta.dev_auc.push(score);
        hooks.on_epoch(epoch, &snapshot, score);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, snapshot));
            meta.best_epoch = epoch;
        }
    }

    let (_, mut model) = best.expect("max_epochs >= 1");
    model.meta = meta;
    Ok(model)
}
