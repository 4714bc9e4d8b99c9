//! Rank-based ROC AUC, precision/recall on a fixed threshold grid, prevalence,
//! leave-one-out cross-dataset generalization and identity-mention bias accuracy.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{train, ClassifierError, Scorer, TrainConfig};
use crate::corpus::Corpus;
use crate::sampling::{base_id, LabeledDataset, SamplingError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("`{name}` needs both classes (positives {positives}, negatives {negatives})")]
    SingleClass { name: String, positives: usize, negatives: usize },
    #[error("`{0}` contains a non-finite score")]
    NonFiniteScore(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("threshold step {0} must lie in (0, 1]")]
    InvalidStep(f64),
    #[error("leave-one-out needs at least two datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("training for held-out `{held_out}` failed: {source}")]
    Fold {
        held_out: String,
        #[source]
        source: ClassifierError,
    },
    #[error("held-out `{held_out}` shares {count} post ids with its training data")]
    Leak { held_out: String, count: usize },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Scores with binary labels. Scores must be finite; any real range is fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub name: String,
    pub pairs: Vec<(f64, u8)>,
}

impl ScoredSet {
    pub fn new(name: impl Into<String>, pairs: Vec<(f64, u8)>) -> Result<Self, EvalError> {
        let name = name.into();
        if pairs.iter().any(|(s, _)| !s.is_finite()) {
            return Err(EvalError::NonFiniteScore(name));
        }
        Ok(ScoredSet { name, pairs: pairs.into_iter().map(|(s, l)| (s, u8::from(l != 0))).collect() })
    }

    pub fn from_scores(name: impl Into<String>, pairs: impl IntoIterator<Item = (f64, u8)>) -> Result<Self, EvalError> {
        Self::new(name, pairs.into_iter().collect())
    }

    /// Scores every example of `dataset` with `scorer`'s probability.
    pub fn score(name: impl Into<String>, scorer: &dyn Scorer, dataset: &LabeledDataset) -> Result<Self, EvalError> {
        Self::from_scores(name, dataset.examples.iter().map(|e| (scorer.probability(&e.post.tokens), e.label)))
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.1 == 1).count()
    }

    fn require_both_classes(&self) -> Result<(usize, usize), EvalError> {
        let p = self.positives();
        let n = self.pairs.len() - p;
        if p == 0 || n == 0 {
            return Err(EvalError::SingleClass { name: self.name.clone(), positives: p, negatives: n });
        }
        Ok((p, n))
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

/// Mann–Whitney AUC with midranks for ties, in O(n log n).
pub fn roc_auc(set: &ScoredSet) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = set.require_both_classes()?;
    let mut sorted: Vec<(f64, u8)> = set.pairs.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the positive rank sum, in exact integer arithmetic.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1..=j, midrank (i+1+j)/2
        let twice_midrank = (i + 1 + j) as u128;
        let pos_in_group = sorted[i..j].iter().filter(|p| p.1 == 1).count() as u128;
        twice_rank_sum += twice_midrank * pos_in_group;
        i = j;
    }
    let p = n_pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    /// Absent when nothing is predicted positive.
    pub precision: Option<f64>,
    pub recall: f64,
    pub true_positives: usize,
    pub predicted_positives: usize,
}

/// Threshold grid `0, step, 2·step, …` below 1.0.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvalError::InvalidStep(step));
    }
    let inv = 1.0 / step;
    if (inv - inv.round()).abs() < 1e-9 {
        let n = inv.round() as usize;
        return Ok((0..n).map(|i| i as f64 / n as f64).collect());
    }
    Ok((0..).map(|i| i as f64 * step).take_while(|&t| t < 1.0).collect())
}

/// Precision and recall at each grid threshold, predicting positive iff `score ≥ t`.
pub fn pr_curve(set: &ScoredSet, step: f64) -> Result<Vec<PrPoint>, EvalError> {
    let (n_pos, _) = set.require_both_classes()?;
    let grid = threshold_grid(step)?;
    let mut sorted: Vec<(f64, u8)> = set.pairs.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(grid
        .into_iter()
        .map(|t| {
            let predicted = sorted.partition_point(|p| p.0 >= t);
            let tp = sorted[..predicted].iter().filter(|p| p.1 == 1).count();
            PrPoint {
                threshold: t,
                precision: (predicted > 0).then(|| tp as f64 / predicted as f64),
                recall: tp as f64 / n_pos as f64,
                true_positives: tp,
                predicted_positives: predicted,
            }
        })
        .collect())
}

/// Positive fraction of `labels`.
pub fn prevalence(labels: &[u8]) -> Result<f64, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty("prevalence of no labels".into()));
    }
    Ok(labels.iter().filter(|&&l| l != 0).count() as f64 / labels.len() as f64)
}

/// Percentage to one decimal place, e.g. `55.0%`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

/// Fraction of probe posts (all non-hateful) scored below `threshold`.
pub fn bias_accuracy(scorer: &dyn Scorer, probe: &Corpus, threshold: f64) -> Result<f64, EvalError> {
    if probe.is_empty() {
        return Err(EvalError::Empty("bias probe".into()));
    }
    let correct = probe.posts().iter().filter(|p| scorer.probability(&p.tokens) < threshold).count();
    Ok(correct as f64 / probe.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDataset {
    pub name: String,
    pub data: LabeledDataset,
}

impl NamedDataset {
    pub fn new(name: impl Into<String>, data: LabeledDataset) -> Self {
        NamedDataset { name: name.into(), data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub name: String,
    /// Column name → ROC AUC.
    pub cells: BTreeMap<String, f64>,
}

impl MatrixRow {
    pub fn mean(&self) -> Option<f64> {
        (!self.cells.is_empty()).then(|| self.cells.values().sum::<f64>() / self.cells.len() as f64)
    }
}

/// Rows are training configurations, columns held-out datasets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneralizationMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<MatrixRow>,
}

impl GeneralizationMatrix {
    pub fn push_row(&mut self, row: MatrixRow) {
        for c in row.cells.keys() {
            if !self.columns.contains(c) {
                self.columns.push(c.clone());
            }
        }
        self.rows.push(row);
    }

    pub fn row(&self, name: &str) -> Option<&MatrixRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table with one row per configuration and `-` for missing cells.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let cols: Vec<usize> = self.columns.iter().map(|c| c.len().max(8)).collect();
        let mut out = format!("{:<width$}", "Model");
        for (c, w) in self.columns.iter().zip(&cols) {
            let _ = write!(out, " {c:>w$}");
        }
        out.push_str("     Mean\n");
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.name);
            for (c, w) in self.columns.iter().zip(&cols) {
                match r.cells.get(c) {
                    Some(v) => {
                        let _ = write!(out, " {:>w$.1}", v * 100.0);
                    }
                    None => {
                        let _ = write!(out, " {:>w$}", "-");
                    }
                }
            }
            match r.mean() {
                Some(m) => {
                    let _ = writeln!(out, " {:>8.1}", m * 100.0);
                }
                None => out.push_str("        -\n"),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutConfig {
    pub train: TrainConfig,
    /// Repetition of the annotated portion when weak data is present.
    pub dup_times: usize,
}

impl Default for LeaveOneOutConfig {
    fn default() -> Self {
        LeaveOneOutConfig { train: TrainConfig::default(), dup_times: 5 }
    }
}

fn training_set(
    annotated: &[&NamedDataset],
    weak: Option<&LabeledDataset>,
    dup_times: usize,
    seed: u64,
) -> Result<LabeledDataset, EvalError> {
    let mut parts = Vec::new();
    for d in annotated {
        parts.push(if weak.is_some() { d.data.duplicated(dup_times)? } else { d.data.clone() });
    }
    if let Some(w) = weak {
        parts.push(w.clone());
    }
    Ok(LabeledDataset::merge(parts, seed))
}

fn check_disjoint(training: &LabeledDataset, held_out: &NamedDataset) -> Result<(), EvalError> {
    let train_ids: HashSet<&str> = training.examples.iter().map(|e| base_id(&e.post.id)).collect();
    let count = held_out
        .data
        .examples
        .iter()
        .filter(|e| train_ids.contains(base_id(&e.post.id)))
        .count();
    if count > 0 {
        return Err(EvalError::Leak { held_out: held_out.name.clone(), count });
    }
    Ok(())
}

/// Trains once per held-out dataset on all the others (plus `weak`, with the
/// annotated portion duplicated) and records the held-out ROC AUC. Each
/// `unseen` dataset is scored by one extra model trained on every dataset.
pub fn leave_one_out(
    row_name: &str,
    datasets: &[NamedDataset],
    weak: Option<&LabeledDataset>,
    unseen: &[NamedDataset],
    config: &LeaveOneOutConfig,
) -> Result<MatrixRow, EvalError> {
    if datasets.len() < 2 {
        return Err(EvalError::TooFewDatasets(datasets.len()));
    }
    let mut cells = BTreeMap::new();
    for held in datasets {
        let others: Vec<&NamedDataset> = datasets.iter().filter(|d| d.name != held.name).collect();
        let fold_seed = derive_seed(config.train.seed, &format!("loo/{}", held.name));
        let training = training_set(&others, weak, config.dup_times, fold_seed)?;
        check_disjoint(&training, held)?;
        let train_cfg = TrainConfig { seed: fold_seed, ..config.train.clone() };
        let model = train(&training, &train_cfg).map_err(|source| EvalError::Fold { held_out: held.name.clone(), source })?;
        let scored = ScoredSet::score(held.name.clone(), &model, &held.data)?;
        cells.insert(held.name.clone(), roc_auc(&scored)?);
    }
    if !unseen.is_empty() {
        let all: Vec<&NamedDataset> = datasets.iter().collect();
        let seed = derive_seed(config.train.seed, "loo/unseen");
        let training = training_set(&all, weak, config.dup_times, seed)?;
        let train_cfg = TrainConfig { seed, ..config.train.clone() };
        for u in unseen {
            check_disjoint(&training, u)?;
        }
        let model = train(&training, &train_cfg).map_err(|source| EvalError::Fold {
            held_out: unseen.iter().map(|u| u.name.as_str()).collect::<Vec<_>>().join(","),
            source,
        })?;
        for u in unseen {
            cells.insert(u.name.clone(), roc_auc(&ScoredSet::score(u.name.clone(), &model, &u.data)?)?);
        }
    }
    Ok(MatrixRow { name: row_name.to_string(), cells })
}

/// ROC AUC of a fixed scorer on every dataset, as one matrix row.
pub fn evaluate_row(row_name: &str, scorer: &dyn Scorer, datasets: &[NamedDataset]) -> Result<MatrixRow, EvalError> {
    let mut cells = BTreeMap::new();
    for d in datasets {
        cells.insert(d.name.clone(), roc_auc(&ScoredSet::score(d.name.clone(), scorer, &d.data)?)?);
    }
    Ok(MatrixRow { name: row_name.to_string(), cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEval {
    pub name: String,
    pub size: usize,
    pub positives: usize,
    pub prevalence: f64,
    pub roc_auc: f64,
    pub pr_curve: Vec<PrPoint>,
}

pub fn evaluate_dataset(name: &str, scorer: &dyn Scorer, data: &LabeledDataset, step: f64) -> Result<DatasetEval, EvalError> {
    let scored = ScoredSet::score(name, scorer, data)?;
    Ok(DatasetEval {
        name: name.to_string(),
        size: data.len(),
        positives: data.positives(),
        prevalence: prevalence(&scored.labels())?,
        roc_auc: roc_auc(&scored)?,
        pr_curve: pr_curve(&scored, step)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEval {
    pub name: String,
    pub size: usize,
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub datasets: Vec<DatasetEval>,
    pub bias: Vec<BiasEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generalization: Option<GeneralizationMatrix>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        if !self.datasets.is_empty() {
            let width = self.datasets.iter().map(|d| d.name.len()).max().unwrap_or(7).max(7);
            let _ = writeln!(out, "{:<width$} {:>8} {:>9} {:>11} {:>8}", "Dataset", "Posts", "Positive", "Prevalence", "ROC AUC");
            for d in &self.datasets {
                let _ = writeln!(
                    out,
                    "{:<width$} {:>8} {:>9} {:>11} {:>8.1}",
                    d.name,
                    d.size,
                    d.positives,
                    format_percent(d.prevalence),
                    d.roc_auc * 100.0
                );
            }
        }
        for b in &self.bias {
            let _ = writeln!(
                out,
                "\nBias probe `{}`: accuracy {} on {} posts (p < {})",
                b.name,
                format_percent(b.accuracy),
                b.size,
                b.threshold
            );
        }
        if let Some(m) = &self.generalization {
            let _ = write!(out, "\nGeneralization (ROC AUC)\n{}", m.to_table());
        }
        out
    }
}

/// PR curve as CSV with columns `threshold,precision,recall`; absent precision is empty.
pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        let precision = p.precision.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{:.2},{},{}", p.threshold, precision, p.recall);
    }
    out
}
