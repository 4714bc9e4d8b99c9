//! Pipeline configuration file (TOML).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weaklabel_core::{Domain, LdaConfig, MatchMode, SourceConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Weakly labeled positive posts.
    Positive,
    /// Negative pool matched to the positive corpus.
    Neutral,
    /// Counterexample negatives, matched the same way.
    Counter,
    /// Gold-labeled posts added to training.
    Annotated,
    /// Gold-labeled evaluation dataset; one dataset per source.
    Eval,
    /// Posts that are all true negatives, scored for bias accuracy.
    Probe,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Positive => "positive",
            Role::Neutral => "neutral",
            Role::Counter => "counter",
            Role::Annotated => "annotated",
            Role::Eval => "eval",
            Role::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    /// Raw JSONL export, relative to the config file.
    pub path: PathBuf,
    pub role: Role,
    #[serde(flatten)]
    pub source: SourceConfig,
}

fn default_per_topic() -> usize {
    20
}
fn default_k_select() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaSection {
    #[serde(flatten)]
    pub model: LdaConfig,
    #[serde(default = "default_per_topic")]
    pub per_topic: usize,
    #[serde(default = "default_k_select")]
    pub k_select: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection { model: LdaConfig::default(), per_topic: default_per_topic(), k_select: default_k_select() }
    }
}

fn default_forum_downsample() -> Option<usize> {
    Some(100_000)
}
fn default_dup() -> usize {
    5
}
fn default_min_tokens() -> usize {
    weaklabel_core::corpus::DEFAULT_MIN_TOKENS
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    /// Forum posts kept from the topic-filtered positive corpus; omit to keep all.
    #[serde(default = "default_forum_downsample")]
    pub forum_downsample: Option<usize>,
    #[serde(default = "default_dup")]
    pub dup_times: usize,
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    /// Lowercase first names, one per line, scrubbed from chat posts.
    #[serde(default)]
    pub names_file: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub use_counterexamples: bool,
    /// Per-domain matching mode; unlisted domains match by post count per year.
    #[serde(default)]
    pub match_modes: BTreeMap<Domain, MatchMode>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            forum_downsample: default_forum_downsample(),
            dup_times: default_dup(),
            min_tokens: default_min_tokens(),
            names_file: None,
            use_counterexamples: true,
            match_modes: BTreeMap::new(),
        }
    }
}

fn default_threshold() -> f64 {
    0.5
}
fn default_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Probability below which a probe post counts as correctly negative.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_step")]
    pub pr_step: f64,
    /// Also run leave-one-out generalization across the eval datasets.
    #[serde(default)]
    pub leave_one_out: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { threshold: default_threshold(), pr_step: default_step(), leave_one_out: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub sources: Vec<SourceEntry>,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

/// A validated config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub path: PathBuf,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig { config, path: path.to_path_buf(), base };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn sources(&self, role: Role) -> impl Iterator<Item = &SourceEntry> {
        self.config.sources.iter().filter(move |s| s.role == role)
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.sources(role).next().is_some()
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let bad = |m: String| Err(CliError::Validation(m));
        if !self.has_role(Role::Positive) {
            return bad("config needs at least one source with role = \"positive\"".into());
        }
        if !self.has_role(Role::Neutral) {
            return bad("config needs at least one source with role = \"neutral\"".into());
        }
        let mut ids = BTreeSet::new();
        for s in &c.sources {
            if !ids.insert(&s.source.source_id) {
                return bad(format!("duplicate source_id {:?}", s.source.source_id));
            }
            if s.source.source_id.is_empty() || s.source.source_id.contains(['/', '\\']) || s.source.source_id.starts_with('.') {
                return bad(format!("source_id {:?} must be a plain file name", s.source.source_id));
            }
            s.source.parsed_domain().map_err(|e| CliError::Validation(e.to_string()))?;
            let p = self.resolve(&s.path);
            if !p.is_file() {
                return bad(format!("source {}: input {} does not exist", s.source.source_id, p.display()));
            }
        }
        if let Some(names) = &c.sampling.names_file {
            let p = self.resolve(names);
            if !p.is_file() {
                return bad(format!("names_file {} does not exist", p.display()));
            }
        }
        let mut lda = c.lda.model.clone();
        lda.seed = c.seed;
        lda.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if c.lda.k_select == 0 || c.lda.k_select > c.lda.model.num_topics {
            return bad(format!("k_select {} must be in 1..={}", c.lda.k_select, c.lda.model.num_topics));
        }
        if c.lda.per_topic == 0 {
            return bad("per_topic must be at least 1".into());
        }
        if c.sampling.dup_times == 0 {
            return bad("dup_times must be at least 1".into());
        }
        c.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if !(c.eval.threshold > 0.0 && c.eval.threshold <= 1.0) {
            return bad(format!("eval threshold {} must lie in (0, 1]", c.eval.threshold));
        }
        weaklabel_core::eval::threshold_grid(c.eval.pr_step).map_err(|e| CliError::Validation(e.to_string()))?;
        if c.eval.leave_one_out && self.sources(Role::Eval).count() < 2 {
            return bad("leave_one_out needs at least two eval sources".into());
        }
        Ok(())
    }
}
