//! Command-line driver for the weaklabel pipeline. Every stage is a
//! subcommand that reads upstream artifacts from `--stage-out` and writes its
//! own, recording hashes in `manifest.json`.

pub mod annotate;
pub mod artifact;
pub mod config;
pub mod demo;
pub mod stages;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use weaklabel_core::Domain;

use crate::config::LoadedConfig;
use crate::stages::{Ctx, Labels};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing upstream artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    weaklabel_core::corpus::CorpusError,
    weaklabel_core::topics::TopicsError,
    weaklabel_core::sampling::SamplingError,
    weaklabel_core::classifier::ClassifierError,
    weaklabel_core::eval::EvalError
);

#[derive(Debug, Parser)]
#[command(name = "weaklabel", version, about = "Weakly supervised ideology classifier pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding every stage's artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub stage_out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw JSONL sources into canonical corpora.
    Ingest,
    /// Deduplicate, scrub chat names, drop short positive posts.
    Filter,
    /// Fit LDA on the filtered positive corpus.
    LdaFit,
    /// Sample posts per topic and collect labels from a file or a prompt.
    Annotate {
        /// JSON Lines of {topic_id, post_id, label}; prompts on stdin when absent.
        #[arg(long)]
        labels_file: Option<PathBuf>,
    },
    /// Keep the topics with the highest mean annotation.
    Select,
    /// Topic-filter and downsample positives, then match negative pools.
    Sample,
    /// Label and merge the training set.
    Assemble,
    /// Train the classifier.
    Train,
    /// Score eval datasets and bias probes.
    Eval,
    /// Score raw JSONL records with the trained model.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "forum")]
        domain: Domain,
    },
    /// Every stage from ingest to eval.
    Run {
        #[arg(long)]
        labels_file: Option<PathBuf>,
    },
    /// Write synthetic raw inputs and a config to try the pipeline on.
    Demo {
        #[arg(long)]
        dir: PathBuf,
        /// Also run the pipeline, labeling topics from the generator's ground truth.
        #[arg(long)]
        run: bool,
    },
}

/// Runs one command. The prompt path of `annotate` reads `input` and writes to `output`.
pub fn execute(cli: Cli, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<Vec<String>, CliError> {
    let g = &cli.global;
    if let Command::Demo { dir, run } = &cli.command {
        let config_path = demo::write_demo(dir, g.seed.unwrap_or(demo::DEFAULT_SEED))?;
        let mut log = vec![format!("wrote demo inputs and {}", config_path.display())];
        if *run {
            let cfg = LoadedConfig::load(&config_path, None)?;
            let ctx = Ctx::new(cfg, dir.join("out"));
            log.extend(ctx.run_all(Labels::Oracle(&demo::oracle_label))?);
        }
        return Ok(log);
    }
    let config_path = g.config.as_ref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let ctx = Ctx::new(LoadedConfig::load(config_path, g.seed)?, g.stage_out.clone());
    let labels = |file: &Option<PathBuf>, input: &mut dyn BufRead, output: &mut dyn Write| -> Result<Vec<String>, CliError> {
        match file {
            Some(path) => {
                if !path.is_file() {
                    return Err(CliError::Validation(format!("labels file {} does not exist", path.display())));
                }
                ctx.annotate(Labels::File(path))
            }
            None => ctx.annotate(Labels::Prompt(input, output)),
        }
    };
    match &cli.command {
        Command::Ingest => ctx.ingest(),
        Command::Filter => ctx.filter(),
        Command::LdaFit => ctx.lda_fit(),
        Command::Annotate { labels_file } => labels(labels_file, input, output),
        Command::Select => ctx.select(),
        Command::Sample => ctx.sample(),
        Command::Assemble => ctx.assemble(),
        Command::Train => ctx.train(),
        Command::Eval => ctx.eval(),
        Command::Predict { input: i, output: o, domain } => ctx.predict(i, o, *domain),
        Command::Run { labels_file } => {
            let mut log = Vec::new();
            log.extend(ctx.ingest()?);
            log.extend(ctx.filter()?);
            log.extend(ctx.lda_fit()?);
            log.extend(labels(labels_file, input, output)?);
            log.extend(ctx.select()?);
            log.extend(ctx.sample()?);
            log.extend(ctx.assemble()?);
            log.extend(ctx.train()?);
            log.extend(ctx.eval()?);
            Ok(log)
        }
        Command::Demo { .. } => unreachable!("handled above"),
    }
}
