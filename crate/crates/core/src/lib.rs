//! Weakly supervised detection of ideology-laden text.
//!
//! Modules follow the pipeline order: [`corpus`] ingests and cleans posts,
//! [`topics`] fits LDA and keeps posts from annotated ideological topics,
//! [`sampling`] matches negative corpora to the positive corpus and assembles
//! a labeled dataset, [`classifier`] trains a hashed n-gram logistic model and
//! [`eval`] scores it. [`synth`] holds generators with known ground truth.

pub mod classifier;
pub mod corpus;
pub mod eval;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod tokenize;
pub mod topics;

pub use classifier::{featurize, loss_and_gradient, predict_proba, train, FeatureConfig, LinearModel, Scorer, TrainConfig};
pub use corpus::{dedup, filter_min_length, ingest_jsonl, scrub_names, Corpus, Domain, GoldLabel, Post, SourceConfig, WeakLabel};
pub use eval::{bias_accuracy, leave_one_out, pr_curve, prevalence, roc_auc, GeneralizationMatrix, ScoredSet};
pub use sampling::{assemble, build_match_plan, downsample, duplicate, match_sample, LabeledDataset, MatchMode, MatchPlan};
pub use tokenize::tokenize;
pub use topics::{fit_lda, score_topics, select_topics, LdaConfig, LdaModel, TopicScore};
