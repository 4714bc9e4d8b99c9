//! One function per pipeline stage. Stages read upstream artifacts from the
//! stage output directory and write their own through [`StageWriter`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use weaklabel_core::classifier::ModelArtifact;
use weaklabel_core::corpus::{ingest_reader, read_name_list};
use weaklabel_core::eval::{
    evaluate_dataset, evaluate_row, pr_curve_csv, BiasEval, EvalReport, GeneralizationMatrix, LeaveOneOutConfig,
    NamedDataset,
};
use weaklabel_core::sampling::{downsample_domain, MatchedSample, Origin};
use weaklabel_core::seed::derive_seed;
use weaklabel_core::topics::{
    filter_by_topics, group_annotations, read_annotations, sample_for_annotation, write_annotations, AnnotationRecord,
};
use weaklabel_core::{
    assemble, bias_accuracy, build_match_plan, dedup, filter_min_length, fit_lda, ingest_jsonl, leave_one_out,
    match_sample, score_topics, scrub_names, select_topics, train, Corpus, Domain, LabeledDataset, LdaModel,
    LinearModel, MatchPlan, Scorer, SourceConfig, TopicScore,
};

use crate::annotate;
use crate::artifact::{require, StageWriter};
use crate::config::{LoadedConfig, Role};
use crate::CliError;

pub const LDA_MODEL: &str = "lda/model.json";
pub const ANNOTATION_SAMPLE: &str = "lda/annotation_sample.json";
pub const ANNOTATIONS: &str = "lda/annotations.jsonl";
pub const TOPIC_SCORES: &str = "lda/topic_scores.json";
pub const SELECTED_TOPICS: &str = "lda/selected_topics.json";
pub const MATCH_PLAN: &str = "sampled/match_plan.json";
pub const TRAIN_SET: &str = "dataset/train.jsonl";
pub const MODEL: &str = "model/model.json";
pub const REPORT: &str = "eval/report.json";
pub const SUMMARY: &str = "eval/summary.txt";

pub fn corpus_artifact(source_id: &str) -> String {
    format!("corpus/{source_id}.jsonl")
}

/// Pooled roles are filtered into one file per role; eval and probe sources
/// stay one file per source.
pub fn filtered_artifact(role: Role, source_id: &str) -> String {
    match role {
        Role::Eval | Role::Probe => format!("filtered/{}/{source_id}.jsonl", role.as_str()),
        _ => format!("filtered/{}.jsonl", role.as_str()),
    }
}

pub fn sampled_artifact(role: Role) -> String {
    format!("sampled/{}.jsonl", role.as_str())
}

/// Which labeling front end `annotate` uses.
pub enum Labels<'a> {
    File(&'a Path),
    Prompt(&'a mut dyn BufRead, &'a mut dyn Write),
    /// Labels computed from the post itself; used by the demo.
    Oracle(&'a dyn Fn(&weaklabel_core::Post) -> i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedTopics {
    pub k: usize,
    pub topics: BTreeSet<usize>,
}

pub struct Ctx {
    pub cfg: LoadedConfig,
    pub out: PathBuf,
}

fn corpus_bytes(corpus: &Corpus) -> Vec<u8> {
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).expect("writing to memory");
    buf
}

fn dataset_bytes(data: &LabeledDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    data.write_jsonl(&mut buf).expect("writing to memory");
    buf
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

impl Ctx {
    pub fn new(cfg: LoadedConfig, out: PathBuf) -> Ctx {
        Ctx { cfg, out }
    }

    fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.config.seed, stage)
    }

    fn writer(&self, stage: &'static str, seed: u64, params: serde_json::Value) -> StageWriter<'_> {
        StageWriter::new(&self.out, stage, seed, params)
    }

    fn read_corpus(&self, w: &mut StageWriter, rel: &str) -> Result<Corpus, CliError> {
        let path = w.artifact_input(rel)?;
        Ok(Corpus::read_jsonl(&path)?)
    }

    fn raw_key(path: &Path) -> String {
        path.to_string_lossy().replace('\\', "/")
    }

    pub fn ingest(&self) -> Result<Vec<String>, CliError> {
        let mut log = Vec::new();
        for s in &self.cfg.config.sources {
            let mut w = self.writer("ingest", self.cfg.config.seed, json!({ "source": s.source, "role": s.role }));
            let raw = self.cfg.resolve(&s.path);
            w.input(Self::raw_key(&s.path), &raw)?;
            let corpus = ingest_jsonl(&raw, &s.source)?;
            let rel = corpus_artifact(&s.source.source_id);
            w.write(&rel, &corpus_bytes(&corpus))?;
            w.finish()?;
            log.push(format!("{rel}: {} posts, {} words", corpus.len(), corpus.word_count()));
        }
        Ok(log)
    }

    pub fn filter(&self) -> Result<Vec<String>, CliError> {
        let sampling = &self.cfg.config.sampling;
        let names = match &sampling.names_file {
            Some(p) => read_name_list(&self.cfg.resolve(p))?,
            None => Vec::new(),
        };
        let mut log = Vec::new();
        let mut run = |role: Role, ids: Vec<&str>, rel: String| -> Result<(), CliError> {
            let min_tokens = (role == Role::Positive).then_some(sampling.min_tokens);
            let mut w = self.writer("filter", self.cfg.config.seed, json!({ "role": role, "min_tokens": min_tokens, "names": names.len() }));
            if let Some(p) = &sampling.names_file {
                w.input(Self::raw_key(p), &self.cfg.resolve(p))?;
            }
            let mut parts = Vec::new();
            for id in ids {
                parts.push(self.read_corpus(&mut w, &corpus_artifact(id))?);
            }
            let pooled = Corpus::concat(parts)?;
            let before = pooled.len();
            let mut c = scrub_names(dedup(pooled), &names);
            if let Some(min) = min_tokens {
                c = filter_min_length(c, min);
            }
            w.write(&rel, &corpus_bytes(&c))?;
            w.finish()?;
            log.push(format!("{rel}: kept {} of {before} posts", c.len()));
            Ok(())
        };
        for role in [Role::Positive, Role::Neutral, Role::Counter, Role::Annotated] {
            let ids: Vec<&str> = self.cfg.sources(role).map(|s| s.source.source_id.as_str()).collect();
            if !ids.is_empty() {
                run(role, ids, filtered_artifact(role, ""))?;
            }
        }
        for role in [Role::Eval, Role::Probe] {
            for s in self.cfg.sources(role) {
                let id = s.source.source_id.as_str();
                run(role, vec![id], filtered_artifact(role, id))?;
            }
        }
        Ok(log)
    }

    fn lda_config(&self) -> weaklabel_core::LdaConfig {
        weaklabel_core::LdaConfig { seed: self.seed("lda"), ..self.cfg.config.lda.model.clone() }
    }

    pub fn lda_fit(&self) -> Result<Vec<String>, CliError> {
        let config = self.lda_config();
        let mut w = self.writer("lda-fit", config.seed, serde_json::to_value(&config).expect("config serializes"));
        let corpus = self.read_corpus(&mut w, &filtered_artifact(Role::Positive, ""))?;
        let model = fit_lda(&corpus, &config)?;
        w.write_json(LDA_MODEL, &model)?;
        w.finish()?;
        let mut log = vec![format!(
            "{LDA_MODEL}: {} topics over {} documents, vocabulary {}, log joint {:.1}",
            model.num_topics,
            model.doc_ids.len(),
            model.vocab_size(),
            model.log_joint
        )];
        for warning in &model.warnings {
            log.push(format!("warning: {warning}"));
        }
        for k in 0..model.num_topics {
            log.push(format!("topic {k:>2}: {}", model.top_words(k, 10)?.join(" ")));
        }
        Ok(log)
    }

    pub fn annotate(&self, labels: Labels) -> Result<Vec<String>, CliError> {
        let per_topic = self.cfg.config.lda.per_topic;
        let seed = self.seed("annotate");
        let mut w = self.writer("annotate", seed, json!({ "per_topic": per_topic }));
        let model = LdaModel::read_json(&w.artifact_input(LDA_MODEL)?)?;
        let corpus = self.read_corpus(&mut w, &filtered_artifact(Role::Positive, ""))?;
        let sample = sample_for_annotation(&model, &corpus, per_topic, seed);
        w.write_json(ANNOTATION_SAMPLE, &sample)?;
        w.finish()?;

        let mut w = self.writer("annotate", seed, json!({ "per_topic": per_topic, "labels": labels.kind() }));
        w.artifact_input(ANNOTATION_SAMPLE)?;
        w.artifact_input(LDA_MODEL)?;
        let records = match labels {
            Labels::File(path) => {
                w.input(Self::raw_key(path), path)?;
                let records = read_annotations(path)?;
                for r in &records {
                    if r.topic_id >= model.num_topics {
                        return Err(CliError::Validation(format!(
                            "{}: topic {} out of range for a {}-topic model",
                            path.display(),
                            r.topic_id,
                            model.num_topics
                        )));
                    }
                }
                records
            }
            Labels::Prompt(input, output) => {
                let spare = annotate::replacements(&model, &corpus, &sample, seed);
                annotate::prompt(&sample, &spare, &corpus, input, output)?
            }
            Labels::Oracle(f) => {
                let spare = annotate::replacements(&model, &corpus, &sample, seed);
                annotate::collect_labels(&sample, &spare, &corpus, |_, _, p| Ok(annotate::Answer::Label(f(p))))?
            }
        };
        finish_scores(w, &records)
    }

    pub fn select(&self) -> Result<Vec<String>, CliError> {
        let k = self.cfg.config.lda.k_select;
        let mut w = self.writer("select", self.cfg.config.seed, json!({ "k": k }));
        let scores: Vec<TopicScore> = read_json(&w.artifact_input(TOPIC_SCORES)?)?;
        let topics = select_topics(&scores, k)?;
        let log = vec![format!("{SELECTED_TOPICS}: {topics:?}")];
        w.write_json(SELECTED_TOPICS, &SelectedTopics { k, topics })?;
        w.finish()?;
        Ok(log)
    }

    pub fn sample(&self) -> Result<Vec<String>, CliError> {
        let s = &self.cfg.config.sampling;
        let seed = self.seed("sample");
        let params = json!({ "forum_downsample": s.forum_downsample, "match_modes": s.match_modes });
        let mut log = Vec::new();

        let mut w = self.writer("sample", seed, params.clone());
        let corpus = self.read_corpus(&mut w, &filtered_artifact(Role::Positive, ""))?;
        let model = LdaModel::read_json(&w.artifact_input(LDA_MODEL)?)?;
        let selected: SelectedTopics = read_json(&w.artifact_input(SELECTED_TOPICS)?)?;
        let kept = filter_by_topics(corpus, &model, &selected.topics);
        if kept.dropped_unassignable > 0 {
            log.push(format!("warning: {} positive posts had no in-vocabulary tokens", kept.dropped_unassignable));
        }
        let mut positive = kept.corpus;
        if let Some(n) = s.forum_downsample {
            positive = downsample_domain(positive, Domain::Forum, n, derive_seed(seed, "forum"));
        }
        let plan = build_match_plan(&positive, &s.match_modes);
        let rel = sampled_artifact(Role::Positive);
        w.write(&rel, &corpus_bytes(&positive))?;
        w.write_json(MATCH_PLAN, &plan)?;
        w.finish()?;
        log.push(format!("{rel}: {} posts, {} words", positive.len(), positive.word_count()));

        let mut roles = vec![Role::Neutral];
        if s.use_counterexamples && self.cfg.has_role(Role::Counter) {
            roles.push(Role::Counter);
        }
        for role in roles {
            let mut w = self.writer("sample", seed, params.clone());
            w.artifact_input(MATCH_PLAN)?;
            let plan: MatchPlan = read_json(&self.out.join(MATCH_PLAN))?;
            let pool = self.read_corpus(&mut w, &filtered_artifact(role, ""))?;
            let MatchedSample { corpus, report } = match_sample(&pool, &plan, derive_seed(seed, role.as_str()));
            let rel = sampled_artifact(role);
            w.write(&rel, &corpus_bytes(&corpus))?;
            w.write_json(&format!("sampled/{}_shortfall.json", role.as_str()), &report)?;
            w.finish()?;
            log.push(format!(
                "{rel}: {} posts, {} words, shortfall {} posts",
                corpus.len(),
                corpus.word_count(),
                report.total_shortfall_posts()
            ));
        }
        Ok(log)
    }

    pub fn assemble(&self) -> Result<Vec<String>, CliError> {
        let s = &self.cfg.config.sampling;
        let seed = self.seed("assemble");
        let mut w = self.writer("assemble", seed, json!({ "dup_times": s.dup_times, "use_counterexamples": s.use_counterexamples }));
        let positive = self.read_corpus(&mut w, &sampled_artifact(Role::Positive))?;
        let mut negatives = vec![self.read_corpus(&mut w, &sampled_artifact(Role::Neutral))?];
        if s.use_counterexamples && self.cfg.has_role(Role::Counter) {
            negatives.push(self.read_corpus(&mut w, &sampled_artifact(Role::Counter))?);
        }
        let annotated = if self.cfg.has_role(Role::Annotated) {
            Some(self.read_corpus(&mut w, &filtered_artifact(Role::Annotated, ""))?)
        } else {
            None
        };
        let data = assemble(&positive, &negatives, annotated.as_ref(), s.dup_times, seed)?;
        w.write(TRAIN_SET, &dataset_bytes(&data))?;
        w.finish()?;
        Ok(vec![format!("{TRAIN_SET}: {} examples, {} positive, {} negative", data.len(), data.positives(), data.negatives())])
    }

    fn train_config(&self, stage: &str) -> weaklabel_core::TrainConfig {
        weaklabel_core::TrainConfig { seed: self.seed(stage), ..self.cfg.config.train.clone() }
    }

    pub fn train(&self) -> Result<Vec<String>, CliError> {
        let config = self.train_config("train");
        let mut w = self.writer("train", config.seed, serde_json::to_value(&config).expect("config serializes"));
        let data = LabeledDataset::read_jsonl(&w.artifact_input(TRAIN_SET)?)?;
        let model = train(&data, &config)?;
        w.write_json(MODEL, &model.to_artifact())?;
        w.finish()?;
        let aucs: Vec<String> = model.meta.dev_auc.iter().map(|a| format!("{a:.4}")).collect();
        Ok(vec![format!(
            "{MODEL}: best epoch {} of dev AUCs [{}], {} train / {} dev",
            model.meta.best_epoch,
            aucs.join(", "),
            model.meta.train_size,
            model.meta.dev_size
        )])
    }

    pub fn eval(&self) -> Result<Vec<String>, CliError> {
        let e = &self.cfg.config.eval;
        let train_cfg = self.train_config("eval");
        let mut w = self.writer(
            "eval",
            train_cfg.seed,
            json!({ "threshold": e.threshold, "pr_step": e.pr_step, "leave_one_out": e.leave_one_out }),
        );
        let model = LinearModel::read_json(&w.artifact_input(MODEL)?)?;
        let mut report = EvalReport::default();
        let mut named = Vec::new();
        for s in self.cfg.sources(Role::Eval) {
            let id = &s.source.source_id;
            let data = LabeledDataset::from_gold(self.read_corpus(&mut w, &filtered_artifact(Role::Eval, id))?)?;
            report.datasets.push(evaluate_dataset(id, &model, &data, e.pr_step)?);
            named.push(NamedDataset::new(id.clone(), data));
        }
        for s in self.cfg.sources(Role::Probe) {
            let id = &s.source.source_id;
            let probe = self.read_corpus(&mut w, &filtered_artifact(Role::Probe, id))?;
            report.bias.push(BiasEval {
                name: id.clone(),
                size: probe.len(),
                threshold: e.threshold,
                accuracy: bias_accuracy(&model, &probe, e.threshold)?,
            });
        }
        if e.leave_one_out {
            report.generalization = Some(self.generalization(&mut w, &named, &train_cfg)?);
        }
        for d in &report.datasets {
            w.write(&format!("eval/pr_{}.csv", d.name), pr_curve_csv(&d.pr_curve).as_bytes())?;
        }
        let summary = report.summary();
        w.write_json(REPORT, &report)?;
        w.write(SUMMARY, summary.as_bytes())?;
        w.finish()?;
        Ok(summary.lines().map(str::to_string).collect())
    }

    /// Rows: weak data only; annotated datasets only (leave one out); both.
    fn generalization(
        &self,
        w: &mut StageWriter,
        named: &[NamedDataset],
        train_cfg: &weaklabel_core::TrainConfig,
    ) -> Result<GeneralizationMatrix, CliError> {
        let data = LabeledDataset::read_jsonl(&w.artifact_input(TRAIN_SET)?)?;
        let weak = LabeledDataset {
            examples: data.examples.into_iter().filter(|e| e.origin != Origin::Annotated).collect(),
        };
        let loo = LeaveOneOutConfig { train: train_cfg.clone(), dup_times: self.cfg.config.sampling.dup_times };
        let mut matrix = GeneralizationMatrix::default();
        let weak_model = train(&weak, &loo.train)?;
        matrix.push_row(evaluate_row("weak", &weak_model as &dyn Scorer, named)?);
        matrix.push_row(leave_one_out("annotated", named, None, &[], &loo)?);
        matrix.push_row(leave_one_out("weak+annotated", named, Some(&weak), &[], &loo)?);
        Ok(matrix)
    }

    /// Scores raw JSONL records; not recorded in the manifest.
    pub fn predict(&self, input: &Path, output: &Path, domain: Domain) -> Result<Vec<String>, CliError> {
        let model_path = require(&self.out, MODEL)?;
        let artifact: ModelArtifact = read_json(&model_path)?;
        let model = LinearModel::from_artifact(artifact)?;
        let file = std::fs::File::open(input).map_err(|e| CliError::io(input, e))?;
        let config = SourceConfig::new("predict", domain);
        let corpus = ingest_reader(std::io::BufReader::new(file), &input.display().to_string(), &config)?;
        let mut out = Vec::new();
        for p in corpus.posts() {
            let line = json!({ "id": p.id, "probability": model.probability(&p.tokens) });
            out.extend_from_slice(line.to_string().as_bytes());
            out.push(b'\n');
        }
        crate::artifact::write_atomic(output, &out)?;
        Ok(vec![format!("{}: {} predictions", output.display(), corpus.len())])
    }

    pub fn run_all(&self, labels: Labels) -> Result<Vec<String>, CliError> {
        let mut log = Vec::new();
        log.extend(self.ingest()?);
        log.extend(self.filter()?);
        log.extend(self.lda_fit()?);
        log.extend(self.annotate(labels)?);
        log.extend(self.select()?);
        log.extend(self.sample()?);
        log.extend(self.assemble()?);
        log.extend(self.train()?);
        log.extend(self.eval()?);
        Ok(log)
    }
}

impl Labels<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Labels::File(_) => "file",
            Labels::Prompt(..) => "prompt",
            Labels::Oracle(_) => "oracle",
        }
    }
}

fn finish_scores(mut w: StageWriter, records: &[AnnotationRecord]) -> Result<Vec<String>, CliError> {
    let grouped: BTreeMap<usize, Vec<i64>> = group_annotations(records);
    let scores = score_topics(&grouped)?;
    let mut buf = Vec::new();
    write_annotations(&mut buf, records).expect("writing to memory");
    w.write(ANNOTATIONS, &buf)?;
    w.write_json(TOPIC_SCORES, &scores)?;
    w.finish()?;
    let mut log = vec![format!("{TOPIC_SCORES}: {} labels over {} topics", records.len(), scores.len())];
    for s in &scores {
        log.push(format!("topic {:>2}: mean {:.2} over {} labels", s.topic_id, s.mean, s.labels.len()));
    }
    Ok(log)
}
