//! Training-set construction: downsampling, distribution matching of negative
//! corpora against the positive corpus, duplication of scarce annotated data,
//! and assembly into a binary-labeled dataset.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Domain, GoldLabel, Post, WeakLabel};
use crate::seed::{self, derive_seed};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("post id `{0}` appears in more than one input")]
    OverlappingIds(String),
    #[error("annotated post `{0}` has no gold label")]
    MissingGoldLabel(String),
    #[error("duplication factor must be at least 1")]
    ZeroDuplication,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Matching key for distribution matching. Absent years form their own stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub domain: Domain,
    pub year: Option<i32>,
}

impl Stratum {
    pub fn of(post: &Post) -> Stratum {
        Stratum { domain: post.domain, year: post.year }
    }

    fn key(&self) -> String {
        match self.year {
            Some(y) => format!("{}/{y}", self.domain),
            None => format!("{}/none", self.domain),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    ByCount,
    ByWords,
}

/// One matching target. Word targets cover a whole domain across years,
/// since they exist for sources without usable time overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PlanTarget {
    ByCount { domain: Domain, year: Option<i32>, posts: usize },
    ByWords { domain: Domain, words: usize },
}

impl PlanTarget {
    fn key(&self) -> String {
        match self {
            PlanTarget::ByCount { domain, year, .. } => Stratum { domain: *domain, year: *year }.key(),
            PlanTarget::ByWords { domain, .. } => format!("{domain}/words"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchPlan {
    pub targets: Vec<PlanTarget>,
}

/// Per-stratum post counts of `reference`, or domain word totals for domains
/// overridden to [`MatchMode::ByWords`].
pub fn build_match_plan(reference: &Corpus, overrides: &BTreeMap<Domain, MatchMode>) -> MatchPlan {
    let mut counts: BTreeMap<Stratum, usize> = BTreeMap::new();
    let mut words: BTreeMap<Domain, usize> = BTreeMap::new();
    for p in reference.posts() {
        match overrides.get(&p.domain).copied().unwrap_or(MatchMode::ByCount) {
            MatchMode::ByCount => *counts.entry(Stratum::of(p)).or_default() += 1,
            MatchMode::ByWords => *words.entry(p.domain).or_default() += p.word_count(),
        }
    }
    let mut targets: Vec<PlanTarget> = counts
        .into_iter()
        .map(|(s, posts)| PlanTarget::ByCount { domain: s.domain, year: s.year, posts })
        .collect();
    targets.extend(words.into_iter().map(|(domain, words)| PlanTarget::ByWords { domain, words }));
    targets.sort_by_key(|t| match t {
        PlanTarget::ByCount { domain, year, .. } => (*domain, 0, *year),
        PlanTarget::ByWords { domain, .. } => (*domain, 1, None),
    });
    MatchPlan { targets }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumOutcome {
    #[serde(flatten)]
    pub target: PlanTarget,
    pub available_posts: usize,
    pub selected_posts: usize,
    pub selected_words: usize,
    /// Posts (ByCount) or words (ByWords) short of the target.
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShortfallReport {
    pub strata: Vec<StratumOutcome>,
}

impl ShortfallReport {
    pub fn total_shortfall_posts(&self) -> usize {
        self.strata
            .iter()
            .filter(|s| matches!(s.target, PlanTarget::ByCount { .. }))
            .map(|s| s.shortfall)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSample {
    pub corpus: Corpus,
    pub report: ShortfallReport,
}

/// Samples `pool` to follow `plan`. ByCount strata are output in pool order;
/// ByWords strata in draw order. Each stratum draws from its own derived seed.
pub fn match_sample(pool: &Corpus, plan: &MatchPlan, seed: u64) -> MatchedSample {
    let mut selected: Vec<Post> = Vec::new();
    let mut report = ShortfallReport::default();
    for target in &plan.targets {
        let mut rng = seed::rng(derive_seed(seed, &target.key()));
        match *target {
            PlanTarget::ByCount { domain, year, posts } => {
                let members: Vec<&Post> = pool
                    .posts()
                    .iter()
                    .filter(|p| p.domain == domain && p.year == year)
                    .collect();
                let take = posts.min(members.len());
                let mut picked = index::sample(&mut rng, members.len(), take).into_vec();
                picked.sort_unstable();
                let chosen: Vec<Post> = picked.into_iter().map(|i| members[i].clone()).collect();
                let words = chosen.iter().map(Post::word_count).sum();
                report.strata.push(StratumOutcome {
                    target: target.clone(),
                    available_posts: members.len(),
                    selected_posts: chosen.len(),
                    selected_words: words,
                    shortfall: posts - take,
                });
                selected.extend(chosen);
            }
            PlanTarget::ByWords { domain, words } => {
                let mut members: Vec<&Post> = pool.posts().iter().filter(|p| p.domain == domain).collect();
                let available = members.len();
                members.shuffle(&mut rng);
                let mut total = 0;
                let mut chosen = Vec::new();
                for p in members {
                    if total >= words {
                        break;
                    }
                    total += p.word_count();
                    chosen.push(p.clone());
                }
                report.strata.push(StratumOutcome {
                    target: target.clone(),
                    available_posts: available,
                    selected_posts: chosen.len(),
                    selected_words: total,
                    shortfall: words.saturating_sub(total),
                });
                selected.extend(chosen);
            }
        }
    }
    MatchedSample { corpus: Corpus::from_unique(selected), report }
}

/// Uniform sample without replacement of `min(n, |corpus|)` posts, in input order.
pub fn downsample(corpus: Corpus, n: usize, seed: u64) -> Corpus {
    if n >= corpus.len() {
        return corpus;
    }
    let mut rng = seed::rng(seed);
    let mut keep = vec![false; corpus.len()];
    for i in index::sample(&mut rng, corpus.len(), n) {
        keep[i] = true;
    }
    let mut it = keep.into_iter();
    corpus.filter(|_| it.next().unwrap_or(false))
}

/// Downsamples only the posts of `domain`, leaving other domains untouched.
pub fn downsample_domain(corpus: Corpus, domain: Domain, n: usize, seed: u64) -> Corpus {
    let in_domain: Vec<usize> = corpus
        .posts()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.domain == domain)
        .map(|(i, _)| i)
        .collect();
    if n >= in_domain.len() {
        return corpus;
    }
    let mut rng = seed::rng(seed);
    let mut keep: Vec<bool> = corpus.posts().iter().map(|p| p.domain != domain).collect();
    for j in index::sample(&mut rng, in_domain.len(), n) {
        keep[in_domain[j]] = true;
    }
    let mut it = keep.into_iter();
    corpus.filter(|_| it.next().unwrap_or(false))
}

/// Separator between a post id and its copy number.
pub const DUPLICATE_SEPARATOR: &str = "#dup";

/// Strips a duplication suffix, giving the id of the original post.
pub fn base_id(id: &str) -> &str {
    id.rfind(DUPLICATE_SEPARATOR).map_or(id, |i| &id[..i])
}

/// Repeats every post `times` times. Copy 0 keeps its id; copy `i` gets `<id>#dup<i>`.
pub fn duplicate(corpus: Corpus, times: usize) -> Result<Corpus, SamplingError> {
    if times == 0 {
        return Err(SamplingError::ZeroDuplication);
    }
    if times == 1 {
        return Ok(corpus);
    }
    let mut out = Vec::with_capacity(corpus.len() * times);
    for p in corpus.into_posts() {
        let copies: Vec<Post> = (1..times)
            .map(|i| {
                let mut copy = p.clone();
                copy.id = format!("{}{DUPLICATE_SEPARATOR}{i}", p.id);
                copy
            })
            .collect();
        out.push(p);
        out.extend(copies);
    }
    Ok(Corpus::new(out)?)
}

/// Which input an example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum Origin {
    Positive,
    Negative(usize),
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub label: u8,
    pub origin: Origin,
    pub post: Post,
}

impl Example {
    pub fn stratum(&self) -> Stratum {
        Stratum::of(&self.post)
    }
}

/// Binary-labeled examples in training order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Gold-labeled corpus as a dataset; every post must carry a gold label.
    pub fn from_gold(corpus: Corpus) -> Result<LabeledDataset, SamplingError> {
        let examples = corpus
            .into_posts()
            .into_iter()
            .map(|post| match post.gold_label {
                Some(g) => Ok(Example { label: g.as_binary(), origin: Origin::Annotated, post }),
                None => Err(SamplingError::MissingGoldLabel(post.id)),
            })
            .collect::<Result<_, _>>()?;
        Ok(LabeledDataset { examples })
    }

    /// Concatenates datasets and shuffles the result deterministically.
    pub fn merge(parts: Vec<LabeledDataset>, seed: u64) -> LabeledDataset {
        let mut examples: Vec<Example> = parts.into_iter().flat_map(|d| d.examples).collect();
        examples.shuffle(&mut seed::rng(seed));
        LabeledDataset { examples }
    }

    /// Repeats every example `times` times with disambiguated ids.
    pub fn duplicated(&self, times: usize) -> Result<LabeledDataset, SamplingError> {
        if times == 0 {
            return Err(SamplingError::ZeroDuplication);
        }
        let mut examples = Vec::with_capacity(self.len() * times);
        for e in &self.examples {
            examples.push(e.clone());
            for i in 1..times {
                let mut copy = e.clone();
                copy.post.id = format!("{}{DUPLICATE_SEPARATOR}{i}", e.post.id);
                examples.push(copy);
            }
        }
        Ok(LabeledDataset { examples })
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.examples.iter().map(|e| e.post.id.as_str()).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.examples {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<LabeledDataset, SamplingError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| SamplingError::Io { path: display.clone(), source })?;
        let mut examples = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| SamplingError::Io { path: display.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            examples.push(serde_json::from_str(&line).map_err(|e| SamplingError::Malformed {
                path: display.clone(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(LabeledDataset { examples })
    }
}

/// Labels positives 1 and every negative corpus 0, adds the annotated corpus
/// duplicated `dup_times` with its gold labels, then shuffles with `seed`.
pub fn assemble(
    positive: &Corpus,
    negatives: &[Corpus],
    annotated: Option<&Corpus>,
    dup_times: usize,
    seed: u64,
) -> Result<LabeledDataset, SamplingError> {
    if dup_times == 0 {
        return Err(SamplingError::ZeroDuplication);
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let inputs = std::iter::once(positive).chain(negatives).chain(annotated);
    for c in inputs {
        for p in c.posts() {
            if !seen.insert(p.id.as_str()) {
                return Err(SamplingError::OverlappingIds(p.id.clone()));
            }
        }
    }

    let mut examples = Vec::new();
    for p in positive.posts() {
        let mut post = p.clone();
        post.weak_label = WeakLabel::Positive;
        examples.push(Example { label: 1, origin: Origin::Positive, post });
    }
    for (i, neg) in negatives.iter().enumerate() {
        for p in neg.posts() {
            let mut post = p.clone();
            post.weak_label = WeakLabel::Negative;
            examples.push(Example { label: 0, origin: Origin::Negative(i), post });
        }
    }
    if let Some(ann) = annotated {
        let gold = LabeledDataset::from_gold(ann.clone())?;
        examples.extend(gold.duplicated(dup_times)?.examples);
    }
    Ok(LabeledDataset::merge(vec![LabeledDataset { examples }], seed))
}

/// Gold label counts, as (positives, negatives).
pub fn gold_counts(corpus: &Corpus) -> (usize, usize) {
    corpus.posts().iter().fold((0, 0), |(p, n), post| match post.gold_label {
        Some(GoldLabel::Positive) => (p + 1, n),
        Some(GoldLabel::Negative) => (p, n + 1),
        None => (p, n),
    })
}
