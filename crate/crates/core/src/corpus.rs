//! Canonical post representation, JSONL ingestion and corpus-level filters.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::{tokenize, NAME_PLACEHOLDER};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown domain `{0}` (expected forum, tweet, article or chat)")]
    UnknownDomain(String),
    #[error("duplicate post id `{0}`")]
    DuplicateId(String),
    #[error("invalid source config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Forum,
    Tweet,
    Article,
    Chat,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Forum, Domain::Tweet, Domain::Article, Domain::Chat];

    /// Tweets and chat use the social tokenizer mode.
    pub fn is_social(self) -> bool {
        matches!(self, Domain::Tweet | Domain::Chat)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Forum => "forum",
            Domain::Tweet => "tweet",
            Domain::Article => "article",
            Domain::Chat => "chat",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forum" => Ok(Domain::Forum),
            "tweet" | "twitter" => Ok(Domain::Tweet),
            "article" => Ok(Domain::Article),
            "chat" => Ok(Domain::Chat),
            _ => Err(CorpusError::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakLabel {
    Positive,
    Negative,
    #[default]
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLabel {
    Positive,
    Negative,
}

impl GoldLabel {
    pub fn as_binary(self) -> u8 {
        match self {
            GoldLabel::Positive => 1,
            GoldLabel::Negative => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub source_id: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<u8>,
    #[serde(default)]
    pub weak_label: WeakLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<GoldLabel>,
}

impl Post {
    /// Builds a post with tokens derived from `text`.
    pub fn new(id: impl Into<String>, text: impl Into<String>, source_id: impl Into<String>, domain: Domain) -> Self {
        let text = text.into();
        let tokens = tokenize(&text, domain);
        Post {
            id: id.into(),
            text,
            tokens,
            source_id: source_id.into(),
            domain,
            year: None,
            month: None,
            weak_label: WeakLabel::Unlabeled,
            gold_label: None,
        }
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.year = Some(year);
        self
    }

    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub posts: usize,
    pub words: usize,
}

/// An ordered collection of posts with unique ids and per-source counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    provenance: BTreeMap<String, SourceCounts>,
}

impl Corpus {
    /// Fails if two posts share an id.
    pub fn new(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(posts.len());
        for p in &posts {
            if !seen.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self::from_unique(posts))
    }

    /// Caller guarantees id uniqueness (e.g. a subset of an existing corpus).
    pub(crate) fn from_unique(posts: Vec<Post>) -> Self {
        let provenance = provenance_of(&posts);
        Corpus { posts, provenance }
    }

    pub fn empty() -> Self {
        Corpus::default()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn provenance(&self) -> &BTreeMap<String, SourceCounts> {
        &self.provenance
    }

    pub fn word_count(&self) -> usize {
        self.provenance.values().map(|c| c.words).sum()
    }

    /// Keeps posts matching `keep`, preserving order.
    pub fn filter(self, mut keep: impl FnMut(&Post) -> bool) -> Corpus {
        let posts = self.posts.into_iter().filter(|p| keep(p)).collect();
        Corpus::from_unique(posts)
    }

    /// Concatenates corpora; ids must stay unique.
    pub fn concat(parts: impl IntoIterator<Item = Corpus>) -> Result<Corpus, CorpusError> {
        Corpus::new(parts.into_iter().flat_map(|c| c.posts).collect())
    }

    pub fn read_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| CorpusError::Io { path: display.clone(), source })?;
        let mut posts = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io { path: display.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: display.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            posts.push(post);
        }
        Corpus::new(posts)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.posts {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn provenance_of(posts: &[Post]) -> BTreeMap<String, SourceCounts> {
    let mut prov: BTreeMap<String, SourceCounts> = BTreeMap::new();
    for p in posts {
        let entry = prov.entry(p.source_id.clone()).or_default();
        entry.posts += 1;
        entry.words += p.word_count();
    }
    prov
}

/// How one raw JSONL source maps onto posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub source_id: String,
    pub domain: String,
    #[serde(default)]
    pub weak_label: WeakLabel,
    /// When non-empty, only records whose `flag` is listed are kept.
    #[serde(default)]
    pub include_flags: Vec<String>,
    #[serde(default)]
    pub exclude_threads: Vec<String>,
}

impl SourceConfig {
    pub fn new(source_id: impl Into<String>, domain: Domain) -> Self {
        SourceConfig {
            source_id: source_id.into(),
            domain: domain.as_str().to_string(),
            weak_label: WeakLabel::Unlabeled,
            include_flags: Vec::new(),
            exclude_threads: Vec::new(),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, CorpusError> {
        let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&raw).map_err(|e| CorpusError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parsed_domain(&self) -> Result<Domain, CorpusError> {
        self.domain.parse()
    }

    fn admits(&self, record: &RawRecord) -> bool {
        if !self.include_flags.is_empty() {
            match &record.flag {
                Some(flag) if self.include_flags.iter().any(|f| f == flag) => {}
                _ => return false,
            }
        }
        if let Some(thread) = &record.thread {
            if self.exclude_threads.iter().any(|t| t == thread) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: String,
    year: Option<i32>,
    month: Option<u8>,
    thread: Option<String>,
    flag: Option<String>,
    /// Gold annotation: 1, 0, "positive" or "negative".
    label: Option<serde_json::Value>,
}

fn parse_gold(value: &serde_json::Value) -> Result<GoldLabel, String> {
    match value {
        serde_json::Value::Number(n) if n.as_i64() == Some(1) => Ok(GoldLabel::Positive),
        serde_json::Value::Number(n) if n.as_i64() == Some(0) => Ok(GoldLabel::Negative),
        serde_json::Value::Bool(true) => Ok(GoldLabel::Positive),
        serde_json::Value::Bool(false) => Ok(GoldLabel::Negative),
        serde_json::Value::String(s) => match s.as_str() {
            "positive" | "1" => Ok(GoldLabel::Positive),
            "negative" | "0" => Ok(GoldLabel::Negative),
            _ => Err(format!("unrecognized label `{s}`")),
        },
        other => Err(format!("unrecognized label `{other}`")),
    }
}

/// Reads a JSONL export into a corpus, applying the source's flag/thread filters.
pub fn ingest_jsonl(path: &Path, config: &SourceConfig) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(BufReader::new(file), &path.display().to_string(), config)
}

pub fn ingest_reader<R: BufRead>(reader: R, origin: &str, config: &SourceConfig) -> Result<Corpus, CorpusError> {
    let domain = config.parsed_domain()?;
    let mut posts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io { path: origin.to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: origin.to_string(),
            line: line_no,
            message,
        };
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if let Some(m) = record.month {
            if !(1..=12).contains(&m) {
                return Err(malformed(format!("month {m} out of range 1-12")));
            }
        }
        if !config.admits(&record) {
            continue;
        }
        let gold_label = record.label.as_ref().map(parse_gold).transpose().map_err(malformed)?;
        let id = record.id.unwrap_or_else(|| format!("{}:{}", config.source_id, line_no));
        let mut post = Post::new(id, record.text, config.source_id.clone(), domain);
        post.year = record.year;
        post.month = record.month;
        post.weak_label = config.weak_label;
        post.gold_label = gold_label;
        posts.push(post);
    }
    Corpus::new(posts)
}

/// Retains posts with at least `min_tokens` tokens.
pub fn filter_min_length(corpus: Corpus, min_tokens: usize) -> Corpus {
    corpus.filter(|p| p.word_count() >= min_tokens)
}

/// Default minimum length: posts of 10 or fewer words are dropped.
pub const DEFAULT_MIN_TOKENS: usize = 11;

/// Keeps the first occurrence of each exact raw text.
pub fn dedup(corpus: Corpus) -> Corpus {
    let mut seen: HashSet<String> = HashSet::with_capacity(corpus.len());
    corpus.filter(|p| seen.insert(p.text.clone()))
}

/// Replaces listed names with [`NAME_PLACEHOLDER`] in chat posts.
///
/// The post text is rewritten as the space-joined scrubbed tokens so the
/// original name does not survive in the raw text.
pub fn scrub_names(corpus: Corpus, names: &[String]) -> Corpus {
    if names.is_empty() {
        return corpus;
    }
    let names: HashSet<&str> = names.iter().map(String::as_str).collect();
    let posts = corpus
        .into_posts()
        .into_iter()
        .map(|mut p| {
            if p.domain == Domain::Chat && p.tokens.iter().any(|t| names.contains(t.as_str())) {
                for t in p.tokens.iter_mut() {
                    if names.contains(t.as_str()) {
                        *t = NAME_PLACEHOLDER.to_string();
                    }
                }
                p.text = p.tokens.join(" ");
            }
            p
        })
        .collect();
    Corpus::from_unique(posts)
}

/// Loads a newline-separated, lowercased name list. Blank lines and `#` comments are skipped.
pub fn read_name_list(path: &Path) -> Result<Vec<String>, CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Writes a corpus JSONL file.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    corpus.write_jsonl(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
