//! Synthetic raw inputs for trying the pipeline end to end.
//!
//! Words are opaque codes: `ide*` carry the ideology signal, `off*` are
//! off-topic themes, `pol*` shared political vocabulary, `grp*` identity
//! mentions and `sup*` supportive context. Positive post ids embed their
//! theme (`-ide<t>-` or `-off<t>-`), which [`oracle_label`] reads back.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde_json::json;
use weaklabel_core::seed::{derive_seed, rng, Rng};
use weaklabel_core::Post;

use crate::artifact::write_atomic;
use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;

const IDEOLOGY_THEMES: usize = 3;
const OFF_THEMES: usize = 5;
const NAMES: [&str; 8] = ["john", "mary", "james", "linda", "robert", "patricia", "michael", "susan"];

struct Vocab {
    ideology: Vec<Vec<String>>,
    off: Vec<Vec<String>>,
    politics: Vec<String>,
    identity: Vec<String>,
    support: Vec<String>,
    filler: Vec<String>,
}

fn codes(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl Vocab {
    fn new() -> Vocab {
        Vocab {
            ideology: (0..IDEOLOGY_THEMES).map(|t| codes(&format!("ide{t}x"), 12)).collect(),
            off: (0..OFF_THEMES).map(|t| codes(&format!("off{t}x"), 12)).collect(),
            politics: codes("pol", 20),
            identity: codes("grp", 6),
            support: codes("sup", 12),
            filler: codes("fil", 80),
        }
    }
}

#[derive(Clone, Copy)]
enum Theme {
    Ideology(usize),
    Off(usize),
    Politics,
    Support,
}

impl Theme {
    fn tag(self) -> String {
        match self {
            Theme::Ideology(t) => format!("ide{t}"),
            Theme::Off(t) => format!("off{t}"),
            Theme::Politics => "pol".into(),
            Theme::Support => "sup".into(),
        }
    }
}

fn pick<'a>(rng: &mut Rng, list: &'a [String]) -> &'a str {
    &list[rng.gen_range(0..list.len())]
}

fn text(v: &Vocab, rng: &mut Rng, theme: Theme, len: usize, names: bool) -> String {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let u: f64 = rng.gen();
        let w = match theme {
            Theme::Ideology(t) if u < 0.14 => pick(rng, &v.ideology[t]).to_string(),
            Theme::Ideology(_) if u < 0.26 => pick(rng, &v.identity).to_string(),
            Theme::Ideology(_) if u < 0.50 => pick(rng, &v.politics).to_string(),
            Theme::Off(t) if u < 0.40 => pick(rng, &v.off[t]).to_string(),
            Theme::Politics if u < 0.40 => pick(rng, &v.politics).to_string(),
            Theme::Politics if u < 0.48 => pick(rng, &v.identity).to_string(),
            Theme::Support if u < 0.20 => pick(rng, &v.identity).to_string(),
            Theme::Support if u < 0.35 => pick(rng, &v.support).to_string(),
            Theme::Support if u < 0.50 => pick(rng, &v.politics).to_string(),
            _ if names && u > 0.93 => NAMES[rng.gen_range(0..NAMES.len())].to_string(),
            _ => pick(rng, &v.filler).to_string(),
        };
        out.push(w);
    }
    // Capitalize the first word so lowercasing has something to do.
    if let Some(first) = out.first_mut() {
        let mut c = first.chars();
        if let Some(h) = c.next() {
            *first = h.to_uppercase().chain(c).collect();
        }
    }
    out.join(" ")
}

struct SourceSpec {
    id: &'static str,
    domain: &'static str,
    role: &'static str,
    posts: usize,
    years: Option<(u32, u32)>,
    len: (usize, usize),
}

/// Writes `raw/*.jsonl`, `names.txt` and `pipeline.toml` under `dir`;
/// returns the config path.
pub fn write_demo(dir: &Path, seed: u64) -> Result<PathBuf, CliError> {
    let v = Vocab::new();
    let sources = [
        SourceSpec { id: "ws_forum", domain: "forum", role: "positive", posts: 1600, years: Some((2015, 2019)), len: (5, 40) },
        SourceSpec { id: "ws_tweets", domain: "tweet", role: "positive", posts: 400, years: Some((2018, 2019)), len: (6, 24) },
        SourceSpec { id: "ws_chat", domain: "chat", role: "positive", posts: 250, years: None, len: (8, 30) },
        SourceSpec { id: "neutral_forum", domain: "forum", role: "neutral", posts: 2400, years: Some((2014, 2019)), len: (8, 40) },
        SourceSpec { id: "neutral_tweets", domain: "tweet", role: "neutral", posts: 900, years: Some((2017, 2019)), len: (6, 24) },
        SourceSpec { id: "neutral_chat", domain: "chat", role: "neutral", posts: 700, years: None, len: (6, 30) },
        SourceSpec { id: "counter_forum", domain: "forum", role: "counter", posts: 1200, years: Some((2015, 2019)), len: (8, 40) },
        SourceSpec { id: "counter_tweets", domain: "tweet", role: "counter", posts: 700, years: Some((2017, 2019)), len: (6, 24) },
        SourceSpec { id: "annotated", domain: "forum", role: "annotated", posts: 240, years: Some((2016, 2019)), len: (10, 35) },
        SourceSpec { id: "eval_forum", domain: "forum", role: "eval", posts: 240, years: Some((2016, 2019)), len: (10, 35) },
        SourceSpec { id: "eval_tweets", domain: "tweet", role: "eval", posts: 240, years: Some((2018, 2019)), len: (6, 24) },
        SourceSpec { id: "probe", domain: "tweet", role: "probe", posts: 160, years: None, len: (6, 16) },
    ];
    let mut config = String::new();
    let _ = writeln!(
        config,
        "# Demo pipeline over synthetic inputs.\nseed = {seed}\n\n[lda]\nnum_topics = 8\niterations = 200\nper_topic = 20\nk_select = 3\n\n[sampling]\nforum_downsample = 500\nnames_file = \"names.txt\"\n\n[sampling.match_modes]\nchat = \"by_words\"\n\n[train]\nmax_epochs = 5\n\n[eval]\nleave_one_out = true"
    );
    for s in &sources {
        let mut r = rng(derive_seed(seed, s.id));
        let mut lines = String::new();
        let mut previous: Vec<(String, Theme)> = Vec::new();
        for i in 0..s.posts {
            let (body, theme) = if !previous.is_empty() && r.gen_bool(0.03) {
                previous[r.gen_range(0..previous.len())].clone()
            } else {
                let theme = match s.role {
                    "positive" if r.gen_bool(0.45) => Theme::Ideology(r.gen_range(0..IDEOLOGY_THEMES)),
                    "positive" => Theme::Off(r.gen_range(0..OFF_THEMES)),
                    "neutral" if r.gen_bool(0.4) => Theme::Politics,
                    "neutral" => Theme::Off(r.gen_range(0..OFF_THEMES)),
                    "counter" | "probe" => Theme::Support,
                    _ if r.gen_bool(0.4) => Theme::Ideology(r.gen_range(0..IDEOLOGY_THEMES)),
                    _ if r.gen_bool(0.5) => Theme::Politics,
                    _ => Theme::Off(r.gen_range(0..OFF_THEMES)),
                };
                let len = r.gen_range(s.len.0..=s.len.1);
                (text(&v, &mut r, theme, len, s.domain == "chat"), theme)
            };
            previous.push((body.clone(), theme));
            let mut rec = json!({ "id": format!("{}-{}-{i:05}", s.id, theme.tag()), "text": body });
            if let Some((lo, hi)) = s.years {
                rec["year"] = json!(r.gen_range(lo..=hi));
                rec["month"] = json!(r.gen_range(1..=12));
            }
            if matches!(s.role, "annotated" | "eval") {
                rec["label"] = json!(u8::from(matches!(theme, Theme::Ideology(_))));
            }
            lines.push_str(&rec.to_string());
            lines.push('\n');
        }
        write_atomic(&dir.join(format!("raw/{}.jsonl", s.id)), lines.as_bytes())?;
        let _ = write!(
            config,
            "\n\n[[sources]]\npath = \"raw/{id}.jsonl\"\nrole = \"{role}\"\nsource_id = \"{id}\"\ndomain = \"{domain}\"",
            id = s.id,
            role = s.role,
            domain = s.domain
        );
    }
    config.push('\n');
    write_atomic(&dir.join("names.txt"), (NAMES.join("\n") + "\n").as_bytes())?;
    let path = dir.join("pipeline.toml");
    write_atomic(&path, config.as_bytes())?;
    Ok(path)
}

/// Ground-truth annotation for demo positives: 1 for ideology themes, else 0.
pub fn oracle_label(post: &Post) -> i64 {
    i64::from(post.id.contains("-ide"))
}
