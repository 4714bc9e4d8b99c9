//! Topic annotation: walking the per-topic sample and collecting labels.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use weaklabel_core::seed::{derive_seed, rng};
use weaklabel_core::topics::{assign_all, AnnotationRecord, AnnotationSample};
use weaklabel_core::{Corpus, LdaModel, Post};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Label(i64),
    /// Replace this post with another one from the same topic.
    Skip,
}

pub fn parse_answer(line: &str) -> Option<Answer> {
    match line.trim().to_ascii_lowercase().as_str() {
        "1" => Some(Answer::Label(1)),
        "0" => Some(Answer::Label(0)),
        "-1" => Some(Answer::Label(-1)),
        "s" | "skip" => Some(Answer::Skip),
        _ => None,
    }
}

/// Posts of each topic that are not in `sample`, in a seeded order, used to
/// replace skipped posts.
pub fn replacements(model: &LdaModel, corpus: &Corpus, sample: &AnnotationSample, seed: u64) -> BTreeMap<usize, Vec<String>> {
    let sampled: HashSet<&str> = sample.values().flatten().map(String::as_str).collect();
    let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (post, topic) in corpus.posts().iter().zip(assign_all(model, corpus)) {
        if let Some(t) = topic {
            if !sampled.contains(post.id.as_str()) {
                out.entry(t).or_default().push(post.id.clone());
            }
        }
    }
    for (topic, ids) in out.iter_mut() {
        ids.shuffle(&mut rng(derive_seed(seed, &format!("replace/{topic}"))));
    }
    out
}

/// Asks `ask` about each sampled post, topic by topic, until the topic has as
/// many labels as it had sampled posts or its posts run out.
pub fn collect_labels<F>(
    sample: &AnnotationSample,
    spare: &BTreeMap<usize, Vec<String>>,
    corpus: &Corpus,
    mut ask: F,
) -> Result<Vec<AnnotationRecord>, CliError>
where
    F: FnMut(usize, usize, &Post) -> Result<Answer, CliError>,
{
    let by_id: HashMap<&str, &Post> = corpus.posts().iter().map(|p| (p.id.as_str(), p)).collect();
    let mut records = Vec::new();
    for (&topic, ids) in sample {
        let wanted = ids.len();
        let mut got = 0;
        let empty = Vec::new();
        let queue = ids.iter().chain(spare.get(&topic).unwrap_or(&empty));
        for id in queue {
            if got == wanted {
                break;
            }
            let post = by_id
                .get(id.as_str())
                .ok_or_else(|| CliError::Runtime(format!("sampled post {id} is not in the positive corpus")))?;
            if let Answer::Label(label) = ask(topic, got, post)? {
                records.push(AnnotationRecord { topic_id: topic, post_id: id.clone(), label });
                got += 1;
            }
        }
    }
    Ok(records)
}

/// Terminal front end for [`collect_labels`].
pub fn prompt<R: BufRead, W: Write>(
    sample: &AnnotationSample,
    spare: &BTreeMap<usize, Vec<String>>,
    corpus: &Corpus,
    mut input: R,
    mut out: W,
) -> Result<Vec<AnnotationRecord>, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("annotation prompt: {e}"));
    collect_labels(sample, spare, corpus, |topic, done, post| {
        let wanted = sample[&topic].len();
        writeln!(out, "\n[topic {topic}, {}/{wanted}] {}", done + 1, post.id).map_err(io)?;
        writeln!(out, "{}", post.text).map_err(io)?;
        loop {
            write!(out, "label (1 ideological, 0 neutral, -1 opposing, skip): ").map_err(io)?;
            out.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                return Err(CliError::Runtime("annotation input ended before every topic was labeled".into()));
            }
            match parse_answer(&line) {
                Some(a) => return Ok(a),
                None => writeln!(out, "please answer 1, 0, -1 or skip").map_err(io)?,
            }
        }
    })
}
