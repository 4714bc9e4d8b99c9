//! Synthetic corpora with known ground truth, used as stand-ins for the
//! restricted source data: a planted-topic corpus for topic recovery, a
//! two-domain benchmark where source markers confound the label, and an
//! identity-mention bias benchmark with counterexample negatives.
//!
//! All vocabulary is made of opaque codes (`grp3`, `ide17`, ...) so the
//! generators carry no real hateful content.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{Corpus, Domain, GoldLabel, Post};
use crate::sampling::{Example, LabeledDataset, Origin};
use crate::seed::{self, derive_seed, Rng};

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn pick<'a>(rng: &mut Rng, list: &'a [String]) -> &'a str {
    &list[rng.gen_range(0..list.len())]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub topics: usize,
    pub signature_words: usize,
    pub background_words: usize,
    pub docs: usize,
    pub doc_len: usize,
    /// Probability mass a topic puts on its signature words.
    pub signature_mass: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec { topics: 5, signature_words: 10, background_words: 50, docs: 500, doc_len: 50, signature_mass: 0.8 }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Generating topic of each document, aligned with `corpus.posts()`.
    pub doc_topics: Vec<usize>,
    pub signatures: Vec<Vec<String>>,
}

/// Each document is drawn entirely from one planted topic. Topic `k` puts
/// `signature_mass` on its own signature words and the rest on shared
/// background words, with mildly decaying weights inside each group.
pub fn planted_topics(spec: &PlantedSpec, seed: u64) -> PlantedCorpus {
    let mut rng = seed::rng(seed);
    let signatures: Vec<Vec<String>> = (0..spec.topics).map(|k| words(&format!("t{k}w"), spec.signature_words)).collect();
    let background = words("bg", spec.background_words);
    let dists: Vec<(Vec<&str>, WeightedIndex<f64>)> = signatures
        .iter()
        .map(|sig| {
            let sig_w: Vec<f64> = (0..sig.len()).map(|i| 1.0 / (1.0 + 0.05 * i as f64)).collect();
            let bg_w: Vec<f64> = (0..background.len()).map(|i| 1.0 / (1.0 + 0.02 * i as f64)).collect();
            let (ss, bs): (f64, f64) = (sig_w.iter().sum(), bg_w.iter().sum());
            let weights: Vec<f64> = sig_w
                .iter()
                .map(|w| w / ss * spec.signature_mass)
                .chain(bg_w.iter().map(|w| w / bs * (1.0 - spec.signature_mass)))
                .collect();
            let vocab: Vec<&str> = sig.iter().chain(&background).map(String::as_str).collect();
            (vocab, WeightedIndex::new(weights).expect("positive weights"))
        })
        .collect();
    let mut posts = Vec::with_capacity(spec.docs);
    let mut doc_topics = Vec::with_capacity(spec.docs);
    for d in 0..spec.docs {
        let k = rng.gen_range(0..spec.topics);
        let (vocab, dist) = &dists[k];
        let text: Vec<&str> = (0..spec.doc_len).map(|_| vocab[dist.sample(&mut rng)]).collect();
        posts.push(Post::new(format!("planted:{d}"), text.join(" "), "planted", Domain::Forum));
        doc_topics.push(k);
    }
    PlantedCorpus { corpus: Corpus::new(posts).expect("unique ids"), doc_topics, signatures }
}

fn example(id: String, text: String, source: &str, domain: Domain, label: u8, origin: Origin) -> Example {
    let mut post = Post::new(id, text, source, domain);
    if origin == Origin::Annotated {
        post.gold_label = Some(if label == 1 { GoldLabel::Positive } else { GoldLabel::Negative });
    }
    Example { label, origin, post }
}

/// One annotated dataset of the confounded benchmark.
#[derive(Debug, Clone)]
pub struct ConfoundedDomain {
    pub name: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone)]
pub struct ConfoundedBenchmark {
    pub domains: Vec<ConfoundedDomain>,
    /// Large provenance-labeled set where markers carry no label information.
    pub weak: LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfoundedSpec {
    pub annotated_per_domain: usize,
    pub test_per_domain: usize,
    pub weak_size: usize,
    pub doc_len: usize,
    /// Per-token probability of an ideology (or neutral-topic) word in annotated posts.
    pub annotated_signal: f64,
    pub weak_signal: f64,
    /// Probability that a post carries the marker aligned with its label in its domain.
    pub marker_alignment: f64,
}

impl Default for ConfoundedSpec {
    fn default() -> Self {
        ConfoundedSpec {
            annotated_per_domain: 300,
            test_per_domain: 300,
            weak_size: 3000,
            doc_len: 20,
            annotated_signal: 0.06,
            weak_signal: 0.15,
            marker_alignment: 0.9,
        }
    }
}

struct ConfoundVocab {
    ideology: Vec<String>,
    neutral: Vec<String>,
    markers: [String; 2],
    fillers: Vec<Vec<String>>,
}

impl ConfoundVocab {
    /// Marker token `marker` is inserted twice at random positions.
    fn post(&self, rng: &mut Rng, domain: usize, label: u8, signal: f64, marker: usize, len: usize) -> String {
        let signal_words = if label == 1 { &self.ideology } else { &self.neutral };
        let mut toks: Vec<&str> = Vec::with_capacity(len + 2);
        for _ in 0..len {
            if rng.gen_bool(signal) {
                toks.push(pick(rng, signal_words));
            } else {
                toks.push(pick(rng, &self.fillers[domain]));
            }
        }
        toks.push(&self.markers[marker]);
        toks.push(&self.markers[marker]);
        toks.shuffle(rng);
        toks.join(" ")
    }
}

/// Two annotated domains, `dom0` and `dom1`. In `dom0` positives mostly carry
/// marker 0 and negatives marker 1; `dom1` reverses the association, so a
/// model that leans on markers fails to transfer. Weak data has strong
/// ideology signal and label-independent markers.
pub fn confounded_benchmark(spec: &ConfoundedSpec, seed: u64) -> ConfoundedBenchmark {
    let mut rng = seed::rng(derive_seed(seed, "confounded"));
    let vocab = ConfoundVocab {
        ideology: words("ide", 30),
        neutral: words("neu", 30),
        markers: ["mrk0".to_string(), "mrk1".to_string()],
        fillers: vec![words("fa", 150), words("fb", 150), words("fw", 150)],
    };
    let mut domains = Vec::new();
    for d in 0..2 {
        let name = format!("dom{d}");
        let make = |split: &str, n: usize, rng: &mut Rng| {
            let examples = (0..n)
                .map(|i| {
                    let label = (i % 2) as u8;
                    let aligned = rng.gen_bool(spec.marker_alignment);
                    // dom0: label 1 ↔ marker 0; dom1: label 1 ↔ marker 1
                    let preferred = (usize::from(label) + d + 1) % 2;
                    let marker = if aligned { preferred } else { 1 - preferred };
                    let text = vocab.post(rng, d, label, spec.annotated_signal, marker, spec.doc_len);
                    example(format!("{name}-{split}:{i}"), text, &name, Domain::Forum, label, Origin::Annotated)
                })
                .collect();
            LabeledDataset { examples }
        };
        let train = make("train", spec.annotated_per_domain, &mut rng);
        let test = make("test", spec.test_per_domain, &mut rng);
        domains.push(ConfoundedDomain { name, train, test });
    }
    let weak = LabeledDataset {
        examples: (0..spec.weak_size)
            .map(|i| {
                let label = (i % 2) as u8;
                let marker = rng.gen_range(0..2);
                let fill = rng.gen_range(0..3);
                let text = vocab.post(&mut rng, fill, label, spec.weak_signal, marker, spec.doc_len);
                let origin = if label == 1 { Origin::Positive } else { Origin::Negative(0) };
                example(format!("weak:{i}"), text, "weak", Domain::Forum, label, origin)
            })
            .collect(),
    };
    ConfoundedBenchmark { domains, weak }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSpec {
    /// Positive training posts; negatives total the same number.
    pub positives: usize,
    pub eval_per_class: usize,
    pub probe_size: usize,
    pub doc_len: usize,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec { positives: 1000, eval_per_class: 400, probe_size: 400, doc_len: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct BiasBenchmark {
    pub positive: Corpus,
    /// Neutral negatives, twice as many as needed so either regime can draw
    /// the same total negative count.
    pub neutral: Corpus,
    /// Negatives mentioning identity groups in supportive contexts.
    pub counter: Corpus,
    pub eval: LabeledDataset,
    /// Non-hateful identity mentions; every post is a true negative.
    pub probe: Corpus,
}

struct BiasVocab {
    identity: Vec<String>,
    ideology: Vec<String>,
    support: Vec<String>,
    topic: Vec<String>,
    filler: Vec<String>,
}

impl BiasVocab {
    fn post(&self, rng: &mut Rng, mix: &[(&[String], f64)], len: usize) -> String {
        let toks: Vec<&str> = (0..len)
            .map(|_| {
                let mut u = rng.gen::<f64>();
                for (list, p) in mix {
                    if u < *p {
                        return pick(rng, list);
                    }
                    u -= p;
                }
                pick(rng, &self.filler)
            })
            .collect();
        toks.join(" ")
    }
}

/// Positives mention identity groups alongside ideology words; neutral
/// negatives rarely mention identities; counterexamples and the probe mention
/// identities alongside supportive words.
pub fn bias_benchmark(spec: &BiasSpec, seed: u64) -> BiasBenchmark {
    let mut rng = seed::rng(derive_seed(seed, "bias"));
    let v = BiasVocab {
        identity: words("grp", 10),
        ideology: words("ide", 40),
        support: words("sup", 30),
        topic: words("top", 60),
        filler: words("fil", 200),
    };
    let positive_mix: [(&[String], f64); 3] = [(&v.identity, 0.12), (&v.ideology, 0.10), (&v.topic, 0.08)];
    let neutral_mix: [(&[String], f64); 2] = [(&v.identity, 0.005), (&v.topic, 0.25)];
    let counter_mix: [(&[String], f64); 3] = [(&v.identity, 0.12), (&v.support, 0.15), (&v.topic, 0.08)];
    let probe_mix: [(&[String], f64); 3] = [(&v.identity, 0.15), (&v.support, 0.10), (&v.topic, 0.10)];

    let corpus = |name: &str, n: usize, mix: &[(&[String], f64)], rng: &mut Rng| -> Corpus {
        let posts = (0..n)
            .map(|i| Post::new(format!("{name}:{i}"), v.post(rng, mix, spec.doc_len), name, Domain::Tweet))
            .collect();
        Corpus::new(posts).expect("unique ids")
    };
    let positive = corpus("pos", spec.positives, &positive_mix, &mut rng);
    let neutral = corpus("neutral", spec.positives, &neutral_mix, &mut rng);
    let counter = corpus("counter", spec.positives, &counter_mix, &mut rng);
    let probe = corpus("probe", spec.probe_size, &probe_mix, &mut rng);
    let eval_pos = corpus("evalpos", spec.eval_per_class, &positive_mix, &mut rng);
    let eval_neg = corpus("evalneg", spec.eval_per_class, &neutral_mix, &mut rng);
    let eval = LabeledDataset {
        examples: eval_pos
            .into_posts()
            .into_iter()
            .map(|p| (p, 1))
            .chain(eval_neg.into_posts().into_iter().map(|p| (p, 0)))
            .map(|(post, label)| Example { label, origin: Origin::Annotated, post })
            .collect(),
    };
    BiasBenchmark { positive, neutral, counter, eval, probe }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_shapes() {
        let p = planted_topics(&PlantedSpec::default(), 1);
        assert_eq!(p.corpus.len(), 500);
        assert_eq!(p.doc_topics.len(), 500);
        assert!(p.corpus.posts().iter().all(|d| d.word_count() == 50));
        let vocab: std::collections::BTreeSet<&String> = p.corpus.posts().iter().flat_map(|d| &d.tokens).collect();
        assert!(vocab.len() <= 100);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = confounded_benchmark(&ConfoundedSpec::default(), 3);
        let b = confounded_benchmark(&ConfoundedSpec::default(), 3);
        assert_eq!(a.weak, b.weak);
        assert_eq!(a.domains[1].test, b.domains[1].test);
        let x = bias_benchmark(&BiasSpec::default(), 3);
        let y = bias_benchmark(&BiasSpec::default(), 3);
        assert_eq!(x.probe, y.probe);
    }

    #[test]
    fn confounded_markers_flip_between_domains() {
        let b = confounded_benchmark(&ConfoundedSpec::default(), 0);
        let rate = |d: &LabeledDataset, label: u8| {
            let posts: Vec<_> = d.examples.iter().filter(|e| e.label == label).collect();
            posts.iter().filter(|e| e.post.tokens.iter().any(|t| t == "mrk0")).count() as f64 / posts.len() as f64
        };
        assert!(rate(&b.domains[0].train, 1) > 0.8);
        assert!(rate(&b.domains[1].train, 1) < 0.2);
        assert!((rate(&b.weak, 1) - 0.5).abs() < 0.1);
    }
}
