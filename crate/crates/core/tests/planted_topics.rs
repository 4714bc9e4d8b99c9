use std::collections::BTreeSet;

use weaklabel_core::synth::{planted_topics, PlantedCorpus, PlantedSpec};
use weaklabel_core::topics::filter_by_topics;
use weaklabel_core::{fit_lda, LdaConfig, LdaModel, Post};

fn fitted(seed: u64) -> (PlantedCorpus, LdaModel) {
    let planted = planted_topics(&PlantedSpec::default(), seed);
    // Documents come from a single topic, so a sparse document prior fits the generator.
    let config = LdaConfig { iterations: 300, alpha: Some(0.1), chains: 4, seed, ..LdaConfig::with_topics(5) };
    let model = fit_lda(&planted.corpus, &config).unwrap();
    (planted, model)
}

/// Repeatedly pairs the largest remaining cell of `confusion[learned][planted]`.
fn greedy_match(confusion: &[Vec<usize>]) -> Vec<Option<usize>> {
    let k = confusion.len();
    let mut cells: Vec<(usize, usize, usize)> = confusion
        .iter()
        .enumerate()
        .flat_map(|(a, row)| row.iter().enumerate().map(move |(b, &n)| (a, b, n)))
        .collect();
    cells.sort_by(|x, y| y.2.cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut learned_to_planted = vec![None; k];
    let mut used = BTreeSet::new();
    for (a, b, _) in cells {
        if learned_to_planted[a].is_none() && !used.contains(&b) {
            learned_to_planted[a] = Some(b);
            used.insert(b);
        }
    }
    learned_to_planted
}

fn doc_confusion(planted: &PlantedCorpus, model: &LdaModel) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0; planted.signatures.len()]; model.num_topics];
    for (d, &truth) in planted.doc_topics.iter().enumerate() {
        c[model.training_topic(d)][truth] += 1;
    }
    c
}

fn word_argmax(model: &LdaModel, word: &str) -> usize {
    let w = model.word_id(word).unwrap() as usize;
    let mut best = 0;
    for k in 0..model.num_topics {
        if model.topic_word_counts[k][w] > model.topic_word_counts[best][w] {
            best = k;
        }
    }
    best
}

#[test]
fn recovers_planted_topics() {
    let (planted, model) = fitted(11);
    assert!(model.skipped_docs.is_empty());
    let confusion = doc_confusion(&planted, &model);
    let mapping = greedy_match(&confusion);
    let matched: usize = mapping.iter().enumerate().filter_map(|(a, b)| b.map(|b| confusion[a][b])).sum();
    let doc_purity = matched as f64 / planted.doc_topics.len() as f64;
    assert!(doc_purity >= 0.8, "document purity {doc_purity}");

    // Word clusters: each signature word goes to its argmax topic.
    let mut wc = vec![vec![0; planted.signatures.len()]; model.num_topics];
    for (j, sig) in planted.signatures.iter().enumerate() {
        for w in sig {
            wc[word_argmax(&model, w)][j] += 1;
        }
    }
    let wmap = greedy_match(&wc);
    let wmatched: usize = wmap.iter().enumerate().filter_map(|(a, b)| b.map(|b| wc[a][b])).sum();
    let word_purity = wmatched as f64 / 50.0;
    assert!(word_purity >= 0.8, "word purity {word_purity}");

    for (learned, planted_topic) in mapping.iter().enumerate() {
        let j = planted_topic.unwrap();
        let top: BTreeSet<String> = model.top_words(learned, 15).unwrap().into_iter().collect();
        for w in &planted.signatures[j] {
            assert!(top.contains(w), "{w} missing from top words of topic {learned}");
        }
    }
}

#[test]
fn fold_in_agrees_with_training_assignment() {
    let (planted, model) = fitted(12);
    let mut agree = 0;
    for (d, post) in planted.corpus.posts().iter().take(100).enumerate() {
        let copy = Post::new(format!("copy:{d}"), post.text.clone(), "copy", post.domain);
        if model.assign_topic(&copy).unwrap() == model.training_topic(d) {
            agree += 1;
        }
    }
    assert!(agree >= 95, "{agree}/100 copies folded into their training topic");
}

#[test]
fn topic_filter_keeps_selected_planted_topic() {
    let (planted, model) = fitted(13);
    let mapping = greedy_match(&doc_confusion(&planted, &model));
    let learned = mapping.iter().position(|m| *m == Some(2)).unwrap();
    let selected: BTreeSet<usize> = [learned].into();
    let kept = filter_by_topics(planted.corpus.clone(), &model, &selected);
    assert!(!kept.corpus.is_empty());
    let truth: std::collections::HashMap<&str, usize> =
        planted.corpus.posts().iter().zip(&planted.doc_topics).map(|(p, &t)| (p.id.as_str(), t)).collect();
    let from_topic = kept.corpus.posts().iter().filter(|p| truth[p.id.as_str()] == 2).count();
    let share = from_topic as f64 / kept.corpus.len() as f64;
    assert!(share >= 0.8, "{share} of retained documents came from the selected topic");
}

#[test]
fn recovery_holds_across_seeds() {
    for seed in 20..30 {
        let (planted, model) = fitted(seed);
        let confusion = doc_confusion(&planted, &model);
        let mapping = greedy_match(&confusion);
        let matched: usize = mapping.iter().enumerate().filter_map(|(a, b)| b.map(|b| confusion[a][b])).sum();
        assert!(matched as f64 >= 0.8 * planted.doc_topics.len() as f64, "seed {seed}: {confusion:?}");
    }
}
