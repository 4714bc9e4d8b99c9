//! The collapsed Gibbs chain on a tiny corpus, checked against its exact
//! posterior computed by enumerating every assignment.

use weaklabel_core::topics::GibbsSampler;

const K: usize = 2;
const V: usize = 4;
const ALPHA: f64 = 0.5;
const BETA: f64 = 0.1;

fn docs() -> Vec<Vec<u32>> {
    // a a b | c d d
    vec![vec![0, 0, 1], vec![2, 3, 3]]
}

/// Γ(a + n) / Γ(a) for integer n.
fn rising(a: f64, n: u32) -> f64 {
    (0..n).map(|i| a + f64::from(i)).product()
}

/// Unnormalized collapsed joint p(w, z).
fn joint(docs: &[Vec<u32>], z: &[Vec<usize>]) -> f64 {
    let mut dt = vec![[0u32; K]; docs.len()];
    let mut wt = vec![[0u32; K]; V];
    let mut tt = [0u32; K];
    for (d, doc) in docs.iter().enumerate() {
        for (&w, &t) in doc.iter().zip(&z[d]) {
            dt[d][t] += 1;
            wt[w as usize][t] += 1;
            tt[t] += 1;
        }
    }
    let mut p = 1.0;
    for (d, doc) in docs.iter().enumerate() {
        for t in 0..K {
            p *= rising(ALPHA, dt[d][t]);
        }
        p /= rising(K as f64 * ALPHA, doc.len() as u32);
    }
    for t in 0..K {
        for row in &wt {
            p *= rising(BETA, row[t]);
        }
        p /= rising(V as f64 * BETA, tt[t]);
    }
    p
}

fn state_index(z: &[Vec<u16>]) -> usize {
    z.iter().flatten().fold(0, |acc, &t| acc * K + t as usize)
}

fn decode(mut idx: usize, docs: &[Vec<u32>]) -> Vec<Vec<usize>> {
    let n: usize = docs.iter().map(Vec::len).sum();
    let mut flat = vec![0; n];
    for slot in flat.iter_mut().rev() {
        *slot = idx % K;
        idx /= K;
    }
    let mut out = Vec::new();
    let mut it = flat.into_iter();
    for doc in docs {
        out.push(it.by_ref().take(doc.len()).collect());
    }
    out
}

fn argmax(counts: &[usize]) -> usize {
    let mut best = 0;
    for (t, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = t;
        }
    }
    best
}

fn argmax_differs(z: &[Vec<usize>]) -> bool {
    let top = |zd: &[usize]| {
        let mut c = [0usize; K];
        for &t in zd {
            c[t] += 1;
        }
        argmax(&c)
    };
    top(&z[0]) != top(&z[1])
}

#[test]
fn chain_matches_exact_posterior() {
    let docs = docs();
    let n: usize = docs.iter().map(Vec::len).sum();
    let states = K.pow(n as u32);
    let weights: Vec<f64> = (0..states).map(|s| joint(&docs, &decode(s, &docs))).collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let exact_differs: f64 = (0..states).filter(|&s| argmax_differs(&decode(s, &docs))).map(|s| exact[s]).sum();

    let mut sampler = GibbsSampler::new(docs.clone(), V, K, ALPHA, BETA, 3);
    for _ in 0..1_000 {
        sampler.sweep();
    }
    let samples = 200_000;
    let mut freq = vec![0usize; states];
    for _ in 0..samples {
        sampler.sweep();
        freq[state_index(sampler.assignments())] += 1;
    }
    sampler.audit().unwrap();

    let empirical: Vec<f64> = freq.iter().map(|&f| f as f64 / samples as f64).collect();
    let tv: f64 = 0.5 * exact.iter().zip(&empirical).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.02, "total variation {tv}");

    let empirical_differs: f64 = (0..states).filter(|&s| argmax_differs(&decode(s, &docs))).map(|s| empirical[s]).sum();
    assert!(
        (empirical_differs - exact_differs).abs() < 0.01,
        "P(argmax differs): exact {exact_differs}, chain {empirical_differs}"
    );
    // Words never shared between the documents pull them apart.
    assert!(exact_differs > 0.5);
}

#[test]
fn decode_inverts_state_index() {
    let docs = docs();
    for s in 0..64 {
        let z: Vec<Vec<u16>> = decode(s, &docs).into_iter().map(|d| d.into_iter().map(|t| t as u16).collect()).collect();
        assert_eq!(state_index(&z), s);
    }
}

#[test]
fn log_joint_matches_product_form() {
    let docs = docs();
    let mut sampler = GibbsSampler::new(docs.clone(), V, K, ALPHA, BETA, 8);
    for _ in 0..25 {
        sampler.sweep();
        let z: Vec<Vec<usize>> = sampler.assignments().iter().map(|d| d.iter().map(|&t| t as usize).collect()).collect();
        let exact = joint(&docs, &z).ln();
        assert!((sampler.log_joint() - exact).abs() < 1e-9, "{} vs {exact}", sampler.log_joint());
    }
}
