//! Metric implementations against independent, deliberately naive oracles.

use capbias::ngram::{build_idf, cider_d, meteor};
use capbias::tokenize::{tokenize, TokenSeq};
use proptest::prelude::*;

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// CIDEr-D written straight from its definition with quadratic lookups.
fn cider_oracle(candidate: &[String], references: &[Vec<String>], corpus: &[Vec<Vec<String>>]) -> f64 {
    let n_docs = corpus.len() as f64;
    let idf = |g: &[String]| -> f64 {
        let df = corpus
            .iter()
            .filter(|set| set.iter().any(|r| count(&grams(r, g.len()), g) > 0))
            .count();
        if df == 0 {
            0.0
        } else {
            (n_docs / df as f64).ln()
        }
    };
    let vector = |toks: &[String], n: usize| -> Vec<(Vec<String>, f64)> {
        let all = grams(toks, n);
        let mut distinct: Vec<Vec<String>> = Vec::new();
        for g in &all {
            if !distinct.contains(g) {
                distinct.push(g.clone());
            }
        }
        distinct
            .into_iter()
            .map(|g| {
                let w = count(&all, &g) as f64 * idf(&g);
                (g, w)
            })
            .collect()
    };
    let mut total = 0.0;
    for r in references {
        let mut per_order = 0.0;
        for n in 1..=4 {
            let c = vector(candidate, n);
            let rv = vector(r, n);
            let norm = |v: &[(Vec<String>, f64)]| v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            let mut dot = 0.0;
            for (g, wc) in &c {
                if let Some((_, wr)) = rv.iter().find(|(h, _)| h == g) {
                    dot += wc.min(*wr) * wr;
                }
            }
            let (nc, nr) = (norm(&c), norm(&rv));
            if nc != 0.0 && nr != 0.0 {
                dot /= nc * nr;
            }
            let d = candidate.len() as f64 - r.len() as f64;
            per_order += dot * (-(d * d) / 72.0).exp();
        }
        total += per_order / 4.0;
    }
    10.0 * total / references.len() as f64
}

const VOCAB: [&str; 6] = ["a", "man", "woman", "dog", "cooking", "runs"];

fn sentence() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(0..VOCAB.len(), 1..9).prop_map(|ix| ix.into_iter().map(|i| VOCAB[i].to_string()).collect())
}

fn seq(tokens: &[String]) -> TokenSeq {
    tokenize(&tokens.join(" "))
}

proptest! {
    #[test]
    fn cider_matches_oracle(
        corpus in proptest::collection::vec(proptest::collection::vec(sentence(), 1..3), 1..6),
        candidate in sentence(),
        pick in 0usize..6,
    ) {
        let references = corpus[pick % corpus.len()].clone();
        let idf = build_idf(&corpus.iter().map(|set| set.iter().map(|r| seq(r)).collect()).collect::<Vec<_>>());
        let refs: Vec<TokenSeq> = references.iter().map(|r| seq(r)).collect();
        let fast = cider_d(&seq(&candidate), &refs, &idf).unwrap().value;
        let slow = cider_oracle(&candidate, &references, &corpus);
        prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "fast {} slow {}", fast, slow);
    }
}

#[test]
fn meteor_doctor_pair_by_hand() {
    let refs = [tokenize("a photo of a woman who is a doctor")];
    // Bad caption: 5 of 6 unigrams match in 2 chunks ("a" | "who is a doctor").
    // P = 5/6, R = 5/9, Fmean = PR / (0.9P + 0.1R), penalty 0.5 (2/5)^3.
    let (p, r) = (5.0 / 6.0, 5.0 / 9.0);
    let bad = p * r / (0.9 * p + 0.1 * r) * (1.0 - 0.5 * 0.4f64.powi(3));
    // Good caption: all 6 match in one chunk.
    let (p, r) = (1.0, 6.0 / 9.0);
    let good = p * r / (0.9 * p + 0.1 * r) * (1.0 - 0.5 * (1.0f64 / 6.0).powi(3));
    let got_bad = meteor(&tokenize("a man who is a doctor"), &refs).unwrap().value;
    let got_good = meteor(&tokenize("a woman who is a doctor"), &refs).unwrap().value;
    assert!((got_bad - bad).abs() < 1e-12, "{got_bad} vs {bad}");
    assert!((got_good - good).abs() < 1e-12, "{got_good} vs {good}");
    assert!((bad - 0.5563).abs() < 1e-4);
}
