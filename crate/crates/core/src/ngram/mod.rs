//! The n-gram matching metrics: BLEU-4, ROUGE-L, CIDEr-D and METEOR.
//!
//! All four take a tokenized candidate and one or more tokenized references.
//! They share the input contract: the candidate must be non-empty and at
//! least one reference must be non-empty. Empty references are ignored.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::tokenize::TokenSeq;

mod bleu;
mod cider;
mod meteor;
mod rouge;

pub use bleu::{bleu4, BLEU_SMOOTHING_EPSILON};
pub use cider::{cider_d, CIDER_SIGMA};
pub use meteor::{meteor, meteor_alignment, Alignment, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};

pub const MAX_ORDER: usize = 4;

/// An n-gram as an owned token tuple.
pub type NGram = Vec<String>;

/// Counts of every 1..=4-gram in a token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramProfile {
    counts: BTreeMap<NGram, usize>,
}

impl NGramProfile {
    pub fn new(tokens: &TokenSeq) -> Self {
        Self::with_orders(tokens, 1..=MAX_ORDER)
    }

    pub fn with_orders(tokens: &TokenSeq, orders: std::ops::RangeInclusive<usize>) -> Self {
        let toks = tokens.tokens();
        let mut counts = BTreeMap::new();
        for n in orders {
            if n == 0 || n > toks.len() {
                continue;
            }
            for window in toks.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        NGramProfile { counts }
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Grams of order `n` with their counts, in lexicographic order.
    pub fn order(&self, n: usize) -> impl Iterator<Item = (&NGram, usize)> {
        self.counts.iter().filter(move |(g, _)| g.len() == n).map(|(g, &c)| (g, c))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, usize)> {
        self.counts.iter().map(|(g, &c)| (g, c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Document frequencies of n-grams over a corpus of reference sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfTable {
    doc_count: usize,
    df: HashMap<NGram, usize>,
}

impl IdfTable {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn df(&self, gram: &[String]) -> Option<usize> {
        self.df.get(gram).copied()
    }

    /// `ln(doc_count / df)`; unseen grams get 0, as if `df == doc_count`.
    pub fn idf(&self, gram: &[String]) -> f64 {
        match self.df.get(gram) {
            Some(&df) => (self.doc_count as f64).ln() - (df as f64).ln(),
            None => 0.0,
        }
    }
}

/// Builds document frequencies: one document per reference set, and a gram
/// counts once per set no matter how many of its references contain it.
///
/// ```
/// use capbias::ngram::build_idf;
/// use capbias::tokenize::tokenize;
///
/// let corpus = vec![
///     vec![tokenize("a man cooking")],
///     vec![tokenize("a woman reading"), tokenize("a woman with a book")],
/// ];
/// let idf = build_idf(&corpus);
/// assert_eq!(idf.doc_count(), 2);
/// assert_eq!(idf.df(&["a".to_string()]), Some(2));
/// assert_eq!(idf.df(&["woman".to_string()]), Some(1));
/// ```
pub fn build_idf(reference_corpus: &[Vec<TokenSeq>]) -> IdfTable {
    let mut df: HashMap<NGram, usize> = HashMap::new();
    for set in reference_corpus {
        let mut grams: BTreeMap<&[String], ()> = BTreeMap::new();
        for reference in set {
            let toks = reference.tokens();
            for n in 1..=MAX_ORDER.min(toks.len()) {
                for w in toks.windows(n) {
                    grams.insert(w, ());
                }
            }
        }
        for g in grams.keys() {
            *df.entry(g.to_vec()).or_insert(0) += 1;
        }
    }
    IdfTable {
        doc_count: reference_corpus.len(),
        df,
    }
}

/// Checks the shared input contract and returns the non-empty references.
pub(crate) fn usable_references<'a>(candidate: &TokenSeq, references: &'a [TokenSeq]) -> Result<Vec<&'a TokenSeq>> {
    if candidate.is_empty() {
        return Err(Error::InvalidInput("candidate caption is empty".into()));
    }
    let refs: Vec<&TokenSeq> = references.iter().filter(|r| !r.is_empty()).collect();
    if refs.is_empty() {
        return Err(Error::InvalidInput("no non-empty reference caption".into()));
    }
    Ok(refs)
}
