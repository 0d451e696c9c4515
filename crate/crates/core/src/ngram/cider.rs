use std::collections::BTreeMap;

use super::{usable_references, IdfTable, NGram, NGramProfile, MAX_ORDER};
use crate::error::{Error, Result};
use crate::metric::{Metric, MetricScore};
use crate::tokenize::TokenSeq;

/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;

struct TfIdf {
    /// Per order, gram -> tf * idf.
    vectors: [BTreeMap<NGram, f64>; MAX_ORDER],
    norms: [f64; MAX_ORDER],
    length: usize,
}

impl TfIdf {
    fn new(tokens: &TokenSeq, idf: &IdfTable) -> Self {
        let profile = NGramProfile::new(tokens);
        let mut vectors: [BTreeMap<NGram, f64>; MAX_ORDER] = Default::default();
        let mut norms = [0.0; MAX_ORDER];
        for (gram, count) in profile.iter() {
            let n = gram.len() - 1;
            let w = count as f64 * idf.idf(gram);
            norms[n] += w * w;
            vectors[n].insert(gram.clone(), w);
        }
        TfIdf {
            vectors,
            norms: norms.map(f64::sqrt),
            length: tokens.len(),
        }
    }
}

fn similarity(cand: &TfIdf, reference: &TfIdf) -> [f64; MAX_ORDER] {
    let delta = cand.length as f64 - reference.length as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        let mut val = 0.0;
        for (gram, &c) in &cand.vectors[n] {
            if let Some(&r) = reference.vectors[n].get(gram) {
                // Clipped: a candidate cannot earn more weight than the
                // reference carries for the same gram.
                val += c.min(r) * r;
            }
        }
        if cand.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            val /= cand.norms[n] * reference.norms[n];
        }
        out[n] = val * penalty;
    }
    out
}

/// CIDEr-D: tf-idf weighted n-gram cosine with clipping and a Gaussian length
/// penalty, averaged over orders 1..4 and over references, times 10.
///
/// `idf` should be built with [`build_idf`](super::build_idf) over the
/// reference sets of the corpus being scored.
pub fn cider_d(candidate: &TokenSeq, references: &[TokenSeq], idf: &IdfTable) -> Result<MetricScore> {
    if idf.doc_count() == 0 {
        return Err(Error::InvalidInput("idf table has no documents".into()));
    }
    let refs = usable_references(candidate, references)?;
    let cand = TfIdf::new(candidate, idf);
    let mut total = 0.0;
    for r in &refs {
        let sims = similarity(&cand, &TfIdf::new(r, idf));
        total += sims.iter().sum::<f64>() / MAX_ORDER as f64;
    }
    Ok(MetricScore::new(Metric::CiderD, 10.0 * total / refs.len() as f64))
}
