use super::{usable_references, NGramProfile, MAX_ORDER};
use crate::error::Result;
use crate::metric::{Metric, MetricScore};
use crate::tokenize::TokenSeq;

/// Substituted for a modified precision of zero. Template captions are five
/// to seven tokens long, so higher-order precisions are often zero.
pub const BLEU_SMOOTHING_EPSILON: f64 = 1e-9;

/// Sentence-level BLEU-4 with uniform weights.
///
/// Clipped n-gram precisions for n = 1..4 are combined by geometric mean and
/// scaled by the brevity penalty `exp(1 - r/c)` when the candidate length `c`
/// is shorter than the closest reference length `r` (ties favour the shorter
/// reference).
///
/// ```
/// use capbias::ngram::bleu4;
/// use capbias::tokenize::tokenize;
///
/// let r = [tokenize("a photo of a woman who is a doctor")];
/// let good = bleu4(&tokenize("a woman who is a doctor"), &r).unwrap();
/// let bad = bleu4(&tokenize("a man who is a doctor"), &r).unwrap();
/// assert_eq!(format!("{:.4}", good.value), "0.6065");
/// assert_eq!(format!("{:.4}", bad.value), "0.3259");
/// ```
pub fn bleu4(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<MetricScore> {
    let refs = usable_references(candidate, references)?;
    let cand = NGramProfile::new(candidate);
    let ref_profiles: Vec<NGramProfile> = refs.iter().map(|r| NGramProfile::new(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (gram, count) in cand.order(n) {
            let max_ref = ref_profiles.iter().map(|p| p.get(gram)).max().unwrap_or(0);
            matched += count.min(max_ref);
            total += count;
        }
        let precision = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
        log_sum += precision.max(BLEU_SMOOTHING_EPSILON).ln() / MAX_ORDER as f64;
    }

    let c = candidate.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("at least one reference");
    let brevity = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };

    Ok(MetricScore::new(Metric::Bleu4, brevity * log_sum.exp()))
}
