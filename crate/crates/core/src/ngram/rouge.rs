use super::usable_references;
use crate::error::Result;
use crate::metric::{Metric, MetricScore};
use crate::tokenize::TokenSeq;

/// Recall weight of the F-measure, as in the COCO caption evaluation code.
pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: the best LCS-based F-measure over the references.
pub fn rouge_l(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<MetricScore> {
    let refs = usable_references(candidate, references)?;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let best = refs
        .iter()
        .map(|r| {
            let lcs = lcs_len(candidate.tokens(), r.tokens()) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let p = lcs / candidate.len() as f64;
            let rec = lcs / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max);
    Ok(MetricScore::new(Metric::RougeL, best))
}
