//! Agreement between metric scores and human ratings (Stuart's tau-c).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingStore, HybridWeights};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::ngram::build_idf;
use crate::score::Scorer;
use crate::tokenize::{tokenize, TokenSeq};

/// A metric score paired with a human rating of the same caption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgedPair {
    pub metric_score: f64,
    pub human_rating: i64,
}

impl JudgedPair {
    pub fn new(metric_score: f64, human_rating: i64) -> Self {
        JudgedPair {
            metric_score,
            human_rating,
        }
    }
}

/// Concordant-minus-discordant pair count, computed in O(n log n).
///
/// Pairs tied on either coordinate count as neither.
pub fn concordance_difference(pairs: &[JudgedPair]) -> Result<i128> {
    if let Some(p) = pairs.iter().find(|p| !p.metric_score.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite metric score {}", p.metric_score)));
    }
    // Adding 0.0 maps -0.0 to 0.0 so that total_cmp agrees with ==.
    let mut items: Vec<(i64, f64)> = pairs.iter().map(|p| (p.human_rating, p.metric_score + 0.0)).collect();
    items.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = items.len() as i128;
    let n0 = n * (n - 1) / 2;
    let tied_pairs = |run_lengths: Vec<usize>| -> i128 { run_lengths.iter().map(|&t| (t as i128) * (t as i128 - 1) / 2).sum() };
    let n1 = tied_pairs(runs(&items, |a, b| a.0 == b.0));
    let n3 = tied_pairs(runs(&items, |a, b| a == b));
    let mut scores: Vec<f64> = items.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut scores) as i128;
    scores.sort_by(f64::total_cmp);
    let n2 = tied_pairs(runs(&scores, |a, b| a == b));
    // Discordant pairs are exactly the strict inversions of the score
    // sequence once ratings are sorted with ties broken by score.
    Ok(n0 - n1 - n2 + n3 - 2 * swaps)
}

fn runs<T>(items: &[T], same: impl Fn(&T, &T) -> bool) -> Vec<usize> {
    let mut lengths = Vec::new();
    let mut start = 0;
    for i in 1..=items.len() {
        if i == items.len() || !same(&items[start], &items[i]) {
            lengths.push(i - start);
            start = i;
        }
    }
    lengths
}

/// Merge sort that counts pairs i < j with v[i] > v[j].
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            merged.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

/// Stuart's tau-c between metric scores and ratings, scaled by 100.
///
/// `m` is the smaller of the number of distinct scores and the number of
/// distinct ratings.
///
/// ```
/// use capbias::correlation::{kendall_tau_c, JudgedPair};
///
/// let pairs: Vec<_> = [(0.1, 1), (0.2, 2), (0.3, 2), (0.4, 3)]
///     .iter()
///     .map(|&(s, r)| JudgedPair::new(s, r))
///     .collect();
/// // C = 5, D = 0, n = 4, m = 3: 2*3*5 / (16*2) = 0.9375
/// assert!((kendall_tau_c(&pairs).unwrap() - 93.75).abs() < 1e-12);
/// ```
pub fn kendall_tau_c(pairs: &[JudgedPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let diff = concordance_difference(pairs)?;
    let ratings: BTreeSet<i64> = pairs.iter().map(|p| p.human_rating).collect();
    let scores: BTreeSet<u64> = pairs.iter().map(|p| (p.metric_score + 0.0).to_bits()).collect();
    let m = ratings.len().min(scores.len());
    if ratings.len() == 1 {
        return Err(Error::UndefinedCorrelation("all human ratings are identical".into()));
    }
    if m == 1 {
        return Err(Error::UndefinedCorrelation("all metric scores are identical".into()));
    }
    let n = pairs.len() as f64;
    let m = m as f64;
    Ok(100.0 * 2.0 * m * diff as f64 / (n * n * (m - 1.0)))
}

/// One human judgment of a candidate caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub candidate: String,
    pub references: Vec<String>,
    pub image_ref: String,
    pub rating: i64,
}

/// A metric or a sum of metrics to correlate, e.g. `clipscore+bleu4`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreSpec(Vec<Metric>);

impl ScoreSpec {
    pub fn single(metric: Metric) -> Self {
        ScoreSpec(vec![metric])
    }

    pub fn sum(metrics: Vec<Metric>) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::InvalidInput("empty metric combination".into()));
        }
        Ok(ScoreSpec(metrics))
    }

    pub fn metrics(&self) -> &[Metric] {
        &self.0
    }

    /// The seven rows of the standard human-correlation table.
    pub fn standard_table() -> Vec<ScoreSpec> {
        use Metric::*;
        vec![
            ScoreSpec::single(Bleu4),
            ScoreSpec::single(RougeL),
            ScoreSpec::single(Meteor),
            ScoreSpec::single(CiderD),
            ScoreSpec::single(ClipScore),
            ScoreSpec(vec![ClipScore, Bleu4]),
            ScoreSpec::single(Hybrid),
        ]
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|m| m.label()).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|m| m.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for ScoreSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let metrics = s.split('+').map(|p| p.trim().parse()).collect::<Result<Vec<Metric>>>()?;
        ScoreSpec::sum(metrics)
    }
}

impl Serialize for ScoreSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScoreSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub metric: ScoreSpec,
    pub label: String,
    pub n: usize,
    pub tau_c: f64,
}

/// Scores every judgment with each requested metric (or sum of metrics) and
/// reports tau-c against the ratings.
///
/// CIDEr-D document frequencies come from the reference sets of the
/// distinct images in `judgments`.
pub fn correlate_metrics(
    judgments: &[Judgment],
    specs: &[ScoreSpec],
    embeddings: Option<&EmbeddingStore>,
) -> Result<Vec<CorrelationRow>> {
    let mut image_refs: BTreeMap<&str, Vec<TokenSeq>> = BTreeMap::new();
    for j in judgments {
        image_refs
            .entry(j.image_ref.as_str())
            .or_insert_with(|| j.references.iter().map(|r| tokenize(r)).collect());
    }
    let corpus: Vec<Vec<TokenSeq>> = image_refs.into_values().collect();
    let scorer = Scorer::new(build_idf(&corpus), embeddings, HybridWeights::default());
    for spec in specs {
        scorer.check_metrics(spec.metrics())?;
    }
    let tokenized: Vec<Vec<TokenSeq>> = judgments
        .iter()
        .map(|j| j.references.iter().map(|r| tokenize(r)).collect())
        .collect();

    specs
        .iter()
        .map(|spec| {
            let pairs = judgments
                .iter()
                .zip(&tokenized)
                .map(|(j, refs)| {
                    let mut total = 0.0;
                    for &m in spec.metrics() {
                        total += scorer.score(m, &j.candidate, refs, &j.image_ref)?;
                    }
                    Ok(JudgedPair::new(total, j.rating))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CorrelationRow {
                metric: spec.clone(),
                label: spec.label(),
                n: pairs.len(),
                tau_c: kendall_tau_c(&pairs).map_err(|e| match e {
                    Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("{}: {m}", spec.label())),
                    other => other,
                })?,
            })
        })
        .collect()
}
