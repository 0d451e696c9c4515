use super::usable_references;
use crate::error::Result;
use crate::metric::{Metric, MetricScore};
use crate::tokenize::{stem, TokenSeq};

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Exhaustive alignment search gives up after this many nodes and falls back
/// to a greedy left-to-right alignment.
const SEARCH_BUDGET: usize = 200_000;

/// A one-to-one word alignment between candidate and reference.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    /// (candidate index, reference index), sorted by candidate index.
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }

    /// Runs of pairs adjacent in both candidate and reference.
    pub fn chunks(&self) -> usize {
        chunk_count(&self.pairs)
    }
}

fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

struct Stage<'a> {
    /// For every candidate position, the reference positions it may match.
    options: Vec<Vec<usize>>,
    fixed: &'a [(usize, usize)],
    ref_used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best: Option<(usize, usize, Vec<(usize, usize)>)>,
    nodes: usize,
}

impl Stage<'_> {
    fn score(&self) -> (usize, usize) {
        let mut all: Vec<(usize, usize)> = self.fixed.iter().chain(&self.current).copied().collect();
        all.sort_unstable();
        (self.current.len(), chunk_count(&all))
    }

    fn search(&mut self, pos: usize) {
        self.nodes += 1;
        if self.nodes > SEARCH_BUDGET {
            return;
        }
        let remaining = self.options[pos..].iter().filter(|o| !o.is_empty()).count();
        if let Some((best_m, _, _)) = &self.best {
            if self.current.len() + remaining < *best_m {
                return;
            }
        }
        if pos == self.options.len() {
            let (m, ch) = self.score();
            let better = match &self.best {
                None => true,
                Some((bm, bc, _)) => m > *bm || (m == *bm && ch < *bc),
            };
            if better {
                self.best = Some((m, ch, self.current.clone()));
            }
            return;
        }
        for k in 0..self.options[pos].len() {
            let j = self.options[pos][k];
            if self.ref_used[j] {
                continue;
            }
            self.ref_used[j] = true;
            self.current.push((pos, j));
            self.search(pos + 1);
            self.current.pop();
            self.ref_used[j] = false;
        }
        self.search(pos + 1);
    }
}

fn greedy(options: &[Vec<usize>], ref_used: &mut [bool], fixed: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut all: Vec<(usize, usize)> = fixed.to_vec();
    for (i, opts) in options.iter().enumerate() {
        all.sort_unstable();
        let prev = all.iter().rev().find(|p| p.0 < i).map(|p| p.1);
        let free = opts.iter().copied().filter(|&j| !ref_used[j]);
        let pick = match prev {
            Some(p) => free
                .clone()
                .find(|&j| j == p + 1)
                .or_else(|| free.clone().find(|&j| j > p))
                .or_else(|| free.clone().next()),
            None => free.clone().next(),
        };
        if let Some(j) = pick {
            ref_used[j] = true;
            out.push((i, j));
            all.push((i, j));
        }
    }
    out
}

fn align_stage<F>(cand: &[String], reference: &[String], fixed: &[(usize, usize)], matches: F) -> Vec<(usize, usize)>
where
    F: Fn(&str, &str) -> bool,
{
    let cand_used: Vec<bool> = (0..cand.len()).map(|i| fixed.iter().any(|p| p.0 == i)).collect();
    let mut ref_used: Vec<bool> = (0..reference.len()).map(|j| fixed.iter().any(|p| p.1 == j)).collect();
    let options: Vec<Vec<usize>> = cand
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if cand_used[i] {
                return Vec::new();
            }
            (0..reference.len())
                .filter(|&j| !ref_used[j] && matches(c, &reference[j]))
                .collect()
        })
        .collect();
    if options.iter().all(Vec::is_empty) {
        return Vec::new();
    }
    let mut stage = Stage {
        options,
        fixed,
        ref_used: ref_used.clone(),
        current: Vec::new(),
        best: None,
        nodes: 0,
    };
    stage.search(0);
    if stage.nodes <= SEARCH_BUDGET {
        if let Some((_, _, pairs)) = stage.best {
            return pairs;
        }
    }
    greedy(&stage.options, &mut ref_used, fixed)
}

/// Aligns in two stages: exact surface matches, then Porter-stem matches
/// among the words left over. Each stage maximizes its matches, then
/// minimizes the chunk count of the combined alignment.
pub fn meteor_alignment(candidate: &TokenSeq, reference: &TokenSeq) -> Alignment {
    let c = candidate.tokens();
    let r = reference.tokens();
    let mut pairs = align_stage(c, r, &[], |a, b| a == b);
    let stemmed = align_stage(c, r, &pairs, |a, b| stem(a) == stem(b));
    pairs.extend(stemmed);
    pairs.sort_unstable();
    Alignment { pairs }
}

fn score_against(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let alignment = meteor_alignment(candidate, reference);
    let m = alignment.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (alignment.chunks() as f64 / m as f64).powf(METEOR_BETA);
    fmean * (1.0 - penalty)
}

/// METEOR with exact and stem matchers (no synonym module), best over
/// references.
pub fn meteor(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<MetricScore> {
    let refs = usable_references(candidate, references)?;
    let best = refs.iter().map(|r| score_against(candidate, r)).fold(0.0, f64::max);
    Ok(MetricScore::new(Metric::Meteor, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;

    fn score(c: &str, r: &str) -> f64 {
        meteor(&tokenize(c), &[tokenize(r)]).unwrap().value
    }

    #[test]
    fn identity_six_tokens() {
        let v = score("a man who is a chef", "a man who is a chef");
        assert!((v - (1.0 - 0.5 * (1.0f64 / 6.0).powi(3))).abs() < 1e-12);
        assert_eq!(format!("{v:.5}"), "0.99769");
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(score("x y z", "a b c"), 0.0);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let a = meteor_alignment(&tokenize("a woman cooks"), &tokenize("a woman cooking"));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.chunks(), 1);
    }

    #[test]
    fn alignment_prefers_fewer_chunks() {
        // The first "a" of the candidate should pair with the "a" right
        // before "woman", not the sentence-initial one.
        let a = meteor_alignment(&tokenize("a woman who is a doctor"), &tokenize("a photo of a woman who is a doctor"));
        assert_eq!(a.matches(), 6);
        assert_eq!(a.chunks(), 1);
    }

    #[test]
    fn greedy_fallback_is_a_valid_alignment() {
        let options = vec![vec![0, 1], vec![1], vec![]];
        let mut used = vec![false; 2];
        let pairs = greedy(&options, &mut used, &[]);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }
}
