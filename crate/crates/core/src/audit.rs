//! Per-cell pairwise accuracy, bootstrap bias tests and summaries.
//!
//! A metric "wins" on an instance when it scores the correct-gender caption
//! strictly above the wrong-gender one. For each concept the win rate on
//! man images is compared with the win rate on woman images; a significant
//! difference marks the concept as biased toward the gender with the higher
//! rate.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Concept, Gender, InstanceKey};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::seed::substream;

/// Default number of bootstrap resamples.
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 10_000;
/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Scores one metric gave the good and bad caption of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub metric: Metric,
    pub score_good: f64,
    pub score_bad: f64,
}

impl ScoreRecord {
    pub fn new(instance_id: impl Into<String>, metric: Metric, score_good: f64, score_bad: f64) -> Result<Self> {
        let record = ScoreRecord {
            instance_id: instance_id.into(),
            metric,
            score_good,
            score_bad,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.score_good.is_finite() || !self.score_bad.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite {} score for {}",
                self.metric, self.instance_id
            )));
        }
        Ok(())
    }

    /// Strict win: ties count as failures.
    pub fn win(&self) -> bool {
        self.score_good > self.score_bad
    }

    pub fn key(&self) -> Result<InstanceKey> {
        InstanceKey::parse(&self.instance_id)
    }
}

/// Accuracy of one metric on one (gender, concept) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    pub gender: Gender,
    pub concept: String,
    pub category: Category,
    pub n: usize,
    pub wins: usize,
    pub accuracy: f64,
}

impl AuditCell {
    fn from_records<'a>(
        gender: Gender,
        concept: &str,
        category: Category,
        records: impl IntoIterator<Item = &'a ScoreRecord>,
    ) -> Result<AuditCell> {
        let (n, wins) = records
            .into_iter()
            .fold((0, 0), |(n, w), r| (n + 1, w + usize::from(r.win())));
        if n == 0 {
            return Err(Error::InsufficientData(format!("{category}/{concept}/{gender}")));
        }
        Ok(AuditCell {
            gender,
            concept: concept.to_string(),
            category,
            n,
            wins,
            accuracy: wins as f64 / n as f64,
        })
    }
}

/// Fraction of the cell's records where the good caption strictly outscores
/// the bad one.
///
/// ```
/// use capbias::audit::{accuracy, ScoreRecord};
/// use capbias::corpus::{Category, Concept, Gender};
/// use capbias::metric::Metric;
///
/// let nurse = Concept::new("nurse", Category::Profession).unwrap();
/// let records: Vec<_> = [(0.9, 0.1), (0.8, 0.2), (0.7, 0.3), (0.5, 0.5)]
///     .iter()
///     .enumerate()
///     .map(|(i, &(g, b))| {
///         ScoreRecord::new(format!("profession/nurse/man/{i}"), Metric::ClipScore, g, b).unwrap()
///     })
///     .collect();
/// let cell = accuracy(&records, Gender::Man, &nurse).unwrap();
/// assert_eq!(cell.accuracy, 0.75);
/// ```
pub fn accuracy(records: &[ScoreRecord], gender: Gender, concept: &Concept) -> Result<AuditCell> {
    let mut selected = Vec::new();
    for r in records {
        let key = r.key()?;
        if key.gender == gender && key.concept == concept.word() && key.category == concept.category() {
            selected.push(r);
        }
    }
    AuditCell::from_records(gender, concept.word(), concept.category(), selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLabel {
    ManBiased,
    WomanBiased,
    Neutral,
}

impl BiasLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasLabel::ManBiased => "man_biased",
            BiasLabel::WomanBiased => "woman_biased",
            BiasLabel::Neutral => "neutral",
        }
    }

    pub fn is_biased(self) -> bool {
        self != BiasLabel::Neutral
    }
}

impl std::fmt::Display for BiasLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the bootstrap test for one concept under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVerdict {
    pub concept: String,
    pub category: Category,
    pub metric: Metric,
    pub label: BiasLabel,
    pub p_value: f64,
    pub acc_man: f64,
    pub acc_woman: f64,
    pub n_man: usize,
    pub n_woman: usize,
}

impl BiasVerdict {
    /// Label from the observed accuracies and the p-value at level `alpha`.
    fn classify(acc_man: f64, acc_woman: f64, p_value: f64, alpha: f64) -> BiasLabel {
        if p_value >= alpha {
            BiasLabel::Neutral
        } else if acc_man > acc_woman {
            BiasLabel::ManBiased
        } else if acc_woman > acc_man {
            BiasLabel::WomanBiased
        } else {
            BiasLabel::Neutral
        }
    }
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            samples: DEFAULT_BOOTSTRAP_SAMPLES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("bootstrap samples must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Two-sided bootstrap p-value for the difference of two win rates.
///
/// Each resample redraws both cells with replacement, independently.
/// Resampling `n` win indicators with replacement and counting wins is a
/// Binomial(n, wins/n) draw, which is what is sampled here.
pub fn bootstrap_p_value<R: rand::Rng + ?Sized>(
    wins_man: usize,
    n_man: usize,
    wins_woman: usize,
    n_woman: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_man == 0 || n_woman == 0 {
        return Err(Error::InsufficientData("empty gender cell".into()));
    }
    if wins_man > n_man || wins_woman > n_woman {
        return Err(Error::InvalidInput("wins exceed cell size".into()));
    }
    if samples == 0 {
        return Err(Error::Config("bootstrap samples must be positive".into()));
    }
    let binomial = |wins: usize, n: usize| {
        Binomial::new(n as u64, wins as f64 / n as f64).map_err(|e| Error::InvalidInput(e.to_string()))
    };
    let man = binomial(wins_man, n_man)?;
    let woman = binomial(wins_woman, n_woman)?;
    let (mut le, mut ge) = (0usize, 0usize);
    for _ in 0..samples {
        let m = man.sample(rng) as u128;
        let w = woman.sample(rng) as u128;
        // Sign of w/n_woman - m/n_man, compared in exact integer arithmetic.
        let lhs = w * n_man as u128;
        let rhs = m * n_woman as u128;
        le += usize::from(lhs <= rhs);
        ge += usize::from(lhs >= rhs);
    }
    let p = 2.0 * le.min(ge) as f64 / samples as f64;
    Ok(p.clamp(0.0, 1.0))
}

/// Bootstrap bias test between the man and woman cells of one concept.
///
/// Both record lists must belong to the same concept and metric; the random
/// stream is derived from `(seed, category, concept, metric)`, so the result
/// does not depend on the order in which concepts are processed.
pub fn bootstrap_bias_test(
    records_man: &[ScoreRecord],
    records_woman: &[ScoreRecord],
    samples: usize,
    seed: u64,
    alpha: f64,
) -> Result<BiasVerdict> {
    let first = records_man
        .first()
        .or(records_woman.first())
        .ok_or_else(|| Error::InsufficientData("both gender cells are empty".into()))?;
    let key = first.key()?;
    let metric = first.metric;
    for r in records_man.iter().chain(records_woman) {
        r.validate()?;
        let k = r.key()?;
        if k.concept != key.concept || k.category != key.category || r.metric != metric {
            return Err(Error::InvalidInput(format!(
                "record {} does not belong to {}/{} under {metric}",
                r.instance_id, key.category, key.concept
            )));
        }
    }
    let man = AuditCell::from_records(Gender::Man, &key.concept, key.category, records_man)?;
    let woman = AuditCell::from_records(Gender::Woman, &key.concept, key.category, records_woman)?;
    let config = BootstrapConfig { samples, alpha, seed };
    test_cells(&man, &woman, metric, &config)
}

fn test_cells(man: &AuditCell, woman: &AuditCell, metric: Metric, config: &BootstrapConfig) -> Result<BiasVerdict> {
    config.validate()?;
    let mut rng = substream(config.seed, &[man.category.as_str(), &man.concept, metric.as_str()]);
    let p_value = bootstrap_p_value(man.wins, man.n, woman.wins, woman.n, config.samples, &mut rng)?;
    Ok(BiasVerdict {
        concept: man.concept.clone(),
        category: man.category,
        metric,
        label: BiasVerdict::classify(man.accuracy, woman.accuracy, p_value, config.alpha),
        p_value,
        acc_man: man.accuracy,
        acc_woman: woman.accuracy,
        n_man: man.n,
        n_woman: woman.n,
    })
}

/// Settings for a full audit run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub bootstrap: BootstrapConfig,
    /// Divide alpha by the number of concepts tested per metric.
    pub bonferroni: bool,
    /// Concepts left out of the summary percentages (still tested).
    pub exclude: Vec<String>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            bootstrap: BootstrapConfig::default(),
            bonferroni: false,
            exclude: Vec::new(),
        }
    }
}

/// Cells, verdicts and summary for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAudit {
    pub metric: Metric,
    /// Per-test significance level after any correction.
    pub alpha: f64,
    pub cells: Vec<AuditCell>,
    pub verdicts: Vec<BiasVerdict>,
    pub summary: BiasSummary,
}

/// Audit results for every metric present in the scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub metrics: Vec<MetricAudit>,
}

impl AuditReport {
    pub fn metric(&self, metric: Metric) -> Option<&MetricAudit> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn any_biased(&self) -> bool {
        self.metrics.iter().any(|m| m.verdicts.iter().any(|v| v.label.is_biased()))
    }
}

type CellKey = (Metric, Category, String);

/// Audits every (metric, concept) present in `records`.
///
/// Concepts are tested in parallel; results are sorted by metric, category
/// and concept and are identical for any thread count.
pub fn run_audit(records: &[ScoreRecord], config: &AuditConfig) -> Result<AuditReport> {
    config.bootstrap.validate()?;
    let mut groups: BTreeMap<CellKey, [Vec<&ScoreRecord>; 2]> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let key = r.key()?;
        let slot = groups.entry((r.metric, key.category, key.concept)).or_default();
        slot[key.gender as usize].push(r);
    }

    let mut per_metric: BTreeMap<Metric, Vec<(&CellKey, &[Vec<&ScoreRecord>; 2])>> = BTreeMap::new();
    for (key, cells) in &groups {
        per_metric.entry(key.0).or_default().push((key, cells));
    }

    let mut metrics = Vec::new();
    for (metric, concepts) in per_metric {
        let alpha = if config.bonferroni {
            config.bootstrap.alpha / concepts.len() as f64
        } else {
            config.bootstrap.alpha
        };
        let boot = BootstrapConfig { alpha, ..config.bootstrap };
        let results: Vec<(Vec<AuditCell>, BiasVerdict)> = concepts
            .par_iter()
            .map(|((_, category, concept), [man, woman])| {
                let man = AuditCell::from_records(Gender::Man, concept, *category, man.iter().copied())?;
                let woman = AuditCell::from_records(Gender::Woman, concept, *category, woman.iter().copied())?;
                let verdict = test_cells(&man, &woman, metric, &boot)?;
                Ok((vec![man, woman], verdict))
            })
            .collect::<Result<_>>()?;
        let (cells, verdicts): (Vec<Vec<AuditCell>>, Vec<BiasVerdict>) = results.into_iter().unzip();
        let summary = summarize_excluding(&verdicts, &config.exclude);
        metrics.push(MetricAudit {
            metric,
            alpha,
            cells: cells.into_iter().flatten().collect(),
            verdicts,
            summary,
        });
    }
    Ok(AuditReport {
        config: config.clone(),
        metrics,
    })
}

/// Biased-concept counts for one category (or overall).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasShare {
    pub total: usize,
    pub man_biased: usize,
    pub woman_biased: usize,
    /// Percentage of concepts with a non-neutral label; 0 when `total` is 0.
    pub percent: f64,
}

impl BiasShare {
    fn from_labels(labels: impl IntoIterator<Item = BiasLabel>) -> BiasShare {
        let (mut total, mut man_biased, mut woman_biased) = (0, 0, 0);
        for label in labels {
            total += 1;
            match label {
                BiasLabel::ManBiased => man_biased += 1,
                BiasLabel::WomanBiased => woman_biased += 1,
                BiasLabel::Neutral => {}
            }
        }
        let percent = if total == 0 {
            0.0
        } else {
            100.0 * (man_biased + woman_biased) as f64 / total as f64
        };
        BiasShare {
            total,
            man_biased,
            woman_biased,
            percent,
        }
    }

    pub fn biased(&self) -> usize {
        self.man_biased + self.woman_biased
    }
}

/// One point of the man-accuracy vs woman-accuracy scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub concept: String,
    pub category: Category,
    pub acc_man: f64,
    pub acc_woman: f64,
    pub label: BiasLabel,
}

/// Percentages of biased concepts per category and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub per_category: BTreeMap<Category, BiasShare>,
    pub overall: BiasShare,
    pub excluded: Vec<String>,
    pub scatter: Vec<ScatterPoint>,
}

/// Summarizes verdicts over all concepts.
pub fn summarize(verdicts: &[BiasVerdict]) -> BiasSummary {
    summarize_excluding(verdicts, &[])
}

/// Summarizes verdicts, leaving the named concepts out of the percentages
/// and the scatter.
pub fn summarize_excluding(verdicts: &[BiasVerdict], exclude: &[String]) -> BiasSummary {
    let kept: Vec<&BiasVerdict> = verdicts.iter().filter(|v| !exclude.contains(&v.concept)).collect();
    let per_category = Category::ALL
        .iter()
        .filter(|c| kept.iter().any(|v| v.category == **c))
        .map(|&c| {
            let share = BiasShare::from_labels(kept.iter().filter(|v| v.category == c).map(|v| v.label));
            (c, share)
        })
        .collect();
    let mut excluded: Vec<String> = exclude.to_vec();
    excluded.sort();
    excluded.dedup();
    BiasSummary {
        per_category,
        overall: BiasShare::from_labels(kept.iter().map(|v| v.label)),
        excluded,
        scatter: kept
            .iter()
            .map(|v| ScatterPoint {
                concept: v.concept.clone(),
                category: v.category,
                acc_man: v.acc_man,
                acc_woman: v.acc_woman,
                label: v.label,
            })
            .collect(),
    }
}

/// Cohen's kappa between two binary label lists.
///
/// Chance agreement uses each rater's own marginals.
///
/// ```
/// let k = capbias::audit::cohen_kappa(
///     &[true, true, false, false, true],
///     &[true, false, false, false, true],
/// ).unwrap();
/// // p_o = 0.8, p_e = 0.6 * 0.4 + 0.4 * 0.6 = 0.48
/// assert!((k - 0.32 / 0.52).abs() < 1e-12);
/// ```
pub fn cohen_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<f64> {
    agreement(labels_a, labels_b, |pa, pb| pa * pb + (1.0 - pa) * (1.0 - pb))
}

/// Scott's pi: like [`cohen_kappa`] but chance agreement uses the marginals
/// pooled over both raters.
///
/// ```
/// let pi = capbias::audit::scott_pi(
///     &[true, true, false, false, true],
///     &[true, false, false, false, true],
/// ).unwrap();
/// assert!((pi - 0.6).abs() < 1e-12);
/// ```
pub fn scott_pi(labels_a: &[bool], labels_b: &[bool]) -> Result<f64> {
    agreement(labels_a, labels_b, |pa, pb| {
        let p = (pa + pb) / 2.0;
        p * p + (1.0 - p) * (1.0 - p)
    })
}

fn agreement(labels_a: &[bool], labels_b: &[bool], chance: impl Fn(f64, f64) -> f64) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::InvalidInput(format!(
            "label lists differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::InvalidInput("label lists are empty".into()));
    }
    let n = labels_a.len() as f64;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as f64;
    let pa = labels_a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = labels_b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = chance(pa, pb);
    if p_e == 1.0 {
        // Both raters used a single, identical class throughout.
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(concept: &str, gender: Gender, i: usize, good: f64, bad: f64) -> ScoreRecord {
        ScoreRecord::new(format!("profession/{concept}/{gender}/{i}"), Metric::ClipScore, good, bad).unwrap()
    }

    fn cell(concept: &str, gender: Gender, wins: usize, n: usize) -> Vec<ScoreRecord> {
        (0..n)
            .map(|i| if i < wins { rec(concept, gender, i, 1.0, 0.0) } else { rec(concept, gender, i, 0.0, 1.0) })
            .collect()
    }

    #[test]
    fn accuracy_counts_and_ties() {
        let doctor = Concept::new("doctor", Category::Profession).unwrap();
        let all = cell("doctor", Gender::Man, 5, 5);
        assert_eq!(accuracy(&all, Gender::Man, &doctor).unwrap().accuracy, 1.0);
        let ties: Vec<_> = (0..4).map(|i| rec("doctor", Gender::Man, i, 0.5, 0.5)).collect();
        assert_eq!(accuracy(&ties, Gender::Man, &doctor).unwrap().accuracy, 0.0);
        let err = accuracy(&all, Gender::Woman, &doctor).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(ref k) if k.contains("doctor/woman")), "{err}");
    }

    #[test]
    fn rejects_non_finite_scores() {
        assert!(ScoreRecord::new("profession/doctor/man/0", Metric::Bleu4, f64::NAN, 0.0).is_err());
        assert!(ScoreRecord::new("profession/doctor/man/0", Metric::Bleu4, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn identical_cells_are_neutral() {
        let man = cell("chef", Gender::Man, 37, 50);
        let woman: Vec<_> = man
            .iter()
            .map(|r| ScoreRecord {
                instance_id: r.instance_id.replace("/man/", "/woman/"),
                ..r.clone()
            })
            .collect();
        for seed in 0..5 {
            let v = bootstrap_bias_test(&man, &woman, 10_000, seed, 0.05).unwrap();
            assert_eq!(v.label, BiasLabel::Neutral);
            assert!(v.p_value > 0.5, "{}", v.p_value);
        }
    }

    #[test]
    fn total_separation_is_man_biased() {
        let man = cell("chef", Gender::Man, 50, 50);
        let woman = cell("chef", Gender::Woman, 0, 50);
        let v = bootstrap_bias_test(&man, &woman, 10_000, 1, 0.05).unwrap();
        assert_eq!(v.label, BiasLabel::ManBiased);
        assert!(v.p_value < 0.001);
        assert_eq!((v.acc_man, v.acc_woman), (1.0, 0.0));
    }

    #[test]
    fn mixed_cells_rejected() {
        let man = cell("chef", Gender::Man, 3, 5);
        let woman = cell("nurse", Gender::Woman, 3, 5);
        assert!(bootstrap_bias_test(&man, &woman, 100, 0, 0.05).is_err());
        assert!(bootstrap_bias_test(&man, &[], 100, 0, 0.05).is_err());
    }

    #[test]
    fn run_audit_is_order_independent() {
        let mut records = Vec::new();
        for (concept, wm, ww) in [("chef", 40, 20), ("nurse", 25, 45), ("miner", 30, 31)] {
            records.extend(cell(concept, Gender::Man, wm, 50));
            records.extend(cell(concept, Gender::Woman, ww, 50));
        }
        let config = AuditConfig::default();
        let a = run_audit(&records, &config).unwrap();
        records.reverse();
        let b = run_audit(&records, &config).unwrap();
        assert_eq!(a, b);
        let m = a.metric(Metric::ClipScore).unwrap();
        let labels: Vec<_> = m.verdicts.iter().map(|v| (v.concept.as_str(), v.label)).collect();
        assert_eq!(
            labels,
            [("chef", BiasLabel::ManBiased), ("miner", BiasLabel::Neutral), ("nurse", BiasLabel::WomanBiased)]
        );
        assert_eq!(m.cells.len(), 6);
        let prof = &m.summary.per_category[&Category::Profession];
        assert_eq!((prof.total, prof.man_biased, prof.woman_biased), (3, 1, 1));
    }

    #[test]
    fn bonferroni_divides_alpha() {
        let mut records = Vec::new();
        for concept in ["a", "b", "c", "d"] {
            records.extend(cell(concept, Gender::Man, 30, 50));
            records.extend(cell(concept, Gender::Woman, 30, 50));
        }
        let config = AuditConfig {
            bonferroni: true,
            ..AuditConfig::default()
        };
        let report = run_audit(&records, &config).unwrap();
        assert!((report.metrics[0].alpha - 0.0125).abs() < 1e-15);
    }

    fn verdict(concept: &str, category: Category, label: BiasLabel) -> BiasVerdict {
        BiasVerdict {
            concept: concept.into(),
            category,
            metric: Metric::ClipScore,
            label,
            p_value: if label.is_biased() { 0.001 } else { 0.5 },
            acc_man: 0.5,
            acc_woman: 0.5,
            n_man: 10,
            n_woman: 10,
        }
    }

    #[test]
    fn summary_percentages_and_exclusion() {
        let vs = vec![
            verdict("chef", Category::Profession, BiasLabel::ManBiased),
            verdict("nurse", Category::Profession, BiasLabel::Neutral),
            verdict("apron", Category::Object, BiasLabel::Neutral),
        ];
        let s = summarize(&vs);
        assert_eq!(s.per_category[&Category::Profession].percent, 50.0);
        assert_eq!(s.per_category[&Category::Object].percent, 0.0);
        assert!(!s.per_category.contains_key(&Category::Activity));
        assert!((s.overall.percent - 100.0 / 3.0).abs() < 1e-12);
        let s = summarize_excluding(&vs, &["chef".to_string()]);
        assert_eq!(s.per_category[&Category::Profession].percent, 0.0);
        assert_eq!(s.overall.total, 2);
        assert_eq!(s.scatter.len(), 2);
        let all_neutral: Vec<_> = vs.iter().map(|v| BiasVerdict { label: BiasLabel::Neutral, ..v.clone() }).collect();
        assert_eq!(summarize(&all_neutral).overall.percent, 0.0);
    }

    #[test]
    fn kappa_examples() {
        let a = [true, false, true, false];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        let b: Vec<bool> = a.iter().map(|x| !x).collect();
        assert_eq!(cohen_kappa(&a, &b).unwrap(), -1.0);
        let (x, y) = ([true, true, false, false, true], [true, false, false, false, true]);
        assert!((cohen_kappa(&x, &y).unwrap() - 0.32 / 0.52).abs() < 1e-12);
        assert!((scott_pi(&x, &y).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(scott_pi(&a, &a).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[true, true], &[true, true]).unwrap(), 1.0);
        assert!(cohen_kappa(&[true], &[true, false]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn verdict_label_consistent(
            wm in 0usize..=40, ww in 0usize..=40, seed in 0u64..1000, alpha in 0.01f64..0.2,
        ) {
            let man = cell("chef", Gender::Man, wm, 40);
            let woman = cell("chef", Gender::Woman, ww, 40);
            let v = bootstrap_bias_test(&man, &woman, 500, seed, alpha).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&v.p_value));
            match v.label {
                BiasLabel::Neutral => {}
                BiasLabel::ManBiased => proptest::prop_assert!(v.p_value < alpha && v.acc_man > v.acc_woman),
                BiasLabel::WomanBiased => proptest::prop_assert!(v.p_value < alpha && v.acc_woman > v.acc_man),
            }
        }

        #[test]
        fn kappa_symmetric_and_bounded(pairs in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 1..40)) {
            let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let k1 = cohen_kappa(&a, &b).unwrap();
            let k2 = cohen_kappa(&b, &a).unwrap();
            proptest::prop_assert!((k1 - k2).abs() < 1e-12);
            proptest::prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k1));
        }
    }
}
