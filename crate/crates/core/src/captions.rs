//! Analysis of captions produced by a captioning system: lexicon-based
//! gender calls, gender-error rates, the man/woman swap correction, and
//! head-to-head metric comparisons between two systems.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::audit::{bootstrap_p_value, BiasLabel, BootstrapConfig};
use crate::corpus::{Category, Gender, Instance};
use crate::error::{Error, Result};
use crate::seed::substream;
use crate::tokenize::{tokenize, STRIPPED_PUNCTUATION};

/// Gendered word lists used to classify captions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderLexicon {
    #[serde(rename = "male")]
    male_words: BTreeSet<String>,
    #[serde(rename = "female")]
    female_words: BTreeSet<String>,
}

const DEFAULT_MALE: [&str; 10] = ["man", "men", "male", "boy", "boys", "gentleman", "father", "husband", "his", "he"];
const DEFAULT_FEMALE: [&str; 10] = [
    "woman", "women", "female", "girl", "girls", "lady", "mother", "wife", "her", "she",
];

impl Default for GenderLexicon {
    fn default() -> Self {
        GenderLexicon {
            male_words: DEFAULT_MALE.iter().map(|s| s.to_string()).collect(),
            female_words: DEFAULT_FEMALE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GenderLexicon {
    pub fn new<I, S>(male: I, female: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let lexicon = GenderLexicon {
            male_words: male.into_iter().map(Into::into).collect(),
            female_words: female.into_iter().map(Into::into).collect(),
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    /// Parses `{"male": [...], "female": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let lexicon: GenderLexicon = serde_json::from_str(text)?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_json(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.male_words.is_empty() || self.female_words.is_empty() {
            return Err(Error::InvalidInput("gender lexicon lists must be non-empty".into()));
        }
        for w in self.male_words.iter().chain(&self.female_words) {
            if tokenize(w).tokens() != [w.clone()] {
                return Err(Error::InvalidInput(format!(
                    "lexicon word {w:?} must be a single lowercase token"
                )));
            }
        }
        if let Some(w) = self.male_words.intersection(&self.female_words).next() {
            return Err(Error::InvalidInput(format!("{w:?} appears in both gender lists")));
        }
        Ok(())
    }

    pub fn male_words(&self) -> &BTreeSet<String> {
        &self.male_words
    }

    pub fn female_words(&self) -> &BTreeSet<String> {
        &self.female_words
    }

    /// The gender a single token signals, if any.
    pub fn gender_of(&self, token: &str) -> Option<Gender> {
        if self.male_words.contains(token) {
            Some(Gender::Man)
        } else if self.female_words.contains(token) {
            Some(Gender::Woman)
        } else {
            None
        }
    }

    fn words(&self, gender: Gender) -> &BTreeSet<String> {
        match gender {
            Gender::Man => &self.male_words,
            Gender::Woman => &self.female_words,
        }
    }
}

/// Gender signalled by a caption or a set of references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderCall {
    Man,
    Woman,
    Neutral,
    Mixed,
}

impl GenderCall {
    fn from_flags(male: bool, female: bool) -> GenderCall {
        match (male, female) {
            (true, false) => GenderCall::Man,
            (false, true) => GenderCall::Woman,
            (false, false) => GenderCall::Neutral,
            (true, true) => GenderCall::Mixed,
        }
    }

    pub fn gender(self) -> Option<Gender> {
        match self {
            GenderCall::Man => Some(Gender::Man),
            GenderCall::Woman => Some(Gender::Woman),
            GenderCall::Neutral | GenderCall::Mixed => None,
        }
    }
}

impl From<Gender> for GenderCall {
    fn from(g: Gender) -> Self {
        match g {
            Gender::Man => GenderCall::Man,
            Gender::Woman => GenderCall::Woman,
        }
    }
}

fn gender_flags(caption: &str, lexicon: &GenderLexicon) -> (bool, bool) {
    let tokens = tokenize(caption);
    let mut flags = (false, false);
    for t in &tokens {
        match lexicon.gender_of(t) {
            Some(Gender::Man) => flags.0 = true,
            Some(Gender::Woman) => flags.1 = true,
            None => {}
        }
    }
    flags
}

/// Classifies a caption by the gendered tokens it contains.
///
/// ```
/// use capbias::captions::{detect_gender, GenderCall, GenderLexicon};
///
/// let lex = GenderLexicon::default();
/// assert_eq!(detect_gender("a man riding a bike", &lex), GenderCall::Man);
/// assert_eq!(detect_gender("a person riding a bike", &lex), GenderCall::Neutral);
/// assert_eq!(detect_gender("a man and a woman cooking", &lex), GenderCall::Mixed);
/// ```
pub fn detect_gender(caption: &str, lexicon: &GenderLexicon) -> GenderCall {
    let (male, female) = gender_flags(caption, lexicon);
    GenderCall::from_flags(male, female)
}

/// Labels an image from its reference captions: a gender only when some
/// reference uses that gender's words and none uses the other's.
pub fn label_image_gender<S: AsRef<str>>(references: &[S], lexicon: &GenderLexicon) -> GenderCall {
    let (mut male, mut female) = (false, false);
    for r in references {
        let (m, f) = gender_flags(r.as_ref(), lexicon);
        male |= m;
        female |= f;
    }
    GenderCall::from_flags(male, female)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionOutcome {
    /// The wrong gender word was swapped for the right one.
    Corrected,
    /// The caption already names only the true gender.
    AlreadyCorrect,
    /// The swap rule does not apply; the caption is unchanged.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub caption: String,
    pub outcome: CorrectionOutcome,
}

/// Swaps "man" for "woman" (or the reverse) when that word is the only
/// gendered token in the caption and it names the wrong gender.
///
/// Every other case returns the caption unchanged. Captions mentioning any
/// other gendered word are flagged not applicable, so a corrected caption
/// always reads as the true gender.
///
/// ```
/// use capbias::captions::{correct_caption, CorrectionOutcome, GenderLexicon};
/// use capbias::corpus::Gender;
///
/// let lex = GenderLexicon::default();
/// let c = correct_caption("A man washing dishes.", Gender::Woman, &lex);
/// assert_eq!(c.caption, "A woman washing dishes.");
/// assert_eq!(c.outcome, CorrectionOutcome::Corrected);
/// let c = correct_caption("a man and his wife", Gender::Woman, &lex);
/// assert_eq!(c.outcome, CorrectionOutcome::NotApplicable);
/// ```
pub fn correct_caption(caption: &str, true_gender: Gender, lexicon: &GenderLexicon) -> Correction {
    let unchanged = |outcome| Correction {
        caption: caption.to_string(),
        outcome,
    };
    if detect_gender(caption, lexicon) == GenderCall::from(true_gender) {
        return unchanged(CorrectionOutcome::AlreadyCorrect);
    }
    let (source, target) = match true_gender {
        Gender::Woman => ("man", "woman"),
        Gender::Man => ("woman", "man"),
    };
    let wrong = true_gender.opposite();
    if !lexicon.words(wrong).contains(source) || !lexicon.words(true_gender).contains(target) {
        return unchanged(CorrectionOutcome::NotApplicable);
    }
    let tokens = tokenize(caption);
    let only_source = tokens.contains(source)
        && tokens
            .iter()
            .all(|t| lexicon.gender_of(t).is_none() || t == source);
    if !only_source {
        return unchanged(CorrectionOutcome::NotApplicable);
    }

    let mut out = String::with_capacity(caption.len() + 2);
    for (is_space, chunk) in chunks(caption) {
        if is_space || tokenize(chunk).tokens() != [source] {
            out.push_str(chunk);
            continue;
        }
        let core = chunk.trim_matches(STRIPPED_PUNCTUATION);
        if core.to_lowercase() != source {
            // Punctuation inside the word; leave such captions alone.
            return unchanged(CorrectionOutcome::NotApplicable);
        }
        let start = chunk.len() - chunk.trim_start_matches(STRIPPED_PUNCTUATION).len();
        out.push_str(&chunk[..start]);
        out.push_str(&match_case(core, target));
        out.push_str(&chunk[start + core.len()..]);
    }
    Correction {
        caption: out,
        outcome: CorrectionOutcome::Corrected,
    }
}

/// Splits text into alternating whitespace and non-whitespace runs.
fn chunks(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut current: Option<bool> = None;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        match current {
            Some(prev) if prev != ws => {
                out.push((prev, &text[start..i]));
                start = i;
            }
            _ => {}
        }
        current = Some(ws);
    }
    if let Some(ws) = current {
        out.push((ws, &text[start..]));
    }
    out
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.len() > 1 && original.chars().all(|c| c.is_uppercase()) {
        replacement.to_uppercase()
    } else if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

/// One generated caption for a manifest instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub instance_id: String,
    pub caption: String,
}

/// Gender-error statistics of one system for one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptErrors {
    pub concept: String,
    pub category: Category,
    pub n_man: usize,
    pub n_woman: usize,
    pub errors_man: usize,
    pub errors_woman: usize,
    /// Gendered-call accuracy comparison: man-biased means woman images are
    /// misgendered significantly more often than man images.
    pub label: BiasLabel,
    pub p_value: f64,
}

/// Gender-error report of a system over a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub total: usize,
    /// Outputs with a man or woman call; the error-rate denominator.
    pub gendered: usize,
    pub errors: usize,
    pub neutral: usize,
    pub mixed: usize,
    /// Error fraction in [0, 1]; `None` when no output has a gendered call.
    pub rate: Option<f64>,
    /// Percentile bootstrap interval for `rate`.
    pub ci: Option<(f64, f64)>,
    pub per_concept: Vec<ConceptErrors>,
    /// Instance ids whose call names the wrong gender, for manual review.
    pub flagged: Vec<String>,
}

impl ErrorReport {
    /// Share of concepts with a significant gender difference, in percent.
    pub fn biased_concept_percent(&self) -> f64 {
        if self.per_concept.is_empty() {
            return 0.0;
        }
        let biased = self.per_concept.iter().filter(|c| c.label.is_biased()).count();
        100.0 * biased as f64 / self.per_concept.len() as f64
    }
}

fn index_manifest(manifest: &[Instance]) -> HashMap<&str, &Instance> {
    manifest.iter().map(|i| (i.id.as_str(), i)).collect()
}

fn resolve<'a>(index: &HashMap<&str, &'a Instance>, id: &str) -> Result<&'a Instance> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("output id {id:?} is not in the manifest")))
}

/// Gender-error rate of `outputs` against the true genders in `manifest`.
///
/// Neutral and mixed calls are counted but excluded from the denominator.
pub fn gender_error_rate(
    outputs: &[SystemOutput],
    manifest: &[Instance],
    lexicon: &GenderLexicon,
    bootstrap: &BootstrapConfig,
) -> Result<ErrorReport> {
    bootstrap.validate()?;
    let index = index_manifest(manifest);
    let mut report = ErrorReport {
        total: outputs.len(),
        gendered: 0,
        errors: 0,
        neutral: 0,
        mixed: 0,
        rate: None,
        ci: None,
        per_concept: Vec::new(),
        flagged: Vec::new(),
    };
    // (category, concept) -> [(n, errors) for man, woman]
    let mut cells: BTreeMap<(Category, String), [(usize, usize); 2]> = BTreeMap::new();
    for out in outputs {
        let inst = resolve(&index, &out.instance_id)?;
        let call = detect_gender(&out.caption, lexicon);
        let Some(called) = call.gender() else {
            match call {
                GenderCall::Mixed => report.mixed += 1,
                _ => report.neutral += 1,
            }
            continue;
        };
        let wrong = called != inst.gender();
        report.gendered += 1;
        if wrong {
            report.errors += 1;
            report.flagged.push(out.instance_id.clone());
        }
        let cell = &mut cells
            .entry((inst.category(), inst.concept().word().to_string()))
            .or_default()[inst.gender() as usize];
        cell.0 += 1;
        cell.1 += usize::from(wrong);
    }
    report.flagged.sort();

    if report.gendered > 0 {
        let n = report.gendered;
        let rate = report.errors as f64 / n as f64;
        report.rate = Some(rate);
        let mut rng = substream(bootstrap.seed, &["gender-error-rate"]);
        let binomial = Binomial::new(n as u64, rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut draws: Vec<u64> = (0..bootstrap.samples).map(|_| binomial.sample(&mut rng)).collect();
        draws.sort_unstable();
        let q = |p: f64| {
            let idx = ((draws.len() - 1) as f64 * p).round() as usize;
            draws[idx] as f64 / n as f64
        };
        report.ci = Some((q(bootstrap.alpha / 2.0), q(1.0 - bootstrap.alpha / 2.0)));
    }

    for ((category, concept), [(n_man, err_man), (n_woman, err_woman)]) in cells {
        let (label, p_value) = if n_man > 0 && n_woman > 0 {
            let mut rng = substream(bootstrap.seed, &["gender-error", category.as_str(), &concept]);
            let p = bootstrap_p_value(
                n_man - err_man,
                n_man,
                n_woman - err_woman,
                n_woman,
                bootstrap.samples,
                &mut rng,
            )?;
            let acc_man = (n_man - err_man) as f64 / n_man as f64;
            let acc_woman = (n_woman - err_woman) as f64 / n_woman as f64;
            let label = if p >= bootstrap.alpha || acc_man == acc_woman {
                BiasLabel::Neutral
            } else if acc_man > acc_woman {
                BiasLabel::ManBiased
            } else {
                BiasLabel::WomanBiased
            };
            (label, p)
        } else {
            (BiasLabel::Neutral, 1.0)
        };
        report.per_concept.push(ConceptErrors {
            concept,
            category,
            n_man,
            n_woman,
            errors_man: err_man,
            errors_woman: err_woman,
            label,
            p_value,
        });
    }
    Ok(report)
}

/// Head-to-head summary for one slice of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinShare {
    pub n: usize,
    pub value_a: f64,
    pub value_b: f64,
    /// Percentage of instances where A scores higher; ties count half.
    pub win_a: f64,
    pub win_b: f64,
}

impl WinShare {
    fn from_scores(scores: &[(f64, f64)]) -> WinShare {
        let n = scores.len();
        if n == 0 {
            return WinShare {
                n,
                value_a: 0.0,
                value_b: 0.0,
                win_a: 50.0,
                win_b: 50.0,
            };
        }
        // Wins counted in half-points so ties split evenly.
        let (mut half_a, mut half_b) = (0usize, 0usize);
        for &(a, b) in scores {
            if a > b {
                half_a += 2;
            } else if b > a {
                half_b += 2;
            } else {
                half_a += 1;
                half_b += 1;
            }
        }
        // Compute the larger share directly and the smaller as its
        // complement; for x in [50, 100] both 100 - x and the sum are exact.
        let pct = |half: usize| 100.0 * half as f64 / (2 * n) as f64;
        let (win_a, win_b) = if half_a >= half_b {
            let a = pct(half_a);
            (a, 100.0 - a)
        } else {
            let b = pct(half_b);
            (100.0 - b, b)
        };
        WinShare {
            n,
            value_a: scores.iter().map(|s| s.0).sum::<f64>() / n as f64,
            value_b: scores.iter().map(|s| s.1).sum::<f64>() / n as f64,
            win_a,
            win_b,
        }
    }
}

/// Metric comparison between two systems, overall and per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinReport {
    pub overall: WinShare,
    pub per_category: BTreeMap<Category, WinShare>,
}

/// Scores both systems' captions with `scorer` and reports mean values and
/// win percentages.
///
/// `scorer` receives the manifest instance and a caption. Both output lists
/// must cover exactly the same instance ids.
pub fn compare_systems<F>(
    outputs_a: &[SystemOutput],
    outputs_b: &[SystemOutput],
    manifest: &[Instance],
    scorer: F,
) -> Result<WinReport>
where
    F: Fn(&Instance, &str) -> Result<f64>,
{
    let a: BTreeMap<&str, &str> = outputs_a.iter().map(|o| (o.instance_id.as_str(), o.caption.as_str())).collect();
    let b: BTreeMap<&str, &str> = outputs_b.iter().map(|o| (o.instance_id.as_str(), o.caption.as_str())).collect();
    if a.len() != outputs_a.len() || b.len() != outputs_b.len() {
        return Err(Error::InvalidInput("duplicate instance ids in system outputs".into()));
    }
    let ids_a: BTreeSet<&str> = a.keys().copied().collect();
    let ids_b: BTreeSet<&str> = b.keys().copied().collect();
    let diff: Vec<&str> = ids_a.symmetric_difference(&ids_b).copied().collect();
    if !diff.is_empty() {
        return Err(Error::InvalidInput(format!(
            "system outputs are not aligned; ids present in only one system: {}",
            diff.join(", ")
        )));
    }
    let index = index_manifest(manifest);
    let mut all = Vec::with_capacity(a.len());
    let mut by_category: BTreeMap<Category, Vec<(f64, f64)>> = BTreeMap::new();
    for (id, caption_a) in &a {
        let inst = resolve(&index, id)?;
        let sa = scorer(inst, caption_a)?;
        let sb = scorer(inst, b[id])?;
        if !sa.is_finite() || !sb.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite score for {id}")));
        }
        all.push((sa, sb));
        by_category.entry(inst.category()).or_default().push((sa, sb));
    }
    Ok(WinReport {
        overall: WinShare::from_scores(&all),
        per_category: by_category
            .into_iter()
            .map(|(c, s)| (c, WinShare::from_scores(&s)))
            .collect(),
    })
}
