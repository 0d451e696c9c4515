//! Contrastive caption templates and dataset manifests.
//!
//! Every instance pairs an image with three captions built from the same
//! template: a reference (`"a photo of " + good`), a good candidate naming
//! the depicted gender, and a bad candidate that swaps only the gender word.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The mini-lexicon bundled with the crate: six concepts per category.
pub const MINI_LEXICON_JSON: &str = include_str!("../data/mini_lexicon.json");

const REFERENCE_PREFIX: &str = "a photo of ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Man,
    Woman,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Man, Gender::Woman];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Man => "man",
            Gender::Woman => "woman",
        }
    }

    pub fn opposite(self) -> Gender {
        match self {
            Gender::Man => Gender::Woman,
            Gender::Woman => Gender::Man,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "man" => Ok(Gender::Man),
            "woman" => Ok(Gender::Woman),
            other => Err(Error::InvalidInput(format!("unknown gender {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Profession,
    Activity,
    Object,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Profession, Category::Activity, Category::Object];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Profession => "profession",
            Category::Activity => "activity",
            Category::Object => "object",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profession" => Ok(Category::Profession),
            "activity" => Ok(Category::Activity),
            "object" => Ok(Category::Object),
            other => Err(Error::InvalidInput(format!("unknown category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Article {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "an")]
    An,
}

impl Article {
    /// Vowel-initial heuristic: "an" iff the first letter is a, e, i, o or u.
    pub fn for_word(word: &str) -> Article {
        match word.chars().next() {
            Some('a' | 'e' | 'i' | 'o' | 'u') => Article::An,
            _ => Article::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Article::A => "a",
            Article::An => "an",
        }
    }
}

/// A lexicon entry: a profession, activity (gerund form) or object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Concept {
    word: String,
    category: Category,
    article: Option<Article>,
}

impl Concept {
    pub fn new(word: impl Into<String>, category: Category) -> Result<Self> {
        let word = word.into();
        if word.trim().is_empty() {
            return Err(Error::InvalidInput("concept word is empty".into()));
        }
        if word.chars().any(char::is_uppercase) {
            return Err(Error::InvalidInput(format!("concept word {word:?} is not lowercase")));
        }
        Ok(Concept {
            word,
            category,
            article: None,
        })
    }

    /// Overrides the vowel heuristic for this word.
    pub fn with_article(mut self, article: Article) -> Self {
        self.article = Some(article);
        self
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn article(&self) -> Article {
        self.article.unwrap_or_else(|| Article::for_word(&self.word))
    }
}

/// Reference caption plus good and bad candidates for one (gender, concept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionTriple {
    pub reference: String,
    pub good: String,
    pub bad: String,
    pub gender: Gender,
    pub concept: Concept,
}

/// Renders the candidate caption that names `gender`.
pub fn render_candidate(gender: Gender, concept: &Concept) -> String {
    let word = concept.word();
    match concept.category() {
        Category::Profession => format!("a {gender} who is {} {word}", concept.article().as_str()),
        Category::Activity => format!("a {gender} who is {word}"),
        Category::Object => format!("a {gender} with {} {word}", concept.article().as_str()),
    }
}

/// Builds the reference, good and bad captions for an image depicting
/// `gender` with `concept`.
///
/// ```
/// use capbias::corpus::{render_captions, Category, Concept, Gender};
///
/// let nurse = Concept::new("nurse", Category::Profession).unwrap();
/// let t = render_captions(Gender::Man, &nurse);
/// assert_eq!(t.good, "a man who is a nurse");
/// assert_eq!(t.bad, "a woman who is a nurse");
/// assert_eq!(t.reference, "a photo of a man who is a nurse");
/// ```
pub fn render_captions(gender: Gender, concept: &Concept) -> CaptionTriple {
    let good = render_candidate(gender, concept);
    CaptionTriple {
        reference: format!("{REFERENCE_PREFIX}{good}"),
        bad: render_candidate(gender.opposite(), concept),
        good,
        gender,
        concept: concept.clone(),
    }
}

/// One audit atom: an image bound to its caption triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub image_ref: String,
    pub triple: CaptionTriple,
}

impl Instance {
    pub fn gender(&self) -> Gender {
        self.triple.gender
    }

    pub fn concept(&self) -> &Concept {
        &self.triple.concept
    }

    pub fn category(&self) -> Category {
        self.triple.concept.category()
    }
}

pub fn instance_id(concept: &Concept, gender: Gender, ordinal: usize) -> String {
    format!("{}/{}/{}/{}", concept.category(), concept.word(), gender, ordinal)
}

/// The components of an instance id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceKey {
    pub category: Category,
    pub concept: String,
    pub gender: Gender,
    pub ordinal: usize,
}

impl InstanceKey {
    /// Parses `{category}/{concept}/{gender}/{ordinal}`.
    ///
    /// ```
    /// use capbias::corpus::{Gender, InstanceKey};
    ///
    /// let key = InstanceKey::parse("profession/nurse/woman/3").unwrap();
    /// assert_eq!((key.concept.as_str(), key.gender, key.ordinal), ("nurse", Gender::Woman, 3));
    /// ```
    pub fn parse(id: &str) -> Result<InstanceKey> {
        let bad = || Error::InvalidInput(format!("malformed instance id {id:?}"));
        let (category, rest) = id.split_once('/').ok_or_else(bad)?;
        let (rest, ordinal) = rest.rsplit_once('/').ok_or_else(bad)?;
        let (concept, gender) = rest.rsplit_once('/').ok_or_else(bad)?;
        if concept.is_empty() {
            return Err(bad());
        }
        Ok(InstanceKey {
            category: category.parse().map_err(|_| bad())?,
            concept: concept.to_string(),
            gender: gender.parse().map_err(|_| bad())?,
            ordinal: ordinal.parse().map_err(|_| bad())?,
        })
    }
}

/// Parsed lexicon file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    pub professions: Vec<String>,
    #[serde(default)]
    pub activities: Vec<String>,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub article_overrides: BTreeMap<String, Article>,
}

impl Lexicon {
    pub fn mini() -> Lexicon {
        serde_json::from_str(MINI_LEXICON_JSON).expect("bundled lexicon parses")
    }

    pub fn from_json(text: &str) -> Result<Lexicon> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path)?;
        Lexicon::from_json(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    /// Concepts in file order: professions, then activities, then objects.
    pub fn concepts(&self) -> Result<Vec<Concept>> {
        let groups = [
            (Category::Profession, &self.professions),
            (Category::Activity, &self.activities),
            (Category::Object, &self.objects),
        ];
        let mut out = Vec::new();
        for (category, words) in groups {
            for word in words {
                let mut concept = Concept::new(word.clone(), category)?;
                if let Some(article) = self.article_overrides.get(word) {
                    concept = concept.with_article(*article);
                }
                out.push(concept);
            }
        }
        Ok(out)
    }
}

/// Image references per (concept word, gender).
pub type ImageMap = BTreeMap<(String, Gender), Vec<String>>;

/// Parses the images file: `{"concept": {"man": [...], "woman": [...]}}`.
pub fn parse_image_map(text: &str) -> Result<ImageMap> {
    let raw: BTreeMap<String, BTreeMap<Gender, Vec<String>>> = serde_json::from_str(text)?;
    Ok(raw
        .into_iter()
        .flat_map(|(concept, by_gender)| {
            by_gender
                .into_iter()
                .map(move |(gender, refs)| ((concept.clone(), gender), refs))
        })
        .collect())
}

/// Generates `per_cell` placeholder image references for every pair.
pub fn synthetic_images(concepts: &[Concept], genders: &[Gender], per_cell: usize) -> ImageMap {
    let mut map = ImageMap::new();
    for concept in concepts {
        for &gender in genders {
            let refs = (0..per_cell)
                .map(|i| format!("synthetic/{}/{}/{}", concept.word(), gender, i))
                .collect();
            map.insert((concept.word().to_owned(), gender), refs);
        }
    }
    map
}

/// Crosses the lexicon with the genders and binds every image reference.
///
/// Output order follows `concepts`, then `genders`, then each image list, so
/// identical inputs give identical manifests.
pub fn build_manifest(concepts: &[Concept], genders: &[Gender], images: &ImageMap) -> Result<Vec<Instance>> {
    let known: BTreeSet<&str> = concepts.iter().map(Concept::word).collect();
    let unknown: Vec<String> = images
        .keys()
        .filter(|(word, _)| !known.contains(word.as_str()))
        .map(|(word, _)| word.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::InvalidInput(format!(
            "images reference concepts missing from the lexicon: {}",
            unknown.join(", ")
        )));
    }

    let mut problems = Vec::new();
    let mut instances = Vec::new();
    for concept in concepts {
        for &gender in genders {
            let Some(refs) = images.get(&(concept.word().to_owned(), gender)) else {
                continue;
            };
            let mut seen = BTreeSet::new();
            let mut dups = BTreeSet::new();
            for r in refs {
                if !seen.insert(r.as_str()) {
                    dups.insert(r.as_str());
                }
                if r.is_empty() {
                    problems.push(format!("empty image_ref for ({gender}, {})", concept.word()));
                }
            }
            for d in dups {
                problems.push(format!("duplicate image_ref {d:?} for ({gender}, {})", concept.word()));
            }
            let triple = render_captions(gender, concept);
            instances.extend(refs.iter().enumerate().map(|(ordinal, r)| Instance {
                id: instance_id(concept, gender, ordinal),
                image_ref: r.clone(),
                triple: triple.clone(),
            }));
        }
    }
    if problems.is_empty() {
        Ok(instances)
    } else {
        Err(Error::Validation(problems))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateId,
    TemplateViolation,
    EmptyImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub instance_id: String,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FindingKind::DuplicateId => "duplicate id",
            FindingKind::TemplateViolation => "template violation",
            FindingKind::EmptyImageRef => "empty image_ref",
        };
        write!(f, "{kind} [{}]: {}", self.instance_id, self.detail)
    }
}

/// Per-concept image counts by gender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub category: Category,
    pub concept: String,
    pub man: usize,
    pub woman: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub counts: Vec<CellCount>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, concept: &str, gender: Gender) -> Option<usize> {
        self.counts.iter().find(|c| c.concept == concept).map(|c| match gender {
            Gender::Man => c.man,
            Gender::Woman => c.woman,
        })
    }
}

fn template_problem(triple: &CaptionTriple) -> Option<String> {
    if triple.reference != format!("{REFERENCE_PREFIX}{}", triple.good) {
        return Some("reference is not \"a photo of \" + good".into());
    }
    let good: Vec<&str> = triple.good.split_whitespace().collect();
    let bad: Vec<&str> = triple.bad.split_whitespace().collect();
    if good.len() != bad.len() {
        return Some("good and bad captions differ in length".into());
    }
    let diffs: Vec<usize> = (0..good.len()).filter(|&i| good[i] != bad[i]).collect();
    match diffs.as_slice() {
        [i] if good[*i] == triple.gender.as_str() && bad[*i] == triple.gender.opposite().as_str() => None,
        [_] => Some("differing word is not the expected gender swap".into()),
        [] => Some("bad caption equals good caption".into()),
        _ => Some(format!("good and bad captions differ in {} words", diffs.len())),
    }
}

/// Checks ids, templates and image references, and tabulates per-cell counts.
pub fn validate_manifest(instances: &[Instance]) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen = HashMap::new();
    for inst in instances {
        if seen.insert(inst.id.as_str(), ()).is_some() {
            findings.push(Finding {
                kind: FindingKind::DuplicateId,
                instance_id: inst.id.clone(),
                detail: "id appears more than once".into(),
            });
        }
        if inst.image_ref.is_empty() {
            findings.push(Finding {
                kind: FindingKind::EmptyImageRef,
                instance_id: inst.id.clone(),
                detail: "image_ref is empty".into(),
            });
        }
        if let Some(detail) = template_problem(&inst.triple) {
            findings.push(Finding {
                kind: FindingKind::TemplateViolation,
                instance_id: inst.id.clone(),
                detail,
            });
        }
    }

    let mut order: Vec<(Category, String)> = Vec::new();
    let mut tally: HashMap<(Category, String), (usize, usize)> = HashMap::new();
    for inst in instances {
        let key = (inst.category(), inst.concept().word().to_owned());
        let cell = tally.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, 0)
        });
        match inst.gender() {
            Gender::Man => cell.0 += 1,
            Gender::Woman => cell.1 += 1,
        }
    }
    let counts = order
        .into_iter()
        .map(|key| {
            let (man, woman) = tally[&key];
            CellCount {
                category: key.0,
                concept: key.1,
                man,
                woman,
            }
        })
        .collect();
    ValidationReport { findings, counts }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub category: Category,
    pub concept: String,
    pub gender: Gender,
    pub image_ref: String,
    pub reference: String,
    pub good: String,
    pub bad: String,
}

impl From<&Instance> for ManifestRecord {
    fn from(inst: &Instance) -> Self {
        ManifestRecord {
            id: inst.id.clone(),
            category: inst.category(),
            concept: inst.concept().word().to_owned(),
            gender: inst.gender(),
            image_ref: inst.image_ref.clone(),
            reference: inst.triple.reference.clone(),
            good: inst.triple.good.clone(),
            bad: inst.triple.bad.clone(),
        }
    }
}

impl TryFrom<ManifestRecord> for Instance {
    type Error = Error;

    fn try_from(r: ManifestRecord) -> Result<Self> {
        let concept = Concept::new(r.concept, r.category)?;
        Ok(Instance {
            id: r.id,
            image_ref: r.image_ref,
            triple: CaptionTriple {
                reference: r.reference,
                good: r.good,
                bad: r.bad,
                gender: r.gender,
                concept,
            },
        })
    }
}

pub fn write_manifest<W: Write>(mut out: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, &ManifestRecord::from(inst))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<Instance>> {
    crate::jsonl::read_lines::<_, ManifestRecord>(input)?
        .into_iter()
        .map(Instance::try_from)
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<Instance>> {
    let file = std::fs::File::open(path)?;
    read_manifest(std::io::BufReader::new(file)).map_err(|e| Error::load(path, e.to_string()))
}

/// The bundled lexicon crossed with both genders, `per_cell` synthetic images
/// per pair.
pub fn mini_manifest(per_cell: usize) -> Vec<Instance> {
    let concepts = Lexicon::mini().concepts().expect("bundled lexicon is valid");
    let images = synthetic_images(&concepts, &Gender::ALL, per_cell);
    build_manifest(&concepts, &Gender::ALL, &images).expect("synthetic manifest is valid")
}
