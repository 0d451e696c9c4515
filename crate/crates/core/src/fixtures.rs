//! Synthetic embedding stores with controlled, optionally planted, gender
//! bias.
//!
//! For every concept the two candidate captions ("a man ...", "a woman ...")
//! get text vectors with a fixed mutual cosine. Every image gets a vector
//! whose cosine with the correct-gender caption is `base + gap + noise` and
//! with the wrong-gender caption `base + noise`. A planted offset adds a
//! constant to the cosine between every image of a concept and the favored
//! gender's caption, so a CLIPScore audit should flag exactly the planted
//! concepts.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{render_candidate, Concept, Gender, Instance};
use crate::embed::{image_key, text_key, Embedding, EmbeddingStore};
use crate::error::{Error, Result};
use crate::seed::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub dim: usize,
    /// Cosine between the man and woman caption vectors of one concept.
    pub text_cosine: f64,
    /// Baseline image-caption cosine.
    pub base_cosine: f64,
    /// Extra cosine with the correct-gender caption.
    pub correct_gap: f64,
    /// Standard deviation of per-image cosine noise.
    pub noise_sd: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            dim: 64,
            text_cosine: 0.9,
            base_cosine: 0.3,
            correct_gap: 0.02,
            noise_sd: 0.03,
        }
    }
}

/// A planted cosine offset toward one gender's caption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedBias {
    pub favored: Gender,
    pub offset: f64,
}

/// Concept word -> planted bias.
pub type PlantedBiases = BTreeMap<String, PlantedBias>;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along the orthonormal `basis` and
/// normalizes; `None` if nothing is left.
fn orthonormalize(mut v: Vec<f64>, basis: &[&[f64]]) -> Option<Vec<f64>> {
    for b in basis {
        let d = dot(&v, b);
        v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= d * y);
    }
    let norm = dot(&v, &v).sqrt();
    (norm > 1e-8).then(|| v.into_iter().map(|x| x / norm).collect())
}

fn fresh_direction(rng: &mut ChaCha8Rng, basis: &[&[f64]]) -> Vec<f64> {
    loop {
        if let Some(v) = orthonormalize(random_unit(rng, basis[0].len()), basis) {
            return v;
        }
    }
}

/// Text vectors of one concept: an orthonormal pair `(e1, e2)` plus the
/// man and woman caption vectors expressed in it.
struct ConceptFrame {
    e1: Vec<f64>,
    e2: Vec<f64>,
    text_cosine: f64,
}

impl ConceptFrame {
    fn new(rng: &mut ChaCha8Rng, dim: usize, text_cosine: f64) -> Self {
        let e1 = random_unit(rng, dim);
        let e2 = fresh_direction(rng, &[&e1]);
        ConceptFrame { e1, e2, text_cosine }
    }

    fn text(&self, gender: Gender) -> Vec<f64> {
        match gender {
            Gender::Man => self.e1.clone(),
            Gender::Woman => {
                let s = (1.0 - self.text_cosine * self.text_cosine).sqrt();
                self.e1.iter().zip(&self.e2).map(|(a, b)| self.text_cosine * a + s * b).collect()
            }
        }
    }

    /// A unit vector with the requested cosines to the man and woman text
    /// vectors; the remaining mass goes to a fresh random direction.
    fn image(&self, rng: &mut ChaCha8Rng, cos_man: f64, cos_woman: f64) -> Result<Vec<f64>> {
        let rho = self.text_cosine;
        let alpha = cos_man;
        let beta = (cos_woman - rho * cos_man) / (1.0 - rho * rho).sqrt();
        let rest = 1.0 - alpha * alpha - beta * beta;
        if rest < 0.0 {
            return Err(Error::Config(format!(
                "cosines ({cos_man:.3}, {cos_woman:.3}) are not realizable with text cosine {rho}"
            )));
        }
        let e3 = fresh_direction(rng, &[&self.e1, &self.e2]);
        let gamma = rest.sqrt();
        Ok((0..self.e1.len())
            .map(|i| alpha * self.e1[i] + beta * self.e2[i] + gamma * e3[i])
            .collect())
    }
}

/// Cosines an image should have with the man and woman captions.
fn target_cosines(
    rng: &mut ChaCha8Rng,
    config: &FixtureConfig,
    truth: Gender,
    planted: Option<&PlantedBias>,
) -> Result<[f64; 2]> {
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut cos = [config.base_cosine + noise.sample(rng), config.base_cosine + noise.sample(rng)];
    cos[truth as usize] += config.correct_gap;
    if let Some(p) = planted {
        cos[p.favored as usize] += p.offset;
    }
    Ok(cos)
}

/// Builds text and image embeddings for every instance.
///
/// The result depends only on `seed`, the instance ids and the
/// configuration, not on instance order.
pub fn synthetic_store(
    instances: &[Instance],
    config: &FixtureConfig,
    planted: &PlantedBiases,
    seed: u64,
) -> Result<EmbeddingStore> {
    if config.dim < 3 {
        return Err(Error::Config("fixture dimension must be at least 3".into()));
    }
    if !(config.noise_sd >= 0.0) || !(config.text_cosine.abs() < 1.0) {
        return Err(Error::Config("invalid fixture parameters".into()));
    }
    let mut concepts: BTreeMap<&str, &Concept> = BTreeMap::new();
    for inst in instances {
        concepts.insert(inst.concept().word(), inst.concept());
    }
    let mut frames = BTreeMap::new();
    let mut store = EmbeddingStore::new(config.dim);
    for (word, concept) in &concepts {
        let mut rng = substream(seed, &["fixture-text", word]);
        let frame = ConceptFrame::new(&mut rng, config.dim, config.text_cosine);
        for g in Gender::ALL {
            store.insert(Embedding::new(text_key(&render_candidate(g, concept)), frame.text(g))?)?;
        }
        frames.insert(*word, frame);
    }
    let mut seen_images = std::collections::BTreeSet::new();
    for inst in instances {
        if !seen_images.insert(inst.image_ref.as_str()) {
            continue;
        }
        let word = inst.concept().word();
        let mut rng = substream(seed, &["fixture-image", &inst.id]);
        let cos = target_cosines(&mut rng, config, inst.gender(), planted.get(word))?;
        let v = frames[word].image(&mut rng, cos[0], cos[1])?;
        store.insert(Embedding::new(image_key(&inst.image_ref), v)?)?;
    }
    Ok(store)
}

/// Picks `count` concepts to plant, alternating the favored gender.
pub fn choose_planted(concepts: &[Concept], count: usize, offset: f64, seed: u64) -> Result<PlantedBiases> {
    if count > concepts.len() {
        return Err(Error::Config(format!(
            "cannot plant {count} biases among {} concepts",
            concepts.len()
        )));
    }
    let mut rng = substream(seed, &["fixture-planted"]);
    let mut words: Vec<&str> = concepts.iter().map(|c| c.word()).collect();
    // Partial Fisher-Yates: the first `count` entries become the sample.
    for i in 0..count {
        let j = rng.random_range(i..words.len());
        words.swap(i, j);
    }
    Ok(words[..count]
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let favored = if i % 2 == 0 { Gender::Woman } else { Gender::Man };
            (w.to_string(), PlantedBias { favored, offset })
        })
        .collect())
}
