//! A toy captioner trained with minimum risk training (MRT) against metric
//! rewards, to show how a biased reward shifts gender choices.
//!
//! The policy only decides which gender word to emit. For an image of
//! concept `C` it says "man" with probability
//! `sigmoid((a * s + theta_C) / T)`, where `s` is +1 for man images and -1
//! for woman images: `a` is how strongly the policy looks at the image and
//! `theta_C` is its prior for the concept.
//!
//! One MRT step draws `k` emissions per instance, turns their rewards into
//! softmax weights and ascends the weighted log-likelihood. In logit space
//! the per-instance update is `U - p`, where `U` is the weight mass on the
//! "man" samples and `p` the probability of "man".

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::BootstrapConfig;
use crate::captions::{gender_error_rate, ErrorReport, GenderLexicon, SystemOutput};
use crate::corpus::{build_manifest, render_candidate, synthetic_images, Concept, Gender, Instance};
use crate::embed::clipscore;
use crate::error::{Error, Result};
use crate::fixtures::{synthetic_store, FixtureConfig, PlantedBias, PlantedBiases};
use crate::ngram::{build_idf, cider_d};
use crate::seed::substream;
use crate::tokenize::{tokenize, TokenSeq};

/// Bundled experiment configuration: a woman-favoring reward bias on three
/// concepts and a man-favoring one on a fourth.
pub const BUNDLED_SIM_CONFIG: &str = include_str!("../data/sim_config.json");

/// Two-action gender policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Per-concept prior logits.
    pub theta: BTreeMap<String, f64>,
    /// Weight on the image's true gender.
    pub observation_weight: f64,
    pub temperature: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sign(gender: Gender) -> f64 {
    match gender {
        Gender::Man => 1.0,
        Gender::Woman => -1.0,
    }
}

impl Policy {
    /// A policy with every concept prior at zero.
    pub fn new(concepts: &[Concept], observation_weight: f64, temperature: f64) -> Result<Self> {
        let policy = Policy {
            theta: concepts.iter().map(|c| (c.word().to_string(), 0.0)).collect(),
            observation_weight,
            temperature,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !self.observation_weight.is_finite() || self.theta.values().any(|t| !t.is_finite()) {
            return Err(Error::Config("policy parameters must be finite".into()));
        }
        Ok(())
    }

    fn theta_of(&self, concept: &str) -> Result<f64> {
        self.theta
            .get(concept)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("policy has no parameter for concept {concept:?}")))
    }

    /// Logit of emitting "man" for an image of `gender` with `concept`.
    pub fn logit(&self, concept: &str, gender: Gender) -> Result<f64> {
        Ok((self.observation_weight * sign(gender) + self.theta_of(concept)?) / self.temperature)
    }

    pub fn p_man(&self, concept: &str, gender: Gender) -> Result<f64> {
        Ok(sigmoid(self.logit(concept, gender)?))
    }

    /// Greedy decoding; a zero logit emits "man".
    pub fn greedy(&self, concept: &str, gender: Gender) -> Result<Gender> {
        Ok(if self.logit(concept, gender)? >= 0.0 {
            Gender::Man
        } else {
            Gender::Woman
        })
    }
}

/// Which reward the simulated captioner is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// CLIPScore of the emitted caption on synthetic embeddings carrying the
    /// configured bias offsets.
    ClipscoreLike,
    /// CIDEr-D of the emitted caption against the instance's reference.
    CiderLike,
    /// Sum of the two above.
    Hybrid,
    /// 1 for the correct gender, 0 otherwise.
    Correctness,
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown reward kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    /// Cosine offset added toward the favored gender's caption.
    #[serde(default)]
    pub delta: f64,
    /// Concept word -> gender whose captions the biased reward favors.
    #[serde(default)]
    pub biased_concepts: BTreeMap<String, Gender>,
}

/// Rewards of both possible emissions for each instance, indexed by
/// [`Gender`] (`[man, woman]`).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    values: Vec<[f64; 2]>,
}

impl RewardTable {
    /// Precomputes rewards for `instances`; `seed` drives the synthetic
    /// embeddings of the CLIPScore-like reward.
    pub fn build(instances: &[Instance], spec: &RewardSpec, fixture: &FixtureConfig, seed: u64) -> Result<Self> {
        let clip = match spec.kind {
            RewardKind::ClipscoreLike | RewardKind::Hybrid => Some(clip_rewards(instances, spec, fixture, seed)?),
            _ => None,
        };
        let cider = match spec.kind {
            RewardKind::CiderLike | RewardKind::Hybrid => Some(cider_rewards(instances)?),
            _ => None,
        };
        let values = (0..instances.len())
            .map(|i| match spec.kind {
                RewardKind::ClipscoreLike => clip.as_ref().unwrap()[i],
                RewardKind::CiderLike => cider.as_ref().unwrap()[i],
                RewardKind::Hybrid => {
                    let (c, d) = (clip.as_ref().unwrap()[i], cider.as_ref().unwrap()[i]);
                    [c[0] + d[0], c[1] + d[1]]
                }
                RewardKind::Correctness => {
                    let mut r = [0.0; 2];
                    r[instances[i].gender() as usize] = 1.0;
                    r
                }
            })
            .collect();
        Ok(RewardTable { values })
    }

    /// Rewards from an arbitrary function of (instance, emitted gender).
    pub fn from_fn(instances: &[Instance], f: impl Fn(&Instance, Gender) -> f64) -> Self {
        RewardTable {
            values: instances.iter().map(|i| [f(i, Gender::Man), f(i, Gender::Woman)]).collect(),
        }
    }

    pub fn get(&self, index: usize) -> [f64; 2] {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn clip_rewards(instances: &[Instance], spec: &RewardSpec, fixture: &FixtureConfig, seed: u64) -> Result<Vec<[f64; 2]>> {
    let planted: PlantedBiases = spec
        .biased_concepts
        .iter()
        .map(|(c, &favored)| {
            (
                c.clone(),
                PlantedBias {
                    favored,
                    offset: spec.delta,
                },
            )
        })
        .collect();
    let store = synthetic_store(instances, fixture, &planted, seed)?;
    instances
        .iter()
        .map(|inst| {
            let image = store.image(&inst.image_ref).expect("fixture covers every image");
            let mut r = [0.0; 2];
            for g in Gender::ALL {
                let text = store
                    .text(&render_candidate(g, inst.concept()))
                    .expect("fixture covers every caption");
                r[g as usize] = clipscore(text, image)?.value;
            }
            Ok(r)
        })
        .collect()
}

fn cider_rewards(instances: &[Instance]) -> Result<Vec<[f64; 2]>> {
    let refs: Vec<Vec<TokenSeq>> = instances.iter().map(|i| vec![tokenize(&i.triple.reference)]).collect();
    let idf = build_idf(&refs);
    instances
        .iter()
        .zip(&refs)
        .map(|(inst, r)| {
            let mut out = [0.0; 2];
            for g in Gender::ALL {
                out[g as usize] = cider_d(&tokenize(&render_candidate(g, inst.concept())), r, &idf)?.value;
            }
            Ok(out)
        })
        .collect()
}

/// How each step estimates the MRT update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Draw `k` samples per instance, as in MRT.
    #[default]
    Sampled,
    /// Use the closed-form expectation of the sampled update.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub samples_per_step: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub update: UpdateMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples_per_step: 5,
            learning_rate: 1e-2,
            steps: 500,
            seed: 0,
            update: UpdateMode::Sampled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step < 2 {
            return Err(Error::Config("MRT needs at least 2 samples per step".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter gradient for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    /// With respect to the instance's concept prior.
    pub d_theta: f64,
    /// With respect to the observation weight.
    pub d_a: f64,
}

impl Gradient {
    fn from_logit(g_z: f64, gender: Gender, temperature: f64) -> Gradient {
        Gradient {
            d_theta: g_z / temperature,
            d_a: g_z * sign(gender) / temperature,
        }
    }
}

/// Softmax weights of a set of rewards (temperature 1).
pub fn mrt_weights(rewards: &[f64]) -> Vec<f64> {
    let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = rewards.iter().map(|r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax weight mass on "man" when `m` of `k` samples are "man".
fn man_mass(m: usize, k: usize, r_man: f64, r_woman: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let d = r_woman - r_man;
    // m e^{r_man} / (m e^{r_man} + (k - m) e^{r_woman}), overflow-safe.
    if d <= 0.0 {
        m as f64 / (m as f64 + (k - m) as f64 * d.exp())
    } else {
        m as f64 * (-d).exp() / (m as f64 * (-d).exp() + (k - m) as f64)
    }
}

fn binomial_pmf(k: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; k + 1];
    let mut coeff = 1.0;
    for (m, slot) in pmf.iter_mut().enumerate() {
        if m > 0 {
            coeff = coeff * (k - m + 1) as f64 / m as f64;
        }
        *slot = coeff * p.powi(m as i32) * (1.0 - p).powi((k - m) as i32);
    }
    pmf
}

/// Expected logit-space MRT update `E[U] - p` for `k` samples.
pub fn expected_logit_gradient(p: f64, k: usize, r_man: f64, r_woman: f64) -> f64 {
    binomial_pmf(k, p)
        .iter()
        .enumerate()
        .map(|(m, w)| w * man_mass(m, k, r_man, r_woman))
        .sum::<f64>()
        - p
}

/// One sampled logit-space MRT update `U - p`.
pub fn sampled_logit_gradient<R: Rng + ?Sized>(p: f64, k: usize, r_man: f64, r_woman: f64, rng: &mut R) -> f64 {
    let man: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < p).collect();
    let rewards: Vec<f64> = man.iter().map(|&m| if m { r_man } else { r_woman }).collect();
    let u: f64 = mrt_weights(&rewards)
        .iter()
        .zip(&man)
        .filter(|(_, &m)| m)
        .map(|(w, _)| w)
        .sum();
    u - p
}

fn check_rewards(instance: &Instance, rewards: [f64; 2]) -> Result<()> {
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::Training {
            instance: instance.id.clone(),
            reason: format!("non-finite reward {rewards:?}"),
        });
    }
    Ok(())
}

/// Closed-form expectation of the sampled MRT gradient for one instance,
/// enumerating how many of the `k` samples say "man".
pub fn exact_gradient(policy: &Policy, instance: &Instance, rewards: [f64; 2], k: usize) -> Result<Gradient> {
    check_rewards(instance, rewards)?;
    let p = policy.p_man(instance.concept().word(), instance.gender())?;
    let g = expected_logit_gradient(p, k, rewards[0], rewards[1]);
    Ok(Gradient::from_logit(g, instance.gender(), policy.temperature))
}

/// A single-draw MRT gradient for one instance.
pub fn sampled_gradient<R: Rng + ?Sized>(
    policy: &Policy,
    instance: &Instance,
    rewards: [f64; 2],
    k: usize,
    rng: &mut R,
) -> Result<Gradient> {
    check_rewards(instance, rewards)?;
    let p = policy.p_man(instance.concept().word(), instance.gender())?;
    let g = sampled_logit_gradient(p, k, rewards[0], rewards[1], rng);
    Ok(Gradient::from_logit(g, instance.gender(), policy.temperature))
}

/// The objective whose gradient is [`exact_gradient`].
///
/// With `q = P(man)`, `U(m)` the man weight mass for `m` of `k` samples and
/// `T_m(q) = P(Binomial(k - 1, q) >= m)`:
/// `J(q) = sum_{m=1}^{k-1} k / (m (k - m)) U(m) T_m(q) - sum_{j=1}^{k-1} q^j / j`.
/// Differentiating through `q = sigmoid(z)` gives `E[U] - q`.
pub fn mrt_surrogate(policy: &Policy, instance: &Instance, rewards: [f64; 2], k: usize) -> Result<f64> {
    check_rewards(instance, rewards)?;
    let q = policy.p_man(instance.concept().word(), instance.gender())?;
    let pmf = binomial_pmf(k - 1, q);
    let mut tail = vec![0.0; k + 1];
    for m in (0..k).rev() {
        tail[m] = tail[m + 1] + pmf[m];
    }
    let mut j = 0.0;
    for m in 1..k {
        j += k as f64 / (m * (k - m)) as f64 * man_mass(m, k, rewards[0], rewards[1]) * tail[m];
    }
    for e in 1..k {
        j -= q.powi(e as i32) / e as f64;
    }
    Ok(j)
}

/// One MRT update over `batch`.
///
/// Each concept prior moves by the mean gradient over that concept's
/// instances and the observation weight by the mean over the whole batch,
/// so concepts with few instances are not starved.
pub fn mrt_step<R: Rng + ?Sized>(
    policy: &Policy,
    batch: &[Instance],
    rewards: &RewardTable,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Policy> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("MRT batch is empty".into()));
    }
    if rewards.len() != batch.len() {
        return Err(Error::InvalidInput("reward table does not match batch".into()));
    }
    let mut d_theta: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut d_a = 0.0;
    for (i, inst) in batch.iter().enumerate() {
        let r = rewards.get(i);
        let g = match config.update {
            UpdateMode::Sampled => sampled_gradient(policy, inst, r, config.samples_per_step, rng)?,
            UpdateMode::Exact => exact_gradient(policy, inst, r, config.samples_per_step)?,
        };
        let slot = d_theta.entry(inst.concept().word()).or_insert((0.0, 0));
        slot.0 += g.d_theta;
        slot.1 += 1;
        d_a += g.d_a;
    }
    let mut next = policy.clone();
    for (concept, (sum, n)) in d_theta {
        *next
            .theta
            .get_mut(concept)
            .ok_or_else(|| Error::InvalidInput(format!("policy has no parameter for concept {concept:?}")))? +=
            config.learning_rate * sum / n as f64;
    }
    next.observation_weight += config.learning_rate * d_a / batch.len() as f64;
    Ok(next)
}

/// Per-gender rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByGender {
    pub man: f64,
    pub woman: f64,
}

/// Training-curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: usize,
    /// Greedy gender-error rate over all images.
    pub error_rate: f64,
    /// Greedy gender-error rate on man images and on woman images.
    pub error_rate_by_gender: ByGender,
    /// Probability of the wrong gender under sampling, averaged per gender.
    pub expected_error_by_gender: ByGender,
    /// Mean reward of the greedy captions.
    pub mean_reward: f64,
}

/// Fast greedy evaluation used for training curves.
pub fn snapshot(step: usize, policy: &Policy, instances: &[Instance], rewards: &RewardTable) -> Result<SeriesPoint> {
    let mut errors = [0usize; 2];
    let mut counts = [0usize; 2];
    let mut expected = [0.0f64; 2];
    let mut reward = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let g = inst.gender();
        let word = inst.concept().word();
        let emitted = policy.greedy(word, g)?;
        let p_man = policy.p_man(word, g)?;
        counts[g as usize] += 1;
        errors[g as usize] += usize::from(emitted != g);
        expected[g as usize] += if g == Gender::Man { 1.0 - p_man } else { p_man };
        reward += rewards.get(i)[emitted as usize];
    }
    let rate = |e: f64, n: usize| if n == 0 { 0.0 } else { e / n as f64 };
    Ok(SeriesPoint {
        step,
        error_rate: rate((errors[0] + errors[1]) as f64, counts[0] + counts[1]),
        error_rate_by_gender: ByGender {
            man: rate(errors[0] as f64, counts[0]),
            woman: rate(errors[1] as f64, counts[1]),
        },
        expected_error_by_gender: ByGender {
            man: rate(expected[0], counts[0]),
            woman: rate(expected[1], counts[1]),
        },
        mean_reward: rate(reward, instances.len()),
    })
}

/// Greedy-decoding evaluation of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub errors: ErrorReport,
    pub mean_reward: f64,
}

/// Decodes every instance greedily and runs the captions through
/// [`gender_error_rate`].
pub fn evaluate_policy(
    policy: &Policy,
    instances: &[Instance],
    lexicon: &GenderLexicon,
    rewards: &RewardTable,
    bootstrap: &BootstrapConfig,
) -> Result<PolicyEvaluation> {
    let mut outputs = Vec::with_capacity(instances.len());
    let mut reward = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let emitted = policy.greedy(inst.concept().word(), inst.gender())?;
        reward += rewards.get(i)[emitted as usize];
        outputs.push(SystemOutput {
            instance_id: inst.id.clone(),
            caption: render_candidate(emitted, inst.concept()),
        });
    }
    Ok(PolicyEvaluation {
        errors: gender_error_rate(&outputs, instances, lexicon, bootstrap)?,
        mean_reward: if instances.is_empty() { 0.0 } else { reward / instances.len() as f64 },
    })
}

/// Initial policy parameters; concepts not listed start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyInit {
    pub observation_weight: f64,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

/// A complete simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: usize,
    pub samples_per_step: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub update: UpdateMode,
    pub images_per_cell: usize,
    #[serde(default)]
    pub fixture: FixtureConfig,
    pub policy: PolicyInit,
    pub reward: RewardSpec,
    /// Bootstrap resamples for the confidence intervals of the initial and
    /// final evaluations.
    #[serde(default = "default_bootstrap")]
    pub bootstrap_samples: usize,
}

fn default_bootstrap() -> usize {
    crate::audit::DEFAULT_BOOTSTRAP_SAMPLES
}

impl ExperimentConfig {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_SIM_CONFIG).expect("bundled simulation config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid simulation config: {e}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            samples_per_step: self.samples_per_step,
            learning_rate: self.learning_rate,
            steps: self.steps,
            seed: self.seed,
            update: self.update,
        }
    }
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub initial: PolicyEvaluation,
    #[serde(rename = "final")]
    pub final_eval: PolicyEvaluation,
    pub final_policy: Policy,
    pub series: Vec<SeriesPoint>,
}

impl ExperimentResult {
    pub fn initial_error(&self) -> f64 {
        self.series.first().map_or(0.0, |p| p.error_rate)
    }

    pub fn final_error(&self) -> f64 {
        self.series.last().map_or(0.0, |p| p.error_rate)
    }
}

/// Instances the simulation trains on: every concept and gender with
/// `images_per_cell` synthetic images each.
pub fn simulation_instances(concepts: &[Concept], images_per_cell: usize) -> Result<Vec<Instance>> {
    let images = synthetic_images(concepts, &Gender::ALL, images_per_cell);
    build_manifest(concepts, &Gender::ALL, &images)
}

/// Runs training and records the greedy error after every step.
pub fn run_experiment(config: &ExperimentConfig, concepts: &[Concept]) -> Result<ExperimentResult> {
    let train = config.train_config();
    train.validate()?;
    if config.images_per_cell == 0 {
        return Err(Error::Config("images_per_cell must be positive".into()));
    }
    let instances = simulation_instances(concepts, config.images_per_cell)?;
    for name in config.policy.theta.keys().chain(config.reward.biased_concepts.keys()) {
        if !concepts.iter().any(|c| c.word() == name) {
            return Err(Error::Config(format!("unknown concept {name:?} in simulation config")));
        }
    }
    let rewards = RewardTable::build(&instances, &config.reward, &config.fixture, config.seed)?;
    let mut policy = Policy::new(concepts, config.policy.observation_weight, config.policy.temperature)?;
    for (c, &t) in &config.policy.theta {
        policy.theta.insert(c.clone(), t);
    }
    policy.validate()?;

    let lexicon = GenderLexicon::default();
    let bootstrap = BootstrapConfig {
        samples: config.bootstrap_samples,
        seed: config.seed,
        ..BootstrapConfig::default()
    };
    let initial = evaluate_policy(&policy, &instances, &lexicon, &rewards, &bootstrap)?;
    let mut rng: ChaCha8Rng = substream(config.seed, &["mrt"]);
    let mut series = Vec::with_capacity(config.steps + 1);
    series.push(snapshot(0, &policy, &instances, &rewards)?);
    for step in 1..=config.steps {
        policy = mrt_step(&policy, &instances, &rewards, &train, &mut rng)?;
        policy.validate()?;
        series.push(snapshot(step, &policy, &instances, &rewards)?);
    }
    let final_eval = evaluate_policy(&policy, &instances, &lexicon, &rewards, &bootstrap)?;
    Ok(ExperimentResult {
        config: config.clone(),
        initial,
        final_eval,
        final_policy: policy,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Lexicon;

    fn concepts() -> Vec<Concept> {
        Lexicon::mini().concepts().unwrap()
    }

    #[test]
    fn weights_are_shift_invariant() {
        let a = mrt_weights(&[0.1, 0.5, 0.2]);
        let b = mrt_weights(&[100.1, 100.5, 100.2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_reward_zero_gradient() {
        for p in [0.1, 0.5, 0.93] {
            assert!(expected_logit_gradient(p, 5, 0.7, 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_rewards_do_not_overflow() {
        let g = expected_logit_gradient(0.3, 5, 1000.0, -1000.0);
        assert!((g - (1.0 - 0.7f64.powi(5) - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_goes_to_man() {
        let p = Policy::new(&concepts(), 0.0, 1.0).unwrap();
        assert_eq!(p.greedy("nurse", Gender::Woman).unwrap(), Gender::Man);
    }

    #[test]
    fn degenerate_policies() {
        let cs = concepts();
        let instances = simulation_instances(&cs, 2).unwrap();
        let rewards = RewardTable::from_fn(&instances, |_, _| 0.0);
        let blind = Policy::new(&cs, 0.0, 1.0).unwrap();
        let s = snapshot(0, &blind, &instances, &rewards).unwrap();
        assert_eq!(s.error_rate, 0.5);
        assert_eq!((s.error_rate_by_gender.man, s.error_rate_by_gender.woman), (0.0, 1.0));
        let sharp = Policy::new(&cs, 1e6, 1.0).unwrap();
        assert_eq!(snapshot(0, &sharp, &instances, &rewards).unwrap().error_rate, 0.0);
        let eval = evaluate_policy(&blind, &instances, &GenderLexicon::default(), &rewards, &BootstrapConfig::default())
            .unwrap();
        assert_eq!(eval.errors.rate, Some(0.5));
    }

    #[test]
    fn non_finite_reward_names_instance() {
        let cs = concepts();
        let instances = simulation_instances(&cs, 1).unwrap();
        let bad = instances[3].id.clone();
        let rewards = RewardTable::from_fn(&instances, |i, _| if i.id == bad { f64::NAN } else { 0.0 });
        let policy = Policy::new(&cs, 1.0, 1.0).unwrap();
        let mut rng = substream(0, &["t"]);
        let err = mrt_step(&policy, &instances, &rewards, &TrainConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Training { ref instance, .. } if *instance == bad), "{err}");
    }

    #[test]
    fn correctness_reward_reduces_error() {
        let cs = concepts();
        let instances = simulation_instances(&cs, 3).unwrap();
        let rewards = RewardTable::from_fn(&instances, |i, g| if g == i.gender() { 1.0 } else { 0.0 });
        let mut policy = Policy::new(&cs, 0.5, 1.0).unwrap();
        policy.theta.insert("nurse".into(), -1.0);
        policy.theta.insert("miner".into(), 0.9);
        let before = snapshot(0, &policy, &instances, &rewards).unwrap();
        let config = TrainConfig {
            learning_rate: 1.0,
            update: UpdateMode::Exact,
            ..TrainConfig::default()
        };
        let mut rng = substream(0, &["t"]);
        for _ in 0..200 {
            policy = mrt_step(&policy, &instances, &rewards, &config, &mut rng).unwrap();
        }
        let after = snapshot(0, &policy, &instances, &rewards).unwrap();
        assert!(before.error_rate > 0.0);
        assert_eq!(after.error_rate, 0.0);
    }

    #[test]
    fn bundled_config_parses() {
        let c = ExperimentConfig::bundled();
        assert_eq!(c.samples_per_step, 5);
        assert_eq!(c.steps, 500);
        assert_eq!(c.reward.kind, RewardKind::ClipscoreLike);
        assert!((c.reward.delta - 0.1).abs() < 1e-15);
        assert!("cider_like".parse::<RewardKind>().is_ok());
        assert!("nope".parse::<RewardKind>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn reward_shift_leaves_update_unchanged(
            p in 0.01f64..0.99, rm in -3.0f64..3.0, rw in -3.0f64..3.0, c in -50.0f64..50.0, seed in 0u64..1000,
        ) {
            let a = sampled_logit_gradient(p, 5, rm, rw, &mut substream(seed, &[]));
            let b = sampled_logit_gradient(p, 5, rm + c, rw + c, &mut substream(seed, &[]));
            proptest::prop_assert!((a - b).abs() < 1e-9);
            let ea = expected_logit_gradient(p, 5, rm, rw);
            let eb = expected_logit_gradient(p, 5, rm + c, rw + c);
            proptest::prop_assert!((ea - eb).abs() < 1e-9);
        }
    }
}
