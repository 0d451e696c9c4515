//! Acceptance checks, one test per criterion. Each test prints a single
//! `AC-n PASS|FAIL` line with the measured values before asserting.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use capbias::audit::{bootstrap_p_value, run_audit, AuditConfig, BiasLabel, BootstrapConfig, ScoreRecord};
use capbias::captions::{
    compare_systems, correct_caption, gender_error_rate, CorrectionOutcome, GenderLexicon, SystemOutput,
};
use capbias::corpus::{build_manifest, mini_manifest, synthetic_images, Concept, Gender, Lexicon};
use capbias::correlation::{concordance_difference, kendall_tau_c, JudgedPair};
use capbias::embed::{HybridScore, HybridWeights};
use capbias::fixtures::{choose_planted, synthetic_store, FixtureConfig};
use capbias::metric::Metric;
use capbias::ngram::bleu4;
use capbias::rl::{exact_gradient, mrt_surrogate, run_experiment, sampled_gradient, ExperimentConfig, Policy, RewardKind};
use capbias::score::{score_instances, Scorer};
use capbias::tokenize::tokenize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: &str, pass: bool, detail: String) {
    println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}

#[test]
fn ac1_ngram_ordering_soundness() {
    let start = Instant::now();
    let manifest = mini_manifest(5);
    let concepts: BTreeSet<&str> = manifest.iter().map(|i| i.concept().word()).collect();
    let scorer = Scorer::for_manifest(&manifest, None, HybridWeights::default());
    let records = score_instances(&scorer, &manifest, &Metric::NGRAM).unwrap();
    let losses = records.iter().filter(|r| !r.win()).count();
    let report = run_audit(&records, &AuditConfig::default()).unwrap();
    let percents: Vec<f64> = report.metrics.iter().map(|m| m.summary.overall.percent).collect();
    let elapsed = start.elapsed();
    let pass = concepts.len() >= 18
        && losses == 0
        && report.metrics.len() == 4
        && percents.iter().all(|&p| p == 0.0)
        && elapsed < Duration::from_secs(10);
    verdict(
        "AC-1",
        pass,
        format!(
            "{} concepts, {} records, {losses} non-wins, biased % {percents:?}, {elapsed:.2?}",
            concepts.len(),
            records.len()
        ),
    );
}

#[test]
fn ac2_reference_value_anchors() {
    let refs = [tokenize("a photo of a woman who is a doctor")];
    let good = bleu4(&tokenize("a woman who is a doctor"), &refs).unwrap().value;
    let bad = bleu4(&tokenize("a man who is a doctor"), &refs).unwrap().value;
    let h1 = HybridScore::from_parts(0.6699, 7.0039).total;
    let h2 = HybridScore::from_parts(0.7119, 2.9982).total;
    let four = |x: f64, target: f64| (x - target).abs() < 5e-5;
    let pass = four(good, 0.6065) && four(bad, 0.3259) && four(h1, 7.6738) && four(h2, 3.7101);
    verdict(
        "AC-2",
        pass,
        format!("bleu4 good {good:.6} bad {bad:.6}; hybrid {h1:.6} {h2:.6}"),
    );
}

fn twenty_concepts() -> Vec<Concept> {
    let lexicon = Lexicon {
        professions: ["accountant", "chef", "doctor", "engineer", "nurse", "miner", "pilot"]
            .map(String::from)
            .to_vec(),
        activities: ["cooking", "dancing", "praying", "reading", "washing", "jumping", "skiing"]
            .map(String::from)
            .to_vec(),
        objects: ["apron", "basketball", "necklace", "umbrella", "guitar", "laptop"]
            .map(String::from)
            .to_vec(),
        ..Lexicon::default()
    };
    lexicon.concepts().unwrap()
}

#[test]
fn ac3_planted_bias_detection() {
    let start = Instant::now();
    let seed = 20;
    let concepts = twenty_concepts();
    let images = synthetic_images(&concepts, &Gender::ALL, 200);
    let manifest = build_manifest(&concepts, &Gender::ALL, &images).unwrap();
    let planted = choose_planted(&concepts, 5, 0.05, seed).unwrap();
    let store = synthetic_store(&manifest, &FixtureConfig::default(), &planted, seed).unwrap();
    let scorer = Scorer::for_manifest(&manifest, Some(&store), HybridWeights::default());
    let records = score_instances(&scorer, &manifest, &[Metric::ClipScore]).unwrap();
    let config = AuditConfig {
        bootstrap: BootstrapConfig {
            samples: 10_000,
            alpha: 0.05,
            seed,
        },
        ..AuditConfig::default()
    };
    let report = run_audit(&records, &config).unwrap();
    let audit = report.metric(Metric::ClipScore).unwrap();
    let mut missed = Vec::new();
    let mut false_positives = Vec::new();
    for v in &audit.verdicts {
        match planted.get(&v.concept) {
            Some(p) => {
                let expected = match p.favored {
                    Gender::Man => BiasLabel::ManBiased,
                    Gender::Woman => BiasLabel::WomanBiased,
                };
                if v.label != expected {
                    missed.push(v.concept.clone());
                }
            }
            None if v.label.is_biased() => false_positives.push(v.concept.clone()),
            None => {}
        }
    }
    let elapsed = start.elapsed();
    let pass = concepts.len() == 20
        && audit.verdicts.len() == 20
        && missed.is_empty()
        && false_positives.len() <= 2
        && elapsed < Duration::from_secs(60);
    verdict(
        "AC-3",
        pass,
        format!(
            "planted {:?}, missed {missed:?}, false positives {false_positives:?}, {elapsed:.2?}",
            planted.keys().collect::<Vec<_>>()
        ),
    );
}

#[test]
fn ac4_bootstrap_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 500;
    let n = 100;
    let mut rejections = 0;
    for _ in 0..trials {
        let wins_man = (0..n).filter(|_| rng.random::<f64>() < 0.8).count();
        let wins_woman = (0..n).filter(|_| rng.random::<f64>() < 0.8).count();
        let p = bootstrap_p_value(wins_man, n, wins_woman, n, 10_000, &mut rng).unwrap();
        if p < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    verdict(
        "AC-4",
        (0.02..=0.08).contains(&rate),
        format!("null rejection rate {rate:.3} ({rejections}/{trials})"),
    );
}

#[test]
fn ac5_rl_amplification_trend() {
    let start = Instant::now();
    let concepts = Lexicon::mini().concepts().unwrap();
    let biased = ExperimentConfig::bundled();
    assert_eq!(biased.reward.kind, RewardKind::ClipscoreLike);
    assert_eq!((biased.samples_per_step, biased.steps), (5, 500));
    assert_eq!(biased.reward.delta, 0.1);
    let up = run_experiment(&biased, &concepts).unwrap();
    let mut aligned = biased.clone();
    aligned.reward.kind = RewardKind::Correctness;
    let down = run_experiment(&aligned, &concepts).unwrap();
    let elapsed = start.elapsed();
    let rise = up.final_error() - up.initial_error();
    let pass = up.final_error() > up.initial_error()
        && rise >= 0.02
        && down.final_error() < down.initial_error()
        && elapsed < Duration::from_secs(30);
    verdict(
        "AC-5",
        pass,
        format!(
            "biased reward {:.4} -> {:.4} (+{:.2}pp); correctness reward {:.4} -> {:.4}; {elapsed:.2?}",
            up.initial_error(),
            up.final_error(),
            100.0 * rise,
            down.initial_error(),
            down.final_error()
        ),
    );
}

#[test]
fn ac6_gradient_check() {
    let manifest = mini_manifest(1);
    let concepts = Lexicon::mini().concepts().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k = 5;
    let h = 1e-5;
    let mut worst_fd = 0.0f64;
    for _ in 0..100 {
        let inst = &manifest[rng.random_range(0..manifest.len())];
        let word = inst.concept().word().to_owned();
        let mut policy = Policy::new(&concepts, rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0)).unwrap();
        policy.theta.insert(word.clone(), rng.random_range(-3.0..3.0));
        let base = rng.random_range(0.0..1.0);
        let delta = rng.random_range(0.01..1.0);
        let rewards = [base + delta, base];
        let g = exact_gradient(&policy, inst, rewards, k).unwrap();
        let j = |p: &Policy| mrt_surrogate(p, inst, rewards, k).unwrap();
        let shifted = |dt: f64, da: f64| {
            let mut p = policy.clone();
            *p.theta.get_mut(&word).unwrap() += dt;
            p.observation_weight += da;
            p
        };
        let fd_theta = (j(&shifted(h, 0.0)) - j(&shifted(-h, 0.0))) / (2.0 * h);
        let fd_a = (j(&shifted(0.0, h)) - j(&shifted(0.0, -h))) / (2.0 * h);
        for (exact, fd) in [(g.d_theta, fd_theta), (g.d_a, fd_a)] {
            worst_fd = worst_fd.max((exact - fd).abs() / exact.abs());
        }
    }

    let mut worst_z = 0.0f64;
    for _ in 0..10 {
        let inst = &manifest[rng.random_range(0..manifest.len())];
        let mut policy = Policy::new(&concepts, rng.random_range(-2.0..2.0), 1.0).unwrap();
        policy
            .theta
            .insert(inst.concept().word().to_owned(), rng.random_range(-2.0..2.0));
        let rewards = [0.5, 0.5 + rng.random_range(-1.0..1.0)];
        let exact = exact_gradient(&policy, inst, rewards, k).unwrap().d_theta;
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sampled_gradient(&policy, inst, rewards, k, &mut rng).unwrap().d_theta)
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        worst_z = worst_z.max((mean - exact).abs() / se);
    }
    verdict(
        "AC-6",
        worst_fd <= 1e-6 && worst_z <= 3.0,
        format!("max FD relative error {worst_fd:.2e}; max Monte Carlo |z| {worst_z:.2}"),
    );
}

fn brute_difference(pairs: &[JudgedPair]) -> i128 {
    let mut d = 0i128;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let a = pairs[i].metric_score.partial_cmp(&pairs[j].metric_score).unwrap() as i128;
            let b = pairs[i].human_rating.cmp(&pairs[j].human_rating) as i128;
            d += a * b;
        }
    }
    d
}

fn brute_tau_c(pairs: &[JudgedPair]) -> f64 {
    let ratings: BTreeSet<i64> = pairs.iter().map(|p| p.human_rating).collect();
    let scores: BTreeSet<u64> = pairs.iter().map(|p| p.metric_score.to_bits()).collect();
    let m = ratings.len().min(scores.len()) as f64;
    let n = pairs.len() as f64;
    100.0 * 2.0 * m * brute_difference(pairs) as f64 / (n * n * (m - 1.0))
}

#[test]
fn ac7_tau_c_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let pairs: Vec<JudgedPair> = loop {
            let pairs: Vec<JudgedPair> = (0..n)
                .map(|_| JudgedPair::new(rng.random_range(0..40) as f64 / 8.0, rng.random_range(1..=4)))
                .collect();
            if kendall_tau_c(&pairs).is_ok() {
                break pairs;
            }
        };
        let fast = kendall_tau_c(&pairs).unwrap();
        if concordance_difference(&pairs).unwrap() != brute_difference(&pairs) || fast != brute_tau_c(&pairs) {
            mismatches += 1;
        }
    }
    let grid = |reversed: bool| -> Vec<JudgedPair> {
        (0..16)
            .map(|i| {
                let level = i / 4 + 1;
                let score = if reversed { -(level as f64) } else { level as f64 };
                JudgedPair::new(score, level as i64)
            })
            .collect()
    };
    let up = kendall_tau_c(&grid(false)).unwrap();
    let down = kendall_tau_c(&grid(true)).unwrap();
    let pass = mismatches == 0 && (up - 93.75).abs() < 1e-9 && (down + 93.75).abs() < 1e-9;
    verdict(
        "AC-7",
        pass,
        format!("{mismatches}/50 oracle mismatches; balanced 4x4 grid {up} / {down} (expected 93.75 / -93.75)"),
    );
}

fn fuzz_caption(rng: &mut ChaCha8Rng, concept: &str) -> String {
    const SUBJECTS: [&str; 12] = [
        "man", "woman", "Man", "WOMAN", "person", "boy", "girl", "lady", "man,", "woman.", "child", "he",
    ];
    const OPENERS: [&str; 4] = ["a", "A", "the", "one"];
    const EXTRAS: [&str; 6] = ["", " with his dog", " near her bag", " outside", " and a woman", " at night."];
    format!(
        "{} {} {} {}{}",
        OPENERS[rng.random_range(0..OPENERS.len())],
        SUBJECTS[rng.random_range(0..SUBJECTS.len())],
        ["holding", "next to", "using"][rng.random_range(0..3)],
        concept,
        EXTRAS[rng.random_range(0..EXTRAS.len())]
    )
}

#[test]
fn ac8_caption_analysis_contracts() {
    let lexicon = GenderLexicon::default();
    let manifest: Vec<_> = mini_manifest(14).into_iter().take(500).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let outputs: Vec<SystemOutput> = manifest
        .iter()
        .map(|i| SystemOutput {
            instance_id: i.id.clone(),
            caption: fuzz_caption(&mut rng, i.concept().word()),
        })
        .collect();
    let mut idempotent = true;
    let mut applicable = Vec::new();
    let mut applicable_manifest = Vec::new();
    for (o, inst) in outputs.iter().zip(&manifest) {
        let once = correct_caption(&o.caption, inst.gender(), &lexicon);
        let twice = correct_caption(&once.caption, inst.gender(), &lexicon);
        idempotent &= twice.caption == once.caption;
        if once.outcome != CorrectionOutcome::NotApplicable {
            applicable.push(SystemOutput {
                instance_id: o.instance_id.clone(),
                caption: once.caption,
            });
            applicable_manifest.push(inst.clone());
        }
    }
    let bootstrap = BootstrapConfig {
        samples: 1000,
        ..BootstrapConfig::default()
    };
    let before = gender_error_rate(&outputs, &manifest, &lexicon, &bootstrap).unwrap();
    let after = gender_error_rate(&applicable, &applicable_manifest, &lexicon, &bootstrap).unwrap();

    let scorer = Scorer::for_manifest(&manifest, None, HybridWeights::default());
    let other: Vec<SystemOutput> = manifest
        .iter()
        .map(|i| SystemOutput {
            instance_id: i.id.clone(),
            caption: i.triple.good.clone(),
        })
        .collect();
    let wins = compare_systems(&outputs, &other, &manifest, |inst, caption| {
        scorer.score(Metric::CiderD, caption, &[tokenize(&inst.triple.reference)], &inst.image_ref)
    })
    .unwrap();
    let mut sums = vec![wins.overall.win_a + wins.overall.win_b];
    sums.extend(wins.per_category.values().map(|w| w.win_a + w.win_b));

    let records = score_instances(&scorer, &mini_manifest(20), &[Metric::CiderD]).unwrap();
    // Mix in losses so verdicts are not trivially neutral.
    let records: Vec<ScoreRecord> = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let worse = i % 3 == 0 || (r.instance_id.contains("/woman/") && i % 5 == 0);
            let (g, b) = if worse { (r.score_bad, r.score_good) } else { (r.score_good, r.score_bad) };
            ScoreRecord::new(r.instance_id, r.metric, g, b).unwrap()
        })
        .collect();
    let config = AuditConfig {
        bootstrap: BootstrapConfig {
            samples: 2000,
            ..BootstrapConfig::default()
        },
        ..AuditConfig::default()
    };
    let baseline = run_audit(&records, &config).unwrap();
    let mut invariant = 0;
    for t in 0..20 {
        let scale = rng.random_range(0.1..10.0);
        let shift = rng.random_range(-5.0..5.0);
        let power = rng.random_range(0.5..3.0);
        let f = |x: f64| -> f64 {
            match t % 3 {
                0 => scale * x + shift,
                1 => (x + 1.0).powf(power) + shift,
                _ => (scale * x).exp() + shift,
            }
        };
        let transformed: Vec<ScoreRecord> = records
            .iter()
            .map(|r| ScoreRecord::new(r.instance_id.clone(), r.metric, f(r.score_good), f(r.score_bad)).unwrap())
            .collect();
        let again = run_audit(&transformed, &config).unwrap();
        if again.metrics[0].verdicts == baseline.metrics[0].verdicts {
            invariant += 1;
        }
    }

    let pass = idempotent
        && !applicable.is_empty()
        && after.errors == 0
        && after.rate == Some(0.0)
        && sums.iter().all(|&s| s == 100.0)
        && invariant == 20;
    verdict(
        "AC-8",
        pass,
        format!(
            "idempotent {idempotent}; error rate {:?} -> {:?} on {} applicable of {}; win sums {sums:?}; {invariant}/20 transforms invariant",
            before.rate,
            after.rate,
            applicable.len(),
            outputs.len()
        ),
    );
}

fn capbias(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_capbias"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "capbias {args:?} exited with {status}");
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap())
        .map(|n| n.to_string())
        .collect()
}

#[test]
fn ac9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    capbias(&["build-manifest", "--images-per-cell", "20", "--synthetic-embeddings", "--plant", "3", "--seed", "9", "--out", &d("m")]);
    let manifest = d("m/manifest.jsonl");
    let embeddings = d("m/embeddings.json");
    let audit = |threads: &str, out: &str| {
        capbias(&[
            "--threads", threads, "audit", "--manifest", &manifest, "--embeddings", &embeddings, "--seed", "5",
            "--bootstrap-samples", "2000", "--out", out,
        ])
    };
    audit("1", &d("a1"));
    audit("8", &d("a8"));
    audit("8", &d("a8b"));
    let sim = |threads: &str, out: &str| capbias(&["--threads", threads, "simulate-rl", "--seed", "11", "--out", out]);
    sim("1", &d("s1"));
    sim("8", &d("s8"));
    sim("8", &d("s8b"));

    let audit_files = ["audit.json", "scores.jsonl", "run.json", "report/report.json", "report/tables.txt"];
    let sim_files = ["simulation.json", "run.json"];
    let mut diffs = Vec::new();
    for (a, b) in [("a1", "a8"), ("a8", "a8b")] {
        diffs.extend(same_files(&dir.path().join(a), &dir.path().join(b), &audit_files));
    }
    for (a, b) in [("s1", "s8"), ("s8", "s8b")] {
        diffs.extend(same_files(&dir.path().join(a), &dir.path().join(b), &sim_files));
    }
    let biased = std::fs::read_to_string(dir.path().join("a1/audit.json")).unwrap().contains("_biased\"");
    verdict(
        "AC-9",
        diffs.is_empty() && biased,
        format!("differing files across runs/thread counts: {diffs:?}"),
    );
}
