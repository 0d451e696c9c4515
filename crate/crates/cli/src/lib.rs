//! The `capbias` command-line tool.
//!
//! Every command writes its outputs, plus a `run.json` metadata file echoing
//! the effective configuration, into the directory given by `--out`.
//!
//! Exit codes: 0 success, 1 findings (validation problems, or biased
//! concepts with `--fail-on-bias`), 2 usage, configuration or input errors,
//! 3 internal failures.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use capbias::audit::{run_audit, AuditConfig, AuditReport, BootstrapConfig, ScoreRecord};
use capbias::captions::{compare_systems, correct_caption, gender_error_rate, GenderLexicon, SystemOutput};
use capbias::corpus::{
    build_manifest, load_manifest, parse_image_map, synthetic_images, validate_manifest, write_manifest, Gender,
    Instance, Lexicon,
};
use capbias::correlation::{correlate_metrics, CorrelationRow, Judgment, ScoreSpec};
use capbias::embed::{
    fetch_remote, image_key, load_store, text_key, EmbeddingStore, HybridWeights, RemoteConfig, RemoteInput,
};
use capbias::fixtures::{choose_planted, synthetic_store, FixtureConfig};
use capbias::metric::{parse_metric_list, Metric};
use capbias::report::{write_report, ReportBundle, SystemComparison, SystemErrors};
use capbias::rl::{run_experiment, ExperimentConfig, ExperimentResult, RewardKind};
use capbias::score::{score_instances, Scorer};
use capbias::tokenize::tokenize;
use capbias::{jsonl, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FINDINGS: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// Fewer resamples give p-values too coarse to compare against alpha.
pub const MIN_BOOTSTRAP_SAMPLES: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "capbias", version, about = "Audit image-captioning metrics for gender bias")]
pub struct Cli {
    /// Worker threads for data-parallel scoring (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross a lexicon with genders and images into a manifest.
    BuildManifest(BuildManifestArgs),
    /// Score every manifest instance's good and bad caption.
    Score(ScoreArgs),
    /// Score (or load scores) and test every concept for gender bias.
    Audit(AuditArgs),
    /// Gender-error rates of system captions, optional correction and
    /// system comparison.
    AnalyzeCaptions(AnalyzeArgs),
    /// Rank correlation between metrics and human ratings.
    Correlate(CorrelateArgs),
    /// Train the toy captioning policy with a metric reward.
    SimulateRl(SimulateArgs),
    /// Render tables and plots from the JSON outputs of other commands.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OutArg {
    /// Output directory (created if missing).
    #[arg(long, default_value = "capbias-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap resamples per test (at least 100).
    #[arg(long, default_value_t = 10_000)]
    pub bootstrap_samples: usize,
    /// Significance level, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

impl StatArgs {
    fn bootstrap(&self) -> Result<BootstrapConfig> {
        if self.bootstrap_samples < MIN_BOOTSTRAP_SAMPLES {
            return Err(Error::Config(format!(
                "--bootstrap-samples must be at least {MIN_BOOTSTRAP_SAMPLES}"
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("--alpha must lie strictly between 0 and 1".into()));
        }
        let config = BootstrapConfig {
            samples: self.bootstrap_samples,
            alpha: self.alpha,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    /// Embedding store file (EMB1 binary or JSON).
    #[arg(long, conflicts_with = "scorer_url")]
    pub embeddings: Option<PathBuf>,
    /// Base URL of an embedding service.
    #[arg(long, env = "EMBED_ENDPOINT")]
    pub scorer_url: Option<String>,
    /// Embedding dimension the service must return.
    #[arg(long, default_value_t = 512)]
    pub embed_dim: usize,
    /// Directory image references are resolved against for the service.
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
}

impl EmbedArgs {
    fn available(&self) -> bool {
        self.embeddings.is_some() || self.scorer_url.is_some()
    }

    /// Loads the store, or fetches the needed vectors from the service and
    /// saves them as `embeddings.json` in `out`.
    fn resolve(&self, texts: &BTreeSet<String>, images: &BTreeSet<String>, out: &Path) -> Result<Option<EmbeddingStore>> {
        if let Some(path) = &self.embeddings {
            return load_store(path).map(Some);
        }
        let Some(url) = &self.scorer_url else {
            return Ok(None);
        };
        let mut config = RemoteConfig::new(url.clone(), self.embed_dim).with_env_token();
        config.image_root = self.image_root.clone();
        let texts: Vec<String> = texts.iter().cloned().collect();
        let images: Vec<String> = images.iter().cloned().collect();
        let mut store = EmbeddingStore::new(self.embed_dim);
        for e in fetch_remote(RemoteInput::Texts(&texts), &config)?
            .into_iter()
            .chain(fetch_remote(RemoteInput::Images(&images), &config)?)
        {
            store.insert(e)?;
        }
        write_json(&out.join("embeddings.json"), &store.to_json())?;
        Ok(Some(store))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BuildManifestArgs {
    /// Lexicon JSON (default: the bundled lexicon).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Images JSON: `{"concept": {"man": [...], "woman": [...]}}`.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Placeholder images per (concept, gender) when `--images` is absent.
    #[arg(long, default_value_t = 1)]
    pub images_per_cell: usize,
    /// Also write a synthetic embedding store for the manifest.
    #[arg(long)]
    pub synthetic_embeddings: bool,
    /// Fixture settings JSON for the synthetic store.
    #[arg(long, requires = "synthetic_embeddings")]
    pub fixture: Option<PathBuf>,
    /// Number of concepts to plant a bias in.
    #[arg(long, default_value_t = 0, requires = "synthetic_embeddings")]
    pub plant: usize,
    /// Cosine offset of each planted bias.
    #[arg(long, default_value_t = 0.05)]
    pub plant_offset: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated metrics (default: n-gram metrics, plus embedding
    /// metrics when embeddings are available).
    #[arg(long)]
    pub metrics: Option<String>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Manifest to score; not needed with `--scores`.
    #[arg(long, required_unless_present = "scores")]
    pub manifest: Option<PathBuf>,
    /// Precomputed scores (JSONL of score records).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<String>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    /// Divide alpha by the number of concepts tested per metric.
    #[arg(long)]
    pub bonferroni: bool,
    /// File of concept words (one per line) left out of the summary.
    #[arg(long)]
    pub exclude_concepts: Option<PathBuf>,
    /// Exit with status 1 when any concept is biased.
    #[arg(long)]
    pub fail_on_bias: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// System captions (JSONL of `{"instance_id", "caption"}`).
    #[arg(long)]
    pub outputs: PathBuf,
    #[arg(long, default_value = "system")]
    pub name: String,
    /// Also correct the captions and report the corrected error rate.
    #[arg(long)]
    pub correct: bool,
    /// Captions of a second system to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value = "baseline")]
    pub compare_name: String,
    /// Metric used for the comparison.
    #[arg(long, default_value = "clipscore")]
    pub compare_metric: String,
    /// Gender word lists JSON (default: built-in lists).
    #[arg(long)]
    pub gender_lexicon: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub stats: StatArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    /// Human judgments (JSONL of `{"candidate", "references", "image_ref",
    /// "rating"}`).
    #[arg(long)]
    pub judgments: PathBuf,
    /// Comma-separated metrics; `a+b` sums metrics (default: the standard
    /// table, or its n-gram rows without embeddings).
    #[arg(long)]
    pub metrics: Option<String>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulation config JSON (default: the bundled config).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the reward kind.
    #[arg(long)]
    pub reward: Option<String>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of training steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Run directories to collect `audit.json`, `errors.json`,
    /// `comparisons.json` and `correlation.json` from.
    #[arg(long = "from", required = true, num_args = 1..)]
    pub from: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Serialize)]
struct RunMetadata<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    config: &'a C,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Maps a library error onto the exit-code partition.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Validation(_) => EXIT_FINDINGS,
        Error::Remote { .. } | Error::Training { .. } => EXIT_INTERNAL,
        Error::InvalidInput(_)
        | Error::InsufficientData(_)
        | Error::Load { .. }
        | Error::UndefinedCorrelation(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_USAGE,
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, e.g. when run twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::BuildManifest(a) => cmd_build_manifest(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::AnalyzeCaptions(a) => cmd_analyze_captions(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::SimulateRl(a) => cmd_simulate_rl(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_metadata<C: Serialize>(out: &Path, command: &'static str, seed: Option<u64>, config: &C) -> Result<()> {
    let meta = RunMetadata {
        tool: "capbias",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
    };
    write_json(&out.join("run.json"), &meta)
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    jsonl::write_lines(&mut w, values)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn selected_metrics(list: Option<&str>, embeddings: bool) -> Result<Vec<Metric>> {
    match list {
        Some(s) => parse_metric_list(s),
        None if embeddings => Ok(Metric::ALL.to_vec()),
        None => Ok(Metric::NGRAM.to_vec()),
    }
}

/// Fails naming every embedding id the selected metrics need but the
/// store lacks.
fn check_embeddings<'a>(
    store: Option<&EmbeddingStore>,
    texts: impl IntoIterator<Item = &'a String>,
    images: impl IntoIterator<Item = &'a String>,
) -> Result<()> {
    let Some(store) = store else {
        return Err(Error::Config(
            "embedding metrics selected but neither --embeddings nor --scorer-url was given".into(),
        ));
    };
    let mut missing = BTreeSet::new();
    for t in texts {
        if store.text(t).is_none() {
            missing.insert(text_key(t));
        }
    }
    for i in images {
        if store.image(i).is_none() {
            missing.insert(image_key(i));
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    const SHOWN: usize = 20;
    let mut msg = format!("missing embeddings for {} ids: ", missing.len());
    let shown: Vec<&str> = missing.iter().take(SHOWN).map(String::as_str).collect();
    msg.push_str(&shown.join(", "));
    if missing.len() > SHOWN {
        let _ = write!(msg, ", ... ({} more)", missing.len() - SHOWN);
    }
    Err(Error::Config(msg))
}

fn manifest_keys(manifest: &[Instance]) -> (BTreeSet<String>, BTreeSet<String>) {
    let texts = manifest
        .iter()
        .flat_map(|i| [i.triple.good.clone(), i.triple.bad.clone()])
        .collect();
    let images = manifest.iter().map(|i| i.image_ref.clone()).collect();
    (texts, images)
}

fn cmd_build_manifest(args: &BuildManifestArgs) -> Result<u8> {
    let out = &args.out.out;
    let lexicon = match &args.lexicon {
        Some(path) => Lexicon::load(path)?,
        None => Lexicon::mini(),
    };
    let concepts = lexicon.concepts()?;
    let images = match &args.images {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            parse_image_map(&text).map_err(|e| Error::Load {
                path: path.clone(),
                reason: e.to_string(),
            })?
        }
        None => synthetic_images(&concepts, &Gender::ALL, args.images_per_cell),
    };
    let manifest = match build_manifest(&concepts, &Gender::ALL, &images) {
        Ok(m) => m,
        Err(Error::Validation(problems)) => {
            for p in &problems {
                eprintln!("finding: {p}");
            }
            eprintln!("{} findings; no manifest written", problems.len());
            return Ok(EXIT_FINDINGS);
        }
        Err(e) => return Err(e),
    };
    prepare_out(out)?;
    write_manifest(
        std::io::BufWriter::new(std::fs::File::create(out.join("manifest.jsonl"))?),
        &manifest,
    )?;
    if args.synthetic_embeddings {
        let fixture = match &args.fixture {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Config(format!("invalid fixture config: {e}")))?,
            None => FixtureConfig::default(),
        };
        let planted = choose_planted(&concepts, args.plant, args.plant_offset, args.seed)?;
        let store = synthetic_store(&manifest, &fixture, &planted, args.seed)?;
        write_json(&out.join("embeddings.json"), &store.to_json())?;
        write_json(&out.join("planted.json"), &planted)?;
    }
    write_metadata(out, "build-manifest", Some(args.seed), args)?;
    let report = validate_manifest(&manifest);
    for f in &report.findings {
        eprintln!("finding: {f}");
    }
    println!("wrote {} instances to {}", manifest.len(), out.join("manifest.jsonl").display());
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_FINDINGS })
}

fn compute_scores(
    manifest: &[Instance],
    metrics: &[Metric],
    embed: &EmbedArgs,
    out: &Path,
) -> Result<Vec<ScoreRecord>> {
    let needs_embeddings = metrics.iter().any(|m| m.needs_embeddings());
    let store = if needs_embeddings {
        let (texts, images) = manifest_keys(manifest);
        let store = embed.resolve(&texts, &images, out)?;
        check_embeddings(store.as_ref(), &texts, &images)?;
        store
    } else {
        None
    };
    let scorer = Scorer::for_manifest(manifest, store.as_ref(), HybridWeights::default());
    score_instances(&scorer, manifest, metrics)
}

fn cmd_score(args: &ScoreArgs) -> Result<u8> {
    let out = &args.out.out;
    let metrics = selected_metrics(args.metrics.as_deref(), args.embed.available())?;
    let manifest = load_manifest(&args.manifest)?;
    prepare_out(out)?;
    let records = compute_scores(&manifest, &metrics, &args.embed, out)?;
    write_jsonl(&out.join("scores.jsonl"), &records)?;
    write_metadata(out, "score", None, args)?;
    println!("scored {} instances with {} metrics", manifest.len(), metrics.len());
    Ok(EXIT_OK)
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

fn cmd_audit(args: &AuditArgs) -> Result<u8> {
    let out = &args.out.out;
    let bootstrap = args.stats.bootstrap()?;
    let exclude = match &args.exclude_concepts {
        Some(path) => read_word_list(path)?,
        None => Vec::new(),
    };
    let metrics = args.metrics.as_deref().map(parse_metric_list).transpose()?;
    prepare_out(out)?;
    let records = match (&args.scores, &args.manifest) {
        (Some(path), _) => {
            let mut records: Vec<ScoreRecord> = jsonl::load(path)?;
            if let Some(keep) = &metrics {
                records.retain(|r| keep.contains(&r.metric));
            }
            records
        }
        (None, Some(manifest_path)) => {
            let metrics = match metrics {
                Some(m) => m,
                None => selected_metrics(None, args.embed.available())?,
            };
            let manifest = load_manifest(manifest_path)?;
            let records = compute_scores(&manifest, &metrics, &args.embed, out)?;
            write_jsonl(&out.join("scores.jsonl"), &records)?;
            records
        }
        (None, None) => return Err(Error::Config("either --manifest or --scores is required".into())),
    };
    let config = AuditConfig {
        bootstrap,
        bonferroni: args.bonferroni,
        exclude,
    };
    let report = run_audit(&records, &config)?;
    write_json(&out.join("audit.json"), &report)?;
    let bundle = ReportBundle {
        audit: Some(report.clone()),
        ..ReportBundle::default()
    };
    write_report(&out.join("report"), &bundle)?;
    write_metadata(out, "audit", Some(args.stats.seed), args)?;
    print_audit_summary(&report);
    Ok(if args.fail_on_bias && report.any_biased() {
        EXIT_FINDINGS
    } else {
        EXIT_OK
    })
}

fn print_audit_summary(report: &AuditReport) {
    for m in &report.metrics {
        let biased: Vec<&str> = m
            .verdicts
            .iter()
            .filter(|v| v.label.is_biased())
            .map(|v| v.concept.as_str())
            .collect();
        println!(
            "{:<16} {:>6.2}% biased{}{}",
            m.metric.label(),
            m.summary.overall.percent,
            if biased.is_empty() { "" } else { ": " },
            biased.join(", ")
        );
    }
}

fn cmd_analyze_captions(args: &AnalyzeArgs) -> Result<u8> {
    let out = &args.out.out;
    let bootstrap = args.stats.bootstrap()?;
    let manifest = load_manifest(&args.manifest)?;
    let lexicon = match &args.gender_lexicon {
        Some(path) => GenderLexicon::load(path)?,
        None => GenderLexicon::default(),
    };
    let outputs: Vec<SystemOutput> = jsonl::load(&args.outputs)?;
    prepare_out(out)?;

    let mut errors = vec![SystemErrors {
        system: args.name.clone(),
        report: gender_error_rate(&outputs, &manifest, &lexicon, &bootstrap)?,
    }];
    if args.correct {
        let truth: std::collections::HashMap<&str, Gender> =
            manifest.iter().map(|i| (i.id.as_str(), i.gender())).collect();
        let corrected = outputs
            .iter()
            .map(|o| {
                let gender = truth.get(o.instance_id.as_str()).ok_or_else(|| {
                    Error::InvalidInput(format!("output id {:?} is not in the manifest", o.instance_id))
                })?;
                Ok(SystemOutput {
                    instance_id: o.instance_id.clone(),
                    caption: correct_caption(&o.caption, *gender, &lexicon).caption,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_jsonl(&out.join("corrected.jsonl"), &corrected)?;
        errors.push(SystemErrors {
            system: format!("{}+corrected", args.name),
            report: gender_error_rate(&corrected, &manifest, &lexicon, &bootstrap)?,
        });
    }

    let mut comparisons = Vec::new();
    if let Some(path) = &args.compare {
        let other: Vec<SystemOutput> = jsonl::load(path)?;
        errors.push(SystemErrors {
            system: args.compare_name.clone(),
            report: gender_error_rate(&other, &manifest, &lexicon, &bootstrap)?,
        });
        let metric: Metric = args.compare_metric.parse()?;
        let store = if metric.needs_embeddings() {
            let texts: BTreeSet<String> = outputs.iter().chain(&other).map(|o| o.caption.clone()).collect();
            let images: BTreeSet<String> = manifest.iter().map(|i| i.image_ref.clone()).collect();
            let store = args.embed.resolve(&texts, &images, out)?;
            let ids: BTreeSet<&str> = outputs.iter().map(|o| o.instance_id.as_str()).collect();
            let used_images: Vec<String> = manifest
                .iter()
                .filter(|i| ids.contains(i.id.as_str()))
                .map(|i| i.image_ref.clone())
                .collect();
            check_embeddings(store.as_ref(), &texts, &used_images)?;
            store
        } else {
            None
        };
        let scorer = Scorer::for_manifest(&manifest, store.as_ref(), HybridWeights::default());
        let report = compare_systems(&outputs, &other, &manifest, |inst, caption| {
            scorer.score(metric, caption, &[tokenize(&inst.triple.reference)], &inst.image_ref)
        })?;
        comparisons.push(SystemComparison {
            metric: metric.label().to_owned(),
            system_a: args.name.clone(),
            system_b: args.compare_name.clone(),
            report,
        });
    }

    write_json(&out.join("errors.json"), &errors)?;
    if !comparisons.is_empty() {
        write_json(&out.join("comparisons.json"), &comparisons)?;
    }
    write_metadata(out, "analyze-captions", Some(args.stats.seed), args)?;
    for e in &errors {
        match e.report.rate {
            Some(rate) => println!("{:<24} gender error {:.2}%", e.system, 100.0 * rate),
            None => println!("{:<24} no gendered captions", e.system),
        }
    }
    Ok(EXIT_OK)
}

fn parse_specs(list: &str) -> Result<Vec<ScoreSpec>> {
    let specs: Vec<ScoreSpec> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(Error::InvalidInput("no metrics selected".into()));
    }
    Ok(specs)
}

fn cmd_correlate(args: &CorrelateArgs) -> Result<u8> {
    let out = &args.out.out;
    let judgments: Vec<Judgment> = jsonl::load(&args.judgments)?;
    let specs = match &args.metrics {
        Some(list) => parse_specs(list)?,
        None if args.embed.available() => ScoreSpec::standard_table(),
        None => ScoreSpec::standard_table()
            .into_iter()
            .filter(|s| s.metrics().iter().all(|m| !m.needs_embeddings()))
            .collect(),
    };
    prepare_out(out)?;
    let needs_embeddings = specs.iter().flat_map(|s| s.metrics()).any(|m| m.needs_embeddings());
    let store = if needs_embeddings {
        let texts: BTreeSet<String> = judgments.iter().map(|j| j.candidate.clone()).collect();
        let images: BTreeSet<String> = judgments.iter().map(|j| j.image_ref.clone()).collect();
        let store = args.embed.resolve(&texts, &images, out)?;
        check_embeddings(store.as_ref(), &texts, &images)?;
        store
    } else {
        None
    };
    let rows: Vec<CorrelationRow> = correlate_metrics(&judgments, &specs, store.as_ref())?;
    write_json(&out.join("correlation.json"), &rows)?;
    write_metadata(out, "correlate", None, args)?;
    for r in &rows {
        println!("{:<24} tau_c {:>8.3}", r.label, r.tau_c);
    }
    Ok(EXIT_OK)
}

fn cmd_simulate_rl(args: &SimulateArgs) -> Result<u8> {
    let out = &args.out.out;
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.clone(),
            reason: e.to_string(),
        })?)?,
        None => ExperimentConfig::bundled(),
    };
    if let Some(kind) = &args.reward {
        config.reward.kind = kind.parse::<RewardKind>()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    let concepts = Lexicon::mini().concepts()?;
    prepare_out(out)?;
    let result: ExperimentResult = run_experiment(&config, &concepts)?;
    write_json(&out.join("simulation.json"), &result)?;
    write_metadata(out, "simulate-rl", Some(config.seed), &config)?;
    println!(
        "greedy gender error {:.2}% -> {:.2}% after {} steps",
        100.0 * result.initial_error(),
        100.0 * result.final_error(),
        config.steps
    );
    Ok(EXIT_OK)
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn cmd_report(args: &ReportArgs) -> Result<u8> {
    let mut bundle = ReportBundle::default();
    for dir in &args.from {
        if !dir.is_dir() {
            return Err(Error::Config(format!("{} is not a directory", dir.display())));
        }
        if let Some(audit) = read_optional::<AuditReport>(&dir.join("audit.json"))? {
            if bundle.audit.replace(audit).is_some() {
                return Err(Error::Config("more than one audit.json among the inputs".into()));
            }
        }
        if let Some(errors) = read_optional::<Vec<SystemErrors>>(&dir.join("errors.json"))? {
            bundle.errors.extend(errors);
        }
        if let Some(c) = read_optional::<Vec<SystemComparison>>(&dir.join("comparisons.json"))? {
            bundle.comparisons.extend(c);
        }
        if let Some(rows) = read_optional::<Vec<CorrelationRow>>(&dir.join("correlation.json"))? {
            bundle.correlation.extend(rows);
        }
    }
    let files = write_report(&args.out.out, &bundle)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(EXIT_OK)
}
