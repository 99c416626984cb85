//! Command-line interface: corpus preparation, augmentation caches, training,
//! evaluation and temperature sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    self, AugmentCache, Augmenter, CacheOnly, CachedAugmenter, ParaphraseProvider, RemoteProvider,
    RetryPolicy, SynonymTable, TranslationProvider,
};
use crate::cluster_eval::KMeansConfig;
use crate::consistency::TargetMode;
use crate::contrastive::SimilarityKind;
use crate::corpus::{self, Corpus, CorpusFormat, LoadOptions, Preprocessor};
use crate::encoder::Checkpoint;
use crate::export::{self, MetricsRow};
use crate::synthetic::{SyntheticCorpus, SyntheticSpec};
use crate::trainer::{self, Method, Schedule, TrainConfig, Trainer};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const BEST_CHECKPOINT_FILE: &str = "checkpoint_best.json";
pub const LAST_CHECKPOINT_FILE: &str = "checkpoint_last.json";
pub const BATCH_LOG_FILE: &str = "batches.tsv";

#[derive(Debug, Parser)]
#[command(name = "docclust", version, about = "Contrastive document clustering")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a raw corpus and build its vocabulary.
    Prepare(PrepareArgs),
    /// Write a synthetic labeled corpus and a matching synonym table.
    Synth(SynthArgs),
    /// Fill an augmentation cache for every document and route.
    AugmentCache(AugmentCacheArgs),
    /// Train an encoder and cluster its representations after every epoch.
    Train(TrainArgs),
    /// Cluster a corpus with a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Train once per temperature and tabulate the best accuracy of each run.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// JSONL file or directory with one subdirectory per class.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "jsonl", value_parser = parse_format)]
    pub format: CorpusFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// One stopword per line; the built-in English list when omitted.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_frequency: usize,
    #[arg(long, default_value_t = 50_000)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = corpus::DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output JSONL corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Output synonym table for the deterministic paraphraser.
    #[arg(long)]
    pub synonyms_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SyntheticSpec::default().classes)]
    pub classes: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().docs_per_class)]
    pub docs_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Deterministic,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Endpoint of the remote translation service.
    #[arg(long)]
    pub provider_url: Option<String>,
    /// Synonym table for the deterministic paraphraser; the shipped table when omitted.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Seed of the deterministic paraphraser.
    #[arg(long, default_value_t = 0)]
    pub paraphrase_seed: u64,
    /// Attempts per remote request.
    #[arg(long, default_value_t = RetryPolicy::default().attempts)]
    pub provider_attempts: u32,
    /// Delay before the first remote retry, doubled after each failure.
    #[arg(long, default_value_t = RetryPolicy::default().base_delay.as_millis() as u64)]
    pub provider_backoff_ms: u64,
}

#[derive(Debug, Args)]
pub struct AugmentCacheArgs {
    /// Prepared corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated pivot languages (`es` or `id=pivot`).
    #[arg(long, default_value = "es,fr")]
    pub routes: String,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = augment::DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
    /// Cache file (JSONL); existing entries are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
}

/// Training settings given on the command line; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Flat TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub use_uda: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub batch_pairs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = parse_similarity)]
    pub similarity: Option<SimilarityKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Routes: the two views of self-supervised runs, or the consistency route
    /// (first entry) of label-paired runs.
    #[arg(long)]
    pub routes: Option<String>,
    #[arg(long, value_parser = parse_schedule)]
    pub schedule: Option<Schedule>,
    #[arg(long, value_enum)]
    pub uda_target: Option<TargetArg>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Frozen,
    Live,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prepared corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Augmentation cache; without a provider every needed entry must already exist.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prepared corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for metrics.csv and embeddings.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Training config of the run (cluster count and k-means restarts).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Clustering seed; the checkpoint's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Prepared corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Comma-separated temperatures.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub taus: Vec<f64>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn parse_format(s: &str) -> Result<CorpusFormat, crate::Error> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, crate::Error> {
    s.parse()
}

fn parse_similarity(s: &str) -> Result<SimilarityKind, crate::Error> {
    s.parse()
}

fn parse_schedule(s: &str) -> Result<Schedule, crate::Error> {
    s.parse()
}

/// A failed command: usage errors exit with 2, runtime failures with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Runtime(e) => {
                let mut shown = String::new();
                for cause in e.chain().map(|c| c.to_string()) {
                    if !shown.contains(&cause) {
                        if !shown.is_empty() {
                            shown.push_str(": ");
                        }
                        shown.push_str(&cause);
                    }
                }
                f.write_str(&shown)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidConfig(_) | crate::Error::InvalidTemperature(_) => {
                Self::Usage(e.to_string())
            }
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub corpus: PathBuf,
    pub corpus_fingerprint: String,
    pub cache: Option<PathBuf>,
    pub cache_fingerprint: Option<String>,
    pub provider: Option<ProviderKind>,
    pub provider_url: Option<String>,
    pub paraphrase_seed: u64,
    pub taus: Option<Vec<f64>>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Reads a flat TOML training config; unknown keys are usage errors.
pub fn load_config(path: &Path) -> CliResult<TrainConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Config file (or defaults) with command-line overrides applied, validated.
pub fn resolve_config(o: &TrainOverrides) -> CliResult<TrainConfig> {
    let mut c = match &o.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = o.method {
        c.method = v;
    }
    if o.use_uda {
        c.use_uda = true;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = o.$flag.clone() { c.$field = v; })*
        };
    }
    set!(tau => tau, fraction => fraction, batch_pairs => batch_pairs, epochs => epochs,
         lr => learning_rate, similarity => similarity, seed => seed, schedule => schedule,
         embed_dim => embed_dim, hidden_dim => hidden_dim, latent_dim => latent_dim,
         restarts => kmeans_restarts);
    if let Some(k) = o.clusters {
        c.clusters = Some(k);
    }
    if let Some(t) = o.uda_target {
        c.uda_target = match t {
            TargetArg::Frozen => TargetMode::Frozen,
            TargetArg::Live => TargetMode::Live,
        };
    }
    if let Some(list) = &o.routes {
        let routes = augment::parse_routes(list).map_err(|e| usage(e.to_string()))?;
        if c.method == Method::Scl {
            if routes.len() != 2 {
                return Err(usage("self-supervised training needs exactly two routes"));
            }
            c.scl_routes = routes.iter().map(|r| r.pivot.clone()).collect();
        } else {
            c.uda_route = routes[0].pivot.clone();
        }
    }
    c.validate()?;
    Ok(c)
}

fn synonyms(args: &ProviderArgs) -> anyhow::Result<SynonymTable> {
    Ok(match &args.synonyms {
        Some(p) => SynonymTable::load(p)?,
        None => SynonymTable::shipped(),
    })
}

fn build_provider(args: &ProviderArgs) -> CliResult<Option<Box<dyn TranslationProvider>>> {
    match args.provider {
        None => Ok(None),
        Some(ProviderKind::Deterministic) => Ok(Some(Box::new(ParaphraseProvider::new(
            args.paraphrase_seed,
            synonyms(args)?,
        )))),
        Some(ProviderKind::Remote) => {
            let url = args
                .provider_url
                .clone()
                .ok_or_else(|| usage("--provider remote requires --provider-url"))?;
            Ok(Some(Box::new(RemoteProvider::with_retry(
                url,
                RetryPolicy {
                    attempts: args.provider_attempts.max(1),
                    base_delay: Duration::from_millis(args.provider_backoff_ms),
                },
            ))))
        }
    }
}

fn load_prepared(path: &Path) -> anyhow::Result<(Corpus, String)> {
    let corpus = Corpus::load_prepared(path)?;
    Ok((corpus, fingerprint(path)?))
}

pub fn cmd_prepare(args: &PrepareArgs) -> CliResult<String> {
    let stopwords = match &args.stopwords {
        Some(p) => corpus::load_stopwords(p)?,
        None => corpus::default_stopwords(),
    };
    let options = LoadOptions {
        preprocessor: Preprocessor {
            stopwords,
            max_tokens: args.max_tokens,
        },
        min_frequency: args.min_frequency,
        max_vocab: args.max_vocab,
    };
    let corpus = corpus::load_corpus(&args.input, args.format, &options)?;
    corpus.save(&args.out)?;
    let fp = fingerprint(&args.out)?;
    println!(
        "{} documents, {} classes, vocabulary {}; fingerprint {fp}",
        corpus.len(),
        corpus.class_count(),
        corpus.vocabulary.size()
    );
    Ok(fp)
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        seed: args.seed,
        classes: args.classes,
        docs_per_class: args.docs_per_class,
        ..SyntheticSpec::default()
    };
    let synth = SyntheticCorpus::generate(&spec)?;
    let mut out = String::new();
    for r in &synth.records {
        out.push_str(&serde_json::to_string(r).context("serializing record")?);
        out.push('\n');
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(p) = &args.synonyms_out {
        fs::write(p, synth.synonyms.to_text())
            .with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "{} documents written to {}",
        synth.records.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_augment_cache(args: &AugmentCacheArgs) -> CliResult<()> {
    let routes = augment::parse_routes(&args.routes).map_err(|e| usage(e.to_string()))?;
    if args.max_in_flight == 0 {
        return Err(usage("--max-in-flight must be >= 1"));
    }
    let mut provider_args = args.provider.clone();
    provider_args
        .provider
        .get_or_insert(ProviderKind::Deterministic);
    let provider = build_provider(&provider_args)?.expect("provider kind set above");
    let (corpus, _) = load_prepared(&args.corpus)?;
    let cache = AugmentCache::open(&args.out)?;
    let docs: Vec<(&str, &str)> = corpus
        .documents
        .iter()
        .map(|d| (d.id.as_str(), d.text.as_str()))
        .collect();
    let summary = augment::fill_cache(
        &cache,
        &docs,
        &routes,
        provider.as_ref(),
        args.max_in_flight,
    );
    cache.compact()?;
    println!(
        "computed {}, already cached {}, failed {}",
        summary.computed,
        summary.skipped,
        summary.failures.len()
    );
    if !summary.failures.is_empty() {
        for (doc, route, message) in &summary.failures {
            eprintln!("missing {doc}\t{route}\t{message}");
        }
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} document/route pairs remain uncached",
            summary.failures.len()
        )));
    }
    Ok(())
}

struct AugmentSetup {
    cache: Option<AugmentCache>,
    provider: Option<Box<dyn TranslationProvider>>,
}

impl AugmentSetup {
    fn new(config: &TrainConfig, cache: Option<&Path>, provider: &ProviderArgs) -> CliResult<Self> {
        let needed = config.use_uda || config.method == Method::Scl;
        if !needed {
            return Ok(Self {
                cache: None,
                provider: None,
            });
        }
        let provider = build_provider(provider)?;
        let cache = match cache {
            Some(p) if provider.is_some() => AugmentCache::open(p)?,
            Some(p) if p.exists() => AugmentCache::open(p)?,
            Some(p) => {
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "augmentation cache {} does not exist",
                    p.display()
                )))
            }
            None if provider.is_some() => AugmentCache::in_memory(),
            None => {
                return Err(usage(format!(
                    "method {} with use_uda={} needs --cache or --provider",
                    config.method, config.use_uda
                )))
            }
        };
        Ok(Self {
            cache: Some(cache),
            provider,
        })
    }

    fn augmenter(&self) -> Option<Box<dyn Augmenter + '_>> {
        let cache = self.cache.as_ref()?;
        Some(match &self.provider {
            Some(p) => Box::new(CachedAugmenter {
                cache,
                provider: p.as_ref(),
            }),
            None => Box::new(CacheOnly(cache)),
        })
    }

    fn finish(&self) -> anyhow::Result<()> {
        if let Some(c) = &self.cache {
            if c.path().is_some() && self.provider.is_some() {
                c.compact()?;
            }
        }
        Ok(())
    }
}

fn manifest(
    command: &str,
    config: &TrainConfig,
    corpus: &Path,
    corpus_fingerprint: String,
    cache: Option<&Path>,
    provider: &ProviderArgs,
) -> anyhow::Result<RunManifest> {
    let cache_fingerprint = match cache {
        Some(p) if p.exists() => Some(fingerprint(p)?),
        _ => None,
    };
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: command.to_owned(),
        config: config.clone(),
        seed: config.seed,
        corpus: corpus.to_path_buf(),
        corpus_fingerprint,
        cache: cache.map(Path::to_path_buf),
        cache_fingerprint,
        provider: provider.provider,
        provider_url: provider.provider_url.clone(),
        paraphrase_seed: provider.paraphrase_seed,
        taus: None,
        artifacts: BTreeMap::new(),
    })
}

/// Trains into a run directory and returns the best epoch accuracy.
pub fn cmd_train(args: &TrainArgs) -> CliResult<f64> {
    let config = resolve_config(&args.overrides)?;
    let setup = AugmentSetup::new(&config, args.cache.as_deref(), &args.provider)?;
    let (corpus, fp) = load_prepared(&args.corpus)?;
    let augmenter = setup.augmenter();
    let trainer = Trainer::new(config.clone(), &corpus, augmenter.as_deref())?;

    let dir = &args.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = manifest(
        "train",
        &config,
        &args.corpus,
        fp,
        args.cache.as_deref(),
        &args.provider,
    )?;
    for (key, file) in [
        ("config", CONFIG_FILE),
        ("metrics", METRICS_FILE),
        ("embeddings", EMBEDDINGS_FILE),
        ("checkpoint_best", BEST_CHECKPOINT_FILE),
        ("checkpoint_last", LAST_CHECKPOINT_FILE),
        ("batch_log", BATCH_LOG_FILE),
    ] {
        m.artifacts.insert(key.to_owned(), dir.join(file));
    }
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    fs::write(
        dir.join(CONFIG_FILE),
        toml::to_string(&config).context("serializing config")?,
    )
    .context("writing config snapshot")?;

    let outcome = trainer.train()?;
    setup.finish()?;

    export::write_metrics_csv(
        &dir.join(METRICS_FILE),
        &export::metrics_rows(outcome.initial.metrics.accuracy, &outcome.reports),
    )?;
    export::write_embeddings_tsv(
        &dir.join(EMBEDDINGS_FILE),
        &export::embedding_rows(&corpus, &outcome.last)?,
    )?;
    Checkpoint::new(&outcome.best_params, config.seed, outcome.best_epoch)
        .save(&dir.join(BEST_CHECKPOINT_FILE))?;
    Checkpoint::new(&outcome.last_params, config.seed, outcome.reports.len())
        .save(&dir.join(LAST_CHECKPOINT_FILE))?;
    fs::write(
        dir.join(BATCH_LOG_FILE),
        export::batch_log_tsv(&outcome.reports),
    )
    .context("writing batch log")?;
    println!(
        "best accuracy {:.4} at epoch {}; final accuracy {:.4}; run directory {}",
        outcome.best_accuracy,
        outcome.best_epoch,
        outcome.last.metrics.accuracy,
        dir.display()
    );
    Ok(outcome.best_accuracy)
}

/// Clusters the corpus with a checkpoint and returns the accuracy.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<f64> {
    let config = match &args.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let params = ckpt.params()?;
    let (corpus, fp) = load_prepared(&args.corpus)?;
    if ckpt.dims.vocab != corpus.vocabulary.size() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "checkpoint vocabulary {} does not match corpus vocabulary {}",
            ckpt.dims.vocab,
            corpus.vocabulary.size()
        )));
    }
    let seed = args.seed.unwrap_or(ckpt.seed);
    let clusters = config
        .clusters
        .unwrap_or_else(|| corpus.class_count())
        .max(1);
    let kmeans = KMeansConfig {
        restarts: config.kmeans_restarts,
        ..KMeansConfig::default()
    };
    let eval = trainer::evaluate(&params, &corpus, clusters, seed, &kmeans)?;

    let dir = &args.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = manifest(
        "evaluate",
        &TrainConfig { seed, ..config },
        &args.corpus,
        fp,
        None,
        &ProviderArgs {
            provider: None,
            provider_url: None,
            synonyms: None,
            paraphrase_seed: 0,
            provider_attempts: RetryPolicy::default().attempts,
            provider_backoff_ms: 0,
        },
    )?;
    m.artifacts
        .insert("checkpoint".into(), args.checkpoint.clone());
    m.artifacts.insert("metrics".into(), dir.join(METRICS_FILE));
    m.artifacts
        .insert("embeddings".into(), dir.join(EMBEDDINGS_FILE));
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    export::write_metrics_csv(
        &dir.join(METRICS_FILE),
        &[MetricsRow {
            epoch: ckpt.epoch,
            contrastive: None,
            consistency: None,
            total: None,
            accuracy: eval.metrics.accuracy,
        }],
    )?;
    export::write_embeddings_tsv(
        &dir.join(EMBEDDINGS_FILE),
        &export::embedding_rows(&corpus, &eval)?,
    )?;
    println!(
        "accuracy {:.4} ({} / {})",
        eval.metrics.accuracy, eval.metrics.matched, eval.metrics.total
    );
    Ok(eval.metrics.accuracy)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<Vec<trainer::SweepRow>> {
    if args.taus.is_empty() {
        return Err(usage("empty temperature list"));
    }
    let config = resolve_config(&args.overrides)?;
    let setup = AugmentSetup::new(&config, args.cache.as_deref(), &args.provider)?;
    let (corpus, fp) = load_prepared(&args.corpus)?;
    let mut m = manifest(
        "sweep",
        &config,
        &args.corpus,
        fp,
        args.cache.as_deref(),
        &args.provider,
    )?;
    m.taus = Some(args.taus.clone());
    m.artifacts.insert("sweep".into(), args.out.clone());
    let manifest_path = args.out.with_extension("manifest.json");
    write_json(&manifest_path, &m)?;
    let augmenter = setup.augmenter();
    let rows = trainer::sweep_tau(&config, &args.taus, &corpus, augmenter.as_deref())?;
    setup.finish()?;
    export::write_sweep_csv(&args.out, &rows)?;
    for r in &rows {
        println!("tau {}: accuracy {:.4}", r.tau, r.accuracy);
    }
    Ok(rows)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a).map(drop),
        Command::Synth(a) => cmd_synth(a),
        Command::AugmentCache(a) => cmd_augment_cache(a),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command. Help and version
/// requests are reported as usage errors carrying the rendered text.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(cli)
}

/// Log level for a `-v` count, overridable through `RUST_LOG`.
pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    if verbose > 2 {
        warn!("maximum verbosity is -vv");
    }
    info!("docclust {}", env!("CARGO_PKG_VERSION"));
}
