//! Training loop: per-mini-batch optimizer updates and end-of-epoch clustering.
//!
//! Label-paired runs (`cl`, `pcl`) draw contrastive batches from a labeled subset and,
//! with consistency regularization enabled, follow them with consistency batches drawn
//! from the remaining documents. Self-supervised runs (`scl`) draw contrastive batches of
//! paired augmentations from the whole corpus.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationRoute, Augmenter};
use crate::cluster_eval::{self, ClusterAssignment, KMeansConfig, Metrics};
use crate::consistency::{self, TargetMode, UdaPair};
use crate::contrastive::{self, BatchLatents, SimilarityKind};
use crate::corpus::{Corpus, DocumentSource};
use crate::encoder::{
    self, adam_step, init_params, AdamConfig, Dims, EncoderParams, Gradients, OptimizerState,
};
use crate::error::{Error, Result};
use crate::sampler::{self, LabeledSubset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Label-paired contrastive learning on the whole corpus.
    Cl,
    /// Label-paired contrastive learning on a fraction of the corpus.
    #[default]
    Pcl,
    /// Self-supervised: the two augmentations of a document form the positive pair.
    Scl,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Self::Cl),
            "pcl" => Ok(Self::Pcl),
            "scl" => Ok(Self::Scl),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cl => "cl",
            Self::Pcl => "pcl",
            Self::Scl => "scl",
        })
    }
}

/// Ordering of contrastive and consistency batches within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// All contrastive batches, then all consistency batches.
    #[default]
    PrefixSuffix,
    /// Alternate the two kinds while both remain.
    Interleaved,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix-suffix" => Ok(Self::PrefixSuffix),
            "interleaved" => Ok(Self::Interleaved),
            other => Err(Error::InvalidConfig(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub use_uda: bool,
    pub tau: f64,
    /// Pairs per contrastive batch (`C` for label-paired runs, `m` for self-supervised
    /// runs); also the number of documents per consistency batch.
    pub batch_pairs: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub fraction: f64,
    pub similarity: SimilarityKind,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub schedule: Schedule,
    pub uda_target: TargetMode,
    pub uda_route: String,
    pub scl_routes: Vec<String>,
    /// Number of k-means clusters; the corpus class count when unset.
    pub clusters: Option<usize>,
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Pcl,
            use_uda: false,
            tau: contrastive::DEFAULT_TEMPERATURE,
            batch_pairs: sampler::DEFAULT_BATCH_PAIRS,
            epochs: 30,
            learning_rate: 1e-3,
            fraction: sampler::DEFAULT_FRACTION,
            similarity: SimilarityKind::Cosine,
            seed: 0,
            embed_dim: encoder::DEFAULT_EMBED_DIM,
            hidden_dim: encoder::DEFAULT_HIDDEN_DIM,
            latent_dim: encoder::DEFAULT_LATENT_DIM,
            schedule: Schedule::PrefixSuffix,
            uda_target: TargetMode::default(),
            uda_route: "es".into(),
            scl_routes: vec!["es".into(), "fr".into()],
            clusters: None,
            kmeans_restarts: KMeansConfig::default().restarts,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad("fraction must be in (0, 1]");
        }
        if self.use_uda && self.method == Method::Scl {
            return bad("consistency regularization cannot be combined with method scl");
        }
        if self.batch_pairs < 2 {
            return bad("batch_pairs must be >= 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.latent_dim == 0 {
            return bad("dimensions must be >= 1");
        }
        if self.scl_routes.len() != 2 || self.scl_routes[0] == self.scl_routes[1] {
            return bad("scl_routes must name two distinct routes");
        }
        if self.clusters == Some(0) {
            return bad("clusters must be >= 1");
        }
        Ok(())
    }

    /// Share of the corpus used for contrastive batches.
    pub fn effective_fraction(&self) -> f64 {
        match self.method {
            Method::Cl => 1.0,
            _ => self.fraction,
        }
    }

    fn dims(&self, vocab: usize) -> Dims {
        Dims {
            vocab,
            embed: self.embed_dim,
            hidden: self.hidden_dim,
            latent: self.latent_dim,
        }
    }

    fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            restarts: self.kmeans_restarts,
            ..KMeansConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Contrastive,
    Consistency,
}

impl fmt::Display for BatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Contrastive => "contrastive",
            Self::Consistency => "consistency",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_contrastive: f64,
    pub mean_consistency: f64,
    pub total: f64,
    pub accuracy: f64,
    pub batch_log: Vec<BatchKind>,
    pub wall_time: Duration,
}

impl EpochReport {
    /// Equality on everything except wall time, bit-for-bit on floats.
    pub fn same_outcome(&self, other: &EpochReport) -> bool {
        self.epoch == other.epoch
            && self.mean_contrastive.to_bits() == other.mean_contrastive.to_bits()
            && self.mean_consistency.to_bits() == other.mean_consistency.to_bits()
            && self.total.to_bits() == other.total.to_bits()
            && self.accuracy.to_bits() == other.accuracy.to_bits()
            && self.batch_log == other.batch_log
    }
}

/// Latents of every document with their clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub latents: Vec<Vec<f64>>,
    pub assignment: ClusterAssignment,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: Evaluation,
    pub reports: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub best_params: EncoderParams,
    pub last_params: EncoderParams,
    pub last: Evaluation,
    pub optimizer_steps: u64,
}

/// Encodes every document and clusters the latents.
pub fn evaluate(
    params: &EncoderParams,
    corpus: &Corpus,
    clusters: usize,
    seed: u64,
    kmeans: &KMeansConfig,
) -> Result<Evaluation> {
    let latents = corpus
        .documents
        .iter()
        .map(|d| encoder::encode(params, &d.tokens).map(|(v, _)| v.0))
        .collect::<Result<Vec<_>>>()?;
    let assignment = cluster_eval::kmeans(&latents, clusters, seed, kmeans)?;
    let cm = cluster_eval::confusion_matrix(
        &assignment.clusters,
        clusters,
        &corpus.labels(),
        corpus.class_count(),
    )?;
    let metrics = cluster_eval::metrics_from_confusion(&cm)?;
    Ok(Evaluation {
        latents,
        assignment,
        metrics,
    })
}

enum Batch {
    Contrastive(Vec<Vec<u32>>),
    Consistency(Vec<UdaPair>),
}

pub struct Trainer<'a> {
    config: TrainConfig,
    corpus: &'a Corpus,
    augmenter: Option<&'a dyn Augmenter>,
    subset: LabeledSubset,
    complement: Vec<usize>,
    clusters: usize,
}

impl<'a> Trainer<'a> {
    /// Validates the configuration against the corpus before any training work.
    pub fn new(
        config: TrainConfig,
        corpus: &'a Corpus,
        augmenter: Option<&'a dyn Augmenter>,
    ) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let needs_augmenter = config.use_uda || config.method == Method::Scl;
        if needs_augmenter && augmenter.is_none() {
            return Err(Error::InvalidConfig(format!(
                "method {} with use_uda={} needs an augmentation source",
                config.method, config.use_uda
            )));
        }
        let clusters = config
            .clusters
            .unwrap_or_else(|| corpus.class_count())
            .max(1);
        let subset = match config.method {
            Method::Scl => LabeledSubset {
                indices: vec![],
                fraction: 0.0,
            },
            _ => {
                let s = sampler::select_partial_subset(
                    corpus,
                    config.effective_fraction(),
                    config.seed,
                )?;
                if corpus.class_count() < config.batch_pairs {
                    return Err(Error::InvalidConfig(format!(
                        "batch_pairs = {} exceeds the {} classes of the corpus",
                        config.batch_pairs,
                        corpus.class_count()
                    )));
                }
                s
            }
        };
        let complement = match config.method {
            Method::Scl => vec![],
            _ => subset.complement(corpus.len()),
        };
        Ok(Self {
            config,
            corpus,
            augmenter,
            subset,
            complement,
            clusters,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn subset(&self) -> &LabeledSubset {
        &self.subset
    }

    pub fn init(&self) -> Result<(EncoderParams, OptimizerState)> {
        let dims = self.config.dims(self.corpus.vocabulary.size());
        let params = init_params(self.config.seed, dims)?;
        let state = OptimizerState::new(
            dims,
            AdamConfig {
                learning_rate: self.config.learning_rate,
                ..AdamConfig::default()
            },
        );
        Ok((params, state))
    }

    pub fn evaluate(&self, params: &EncoderParams) -> Result<Evaluation> {
        evaluate(
            params,
            self.corpus,
            self.clusters,
            self.config.seed,
            &self.config.kmeans_config(),
        )
    }

    fn augmenter(&self) -> Result<&'a dyn Augmenter> {
        self.augmenter
            .ok_or_else(|| Error::InvalidConfig("no augmentation source".into()))
    }

    fn epoch_batches(&self, epoch: usize) -> Result<Vec<Batch>> {
        let cfg = &self.config;
        let epoch = epoch as u64;
        match cfg.method {
            Method::Scl => {
                let routes = [
                    AugmentationRoute::new(&cfg.scl_routes[0]),
                    AugmentationRoute::new(&cfg.scl_routes[1]),
                ];
                let batches = sampler::scl_epoch_batches(
                    self.corpus,
                    cfg.batch_pairs,
                    self.augmenter()?,
                    &routes,
                    cfg.seed,
                    epoch,
                )?;
                Ok(batches
                    .into_iter()
                    .map(|b| Batch::Contrastive(b.items.into_iter().map(|it| it.tokens).collect()))
                    .collect())
            }
            Method::Cl | Method::Pcl => {
                let contrastive: Vec<Batch> = sampler::pcl_epoch_batches(
                    &self.subset,
                    self.corpus,
                    cfg.batch_pairs,
                    cfg.seed,
                    epoch,
                )?
                .into_iter()
                .map(|b| {
                    Batch::Contrastive(
                        b.documents
                            .iter()
                            .map(|&d| self.corpus.doc_tokens(d).to_vec())
                            .collect(),
                    )
                })
                .collect();
                let consistency: Vec<Batch> = if cfg.use_uda && !self.complement.is_empty() {
                    sampler::uda_epoch_batches(
                        self.corpus,
                        &self.complement,
                        cfg.batch_pairs,
                        self.augmenter()?,
                        &AugmentationRoute::new(&cfg.uda_route),
                        cfg.seed,
                        epoch,
                    )?
                    .into_iter()
                    .map(Batch::Consistency)
                    .collect()
                } else {
                    vec![]
                };
                Ok(match cfg.schedule {
                    Schedule::PrefixSuffix => contrastive.into_iter().chain(consistency).collect(),
                    Schedule::Interleaved => interleave(contrastive, consistency),
                })
            }
        }
    }

    fn contrastive_step(
        &self,
        params: &mut EncoderParams,
        state: &mut OptimizerState,
        docs: &[Vec<u32>],
    ) -> Result<f64> {
        let caches = docs
            .iter()
            .map(|t| encoder::forward(params, t))
            .collect::<Result<Vec<_>>>()?;
        let latents = BatchLatents::new(caches.iter().map(|c| c.latent.clone()).collect())?;
        let (loss, grad_latents) = contrastive::contrastive_backward(
            latents.as_slice(),
            self.config.similarity,
            self.config.tau,
        )?;
        let mut grads = Gradients::zeros(params.dims());
        for (cache, g) in caches.iter().zip(&grad_latents) {
            encoder::accumulate_backward(params, cache, g, None, &mut grads)?;
        }
        adam_step(params, &grads, state)?;
        Ok(loss)
    }

    fn consistency_step(
        &self,
        params: &mut EncoderParams,
        state: &mut OptimizerState,
        pairs: &[UdaPair],
    ) -> Result<f64> {
        let (loss, grads) = consistency::uda_backward(params, pairs, self.config.uda_target)?;
        adam_step(params, &grads, state)?;
        Ok(loss)
    }

    /// One pass of mini-batch updates followed by clustering of all documents.
    /// `epoch` is 1-based.
    pub fn run_epoch(
        &self,
        params: &mut EncoderParams,
        state: &mut OptimizerState,
        epoch: usize,
    ) -> Result<(EpochReport, Evaluation)> {
        let start = Instant::now();
        let batches = self.epoch_batches(epoch)?;
        let mut cl_sum = 0.0;
        let mut cl_count = 0usize;
        let mut uda_sum = 0.0;
        let mut uda_count = 0usize;
        let mut batch_log = Vec::with_capacity(batches.len());
        for batch in &batches {
            match batch {
                Batch::Contrastive(docs) => {
                    cl_sum += self.contrastive_step(params, state, docs)?;
                    cl_count += 1;
                    batch_log.push(BatchKind::Contrastive);
                }
                Batch::Consistency(pairs) => {
                    uda_sum += self.consistency_step(params, state, pairs)?;
                    uda_count += 1;
                    batch_log.push(BatchKind::Consistency);
                }
            }
        }
        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        let mean_contrastive = mean(cl_sum, cl_count);
        let mean_consistency = mean(uda_sum, uda_count);
        let total = consistency::total_loss(mean_contrastive, mean_consistency)?;
        let eval = self.evaluate(params)?;
        let report = EpochReport {
            epoch,
            mean_contrastive,
            mean_consistency,
            total,
            accuracy: eval.metrics.accuracy,
            batch_log,
            wall_time: start.elapsed(),
        };
        info!(
            "epoch {epoch}: L_CL {:.5} L_UDA {:.5} acc {:.4} ({} batches, {:.2?})",
            report.mean_contrastive,
            report.mean_consistency,
            report.accuracy,
            report.batch_log.len(),
            report.wall_time
        );
        Ok((report, eval))
    }

    /// Runs `epochs` epochs from a fresh initialization. The best checkpoint is the
    /// earliest trained epoch with the highest accuracy (the initialization when no
    /// epochs are run).
    pub fn train(&self) -> Result<TrainOutcome> {
        let (mut params, mut state) = self.init()?;
        let initial = self.evaluate(&params)?;
        let mut best_epoch = 0;
        let mut best_accuracy = initial.metrics.accuracy;
        let mut best_params = params.clone();
        let mut last = initial.clone();
        let mut reports = Vec::with_capacity(self.config.epochs);
        for epoch in 1..=self.config.epochs {
            let (report, eval) = self.run_epoch(&mut params, &mut state, epoch)?;
            if epoch == 1 || report.accuracy > best_accuracy {
                best_epoch = epoch;
                best_accuracy = report.accuracy;
                best_params = params.clone();
            }
            reports.push(report);
            last = eval;
        }
        Ok(TrainOutcome {
            initial,
            reports,
            best_epoch,
            best_accuracy,
            best_params,
            last_params: params,
            last,
            optimizer_steps: state.step,
        })
    }
}

fn interleave(a: Vec<Batch>, b: Vec<Batch>) -> Vec<Batch> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut a = a.into_iter();
    let mut b = b.into_iter();
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (x, y) => out.extend(x.into_iter().chain(y)),
        }
    }
    out
}

pub fn train(
    config: &TrainConfig,
    corpus: &Corpus,
    augmenter: Option<&dyn Augmenter>,
) -> Result<TrainOutcome> {
    Trainer::new(config.clone(), corpus, augmenter)?.train()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub accuracy: f64,
}

/// Independent training runs, one per temperature, all with the configured seed.
/// Rows keep the input order and report each run's best epoch accuracy.
pub fn sweep_tau(
    config: &TrainConfig,
    taus: &[f64],
    corpus: &Corpus,
    augmenter: Option<&dyn Augmenter>,
) -> Result<Vec<SweepRow>> {
    if taus.is_empty() {
        return Err(Error::InvalidConfig("empty temperature list".into()));
    }
    if let Some(&bad) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidTemperature(bad));
    }
    taus.iter()
        .map(|&tau| {
            let cfg = TrainConfig {
                tau,
                ..config.clone()
            };
            let outcome = train(&cfg, corpus, augmenter)?;
            Ok(SweepRow {
                tau,
                accuracy: outcome.best_accuracy,
            })
        })
        .collect()
}
