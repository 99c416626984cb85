//! Acceptance checks. Each test prints one `[PASS]`/`[FAIL]` line (visible with
//! `--nocapture`, and in the failure output otherwise) before asserting.

use std::cell::Cell;
use std::time::{Duration, Instant};

use docclust::augment::{AugmentCache, AugmentationRoute, CachedAugmenter, ParaphraseProvider};
use docclust::cluster_eval::{clustering_accuracy, hungarian_max_matching};
use docclust::consistency::{
    kl_divergence, predict_distribution, uda_backward, ClassDistribution, TargetMode, UdaPair,
};
use docclust::contrastive::{
    batch_contrastive_loss, contrastive_backward, pair_loss, SimilarityKind,
};
use docclust::corpus::{Corpus, DocumentSource};
use docclust::encoder::{self, init_params, Dims, EncoderParams};
use docclust::sampler::{sample_pcl_batch, sample_scl_batch, select_partial_subset};
use docclust::synthetic::{SyntheticCorpus, SyntheticSpec};
use docclust::trainer::{self, Method, TrainConfig, TrainOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------- oracles

fn oracle_similarity(kind: SimilarityKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        SimilarityKind::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        }
        SimilarityKind::NegManhattan => -a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>(),
        SimilarityKind::NegEuclidean => -a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Contrastive loss written with 1-based pair indices: documents 2k-1 and 2k are
/// positives, every other document in the batch is a negative.
fn oracle_contrastive(v: &[Vec<f64>], kind: SimilarityKind, tau: f64) -> f64 {
    let n = v.len();
    let c = n / 2;
    let s = |i: usize, j: usize| oracle_similarity(kind, &v[i - 1], &v[j - 1]);
    let l = |i: usize, j: usize| {
        let den: f64 = (1..=n)
            .filter(|&k| k != i)
            .map(|k| (s(i, k) / tau).exp())
            .sum();
        -((s(i, j) / tau).exp() / den).ln()
    };
    (1..=c)
        .map(|k| l(2 * k - 1, 2 * k) + l(2 * k, 2 * k - 1))
        .sum::<f64>()
        / (2 * c) as f64
}

fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

const FD_STEP: f64 = 1e-5;

fn central(f: &mut dyn FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn random_params(rng: &mut ChaCha8Rng, dims: Dims) -> EncoderParams {
    let mut p = init_params(rng.gen(), dims).unwrap();
    for b in p.tensors.b1.iter_mut().chain(p.tensors.b2.iter_mut()) {
        *b = rng.gen_range(-0.5..0.5);
    }
    for w in p.tensors.w2.data.iter_mut() {
        *w *= 3.0;
    }
    p
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<u32> {
    let len = rng.gen_range(1..6);
    (0..len).map(|_| rng.gen_range(0..vocab as u32)).collect()
}

/// Flat parameter indices to probe: every parameter when small, else a random sample.
fn probe_indices(rng: &mut ChaCha8Rng, total: usize) -> Vec<usize> {
    if total <= 150 {
        (0..total).collect()
    } else {
        (0..150).map(|_| rng.gen_range(0..total)).collect()
    }
}

// ---------------------------------------------------------------- loss values

#[test]
fn loss_values_on_constructed_batches() {
    let start = Instant::now();
    let v = vec![
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
    ];
    let got = batch_contrastive_loss(&v, SimilarityKind::Cosine, 1.0).unwrap();
    let e = std::f64::consts::E;
    let want = ((e + 2.0) / e).ln();
    let uniform = vec![vec![0.0, 1.0]; 4];
    let got_u = batch_contrastive_loss(&uniform, SimilarityKind::Cosine, 1.0).unwrap();
    let elapsed = start.elapsed();
    let ok = (got - want).abs() < 1e-9
        && (got_u - 3f64.ln()).abs() < 1e-9
        && elapsed < Duration::from_secs(1);
    report(
        "loss values on constructed batches",
        ok,
        format!(
            "paired {got:.12} (want {want:.12}), uniform {got_u:.12} (want ln 3), {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- gradients

#[test]
fn gradient_suite_matches_finite_differences() {
    let start = Instant::now();
    let instances = 20;
    let mut worst = [0.0f64; 6];
    let names = [
        "cosine",
        "neg_manhattan",
        "neg_euclidean",
        "encoder",
        "uda frozen",
        "uda live",
    ];
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        // contrastive: gradient with respect to each latent coordinate
        for (slot, kind) in [
            SimilarityKind::Cosine,
            SimilarityKind::NegManhattan,
            SimilarityKind::NegEuclidean,
        ]
        .into_iter()
        .enumerate()
        {
            let n = 2 * rng.gen_range(2..5);
            let d = rng.gen_range(2..6);
            let tau = rng.gen_range(0.2..2.0);
            let v: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                    x.iter().map(|a| a / norm).collect()
                })
                .collect();
            let (loss, grads) = contrastive_backward(&v, kind, tau).unwrap();
            assert!((loss - oracle_contrastive(&v, kind, tau)).abs() < 1e-10);
            for i in 0..n {
                for c in 0..d {
                    let mut f = |x: f64| {
                        let mut w = v.clone();
                        w[i][c] = x;
                        oracle_contrastive(&w, kind, tau)
                    };
                    let num = central(&mut f, v[i][c]);
                    worst[slot] = worst[slot].max(rel_err(grads[i][c], num));
                }
            }
        }

        // encoder: scalar g·v + h·z over the parameters
        let dims = Dims {
            vocab: rng.gen_range(5..15),
            embed: rng.gen_range(2..6),
            hidden: rng.gen_range(2..7),
            latent: rng.gen_range(2..5),
        };
        let params = random_params(&mut rng, dims);
        let tokens = random_tokens(&mut rng, dims.vocab);
        let g: Vec<f64> = (0..dims.latent).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..dims.latent).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scalar = |p: &EncoderParams| {
            let c = encoder::forward(p, &tokens).unwrap();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            dot(&g, &c.latent) + dot(&h, &c.logits)
        };
        let cache = encoder::forward(&params, &tokens).unwrap();
        let grads = encoder::encode_backward(&params, &cache, &g, Some(&h)).unwrap();
        for idx in probe_indices(&mut rng, params.tensors.len()) {
            let mut f = |x: f64| {
                let mut p = params.clone();
                p.tensors.set_flat(idx, x);
                scalar(&p)
            };
            let num = central(&mut f, params.tensors.get_flat(idx));
            worst[3] = worst[3].max(rel_err(grads.tensors.get_flat(idx), num));
        }

        // consistency: frozen clean target and fully differentiated
        let pairs: Vec<UdaPair> = (0..rng.gen_range(1..4))
            .map(|_| UdaPair {
                original: random_tokens(&mut rng, dims.vocab),
                augmented: random_tokens(&mut rng, dims.vocab),
                doc_id: "d".into(),
                route: "es".into(),
                seed: 0,
            })
            .collect();
        let dist = |p: &EncoderParams, t: &[u32]| oracle_softmax(&encoder::logits(p, t).unwrap());
        let targets: Vec<Vec<f64>> = pairs.iter().map(|pr| dist(&params, &pr.original)).collect();
        let frozen_loss = |p: &EncoderParams| {
            pairs
                .iter()
                .zip(&targets)
                .map(|(pr, t)| oracle_kl(t, &dist(p, &pr.augmented)))
                .sum::<f64>()
        };
        let live_loss = |p: &EncoderParams| {
            pairs
                .iter()
                .map(|pr| oracle_kl(&dist(p, &pr.original), &dist(p, &pr.augmented)))
                .sum::<f64>()
        };
        let probes = probe_indices(&mut rng, params.tensors.len());
        for (slot, mode) in [(4, TargetMode::Frozen), (5, TargetMode::Live)] {
            let (loss, grads) = uda_backward(&params, &pairs, mode).unwrap();
            assert!((loss - live_loss(&params)).abs() < 1e-10);
            for &idx in &probes {
                let mut f = |x: f64| {
                    let mut p = params.clone();
                    p.tensors.set_flat(idx, x);
                    match mode {
                        TargetMode::Frozen => frozen_loss(&p),
                        TargetMode::Live => live_loss(&p),
                    }
                };
                let num = central(&mut f, params.tensors.get_flat(idx));
                worst[slot] = worst[slot].max(rel_err(grads.tensors.get_flat(idx), num));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst.iter().all(|w| *w < 1e-4) && elapsed < Duration::from_secs(30);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        "gradient suite matches finite differences",
        ok,
        format!("{instances} instances each, max relative error: {detail}; {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- KL

#[test]
fn kl_divergence_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut min_kl = f64::INFINITY;
    let mut max_self = 0.0f64;
    for _ in 0..1000 {
        let k = rng.gen_range(2..8);
        let logits =
            |rng: &mut ChaCha8Rng| (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect::<Vec<_>>();
        let p = ClassDistribution(oracle_softmax(&logits(&mut rng)));
        let q = ClassDistribution(oracle_softmax(&logits(&mut rng)));
        min_kl = min_kl.min(kl_divergence(&p, &q).unwrap());
        max_self = max_self.max(kl_divergence(&p, &p).unwrap());
    }
    let half = kl_divergence(
        &ClassDistribution(vec![1.0, 0.0]),
        &ClassDistribution(vec![0.5, 0.5]),
    )
    .unwrap();
    let ok = min_kl >= 0.0 && max_self < 1e-12 && (half - 2f64.ln()).abs() < 1e-9;
    report(
        "KL divergence properties",
        ok,
        format!("min KL over 1000 pairs {min_kl:.3e}, max KL(p,p) {max_self:.1e}, KL((1,0),(.5,.5)) {half:.12}"),
    );
}

// ---------------------------------------------------------------- matching

fn brute_force_max(m: &[Vec<u64>]) -> u64 {
    let rows = m.len();
    let cols = m[0].len();
    fn go(m: &[Vec<u64>], r: usize, used: &mut Vec<bool>) -> u64 {
        if r == m.len() {
            return 0;
        }
        let mut best = go(m, r + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(m[r][c] + go(m, r + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let _ = rows;
    go(m, 0, &mut vec![false; cols])
}

fn expand(counts: &[Vec<u64>]) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut clusters = vec![];
    let mut labels = vec![];
    for (k, row) in counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            for _ in 0..n {
                clusters.push(k);
                labels.push(Some(c));
            }
        }
    }
    (clusters, labels)
}

#[test]
fn matching_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mismatches = 0;
    for _ in 0..100 {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(1..=6);
        let m: Vec<Vec<u64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..20)).collect())
            .collect();
        let (assignment, total) = hungarian_max_matching(&m);
        let used: u64 = assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| m[r][c]))
            .sum();
        if total != brute_force_max(&m) || used != total {
            mismatches += 1;
        }
    }
    let (clusters, labels) = expand(&[vec![5, 1, 0], vec![1, 4, 1], vec![0, 0, 3]]);
    let acc = clustering_accuracy(&clusters, 3, &labels, 3).unwrap();
    let (clusters, labels) = expand(&[vec![0, 0, 7], vec![4, 0, 0], vec![0, 9, 0]]);
    let perfect = clustering_accuracy(&clusters, 3, &labels, 3).unwrap();
    let ok = mismatches == 0 && acc == 0.8 && perfect == 1.0;
    report(
        "matching agrees with brute force",
        ok,
        format!("{mismatches}/100 mismatches, worked example {acc}, permuted perfect {perfect}"),
    );
}

// ---------------------------------------------------------------- scaling

#[test]
fn joint_scaling_and_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 2 * rng.gen_range(2..6);
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let i = rng.gen_range(0..n);
        let j = i ^ 1;
        let tau = rng.gen_range(0.05..5.0);
        let base = pair_loss(&row, i, j, tau).unwrap();
        for c in [0.1, 7.3] {
            let scaled: Vec<f64> = row.iter().map(|s| s * c).collect();
            worst = worst.max((pair_loss(&scaled, i, j, c * tau).unwrap() - base).abs());
        }
    }
    let dims = Dims {
        vocab: 10,
        embed: 4,
        hidden: 5,
        latent: 6,
    };
    let mut shift_worst = 0.0f64;
    for seed in 0..50 {
        let params = random_params(&mut ChaCha8Rng::seed_from_u64(seed), dims);
        let tokens = random_tokens(&mut rng, dims.vocab);
        let shift = rng.gen_range(-20.0..20.0);
        let mut shifted = params.clone();
        shifted.tensors.b2.iter_mut().for_each(|b| *b += shift);
        let p = predict_distribution(&params, &tokens).unwrap();
        let q = predict_distribution(&shifted, &tokens).unwrap();
        for (a, b) in p.0.iter().zip(&q.0) {
            shift_worst = shift_worst.max((a - b).abs());
        }
    }
    let ok = worst < 1e-12 && shift_worst < 1e-12;
    report(
        "joint scaling and shift invariance",
        ok,
        format!("max loss change under (cS, c tau) {worst:.2e}, max softmax shift change {shift_worst:.2e}"),
    );
}

// ---------------------------------------------------------------- learning

fn synthetic() -> SyntheticCorpus {
    SyntheticCorpus::generate(&SyntheticSpec::default()).unwrap()
}

fn base_config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        batch_pairs: 4,
        tau: 0.5,
        epochs: 30,
        seed,
        ..TrainConfig::default()
    }
}

fn run(s: &SyntheticCorpus, cfg: &TrainConfig) -> TrainOutcome {
    let cache = AugmentCache::in_memory();
    let provider = ParaphraseProvider::new(0, s.synonyms.clone());
    let aug = CachedAugmenter {
        cache: &cache,
        provider: &provider,
    };
    trainer::train(cfg, &s.corpus, Some(&aug)).unwrap()
}

#[test]
fn synthetic_corpus_learning() {
    let start = Instant::now();
    let s = synthetic();
    let pcl = run(
        &s,
        &TrainConfig {
            fraction: 0.5,
            ..base_config(Method::Pcl, 0)
        },
    );
    let scl = run(&s, &base_config(Method::Scl, 0));
    let elapsed = start.elapsed();
    let ok = pcl.initial.metrics.accuracy <= 0.55
        && pcl.best_accuracy >= 0.90
        && scl.best_accuracy >= 0.75
        && elapsed < Duration::from_secs(180);
    report(
        "synthetic corpus learning",
        ok,
        format!(
            "epoch 0 {:.4}; PCL best {:.4} (epoch {}); SCL best {:.4} (epoch {}); {elapsed:.2?}",
            pcl.initial.metrics.accuracy,
            pcl.best_accuracy,
            pcl.best_epoch,
            scl.best_accuracy,
            scl.best_epoch
        ),
    );
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn method_ordering_over_seeds() {
    let start = Instant::now();
    let s = synthetic();
    let labeled = |seed, use_uda| {
        run(
            &s,
            &TrainConfig {
                use_uda,
                fraction: 0.14,
                ..base_config(Method::Pcl, seed)
            },
        )
        .best_accuracy
    };
    let with_uda: Vec<f64> = SEEDS.iter().map(|&k| labeled(k, true)).collect();
    let pcl: Vec<f64> = SEEDS.iter().map(|&k| labeled(k, false)).collect();
    let scl: Vec<f64> = SEEDS
        .iter()
        .map(|&k| run(&s, &base_config(Method::Scl, k)).best_accuracy)
        .collect();
    let (a, b, c) = (mean(&with_uda), mean(&pcl), mean(&scl));
    report(
        "method ordering over seeds",
        a >= b && b >= c,
        format!(
            "PCL+UDA {a:.4} [{}] >= PCL {b:.4} [{}] >= SCL {c:.4} [{}]; {:.2?}",
            fmt(&with_uda),
            fmt(&pcl),
            fmt(&scl),
            start.elapsed()
        ),
    );
}

#[test]
fn temperature_sweep_shape() {
    let start = Instant::now();
    let s = synthetic();
    let taus = [0.05, 0.5, 5.0];
    let mut table = vec![vec![]; taus.len()];
    for &seed in &SEEDS {
        let cfg = TrainConfig {
            fraction: 0.14,
            ..base_config(Method::Pcl, seed)
        };
        let rows = trainer::sweep_tau(&cfg, &taus, &s.corpus, None).unwrap();
        for (col, row) in table.iter_mut().zip(rows) {
            col.push(row.accuracy);
        }
    }
    let m: Vec<f64> = table.iter().map(|c| mean(c)).collect();
    let elapsed = start.elapsed();
    let ok = m[1] >= m[0] && m[1] >= m[2] && elapsed < Duration::from_secs(300);
    report(
        "temperature sweep shape",
        ok,
        format!(
            "mean best accuracy over seeds: tau 0.05 {:.4} [{}], tau 0.5 {:.4} [{}], tau 5 {:.4} [{}]; {elapsed:.2?}",
            m[0],
            fmt(&table[0]),
            m[1],
            fmt(&table[1]),
            m[2],
            fmt(&table[2])
        ),
    );
}

// ---------------------------------------------------------------- determinism

#[test]
fn training_runs_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = synthetic();
    let raw = d.join("corpus.jsonl");
    let lines: Vec<String> = s
        .records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect();
    std::fs::write(&raw, lines.join("\n")).unwrap();
    std::fs::write(d.join("syn.txt"), s.synonyms.to_text()).unwrap();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();
    let cli = |args: &[&str]| {
        let mut full = vec!["docclust"];
        full.extend_from_slice(args);
        docclust::cli::run_from(full).unwrap();
    };
    cli(&[
        "prepare",
        "--input",
        &p("corpus.jsonl"),
        "--out",
        &p("prepared.json"),
    ]);
    cli(&[
        "augment-cache",
        "--corpus",
        &p("prepared.json"),
        "--synonyms",
        &p("syn.txt"),
        "--out",
        &p("cache.jsonl"),
    ]);
    let train = |out: &str| {
        cli(&[
            "train",
            "--corpus",
            &p("prepared.json"),
            "--cache",
            &p("cache.jsonl"),
            "--out",
            &p(out),
            "--method",
            "pcl",
            "--use-uda",
            "--fraction",
            "0.14",
            "--batch-pairs",
            "4",
            "--epochs",
            "8",
            "--seed",
            "7",
        ]);
        std::fs::read(d.join(out).join("metrics.csv")).unwrap()
    };
    let a = train("run_a");
    let b = train("run_b");
    report(
        "training runs are bitwise reproducible",
        a == b && !a.is_empty(),
        format!("metrics.csv {} bytes, identical: {}", a.len(), a == b),
    );
}

// ---------------------------------------------------------------- sampler invariants

/// Corpus view that counts label reads.
struct LabelAudit<'a> {
    inner: &'a Corpus,
    reads: Cell<usize>,
}

impl DocumentSource for LabelAudit<'_> {
    fn doc_count(&self) -> usize {
        self.inner.doc_count()
    }
    fn doc_id(&self, i: usize) -> &str {
        self.inner.doc_id(i)
    }
    fn doc_text(&self, i: usize) -> &str {
        self.inner.doc_text(i)
    }
    fn doc_tokens(&self, i: usize) -> &[u32] {
        self.inner.doc_tokens(i)
    }
    fn doc_label(&self, i: usize) -> Option<usize> {
        self.reads.set(self.reads.get() + 1);
        self.inner.doc_label(i)
    }
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
    fn tokenize_text(&self, text: &str) -> Vec<u32> {
        self.inner.tokenize_text(text)
    }
}

#[test]
fn sampled_batches_satisfy_invariants() {
    let s = synthetic();
    let subset = select_partial_subset(&s.corpus, 0.5, 3).unwrap();
    let mut pcl_ok = 0;
    for i in 0..10_000u64 {
        let pairs = 2 + (i % 3) as usize;
        let b = sample_pcl_batch(&subset, &s.corpus, pairs, i / 100, i).unwrap();
        if b.check(&s.corpus, pairs).is_ok()
            && b.documents.iter().all(|d| subset.indices.contains(d))
        {
            pcl_ok += 1;
        }
    }
    let audit = LabelAudit {
        inner: &s.corpus,
        reads: Cell::new(0),
    };
    let cache = AugmentCache::in_memory();
    let provider = ParaphraseProvider::new(0, s.synonyms.clone());
    let aug = CachedAugmenter {
        cache: &cache,
        provider: &provider,
    };
    let routes = [AugmentationRoute::spanish(), AugmentationRoute::french()];
    let mut scl_ok = 0;
    for i in 0..10_000u64 {
        let m = 2 + (i % 5) as usize;
        let b = sample_scl_batch(&audit, m, &aug, &routes, i / 100, i).unwrap();
        if b.check(m, &routes).is_ok() {
            scl_ok += 1;
        }
    }
    let reads = audit.reads.get();
    report(
        "sampled batches satisfy invariants",
        pcl_ok == 10_000 && scl_ok == 10_000 && reads == 0,
        format!("PCL {pcl_ok}/10000 valid, SCL {scl_ok}/10000 valid, SCL label reads {reads}"),
    );
}
