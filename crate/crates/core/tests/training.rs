//! Training runs on the synthetic corpus.

use docclust::augment::{AugmentCache, CachedAugmenter, ParaphraseProvider};
use docclust::contrastive::SimilarityKind;
use docclust::synthetic::{SyntheticCorpus, SyntheticSpec};
use docclust::trainer::{train, BatchKind, Method, Schedule, TrainConfig, Trainer};

fn corpus() -> SyntheticCorpus {
    SyntheticCorpus::generate(&SyntheticSpec::default()).unwrap()
}

fn config(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        batch_pairs: 4,
        fraction: 0.5,
        epochs: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn contrastive_loss_falls_over_early_epochs() {
    let s = corpus();
    let out = train(&config(Method::Pcl), &s.corpus, None).unwrap();
    assert!(out.reports[4].mean_contrastive < out.reports[0].mean_contrastive);
    assert_eq!(out.reports.len(), 5);
}

#[test]
fn every_step_consumes_one_batch() {
    let s = corpus();
    let cache = AugmentCache::in_memory();
    let provider = ParaphraseProvider::new(0, s.synonyms.clone());
    let aug = CachedAugmenter {
        cache: &cache,
        provider: &provider,
    };
    for cfg in [
        TrainConfig {
            use_uda: true,
            epochs: 2,
            ..config(Method::Pcl)
        },
        TrainConfig {
            use_uda: true,
            epochs: 2,
            schedule: Schedule::Interleaved,
            ..config(Method::Pcl)
        },
        TrainConfig {
            epochs: 2,
            ..config(Method::Scl)
        },
        TrainConfig {
            epochs: 2,
            ..config(Method::Cl)
        },
    ] {
        let out = train(&cfg, &s.corpus, Some(&aug)).unwrap();
        let batches: usize = out.reports.iter().map(|r| r.batch_log.len()).sum();
        assert_eq!(out.optimizer_steps as usize, batches, "{:?}", cfg.method);
    }
}

#[test]
fn label_paired_batch_counts() {
    let s = corpus();
    let cache = AugmentCache::in_memory();
    let provider = ParaphraseProvider::new(0, s.synonyms.clone());
    let aug = CachedAugmenter {
        cache: &cache,
        provider: &provider,
    };
    let cfg = TrainConfig {
        use_uda: true,
        epochs: 1,
        ..config(Method::Pcl)
    };
    let t = Trainer::new(cfg, &s.corpus, Some(&aug)).unwrap();
    let (mut p, mut st) = t.init().unwrap();
    let (r, _) = t.run_epoch(&mut p, &mut st, 1).unwrap();
    let count = |k| r.batch_log.iter().filter(|x| **x == k).count();
    // 200 labeled documents in pairs of 4 classes; 200 others in groups of 4
    assert_eq!(count(BatchKind::Contrastive), 25);
    assert_eq!(count(BatchKind::Consistency), 50);

    let cl = Trainer::new(
        TrainConfig {
            epochs: 1,
            ..config(Method::Cl)
        },
        &s.corpus,
        None,
    )
    .unwrap();
    assert_eq!(cl.subset().len(), 400);
}

#[test]
fn all_similarity_kinds_train() {
    let s = corpus();
    for similarity in [
        SimilarityKind::Cosine,
        SimilarityKind::NegManhattan,
        SimilarityKind::NegEuclidean,
    ] {
        let out = train(
            &TrainConfig {
                similarity,
                epochs: 2,
                ..config(Method::Pcl)
            },
            &s.corpus,
            None,
        )
        .unwrap();
        assert!(out.reports.iter().all(|r| r.total.is_finite()));
        assert!(
            out.best_accuracy > out.initial.metrics.accuracy,
            "{similarity}"
        );
    }
}
