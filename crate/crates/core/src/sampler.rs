//! Mini-batch construction.
//!
//! * contrastive batches over a labeled subset: `C` classes, two documents each, pairs adjacent;
//! * self-supervised batches: `m` documents, each replaced by two augmentations placed adjacently;
//! * consistency batches: documents outside the labeled subset with one augmentation each.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationRoute, Augmenter};
use crate::consistency::UdaPair;
use crate::corpus::DocumentSource;
use crate::error::{Error, Result};
use crate::seeding;

pub const DEFAULT_FRACTION: f64 = 0.14;
pub const DEFAULT_BATCH_PAIRS: usize = 20;

/// Corpus indices chosen for contrastive training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSubset {
    /// Sorted, distinct corpus indices.
    pub indices: Vec<usize>,
    pub fraction: f64,
}

impl LabeledSubset {
    pub fn ids<'a>(&self, source: &'a impl DocumentSource) -> Vec<&'a str> {
        self.indices.iter().map(|&i| source.doc_id(i)).collect()
    }

    /// Corpus indices not in the subset, ascending.
    pub fn complement(&self, doc_count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(doc_count.saturating_sub(self.indices.len()));
        let mut it = self.indices.iter().peekable();
        for i in 0..doc_count {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn group_by_class(source: &impl DocumentSource, indices: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        if let Some(c) = source.doc_label(i) {
            by_class.entry(c).or_default().push(i);
        }
    }
    by_class
}

/// Stratified sample of `⌈fraction · N⌉` labeled documents, allocated to classes by
/// largest remainder so class proportions are kept within rounding.
pub fn select_partial_subset(
    source: &impl DocumentSource,
    fraction: f64,
    seed: u64,
) -> Result<LabeledSubset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = source.doc_count();
    let all: Vec<usize> = (0..n).collect();
    let by_class = group_by_class(source, &all);
    let labeled: usize = by_class.values().map(Vec::len).sum();
    let target = ((fraction * n as f64).ceil() as usize).min(labeled);

    // largest-remainder apportionment
    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, docs)| {
            let exact = target as f64 * docs.len() as f64 / labeled.max(1) as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(target - assigned) {
        quotas[k].1 += 1;
    }

    let mut indices = Vec::with_capacity(target);
    for (c, quota, _) in quotas {
        if quota < 2 {
            return Err(Error::Sampling(format!(
                "class `{}` would keep {quota} document(s); at least 2 are needed to form a pair",
                source.class_name(c)
            )));
        }
        let mut docs = by_class[&c].clone();
        let mut rng = seeding::stream(seed, "subset", c as u64);
        docs.shuffle(&mut rng);
        indices.extend_from_slice(&docs[..quota]);
    }
    indices.sort_unstable();
    Ok(LabeledSubset { indices, fraction })
}

/// `2C` corpus indices in pair order; pair `k` occupies positions `2k` and `2k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PclBatch {
    pub documents: Vec<usize>,
}

impl PclBatch {
    pub fn pair_count(&self) -> usize {
        self.documents.len() / 2
    }

    /// Length `2C`, exactly `C` distinct labels, each label on exactly one adjacent pair.
    pub fn check(&self, source: &impl DocumentSource, pairs: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBatch(m));
        if self.documents.len() != 2 * pairs {
            return bad(format!(
                "expected {} documents, got {}",
                2 * pairs,
                self.documents.len()
            ));
        }
        let mut seen_docs = self.documents.clone();
        seen_docs.sort_unstable();
        if seen_docs.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate document".into());
        }
        let mut labels = Vec::with_capacity(pairs);
        for pair in self.documents.chunks(2) {
            let (a, b) = (source.doc_label(pair[0]), source.doc_label(pair[1]));
            match (a, b) {
                (Some(a), Some(b)) if a == b => labels.push(a),
                _ => return bad(format!("pair {pair:?} does not share a label")),
            }
        }
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("two pairs share a class".into());
        }
        Ok(())
    }
}

/// One random contrastive batch from the subset; a pure function of `(seed, batch_index)`.
pub fn sample_pcl_batch(
    subset: &LabeledSubset,
    source: &impl DocumentSource,
    pairs: usize,
    seed: u64,
    batch_index: u64,
) -> Result<PclBatch> {
    if pairs < 2 {
        return Err(Error::InvalidConfig(
            "a contrastive batch needs at least 2 pairs".into(),
        ));
    }
    let by_class = group_by_class(source, &subset.indices);
    let eligible: Vec<&Vec<usize>> = by_class.values().filter(|d| d.len() >= 2).collect();
    if eligible.len() < pairs {
        return Err(Error::Sampling(format!(
            "{} classes with >= 2 documents, batch needs {pairs}",
            eligible.len()
        )));
    }
    let mut rng = seeding::stream(seed, "pcl-batch", batch_index);
    let mut documents = Vec::with_capacity(2 * pairs);
    for class_slot in index::sample(&mut rng, eligible.len(), pairs) {
        let docs = eligible[class_slot];
        for d in index::sample(&mut rng, docs.len(), 2) {
            documents.push(docs[d]);
        }
    }
    Ok(PclBatch { documents })
}

/// The contrastive batches of one epoch. Each class's subset documents are shuffled and
/// consumed in order; a batch takes two documents from each of the `pairs` classes with
/// most remaining documents, and the epoch ends when fewer than `pairs` classes have two
/// documents left. No document appears twice within an epoch.
pub fn pcl_epoch_batches(
    subset: &LabeledSubset,
    source: &impl DocumentSource,
    pairs: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<PclBatch>> {
    if pairs < 2 {
        return Err(Error::InvalidConfig(
            "a contrastive batch needs at least 2 pairs".into(),
        ));
    }
    let mut rng = seeding::stream(seed, "pcl-epoch", epoch);
    let mut queues: Vec<Vec<usize>> = group_by_class(source, &subset.indices)
        .into_values()
        .map(|mut docs| {
            docs.shuffle(&mut rng);
            docs
        })
        .collect();
    if queues.iter().filter(|q| q.len() >= 2).count() < pairs {
        return Err(Error::Sampling(format!(
            "subset has fewer than {pairs} classes with >= 2 documents"
        )));
    }

    let mut batches = Vec::new();
    loop {
        let mut eligible: Vec<(usize, usize, u64)> = queues
            .iter()
            .enumerate()
            .filter(|(_, q)| q.len() >= 2)
            .map(|(c, q)| (c, q.len(), rng.gen()))
            .collect();
        if eligible.len() < pairs {
            break;
        }
        eligible.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let mut chosen: Vec<usize> = eligible[..pairs].iter().map(|e| e.0).collect();
        chosen.shuffle(&mut rng);
        let mut documents = Vec::with_capacity(2 * pairs);
        for c in chosen {
            let q = &mut queues[c];
            documents.push(q.pop().expect("eligible queue"));
            documents.push(q.pop().expect("eligible queue"));
        }
        batches.push(PclBatch { documents });
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedItem {
    pub source: usize,
    pub source_id: String,
    pub route: String,
    pub text: String,
    pub tokens: Vec<u32>,
}

/// `2m` augmented texts; positions `2k`, `2k + 1` are the two augmentations of one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SclBatch {
    pub items: Vec<AugmentedItem>,
}

impl SclBatch {
    pub fn pair_count(&self) -> usize {
        self.items.len() / 2
    }

    pub fn check(&self, pairs: usize, routes: &[AugmentationRoute; 2]) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBatch(m));
        if self.items.len() != 2 * pairs {
            return bad(format!(
                "expected {} items, got {}",
                2 * pairs,
                self.items.len()
            ));
        }
        let mut sources = Vec::with_capacity(pairs);
        for pair in self.items.chunks(2) {
            if pair[0].source != pair[1].source {
                return bad("pair mixes two sources".into());
            }
            if pair[0].route != routes[0].id || pair[1].route != routes[1].id {
                return bad(format!("pair routes {} / {}", pair[0].route, pair[1].route));
            }
            if pair.iter().any(|it| it.tokens.is_empty()) {
                return bad("empty augmented item".into());
            }
            sources.push(pair[0].source);
        }
        sources.sort_unstable();
        if sources.windows(2).any(|w| w[0] == w[1]) {
            return bad("source contributes more than one pair".into());
        }
        Ok(())
    }
}

fn augmented_tokens(source: &impl DocumentSource, doc: usize, text: &str) -> Vec<u32> {
    let tokens = source.tokenize_text(text);
    if tokens.is_empty() {
        warn!(
            "augmentation of {} is empty after preprocessing; using the source tokens",
            source.doc_id(doc)
        );
        return source.doc_tokens(doc).to_vec();
    }
    tokens
}

fn augment_item(
    source: &impl DocumentSource,
    doc: usize,
    augmenter: &dyn Augmenter,
    route: &AugmentationRoute,
) -> Result<AugmentedItem> {
    let id = source.doc_id(doc);
    let text = augmenter.augment(id, source.doc_text(doc), route)?;
    let tokens = augmented_tokens(source, doc, &text);
    Ok(AugmentedItem {
        source: doc,
        source_id: id.to_owned(),
        route: route.id.clone(),
        text,
        tokens,
    })
}

fn scl_batch_from(
    source: &impl DocumentSource,
    docs: &[usize],
    augmenter: &dyn Augmenter,
    routes: &[AugmentationRoute; 2],
) -> Result<SclBatch> {
    let mut items = Vec::with_capacity(2 * docs.len());
    for &d in docs {
        for route in routes {
            items.push(augment_item(source, d, augmenter, route)?);
        }
    }
    Ok(SclBatch { items })
}

/// `m` documents drawn without replacement, each contributing its two augmentations.
/// Labels are never read.
pub fn sample_scl_batch(
    source: &impl DocumentSource,
    m: usize,
    augmenter: &dyn Augmenter,
    routes: &[AugmentationRoute; 2],
    seed: u64,
    batch_index: u64,
) -> Result<SclBatch> {
    if m < 2 {
        return Err(Error::InvalidConfig(
            "a self-supervised batch needs m >= 2".into(),
        ));
    }
    if source.doc_count() < m {
        return Err(Error::Sampling(format!(
            "batch needs {m} documents, corpus has {}",
            source.doc_count()
        )));
    }
    let mut rng = seeding::stream(seed, "scl-batch", batch_index);
    let docs = index::sample(&mut rng, source.doc_count(), m).into_vec();
    scl_batch_from(source, &docs, augmenter, routes)
}

/// One pass over the whole corpus in a random order, `m` sources per batch; a final
/// chunk with fewer than two sources is skipped.
pub fn scl_epoch_batches(
    source: &impl DocumentSource,
    m: usize,
    augmenter: &dyn Augmenter,
    routes: &[AugmentationRoute; 2],
    seed: u64,
    epoch: u64,
) -> Result<Vec<SclBatch>> {
    if m < 2 {
        return Err(Error::InvalidConfig(
            "a self-supervised batch needs m >= 2".into(),
        ));
    }
    let mut order: Vec<usize> = (0..source.doc_count()).collect();
    order.shuffle(&mut seeding::stream(seed, "scl-epoch", epoch));
    order
        .chunks(m)
        .filter(|c| c.len() >= 2)
        .map(|c| scl_batch_from(source, c, augmenter, routes))
        .collect()
}

fn uda_pair(
    source: &impl DocumentSource,
    doc: usize,
    augmenter: &dyn Augmenter,
    route: &AugmentationRoute,
    seed: u64,
) -> Result<UdaPair> {
    let item = augment_item(source, doc, augmenter, route)?;
    Ok(UdaPair {
        original: source.doc_tokens(doc).to_vec(),
        augmented: item.tokens,
        doc_id: item.source_id,
        route: item.route,
        seed,
    })
}

/// `m` documents from outside the labeled subset, each with its augmentation.
pub fn sample_uda_pairs(
    source: &impl DocumentSource,
    complement: &[usize],
    m: usize,
    augmenter: &dyn Augmenter,
    route: &AugmentationRoute,
    seed: u64,
    batch_index: u64,
) -> Result<Vec<UdaPair>> {
    if complement.is_empty() {
        return Err(Error::Sampling(
            "no documents outside the labeled subset".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidConfig(
            "consistency batch size must be >= 1".into(),
        ));
    }
    let mut rng = seeding::stream(seed, "uda-batch", batch_index);
    index::sample(&mut rng, complement.len(), m.min(complement.len()))
        .into_iter()
        .map(|k| uda_pair(source, complement[k], augmenter, route, seed))
        .collect()
}

/// `⌈|complement| / m⌉` consistency batches covering the complement once.
pub fn uda_epoch_batches(
    source: &impl DocumentSource,
    complement: &[usize],
    m: usize,
    augmenter: &dyn Augmenter,
    route: &AugmentationRoute,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<UdaPair>>> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "consistency batch size must be >= 1".into(),
        ));
    }
    let mut order = complement.to_vec();
    order.shuffle(&mut seeding::stream(seed, "uda-epoch", epoch));
    order
        .chunks(m)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&d| uda_pair(source, d, augmenter, route, seed))
                .collect()
        })
        .collect()
}
