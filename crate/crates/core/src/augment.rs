//! Back-translation augmentation: translation providers, an offline deterministic
//! paraphraser and a persistent JSONL cache of augmented texts.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use log::{debug, warn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SOURCE_LANGUAGE: &str = "en";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

const SUBSTITUTION_PROBABILITY: f64 = 0.3;
const DROPOUT_PROBABILITY: f64 = 0.1;
const TOKENS_PER_SWAP: usize = 20;
const DEFAULT_SYNONYMS: &str = include_str!("../data/synonyms.txt");

/// A pivot language used for one round trip.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AugmentationRoute {
    pub id: String,
    pub pivot: String,
}

impl AugmentationRoute {
    pub fn new(pivot: &str) -> Self {
        Self {
            id: pivot.to_owned(),
            pivot: pivot.to_owned(),
        }
    }

    pub fn spanish() -> Self {
        Self::new("es")
    }

    pub fn french() -> Self {
        Self::new("fr")
    }
}

impl FromStr for AugmentationRoute {
    type Err = Error;

    /// Accepts `pivot` or `id=pivot`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (id, pivot) = s.split_once('=').unwrap_or((s, s));
        if id.is_empty() || pivot.is_empty() {
            return Err(Error::InvalidConfig(format!("bad route `{s}`")));
        }
        Ok(Self {
            id: id.to_owned(),
            pivot: pivot.to_owned(),
        })
    }
}

/// Parses a comma-separated route list and rejects duplicate ids.
pub fn parse_routes(list: &str) -> Result<Vec<AugmentationRoute>> {
    let routes = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(AugmentationRoute::from_str)
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = routes.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig(format!(
            "duplicate route ids in `{list}`"
        )));
    }
    if routes.is_empty() {
        return Err(Error::InvalidConfig("empty route list".into()));
    }
    Ok(routes)
}

pub trait TranslationProvider: Send + Sync {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String>;
}

/// Translates `text` to the route's pivot language and back.
pub fn back_translate(
    provider: &dyn TranslationProvider,
    doc_id: &str,
    text: &str,
    route: &AugmentationRoute,
) -> Result<String> {
    let fail = |message: String| Error::Augment {
        doc: doc_id.to_owned(),
        route: route.id.clone(),
        message,
    };
    let there = provider
        .translate(text, SOURCE_LANGUAGE, &route.pivot)
        .map_err(|e| fail(e.to_string()))?;
    let back = provider
        .translate(&there, &route.pivot, SOURCE_LANGUAGE)
        .map_err(|e| fail(e.to_string()))?;
    if back.trim().is_empty() {
        return Err(fail("empty translation".into()));
    }
    Ok(back)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

/// Client for a JSON-over-HTTP translation service.
///
/// Request body `{"q", "source", "target"}`, response body `{"translatedText"}`.
pub struct RemoteProvider {
    url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_retry(url, RetryPolicy::default())
    }

    pub fn with_retry(url: impl Into<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(60))
            .build();
        Self {
            url: url.into(),
            agent,
            retry,
        }
    }

    fn attempt(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let body = TranslateRequest {
            q: text,
            source,
            target,
        };
        let resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| Error::Provider(e.to_string()))?;
        let parsed: TranslateResponse = resp
            .into_json()
            .map_err(|e| Error::Provider(format!("bad response body: {e}")))?;
        Ok(parsed.translated_text)
    }
}

impl TranslationProvider for RemoteProvider {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let attempts = self.retry.attempts.max(1);
        let mut delay = self.retry.base_delay;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(text, source, target) {
                Ok(t) => return Ok(t),
                Err(e) => {
                    debug!("translation attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Provider(format!(
            "{} after {attempts} attempts",
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}

/// Token → alternative spellings used by the paraphraser.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    /// One record per line: the token followed by its alternatives, whitespace separated.
    pub fn parse(contents: &str) -> Self {
        let mut entries = BTreeMap::new();
        for line in contents.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace().map(str::to_lowercase);
            if let Some(key) = words.next() {
                let alts: Vec<String> = words.collect();
                if !alts.is_empty() {
                    entries.insert(key, alts);
                }
            }
        }
        Self { entries }
    }

    pub fn shipped() -> Self {
        Self::parse(DEFAULT_SYNONYMS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&s))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        Self {
            entries: entries.into_iter().filter(|(_, v)| !v.is_empty()).collect(),
        }
    }

    pub fn alternatives(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} {}\n", v.join(" ")))
            .collect()
    }
}

/// RNG keyed by `(seed, route, text)`.
pub fn paraphrase_rng(text: &str, route: &str, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"paraphrase");
    h.update(seed.to_le_bytes());
    h.update((route.len() as u64).to_le_bytes());
    h.update(route.as_bytes());
    h.update(text.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn lookup_key(token: &str) -> String {
    token
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric())
        .collect()
}

/// Offline stand-in for a neural round trip: synonym substitution (p = 0.3 per eligible
/// token), token dropout (p = 0.1, skipped if it would empty the text) and one adjacent
/// swap per 20 tokens.
pub fn deterministic_paraphrase(
    text: &str,
    route: &str,
    seed: u64,
    synonyms: &SynonymTable,
) -> Result<String> {
    let mut tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    let mut rng = paraphrase_rng(text, route, seed);

    for tok in tokens.iter_mut() {
        if let Some(alts) = synonyms.alternatives(&lookup_key(tok)) {
            if rng.gen::<f64>() < SUBSTITUTION_PROBABILITY {
                *tok = alts[rng.gen_range(0..alts.len())].clone();
            }
        }
    }

    if tokens.len() > 1 {
        let kept: Vec<String> = tokens
            .iter()
            .filter(|_| rng.gen::<f64>() >= DROPOUT_PROBABILITY)
            .cloned()
            .collect();
        if !kept.is_empty() {
            tokens = kept;
        }
    }

    for _ in 0..tokens.len() / TOKENS_PER_SWAP {
        let p = rng.gen_range(0..tokens.len() - 1);
        tokens.swap(p, p + 1);
    }
    Ok(tokens.join(" "))
}

/// Translation provider backed by [`deterministic_paraphrase`]: the outbound leg is the
/// identity and the return leg paraphrases under the pivot language's stream.
#[derive(Debug, Clone)]
pub struct ParaphraseProvider {
    pub seed: u64,
    pub synonyms: SynonymTable,
}

impl ParaphraseProvider {
    pub fn new(seed: u64, synonyms: SynonymTable) -> Self {
        Self { seed, synonyms }
    }
}

impl TranslationProvider for ParaphraseProvider {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        if target == SOURCE_LANGUAGE && source != SOURCE_LANGUAGE {
            deterministic_paraphrase(text, source, self.seed, &self.synonyms)
        } else {
            Ok(text.to_owned())
        }
    }
}

/// Wraps a provider and counts `translate` calls.
pub struct CountingProvider<P> {
    pub inner: P,
    calls: AtomicUsize,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: TranslationProvider> TranslationProvider for CountingProvider<P> {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.translate(text, source, target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheRecord {
    doc: String,
    route: String,
    text: String,
}

type CacheKey = (String, String);

/// `(document id, route id) → augmented text`, optionally persisted as JSONL.
#[derive(Debug, Default)]
pub struct AugmentCache {
    entries: RwLock<BTreeMap<CacheKey, String>>,
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
}

impl AugmentCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists; new entries are appended to it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if entries
                    .insert((rec.doc.clone(), rec.route.clone()), rec.text)
                    .is_some()
                {
                    warn!(
                        "duplicate cache entry for ({}, {}); keeping the last",
                        rec.doc, rec.route
                    );
                }
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            path: Some(path.to_path_buf()),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, doc: &str, route: &str) -> Option<String> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(doc.to_owned(), route.to_owned()))
            .cloned()
    }

    pub fn contains(&self, doc: &str, route: &str) -> bool {
        self.get(doc, route).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> BTreeMap<(String, String), String> {
        self.entries.read().expect("cache lock poisoned").clone()
    }

    /// Inserts and appends to the backing file. Existing keys are left untouched.
    pub fn insert(&self, doc: &str, route: &str, text: &str) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        let key = (doc.to_owned(), route.to_owned());
        if self
            .entries
            .read()
            .expect("cache lock poisoned")
            .contains_key(&key)
        {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if writer.is_none() {
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                *writer = Some(f);
            }
            let line = serde_json::to_string(&CacheRecord {
                doc: doc.to_owned(),
                route: route.to_owned(),
                text: text.to_owned(),
            })?;
            let f = writer.as_mut().expect("writer opened above");
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, text.to_owned());
        Ok(())
    }

    /// Rewrites the backing file with entries in key order.
    pub fn compact(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        *writer = None;
        let mut out = String::new();
        for ((doc, route), text) in self.entries.read().expect("cache lock poisoned").iter() {
            out.push_str(&serde_json::to_string(&CacheRecord {
                doc: doc.clone(),
                route: route.clone(),
                text: text.clone(),
            })?);
            out.push('\n');
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// Returns the cached augmentation, computing and persisting it on a miss.
/// Failures are propagated without writing an entry.
pub fn cache_get_or_compute(
    cache: &AugmentCache,
    doc_id: &str,
    text: &str,
    route: &AugmentationRoute,
    provider: &dyn TranslationProvider,
) -> Result<String> {
    if let Some(hit) = cache.get(doc_id, &route.id) {
        return Ok(hit);
    }
    let computed = back_translate(provider, doc_id, text, route)?;
    cache.insert(doc_id, &route.id, &computed)?;
    Ok(computed)
}

/// Source of augmented text for a document under a route.
pub trait Augmenter: Sync {
    fn augment(&self, doc_id: &str, text: &str, route: &AugmentationRoute) -> Result<String>;
}

/// Cache in front of a provider.
pub struct CachedAugmenter<'a> {
    pub cache: &'a AugmentCache,
    pub provider: &'a dyn TranslationProvider,
}

impl Augmenter for CachedAugmenter<'_> {
    fn augment(&self, doc_id: &str, text: &str, route: &AugmentationRoute) -> Result<String> {
        cache_get_or_compute(self.cache, doc_id, text, route, self.provider)
    }
}

/// Reads only from a cache; a miss is an error.
pub struct CacheOnly<'a>(pub &'a AugmentCache);

impl Augmenter for CacheOnly<'_> {
    fn augment(&self, doc_id: &str, _text: &str, route: &AugmentationRoute) -> Result<String> {
        self.0.get(doc_id, &route.id).ok_or_else(|| Error::Augment {
            doc: doc_id.to_owned(),
            route: route.id.clone(),
            message: "not in cache".into(),
        })
    }
}

#[derive(Debug, Default)]
pub struct FillSummary {
    pub computed: usize,
    pub skipped: usize,
    pub failures: Vec<(String, String, String)>,
}

/// Fills the cache for every `(document, route)` pair, skipping keys already present.
/// At most `max_in_flight` provider round trips run at once.
pub fn fill_cache(
    cache: &AugmentCache,
    documents: &[(&str, &str)],
    routes: &[AugmentationRoute],
    provider: &dyn TranslationProvider,
    max_in_flight: usize,
) -> FillSummary {
    let mut summary = FillSummary::default();
    let mut work = Vec::new();
    for &(id, text) in documents {
        for route in routes {
            if cache.contains(id, &route.id) {
                summary.skipped += 1;
            } else {
                work.push((id, text, route));
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<()>)>> = Mutex::new(Vec::with_capacity(work.len()));
    let workers = max_in_flight.max(1).min(work.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(id, text, route)) = work.get(i) else {
                    break;
                };
                let r = cache_get_or_compute(cache, id, text, route, provider).map(|_| ());
                results.lock().expect("results lock poisoned").push((i, r));
            });
        }
    });

    let mut results = results.into_inner().expect("results lock poisoned");
    results.sort_by_key(|(i, _)| *i);
    for (i, r) in results {
        match r {
            Ok(()) => summary.computed += 1,
            Err(e) => {
                let (id, _, route) = work[i];
                summary
                    .failures
                    .push((id.to_owned(), route.id.clone(), e.to_string()));
            }
        }
    }
    summary
}
