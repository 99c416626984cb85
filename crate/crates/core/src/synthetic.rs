//! Seeded synthetic corpora with known topic structure, for demos and tests.
//!
//! Each class owns a disjoint topic vocabulary; documents mix topic words of their
//! class with words from a shared noise pool. The accompanying synonym table groups
//! each topic vocabulary into sets of interchangeable words, so paraphrase
//! augmentations stay on topic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::SynonymTable;
use crate::corpus::{Corpus, LoadOptions, RawRecord};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub docs_per_class: usize,
    pub topic_words: usize,
    pub noise_words: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the shared noise pool.
    pub noise_rate: f64,
    pub synonym_group: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            docs_per_class: 100,
            topic_words: 300,
            noise_words: 100,
            doc_len: 12,
            noise_rate: 0.1,
            synonym_group: 30,
            seed: 0,
        }
    }
}

const CLASS_NAMES: [&str; 8] = [
    "astronomy",
    "cooking",
    "finance",
    "geology",
    "music",
    "sailing",
    "sport",
    "weather",
];

fn class_name(c: usize) -> String {
    CLASS_NAMES
        .get(c)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("topic{c}"))
}

fn topic_word(c: usize, k: usize) -> String {
    format!("{}{k}", class_name(c))
}

fn noise_word(k: usize) -> String {
    format!("common{k}")
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<RawRecord>,
    pub synonyms: SynonymTable,
    pub corpus: Corpus,
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> Result<Self> {
        if spec.classes == 0
            || spec.docs_per_class == 0
            || spec.topic_words == 0
            || spec.doc_len == 0
        {
            return Err(Error::InvalidConfig(
                "synthetic corpus sizes must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&spec.noise_rate)
            || (spec.noise_rate > 0.0 && spec.noise_words == 0)
        {
            return Err(Error::InvalidConfig(
                "noise_rate must be in [0, 1) with a noise pool".into(),
            ));
        }
        let mut rng = seeding::stream(spec.seed, "synthetic", 0);
        let mut labels: Vec<usize> = (0..spec.classes)
            .flat_map(|c| std::iter::repeat_n(c, spec.docs_per_class))
            .collect();
        labels.shuffle(&mut rng);
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let words: Vec<String> = (0..spec.doc_len)
                    .map(|_| {
                        if rng.gen::<f64>() < spec.noise_rate {
                            noise_word(rng.gen_range(0..spec.noise_words))
                        } else {
                            topic_word(c, rng.gen_range(0..spec.topic_words))
                        }
                    })
                    .collect();
                RawRecord {
                    id: format!("doc{i:05}"),
                    text: words.join(" "),
                    label: Some(class_name(c)),
                }
            })
            .collect();
        let group = spec.synonym_group.max(1);
        let mut entries = Vec::new();
        for c in 0..spec.classes {
            let words: Vec<usize> = (0..spec.topic_words).collect();
            for chunk in words.chunks(group) {
                for &w in chunk {
                    let alts: Vec<String> = chunk
                        .iter()
                        .filter(|&&o| o != w)
                        .map(|&o| topic_word(c, o))
                        .collect();
                    if !alts.is_empty() {
                        entries.push((topic_word(c, w), alts));
                    }
                }
            }
        }
        let synonyms = SynonymTable::from_entries(entries);
        let corpus = Corpus::from_records(records, &LoadOptions::default())?;
        let records = corpus_records(&corpus);
        Ok(Self {
            records,
            synonyms,
            corpus,
        })
    }
}

fn corpus_records(corpus: &Corpus) -> Vec<RawRecord> {
    corpus
        .documents
        .iter()
        .map(|d| RawRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            label: d.label.map(|l| corpus.class_names[l].clone()),
        })
        .collect()
}
