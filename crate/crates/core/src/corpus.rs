//! Document collections: loading, text preprocessing and vocabulary indexing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 256;
pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const UNKNOWN_INDEX: u32 = 0;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Parses a stop-word list: one token per line, blank lines and `#` comments ignored.
pub fn parse_stopwords(contents: &str) -> BTreeSet<String> {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&contents))
}

/// Lowercases, replaces every non-alphanumeric character with a space, splits on
/// whitespace, removes stop words and keeps at most [`DEFAULT_MAX_TOKENS`] tokens.
pub fn preprocess(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    preprocess_with_limit(text, stopwords, DEFAULT_MAX_TOKENS)
}

pub fn preprocess_with_limit(
    text: &str,
    stopwords: &BTreeSet<String>,
    max_tokens: usize,
) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !stopwords.contains(*t))
        .take(max_tokens)
        .map(str::to_owned)
        .collect()
}

/// Preprocessing settings carried with a corpus so augmented texts are tokenized identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub stopwords: BTreeSet<String>,
    pub max_tokens: usize,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            stopwords: default_stopwords(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl Preprocessor {
    pub fn apply(&self, text: &str) -> Vec<String> {
        preprocess_with_limit(text, &self.stopwords, self.max_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Index to token; position 0 is always [`UNKNOWN_TOKEN`].
    tokens: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
    pub min_frequency: usize,
    pub max_size: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_frequency: usize, max_size: usize) -> Self {
        let lookup = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            lookup,
            min_frequency,
            max_size,
        }
    }

    /// Restores the lookup table after deserialization.
    pub(crate) fn reindex(&mut self) {
        let tokens = std::mem::take(&mut self.tokens);
        *self = Self::from_tokens(tokens, self.min_frequency, self.max_size);
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.lookup.get(token).copied().unwrap_or(UNKNOWN_INDEX)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Keeps tokens seen at least `min_frequency` times, most frequent first (ties broken
/// lexicographically), so that the vocabulary including the unknown bucket has at most
/// `max_size` entries.
pub fn build_vocabulary<'a, I, S>(documents: I, min_frequency: usize, max_size: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let min_frequency = min_frequency.max(1);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        for tok in doc {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_frequency && t != UNKNOWN_TOKEN)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![UNKNOWN_TOKEN.to_owned()];
    tokens.extend(
        ranked
            .into_iter()
            .take(max_size.saturating_sub(1))
            .map(|(t, _)| t.to_owned()),
    );
    Vocabulary::from_tokens(tokens, min_frequency, max_size)
}

pub fn vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    tokens.iter().map(|t| vocab.index_of(t.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<usize>,
    pub tokens: Vec<u32>,
}

/// A raw, not yet preprocessed, input record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    DirPerClass,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "dir-per-class" | "dir" => Ok(Self::DirPerClass),
            other => Err(Error::InvalidConfig(format!(
                "unknown corpus format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub preprocessor: Preprocessor,
    pub min_frequency: usize,
    pub max_vocab: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            preprocessor: Preprocessor::default(),
            min_frequency: 1,
            max_vocab: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
    /// Class names in index order (lexicographic).
    pub class_names: Vec<String>,
    pub preprocessor: Preprocessor,
}

impl Corpus {
    /// Preprocesses the records, drops documents left empty, maps label strings to
    /// lexicographically ordered class indices and builds the vocabulary.
    pub fn from_records(records: Vec<RawRecord>, options: &LoadOptions) -> Result<Self> {
        let mut kept = Vec::with_capacity(records.len());
        for rec in records {
            let toks = options.preprocessor.apply(&rec.text);
            if toks.is_empty() {
                warn!("dropping document {}: empty after preprocessing", rec.id);
                continue;
            }
            kept.push((rec, toks));
        }
        if kept.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let class_names: Vec<String> = kept
            .iter()
            .filter_map(|(r, _)| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let class_index: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();

        let vocabulary = build_vocabulary(
            kept.iter().map(|(_, t)| t.as_slice()),
            options.min_frequency,
            options.max_vocab,
        );
        let documents = kept
            .iter()
            .map(|(rec, toks)| Document {
                id: rec.id.clone(),
                text: rec.text.clone(),
                label: rec.label.as_deref().map(|l| class_index[l]),
                tokens: vectorize(toks, &vocabulary),
            })
            .collect();

        Ok(Self {
            documents,
            vocabulary,
            class_names,
            preprocessor: options.preprocessor.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Preprocesses and vectorizes text against this corpus' vocabulary.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        vectorize(&self.preprocessor.apply(text), &self.vocabulary)
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut corpus: Corpus = serde_json::from_str(json)?;
        corpus.vocabulary.reindex();
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_prepared(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}

/// Read access to a document collection. Samplers are written against this trait so
/// that label reads can be audited.
pub trait DocumentSource {
    fn doc_count(&self) -> usize;
    fn doc_id(&self, index: usize) -> &str;
    fn doc_text(&self, index: usize) -> &str;
    fn doc_tokens(&self, index: usize) -> &[u32];
    fn doc_label(&self, index: usize) -> Option<usize>;
    fn num_classes(&self) -> usize;
    fn tokenize_text(&self, text: &str) -> Vec<u32>;

    fn class_name(&self, class: usize) -> String {
        class.to_string()
    }
}

impl DocumentSource for Corpus {
    fn doc_count(&self) -> usize {
        self.documents.len()
    }

    fn doc_id(&self, index: usize) -> &str {
        &self.documents[index].id
    }

    fn doc_text(&self, index: usize) -> &str {
        &self.documents[index].text
    }

    fn doc_tokens(&self, index: usize) -> &[u32] {
        &self.documents[index].tokens
    }

    fn doc_label(&self, index: usize) -> Option<usize> {
        self.documents[index].label
    }

    fn num_classes(&self) -> usize {
        self.class_count()
    }

    fn tokenize_text(&self, text: &str) -> Vec<u32> {
        self.tokenize(text)
    }

    fn class_name(&self, class: usize) -> String {
        self.class_names
            .get(class)
            .cloned()
            .unwrap_or_else(|| class.to_string())
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<serde_json::Value>,
    text: Option<String>,
    label: Option<serde_json::Value>,
}

fn json_scalar_to_string(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn read_jsonl_records(path: &Path) -> Result<Vec<RawRecord>> {
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord =
            serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let id = rec
            .id
            .and_then(json_scalar_to_string)
            .ok_or_else(|| parse_err(line_no, "missing or invalid field `id`".into()))?;
        let text = rec
            .text
            .ok_or_else(|| parse_err(line_no, "missing field `text`".into()))?;
        let label = rec
            .label
            .and_then(json_scalar_to_string)
            .ok_or_else(|| parse_err(line_no, "missing or invalid field `label`".into()))?;
        if !seen.insert(id.clone()) {
            return Err(parse_err(line_no, format!("duplicate id `{id}`")));
        }
        records.push(RawRecord {
            id,
            text,
            label: Some(label),
        });
    }
    Ok(records)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Reads `root/<class>/<file>`; ids are `<class>/<file>`.
pub fn read_dir_records(root: &Path) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let class = class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for file in sorted_entries(&class_dir)? {
            if !file.is_file() {
                continue;
            }
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            records.push(RawRecord {
                id: format!("{class}/{name}"),
                text: String::from_utf8_lossy(&bytes).into_owned(),
                label: Some(class.clone()),
            });
        }
    }
    Ok(records)
}

pub fn load_corpus(path: &Path, format: CorpusFormat, options: &LoadOptions) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl_records(path)?,
        CorpusFormat::DirPerClass => read_dir_records(path)?,
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_records(records, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(
            preprocess("The cat sat, the mat!", &set(&["the"])),
            vec!["cat", "sat", "mat"]
        );
        assert!(preprocess("", &set(&[])).is_empty());
        assert!(preprocess("THE the The", &set(&["the"])).is_empty());
    }

    #[test]
    fn preprocess_truncates() {
        let text = "w ".repeat(300);
        assert_eq!(preprocess(&text, &set(&[])).len(), DEFAULT_MAX_TOKENS);
    }

    #[test]
    fn vocabulary_examples() {
        let docs = [vec!["a", "b", "a", "a"]];
        let v = build_vocabulary(docs.iter().map(|d| d.as_slice()), 2, 100);
        assert_eq!(v.tokens(), &["<unk>", "a"]);

        let v = build_vocabulary(docs.iter().map(|d| d.as_slice()), 1, 2);
        assert_eq!(v.tokens(), &["<unk>", "a"]);
        assert_eq!(v.index_of("b"), 0);

        let empty: Vec<Vec<&str>> = vec![];
        let v = build_vocabulary(empty.iter().map(|d| d.as_slice()), 1, 10);
        assert_eq!(v.size(), 1);
        assert_eq!(v.token(0), Some(UNKNOWN_TOKEN));
    }

    #[test]
    fn vectorize_examples() {
        let docs = [vec!["cat"]];
        let vocab = build_vocabulary(docs.iter().map(|d| d.as_slice()), 1, 10);
        assert_eq!(vectorize(&["cat", "dog"], &vocab), vec![1, 0]);
        assert!(vectorize::<&str>(&[], &vocab).is_empty());
        assert_eq!(vectorize(&["x", "y", "z"], &vocab), vec![0, 0, 0]);
    }

    fn write_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn jsonl_three_records_two_labels() {
        let f = write_jsonl(&[
            r#"{"id":"a","text":"rockets orbit moon","label":"space"}"#,
            r#"{"id":"b","text":"god faith","label":"religion"}"#,
            r#"{"id":"c","text":"launch pad","label":"space"}"#,
        ]);
        let c = load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.class_count(), 2);
        assert_eq!(c.class_names, vec!["religion", "space"]);
        assert_eq!(c.documents[0].label, Some(1));
    }

    #[test]
    fn jsonl_missing_text_reports_line() {
        let f = write_jsonl(&[
            r#"{"id":"a","text":"rockets","label":"space"}"#,
            r#"{"id":"b","label":"space"}"#,
        ]);
        let err = load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("text"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let f = write_jsonl(&[]);
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()),
            Err(Error::EmptyCorpus)
        ));
        // only stop words: everything dropped
        let f = write_jsonl(&[r#"{"id":"a","text":"the the","label":"x"}"#]);
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn empty_documents_are_dropped() {
        let f = write_jsonl(&[
            r#"{"id":"a","text":"rockets","label":"space"}"#,
            r#"{"id":"b","text":"!!! the","label":"misc"}"#,
        ]);
        let c = load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.class_count(), 1);
    }

    #[test]
    fn dir_per_class_labels_are_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        for (class, file, text) in [
            ("sci.space", "1", "orbit rocket"),
            ("alt.atheism", "1", "belief argument"),
            ("alt.atheism", "2", "religion debate"),
        ] {
            let d = dir.path().join(class);
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(file), text).unwrap();
        }
        let c = load_corpus(
            dir.path(),
            CorpusFormat::DirPerClass,
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(c.class_names, vec!["alt.atheism", "sci.space"]);
        assert_eq!(c.documents[0].id, "alt.atheism/1");
        assert_eq!(c.labels(), vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn load_is_deterministic_and_round_trips() {
        let f = write_jsonl(&[
            r#"{"id":"a","text":"rockets orbit moon rockets","label":"space"}"#,
            r#"{"id":"b","text":"god faith moon","label":"religion"}"#,
        ]);
        let a = load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()).unwrap();
        let b = load_corpus(f.path(), CorpusFormat::Jsonl, &LoadOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = Corpus::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.tokenize("rockets"), a.tokenize("rockets"));
        assert_ne!(back.tokenize("rockets"), vec![UNKNOWN_INDEX]);
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in "[a-zA-Z0-9 ,.!?'-]{0,120}") {
            let stop = default_stopwords();
            let once = preprocess(&text, &stop);
            let twice = preprocess(&once.join(" "), &stop);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn vocabulary_indices_are_a_bijection(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]{1,2}", 0..10), 0..6),
            min_freq in 1usize..3,
            cap in 1usize..20,
        ) {
            let v = build_vocabulary(docs.iter().map(|d| d.as_slice()), min_freq, cap);
            prop_assert!(v.size() <= cap.max(1));
            for (i, t) in v.tokens().iter().enumerate().skip(1) {
                prop_assert_eq!(v.index_of(t) as usize, i);
            }
        }
    }
}
