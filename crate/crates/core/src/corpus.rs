//! Document data model, JSONL ingestion, preprocessing filters, and
//! deterministic dataset splitting.
//!
//! A corpus is an ordered, immutable sequence of [`Document`]s with unique
//! ids. Filters never mutate in place: each returns a new corpus plus a
//! [`FilterReport`] accounting for every dropped document.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Source platform of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Medium,
    Quora,
    Reddit,
    Other,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Medium => "medium",
            Platform::Quora => "quora",
            Platform::Reddit => "reddit",
            Platform::Other => "other",
        }
    }
}

impl std::str::FromStr for Platform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "medium" => Ok(Platform::Medium),
            "quora" => Ok(Platform::Quora),
            "reddit" => Ok(Platform::Reddit),
            "other" => Ok(Platform::Other),
            other => Err(format!("unknown platform {other:?}")),
        }
    }
}

/// Ground-truth or predicted class of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Ai,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Ai => "ai",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Label::Human),
            "ai" => Ok(Label::Ai),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// One social-media text with timestamp and optional metadata.
///
/// `created_at` is a UTC instant at second resolution. Engagement and
/// author fields are optional because only some platforms export them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub platform: Platform,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comments: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_followers: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

/// Errors raised while building or loading a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    Empty,
    #[error("split ratios must sum to 1 (got {0})")]
    BadRatios(f64),
}

/// Ordered, immutable collection of documents with an id index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty or duplicate ids.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(documents.len());
        for (pos, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: pos + 1,
                    detail: "empty id".into(),
                });
            }
            if index.insert(doc.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents, index })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&pos| &self.documents[pos])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    /// Writes the corpus back out as JSONL, one document per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        for doc in &self.documents {
            let line = serde_json::to_string(doc).expect("document serializes");
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Loads a JSONL corpus: one JSON object per line, order preserved,
/// unknown keys ignored.
pub fn load_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut documents = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        if doc.id.is_empty() {
            return Err(CorpusError::MalformedLine {
                line: lineno + 1,
                detail: "empty id".into(),
            });
        }
        if index.insert(doc.id.clone(), documents.len()).is_some() {
            return Err(CorpusError::DuplicateId(doc.id.clone()));
        }
        documents.push(doc);
    }
    Ok(Corpus { documents, index })
}

/// Accounting for one filter pass: how many documents were kept and how
/// many each rule dropped, in the filter's fixed rule order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub filter: String,
    pub input: usize,
    pub kept: usize,
    pub dropped_by_rule: Vec<RuleCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCount {
    pub rule: String,
    pub dropped: usize,
}

impl FilterReport {
    fn new(filter: &str, rules: &[&str]) -> Self {
        FilterReport {
            filter: filter.to_string(),
            input: 0,
            kept: 0,
            dropped_by_rule: rules
                .iter()
                .map(|r| RuleCount {
                    rule: r.to_string(),
                    dropped: 0,
                })
                .collect(),
        }
    }

    fn record_drop(&mut self, rule_idx: usize) {
        self.dropped_by_rule[rule_idx].dropped += 1;
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped_by_rule.iter().map(|r| r.dropped).sum()
    }
}

fn apply_filter<F>(corpus: &Corpus, name: &str, rules: &[&str], decide: F) -> (Corpus, FilterReport)
where
    F: Fn(&Document) -> Option<usize>,
{
    let mut report = FilterReport::new(name, rules);
    report.input = corpus.len();
    let mut kept = Vec::new();
    for doc in corpus.iter() {
        match decide(doc) {
            None => kept.push(doc.clone()),
            Some(rule_idx) => report.record_drop(rule_idx),
        }
    }
    report.kept = kept.len();
    let filtered = Corpus::from_documents(kept).expect("ids already unique");
    (filtered, report)
}

/// Keeps documents whose text has at least `min_chars` Unicode scalar
/// values, whitespace included.
pub fn filter_length(corpus: &Corpus, min_chars: usize) -> (Corpus, FilterReport) {
    apply_filter(corpus, "length", &["min_chars"], |doc| {
        if doc.text.chars().count() >= min_chars {
            None
        } else {
            Some(0)
        }
    })
}

pub const DEFAULT_MIN_CHARS: usize = 150;
pub const DEFAULT_MIN_ENGLISH_RATIO: f64 = 0.90;

/// Share of ASCII letters among all alphabetic scalars in `text`.
/// Returns `None` when the text has no alphabetic characters.
pub fn english_ratio(text: &str) -> Option<f64> {
    let mut alphabetic = 0u64;
    let mut ascii_letters = 0u64;
    for ch in text.chars() {
        if ch.is_alphabetic() {
            alphabetic += 1;
            if ch.is_ascii_alphabetic() {
                ascii_letters += 1;
            }
        }
    }
    if alphabetic == 0 {
        None
    } else {
        Some(ascii_letters as f64 / alphabetic as f64)
    }
}

/// Keeps documents whose ASCII-letter share of alphabetic characters is
/// at least `min_ratio`. Documents with no alphabetic characters drop.
pub fn filter_english_ratio(corpus: &Corpus, min_ratio: f64) -> (Corpus, FilterReport) {
    apply_filter(corpus, "english_ratio", &["english_ratio"], |doc| {
        match english_ratio(&doc.text) {
            Some(ratio) if ratio >= min_ratio => None,
            _ => Some(0),
        }
    })
}

/// Pattern rules for stripping LLM-artifact noise.
///
/// Rules fire in fixed order: boilerplate prefix, consecutive repeated
/// token, long digit run. A dropped document is attributed to the first
/// rule it violates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRuleSet {
    /// Case-insensitive prefixes that mark boilerplate openers.
    pub boilerplate_prefixes: Vec<String>,
    /// Minimum count of the same whitespace-separated token appearing
    /// consecutively.
    pub max_token_repeats: usize,
    /// Minimum length of a run of consecutive ASCII digits.
    pub max_digit_run: usize,
}

impl Default for NoiseRuleSet {
    fn default() -> Self {
        NoiseRuleSet {
            boilerplate_prefixes: vec![
                "Of course".to_string(),
                "Hey there".to_string(),
                "Sure, here".to_string(),
            ],
            max_token_repeats: 8,
            max_digit_run: 20,
        }
    }
}

impl NoiseRuleSet {
    fn matches_prefix(&self, text: &str) -> bool {
        let trimmed = text.trim_start().to_lowercase();
        self.boilerplate_prefixes
            .iter()
            .any(|p| trimmed.starts_with(&p.to_lowercase()))
    }

    fn has_repeated_token(&self, text: &str) -> bool {
        let mut prev: Option<&str> = None;
        let mut run = 0usize;
        for tok in text.split_whitespace() {
            if prev == Some(tok) {
                run += 1;
            } else {
                prev = Some(tok);
                run = 1;
            }
            if run >= self.max_token_repeats {
                return true;
            }
        }
        false
    }

    fn has_digit_run(&self, text: &str) -> bool {
        let mut run = 0usize;
        for ch in text.chars() {
            if ch.is_ascii_digit() {
                run += 1;
                if run >= self.max_digit_run {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    }
}

/// Drops documents matching any noise rule.
pub fn filter_noise(corpus: &Corpus, rules: &NoiseRuleSet) -> (Corpus, FilterReport) {
    apply_filter(
        corpus,
        "noise",
        &["leading_boilerplate", "repeated_token", "digit_run"],
        |doc| {
            if rules.matches_prefix(&doc.text) {
                Some(0)
            } else if rules.has_repeated_token(&doc.text) {
                Some(1)
            } else if rules.has_digit_run(&doc.text) {
                Some(2)
            } else {
                None
            }
        },
    )
}

/// Shuffles by seed and partitions into train/valid/test.
///
/// Boundaries sit at `floor(n*r_train)` and `floor(n*(r_train+r_valid))`
/// of the shuffled order, so the three parts always cover the input:
/// n=10 at 7:1:2 gives (7,1,2), n=3 gives (2,0,1).
pub fn split_dataset(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let (r_train, r_valid, r_test) = ratios;
    let sum = r_train + r_valid + r_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(sum));
    }
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let b1 = (n as f64 * r_train).floor() as usize;
    let b2 = (n as f64 * (r_train + r_valid)).floor() as usize;
    let pick = |range: &[usize]| -> Corpus {
        let docs = range
            .iter()
            .map(|&i| corpus.documents[i].clone())
            .collect();
        Corpus::from_documents(docs).expect("ids already unique")
    };
    Ok((pick(&order[..b1]), pick(&order[b1..b2]), pick(&order[b2..])))
}
