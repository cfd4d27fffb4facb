//! Normalized term frequency and word-usage trend series.
//!
//! NTF of word `t` in document `d` is `f_td / (N * len_d)`, where `f_td`
//! counts occurrences of `t` in `d`, `len_d` is the document's token
//! count, and `N` is the total occurrences of `t` across the corpus.

use serde::{Deserialize, Serialize};

use super::{bucket_range, MonitorError, YearMonth};
use crate::corpus::{Corpus, Document};
use crate::scorer::tokenize;

/// Named word lists driving trend analysis. The built-in default mirrors
/// the human-preferred / AI-preferred vocabularies shipped as a JSON
/// asset; callers can load their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLists {
    pub human_preferred: Vec<String>,
    pub ai_preferred: Vec<String>,
}

const DEFAULT_WORD_LISTS: &str = include_str!("../../assets/default_word_lists.json");

impl Default for WordLists {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_WORD_LISTS).expect("bundled word lists parse")
    }
}

impl WordLists {
    pub fn load(path: &std::path::Path) -> Result<Self, MonitorError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| MonitorError::WordListFile(e.to_string()))?;
        serde_json::from_str(&data).map_err(|e| MonitorError::WordListFile(e.to_string()))
    }
}

/// Counts occurrences of `pattern` (one or more consecutive tokens) in a
/// token stream. Multi-token patterns cover list entries like "due to".
fn count_occurrences(tokens: &[String], pattern: &[String]) -> u64 {
    if pattern.is_empty() || pattern.len() > tokens.len() {
        return 0;
    }
    tokens
        .windows(pattern.len())
        .filter(|w| w.iter().zip(pattern).all(|(a, b)| a == b))
        .count() as u64
}

/// Total occurrences of `word` across the corpus — the `N` of the NTF
/// definition.
pub fn corpus_occurrences(corpus: &Corpus, word: &str) -> u64 {
    let pattern = tokenize(word);
    corpus
        .iter()
        .map(|d| count_occurrences(&tokenize(&d.text), &pattern))
        .sum()
}

/// Normalized term frequency of `word` in `doc` given the corpus-wide
/// occurrence count `n_total`.
pub fn ntf(word: &str, doc: &Document, n_total: u64) -> Result<f64, MonitorError> {
    if n_total == 0 {
        return Err(MonitorError::ZeroN(word.to_string()));
    }
    let tokens = tokenize(&doc.text);
    if tokens.is_empty() {
        return Err(MonitorError::EmptyDocument(doc.id.clone()));
    }
    let pattern = tokenize(word);
    let f = count_occurrences(&tokens, &pattern);
    Ok(f as f64 / (n_total as f64 * tokens.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub bucket: YearMonth,
    /// Mean over the bucket's documents of the list-summed NTF; `None`
    /// for months with no documents.
    pub value: Option<f64>,
}

/// Per-month trend of a word list's summed NTF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTrendSeries {
    pub word_list_name: String,
    pub points: Vec<TrendPoint>,
    /// List entries that never occur in the corpus; they contribute
    /// nothing to the sums and are reported so callers can warn.
    pub dropped_words: Vec<String>,
}

/// Computes the monthly trend of a word list: `N` per word once over the
/// whole corpus, then per month the mean over documents of the summed
/// per-word NTF. Words absent from the corpus are dropped from the sum
/// and reported; documents with no tokens are skipped.
pub fn word_trend_series(
    corpus: &Corpus,
    word_list: &[String],
    word_list_name: &str,
) -> Result<WordTrendSeries, MonitorError> {
    if word_list.is_empty() {
        return Err(MonitorError::EmptyWordList);
    }
    if corpus.is_empty() {
        return Err(MonitorError::EmptyCorpus);
    }

    let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&d.text)).collect();
    let patterns: Vec<Vec<String>> = word_list.iter().map(|w| tokenize(w)).collect();

    let mut totals = vec![0u64; word_list.len()];
    for tokens in &tokenized {
        for (total, pattern) in totals.iter_mut().zip(&patterns) {
            *total += count_occurrences(tokens, pattern);
        }
    }
    let dropped_words: Vec<String> = word_list
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n == 0)
        .map(|(w, _)| w.clone())
        .collect();

    let (first, last) = bucket_range(corpus)?;
    let mut sums: std::collections::BTreeMap<YearMonth, (f64, usize)> =
        std::collections::BTreeMap::new();
    for (doc, tokens) in corpus.iter().zip(&tokenized) {
        if tokens.is_empty() {
            continue;
        }
        let len = tokens.len() as f64;
        let mut doc_sum = 0.0;
        for ((pattern, &n_total), _) in patterns.iter().zip(&totals).zip(word_list) {
            if n_total == 0 {
                continue;
            }
            let f = count_occurrences(tokens, pattern);
            doc_sum += f as f64 / (n_total as f64 * len);
        }
        let entry = sums.entry(YearMonth::from_datetime(&doc.created_at)).or_insert((0.0, 0));
        entry.0 += doc_sum;
        entry.1 += 1;
    }

    let mut points = Vec::new();
    let mut bucket = first;
    loop {
        let value = sums.get(&bucket).map(|&(sum, n)| sum / n as f64);
        points.push(TrendPoint { bucket, value });
        if bucket == last {
            break;
        }
        bucket = bucket.next();
    }
    Ok(WordTrendSeries {
        word_list_name: word_list_name.to_string(),
        points,
        dropped_words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Platform;
    use chrono::{TimeZone, Utc};

    fn doc_at(id: &str, text: &str, year: i32, month: u32) -> Document {
        Document {
            id: id.to_string(),
            platform: Platform::Medium,
            text: text.to_string(),
            created_at: Utc.with_ymd_and_hms(year, month, 10, 8, 0, 0).unwrap(),
            label: None,
            likes: None,
            comments: None,
            author_id: None,
            author_followers: None,
            topic: None,
        }
    }

    #[test]
    fn ntf_direct_substitution() {
        // t appears twice in a 4-token document, N = 3 corpus-wide.
        let d = doc_at("a", "t x t y", 2023, 1);
        let value = ntf("t", &d, 3).unwrap();
        assert!((value - 2.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn ntf_absent_word_is_zero() {
        let d = doc_at("a", "x y z", 2023, 1);
        assert_eq!(ntf("t", &d, 5).unwrap(), 0.0);
    }

    #[test]
    fn ntf_singleton_boundary() {
        let d = doc_at("a", "only", 2023, 1);
        assert_eq!(ntf("only", &d, 1).unwrap(), 1.0);
    }

    #[test]
    fn ntf_errors() {
        let d = doc_at("a", "x", 2023, 1);
        assert!(matches!(ntf("x", &d, 0), Err(MonitorError::ZeroN(_))));
        let empty = doc_at("b", "  ", 2023, 1);
        assert!(matches!(
            ntf("x", &empty, 1),
            Err(MonitorError::EmptyDocument(_))
        ));
    }

    #[test]
    fn ntf_inverts_to_raw_counts() {
        // N * sum_d ntf * len_d recovers the integer corpus count.
        let docs = vec![
            doc_at("a", "w q w e r", 2023, 1),
            doc_at("b", "q w", 2023, 2),
            doc_at("c", "e r t y", 2023, 2),
        ];
        let corpus = Corpus::from_documents(docs).unwrap();
        let n = corpus_occurrences(&corpus, "w");
        assert_eq!(n, 3);
        let mut acc = 0.0;
        for d in corpus.iter() {
            let len = tokenize(&d.text).len() as f64;
            acc += ntf("w", d, n).unwrap() * len;
        }
        let recovered = (n as f64 * acc).round() as u64;
        assert_eq!(recovered, 3);
    }

    #[test]
    fn trend_single_doc_hand_value() {
        // "a a b": N(a) = 2, ntf = 2 / (2 * 3) = 1/3.
        let corpus = Corpus::from_documents(vec![doc_at("a", "a a b", 2023, 5)]).unwrap();
        let series = word_trend_series(&corpus, &["a".to_string()], "test").unwrap();
        assert_eq!(series.points.len(), 1);
        let v = series.points[0].value.unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(series.dropped_words.is_empty());
    }

    #[test]
    fn trend_mean_of_identical_docs_is_stable() {
        let corpus = Corpus::from_documents(vec![
            doc_at("a", "a a b", 2023, 5),
            doc_at("b", "a a b", 2023, 5),
        ])
        .unwrap();
        let series = word_trend_series(&corpus, &["a".to_string()], "test").unwrap();
        // N doubles but so does f per doc; the per-doc NTF halves, and the
        // bucket mean equals the per-doc value.
        let v = series.points[0].value.unwrap();
        assert!((v - 2.0 / (4.0 * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn trend_reports_absent_words() {
        let corpus = Corpus::from_documents(vec![doc_at("a", "x y", 2023, 5)]).unwrap();
        let series =
            word_trend_series(&corpus, &["x".to_string(), "zz".to_string()], "test").unwrap();
        assert_eq!(series.dropped_words, ["zz"]);
        assert!(series.points[0].value.unwrap() > 0.0);
    }

    #[test]
    fn trend_fills_empty_months() {
        let corpus = Corpus::from_documents(vec![
            doc_at("a", "x y", 2023, 1),
            doc_at("b", "x z", 2023, 3),
        ])
        .unwrap();
        let series = word_trend_series(&corpus, &["x".to_string()], "test").unwrap();
        assert_eq!(series.points.len(), 3);
        assert!(series.points[0].value.is_some());
        assert!(series.points[1].value.is_none());
        assert!(series.points[2].value.is_some());
    }

    #[test]
    fn empty_word_list_is_an_error() {
        let corpus = Corpus::from_documents(vec![doc_at("a", "x", 2023, 1)]).unwrap();
        assert!(matches!(
            word_trend_series(&corpus, &[], "test"),
            Err(MonitorError::EmptyWordList)
        ));
    }

    #[test]
    fn default_word_lists_parse() {
        let lists = WordLists::default();
        assert!(lists.human_preferred.contains(&"actually".to_string()));
        assert!(lists.ai_preferred.contains(&"crucial".to_string()));
        assert!(lists.ai_preferred.contains(&"due to".to_string()));
    }

    #[test]
    fn phrase_entries_count_adjacent_pairs() {
        let d = doc_at("a", "failure due to rain, not due to wind", 2023, 1);
        let corpus = Corpus::from_documents(vec![d.clone()]).unwrap();
        assert_eq!(corpus_occurrences(&corpus, "due to"), 2);
        let v = ntf("due to", &d, 2).unwrap();
        // 2 occurrences / (N=2 * 9 tokens); the comma is its own token.
        assert!((v - 2.0 / (2.0 * 9.0)).abs() < 1e-15);
    }
}
