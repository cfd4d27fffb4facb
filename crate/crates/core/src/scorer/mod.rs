//! Token-probability backends.
//!
//! A scorer turns a text into per-token arrays of log-probability, rank,
//! entropy, and top-k rank bucket under some language model. Two backends
//! ship here: a deterministic add-k smoothed n-gram model ([`ngram`]) and
//! an HTTP client for external models ([`remote`]). Anything that
//! produces a valid [`TokenScoreSequence`] feeds the same downstream
//! feature pipeline.

pub mod ngram;
pub mod remote;

pub use ngram::NGramModel;
pub use remote::{RemoteScorer, ScorerEndpoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Top-k bucket of a token's rank under the model's next-token
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBucket {
    Top10,
    Top100,
    Top1000,
    Beyond,
}

impl RankBucket {
    pub fn from_rank(rank: u32) -> Self {
        match rank {
            0..=10 => RankBucket::Top10,
            11..=100 => RankBucket::Top100,
            101..=1000 => RankBucket::Top1000,
            _ => RankBucket::Beyond,
        }
    }
}

/// Per-token scores emitted by a backend for one text.
///
/// All arrays have equal length; `log_prob` is a natural-log probability,
/// `rank` is 1-based, `entropy` is in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScoreSequence {
    pub tokens: Vec<String>,
    pub log_prob: Vec<f64>,
    pub rank: Vec<u32>,
    pub entropy: Vec<f64>,
    pub bucket: Vec<RankBucket>,
}

impl TokenScoreSequence {
    /// Assembles a sequence from raw arrays, deriving buckets from ranks,
    /// and validates every invariant.
    pub fn from_raw(
        tokens: Vec<String>,
        log_prob: Vec<f64>,
        rank: Vec<u32>,
        entropy: Vec<f64>,
    ) -> Result<Self, ScorerError> {
        let bucket = rank.iter().map(|&r| RankBucket::from_rank(r)).collect();
        let seq = TokenScoreSequence {
            tokens,
            log_prob,
            rank,
            entropy,
            bucket,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks the type invariants: equal non-zero lengths, rank ≥ 1,
    /// log_prob ≤ 0, entropy ≥ 0, bucket consistent with rank.
    pub fn validate(&self) -> Result<(), ScorerError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(ScorerError::Protocol("empty token sequence".into()));
        }
        if self.log_prob.len() != n
            || self.rank.len() != n
            || self.entropy.len() != n
            || self.bucket.len() != n
        {
            return Err(ScorerError::Protocol(format!(
                "array length mismatch: tokens={n}, log_prob={}, rank={}, entropy={}, bucket={}",
                self.log_prob.len(),
                self.rank.len(),
                self.entropy.len(),
                self.bucket.len()
            )));
        }
        for i in 0..n {
            if self.rank[i] < 1 {
                return Err(ScorerError::Protocol(format!("rank {} at {i}", self.rank[i])));
            }
            if !(self.log_prob[i] <= 0.0) {
                return Err(ScorerError::Protocol(format!(
                    "log_prob {} at {i}",
                    self.log_prob[i]
                )));
            }
            if !(self.entropy[i] >= 0.0) {
                return Err(ScorerError::Protocol(format!(
                    "entropy {} at {i}",
                    self.entropy[i]
                )));
            }
            if self.bucket[i] != RankBucket::from_rank(self.rank[i]) {
                return Err(ScorerError::Protocol(format!(
                    "bucket inconsistent with rank {} at {i}",
                    self.rank[i]
                )));
            }
        }
        Ok(())
    }

    pub fn mean_log_prob(&self) -> f64 {
        self.log_prob.iter().sum::<f64>() / self.log_prob.len() as f64
    }

    pub fn mean_log_rank(&self) -> f64 {
        self.rank.iter().map(|&r| (r as f64).ln()).sum::<f64>() / self.rank.len() as f64
    }
}

/// Errors shared by scorer backends.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("text produced no tokens")]
    EmptyText,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("protocol: {0}")]
    Protocol(String),
}

/// A backend that scores texts into [`TokenScoreSequence`]s.
///
/// Implementations must be safe for concurrent use; feature extraction
/// fans out across documents.
pub trait TokenScorer: Sync {
    fn score_text(&self, text: &str) -> Result<TokenScoreSequence, ScorerError>;

    /// Scores a batch. The default loops; remote backends override this
    /// with true batched requests.
    fn score_batch(&self, texts: &[String]) -> Result<Vec<TokenScoreSequence>, ScorerError> {
        texts.iter().map(|t| self.score_text(t)).collect()
    }
}

/// Character span (Unicode scalar offsets, end exclusive) of a token
/// in its source text.
pub type TokenSpan = (usize, usize);

/// Lowercases, splits on Unicode whitespace, and peels leading/trailing
/// punctuation off each chunk into tokens of their own.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_spans(text).into_iter().map(|(t, _)| t).collect()
}

/// Like [`tokenize`] but each token carries its character span in the
/// original (non-lowercased) text. Spans cover every non-whitespace
/// character exactly once, in order.
pub fn tokenize_with_spans(text: &str) -> Vec<(String, TokenSpan)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let n = chars.len();
    while i < n {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !chars[i].is_whitespace() {
            i += 1;
        }
        push_chunk_tokens(&chars, start, i, &mut out);
    }
    out
}

fn is_punct(ch: char) -> bool {
    !ch.is_alphanumeric()
}

fn push_chunk_tokens(chars: &[char], start: usize, end: usize, out: &mut Vec<(String, TokenSpan)>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && is_punct(chars[lo]) {
        lo += 1;
    }
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    for k in start..lo {
        out.push((chars[k].to_lowercase().collect(), (k, k + 1)));
    }
    if lo < hi {
        let core: String = chars[lo..hi].iter().flat_map(|c| c.to_lowercase()).collect();
        out.push((core, (lo, hi)));
    }
    for k in hi..end {
        out.push((chars[k].to_lowercase().collect(), (k, k + 1)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_separates_punctuation() {
        assert_eq!(tokenize("Hello, world!"), ["hello", ",", "world", "!"]);
    }

    #[test]
    fn tokenize_empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn tokenize_collapses_whitespace() {
        assert_eq!(tokenize("A  B"), ["a", "b"]);
    }

    #[test]
    fn tokenize_keeps_inner_punctuation() {
        assert_eq!(tokenize("don't stop"), ["don't", "stop"]);
        assert_eq!(tokenize("(aside)"), ["(", "aside", ")"]);
    }

    #[test]
    fn tokenize_all_punctuation_chunk() {
        assert_eq!(tokenize("..."), [".", ".", "."]);
    }

    #[test]
    fn spans_cover_non_whitespace() {
        let text = "Ab, cd!  e";
        let spans = tokenize_with_spans(text);
        let chars: Vec<char> = text.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut last_end = 0;
        for (_, (s, e)) in &spans {
            assert!(*s >= last_end, "spans out of order");
            last_end = *e;
            for item in covered.iter_mut().take(*e).skip(*s) {
                assert!(!*item, "overlap");
                *item = true;
            }
        }
        for (i, ch) in chars.iter().enumerate() {
            assert_eq!(covered[i], !ch.is_whitespace(), "char {i} ({ch:?})");
        }
    }

    #[test]
    fn bucket_thresholds() {
        assert_eq!(RankBucket::from_rank(1), RankBucket::Top10);
        assert_eq!(RankBucket::from_rank(10), RankBucket::Top10);
        assert_eq!(RankBucket::from_rank(11), RankBucket::Top100);
        assert_eq!(RankBucket::from_rank(100), RankBucket::Top100);
        assert_eq!(RankBucket::from_rank(101), RankBucket::Top1000);
        assert_eq!(RankBucket::from_rank(1000), RankBucket::Top1000);
        assert_eq!(RankBucket::from_rank(1001), RankBucket::Beyond);
    }

    #[test]
    fn from_raw_rejects_invariant_violations() {
        let bad_rank = TokenScoreSequence::from_raw(
            vec!["a".into()],
            vec![-1.0],
            vec![0],
            vec![0.5],
        );
        assert!(matches!(bad_rank, Err(ScorerError::Protocol(_))));
        let bad_lp =
            TokenScoreSequence::from_raw(vec!["a".into()], vec![0.5], vec![1], vec![0.5]);
        assert!(matches!(bad_lp, Err(ScorerError::Protocol(_))));
        let mismatched =
            TokenScoreSequence::from_raw(vec!["a".into()], vec![-1.0, -2.0], vec![1], vec![0.5]);
        assert!(matches!(mismatched, Err(ScorerError::Protocol(_))));
    }
}
