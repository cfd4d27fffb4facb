//! Add-k smoothed n-gram reference scorer.
//!
//! Deterministic and dependency-free: vocabulary selection, counting,
//! and scoring are all exact functions of the inputs, so a retrained
//! model is byte-identical and every score can be checked by hand.
//! Real language models plug in through the remote protocol instead.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, ScorerError, TokenScoreSequence, TokenScorer};
use crate::corpus::Corpus;

pub const BOS_TOKEN: &str = "<bos>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

const FORMAT_VERSION: u32 = 1;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ADD_K: f64 = 1.0;
pub const DEFAULT_MAX_VOCAB: usize = 50_000;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    by_token: BTreeMap<u32, u64>,
}

/// Add-k smoothed n-gram model over a fixed vocabulary.
///
/// Vocabulary ids are assigned deterministically: id 0 is the reserved
/// begin-of-sequence token, id 1 the unknown token, and the remaining
/// ids follow corpus frequency (ties broken lexicographically). The
/// tokenizer splits reserved-token spellings apart, so they can never
/// collide with real input tokens.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    add_k: f64,
    vocab: Vec<String>,
    token_ids: HashMap<String, u32>,
    counts: BTreeMap<Vec<u32>, ContextCounts>,
}

/// Trains an n-gram model: the `max_vocab` most frequent tokens plus the
/// reserved pair form the vocabulary; counts accumulate over BOS-padded
/// contexts of length `order - 1`.
pub fn train_ngram(
    corpus: &Corpus,
    order: usize,
    add_k: f64,
    max_vocab: usize,
) -> Result<NGramModel, ScorerError> {
    assert!(order >= 1, "order must be >= 1");
    assert!(add_k > 0.0, "add_k must be positive");
    if corpus.is_empty() {
        return Err(ScorerError::EmptyCorpus);
    }

    let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&d.text)).collect();

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tokens in &tokenized {
        for tok in tokens {
            *freq.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_vocab);

    let mut vocab = vec![BOS_TOKEN.to_string(), UNK_TOKEN.to_string()];
    vocab.extend(ranked.iter().map(|(t, _)| t.to_string()));
    let token_ids: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut model = NGramModel {
        order,
        add_k,
        vocab,
        token_ids,
        counts: BTreeMap::new(),
    };

    for tokens in &tokenized {
        if tokens.is_empty() {
            continue;
        }
        let ids: Vec<u32> = tokens.iter().map(|t| model.token_id(t)).collect();
        let mut ctx = vec![BOS_ID; order.saturating_sub(1)];
        for &id in &ids {
            let entry = model.counts.entry(ctx.clone()).or_default();
            entry.total += 1;
            *entry.by_token.entry(id).or_insert(0) += 1;
            if order > 1 {
                ctx.remove(0);
                ctx.push(id);
            }
        }
    }
    Ok(model)
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Vocabulary id of a token; out-of-vocabulary maps to the unknown id.
    pub fn token_id(&self, token: &str) -> u32 {
        self.token_ids.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Smoothed conditional probability of token id `next` given a
    /// context of length `order - 1`.
    pub fn conditional_prob(&self, context: &[u32], next: u32) -> f64 {
        let (total, by_token) = self.context_counts(context);
        let c = by_token.and_then(|m| m.get(&next)).copied().unwrap_or(0);
        let denom = total as f64 + self.add_k * self.vocab.len() as f64;
        (c as f64 + self.add_k) / denom
    }

    /// Full dense conditional distribution over vocabulary ids. Intended
    /// for verification; scoring itself uses the sparse counts.
    pub fn conditional_distribution(&self, context: &[u32]) -> Vec<f64> {
        (0..self.vocab.len() as u32)
            .map(|id| self.conditional_prob(context, id))
            .collect()
    }

    fn context_counts(&self, context: &[u32]) -> (u64, Option<&BTreeMap<u32, u64>>) {
        debug_assert_eq!(context.len(), self.order - 1);
        match self.counts.get(context) {
            Some(c) => (c.total, Some(&c.by_token)),
            None => (0, None),
        }
    }

    /// Scores one position: log-probability, 1-based rank (ties broken by
    /// vocabulary id ascending), and entropy of the conditional
    /// distribution. Runs over the sparse seen-token set; unseen tokens
    /// share one smoothed probability.
    fn position_scores(&self, context: &[u32], id: u32) -> (f64, u32, f64) {
        let (total, by_token) = self.context_counts(context);
        let v = self.vocab.len() as f64;
        let k = self.add_k;
        let denom = total as f64 + k * v;

        static EMPTY: BTreeMap<u32, u64> = BTreeMap::new();
        let seen = by_token.unwrap_or(&EMPTY);
        let c_tok = seen.get(&id).copied().unwrap_or(0);

        let log_prob = ((c_tok as f64 + k) / denom).ln();

        let rank = if c_tok > 0 {
            let mut higher = 0u32;
            let mut tie_smaller_id = 0u32;
            for (&tid, &cnt) in seen {
                if cnt > c_tok {
                    higher += 1;
                } else if cnt == c_tok && tid < id {
                    tie_smaller_id += 1;
                }
            }
            1 + higher + tie_smaller_id
        } else {
            // Every seen token outranks an unseen one; unseen tokens tie
            // at count zero and order among themselves by id.
            let seen_smaller_id = seen.range(..id).count() as u32;
            1 + seen.len() as u32 + (id - seen_smaller_id)
        };

        let mut entropy = 0.0;
        for &cnt in seen.values() {
            let p = (cnt as f64 + k) / denom;
            entropy -= p * p.ln();
        }
        let unseen = v - seen.len() as f64;
        if unseen > 0.0 {
            let p0 = k / denom;
            entropy -= unseen * p0 * p0.ln();
        }

        (log_prob, rank, entropy)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        let file = NGramModelFile {
            format_version: FORMAT_VERSION,
            order: self.order,
            add_k: self.add_k,
            vocab: self.vocab.clone(),
            contexts: self
                .counts
                .iter()
                .map(|(ctx, c)| ContextFile {
                    context: ctx.clone(),
                    total: c.total,
                    counts: c.by_token.iter().map(|(&t, &n)| (t, n)).collect(),
                })
                .collect(),
        };
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &file)
            .map_err(|e| ScorerError::ModelFile(e.to_string()))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let reader = BufReader::new(File::open(path)?);
        let file: NGramModelFile =
            serde_json::from_reader(reader).map_err(|e| ScorerError::ModelFile(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(ScorerError::ModelFile(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        let token_ids = file
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let counts = file
            .contexts
            .into_iter()
            .map(|c| {
                (
                    c.context,
                    ContextCounts {
                        total: c.total,
                        by_token: c.counts.into_iter().collect(),
                    },
                )
            })
            .collect();
        Ok(NGramModel {
            order: file.order,
            add_k: file.add_k,
            vocab: file.vocab,
            token_ids,
            counts,
        })
    }
}

impl TokenScorer for NGramModel {
    /// Scores each token against the distribution conditioned on the
    /// previous `order - 1` tokens, BOS-padded at the start.
    fn score_text(&self, text: &str) -> Result<TokenScoreSequence, ScorerError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(ScorerError::EmptyText);
        }
        let ids: Vec<u32> = tokens.iter().map(|t| self.token_id(t)).collect();
        let n = tokens.len();
        let mut log_prob = Vec::with_capacity(n);
        let mut rank = Vec::with_capacity(n);
        let mut entropy = Vec::with_capacity(n);
        let mut ctx = vec![BOS_ID; self.order - 1];
        for &id in &ids {
            let (lp, r, ent) = self.position_scores(&ctx, id);
            log_prob.push(lp.min(0.0));
            rank.push(r);
            entropy.push(ent.max(0.0));
            if self.order > 1 {
                ctx.remove(0);
                ctx.push(id);
            }
        }
        TokenScoreSequence::from_raw(tokens, log_prob, rank, entropy)
    }
}

#[derive(Serialize, Deserialize)]
struct NGramModelFile {
    format_version: u32,
    order: usize,
    add_k: f64,
    vocab: Vec<String>,
    contexts: Vec<ContextFile>,
}

#[derive(Serialize, Deserialize)]
struct ContextFile {
    context: Vec<u32>,
    total: u64,
    counts: Vec<(u32, u64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, Platform};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_of(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("d{i}"),
                platform: Platform::Other,
                text: t.to_string(),
                created_at: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
                label: None,
                likes: None,
                comments: None,
                author_id: None,
                author_followers: None,
                topic: None,
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn bigram_hand_count() {
        // "a b a b": context "a" occurs twice, followed by "b" both times.
        // Vocabulary {<bos>, <unk>, a, b} so |V| = 4 and
        // P(b | a) = (2 + 1) / (2 + 1*4) = 0.5.
        let model = train_ngram(&corpus_of(&["a b a b"]), 2, 1.0, 10).unwrap();
        assert_eq!(model.vocab_size(), 4);
        let a = model.token_id("a");
        let b = model.token_id("b");
        let p = model.conditional_prob(&[a], b);
        assert!((p - 0.5).abs() < 1e-15, "P(b|a) = {p}");

        let seq = model.score_text("a b").unwrap();
        assert!((seq.log_prob[1] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distributions_sum_to_one() {
        let model = train_ngram(
            &corpus_of(&["the cat sat on the mat", "the dog sat"]),
            3,
            0.5,
            10,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let ctx: Vec<u32> = (0..2)
                .map(|_| rng.gen_range(0..model.vocab_size() as u32))
                .collect();
            let sum: f64 = model.conditional_distribution(&ctx).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum = {sum}");
        }
    }

    #[test]
    fn uniform_model_entropy_is_ln_v() {
        // No counts at all: every context is unseen, distribution uniform.
        let texts: Vec<String> = (0..62).map(|i| format!("w{i}")).collect();
        let joined = texts.join(" ");
        let model = train_ngram(&corpus_of(&[&joined]), 2, 1.0, 62).unwrap();
        assert_eq!(model.vocab_size(), 64);
        // Query a context that never occurred as a bigram prefix context
        // won't be uniform; use an explicitly unseen context id pair via
        // a fresh empty-ish model instead: order-2 context [BOS] occurred.
        // Unseen context: token that appears only at the end ("w61" is a
        // context exactly once). Instead check an unseen context directly.
        let unseen_ctx = [model.token_id("w61")];
        // w61 is the last token, so it never serves as a context.
        let seq_entropy = model.conditional_distribution(&unseen_ctx);
        let dense: f64 = seq_entropy.iter().map(|&p| -p * p.ln()).sum();
        let (_, _, ent) = model.position_scores(&unseen_ctx, UNK_ID);
        assert!((dense - (64f64).ln()).abs() < 1e-12);
        assert!((ent - (64f64).ln()).abs() < 1e-12);
        let (lp, _, _) = model.position_scores(&unseen_ctx, UNK_ID);
        assert!((lp - (1.0f64 / 64.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_distribution_scores() {
        // Heavily repeated bigram: "x" always follows "x" except once.
        let text = std::iter::repeat("x").take(400).collect::<Vec<_>>().join(" ");
        let model = train_ngram(&corpus_of(&[&text]), 2, 1e-9, 4).unwrap();
        let seq = model.score_text("x x").unwrap();
        // Second position: P(x|x) ~= 1, rank 1, entropy ~= 0.
        assert!(seq.log_prob[1].abs() < 1e-6);
        assert_eq!(seq.rank[1], 1);
        assert!(seq.entropy[1] < 1e-6);
        assert_eq!(seq.bucket[1], super::super::RankBucket::Top10);
    }

    #[test]
    fn oov_scores_as_unk() {
        let model = train_ngram(&corpus_of(&["a b a b"]), 2, 1.0, 10).unwrap();
        let seq_oov = model.score_text("a zzz").unwrap();
        let seq_unk = model.position_scores(&[model.token_id("a")], UNK_ID);
        assert_eq!(seq_oov.log_prob[1], seq_unk.0);
        assert_eq!(seq_oov.rank[1], seq_unk.1);
    }

    #[test]
    fn rank_tie_break_by_vocab_id() {
        // In an unseen context all tokens tie at count zero; ranks follow
        // vocabulary id order.
        let model = train_ngram(&corpus_of(&["b a b a"]), 2, 1.0, 10).unwrap();
        let unseen_ctx = [UNK_ID];
        let mut ranks: Vec<u32> = (0..model.vocab_size() as u32)
            .map(|id| model.position_scores(&unseen_ctx, id).1)
            .collect();
        let expect: Vec<u32> = (1..=model.vocab_size() as u32).collect();
        assert_eq!(ranks, expect);
        ranks.dedup();
        assert_eq!(ranks.len(), model.vocab_size());
    }

    #[test]
    fn rank_one_has_max_probability() {
        let model = train_ngram(
            &corpus_of(&["a b c a b d a b a c"]),
            2,
            1.0,
            10,
        )
        .unwrap();
        for ctx_tok in ["a", "b", "c"] {
            let ctx = [model.token_id(ctx_tok)];
            let dist = model.conditional_distribution(&ctx);
            let max = dist.iter().cloned().fold(f64::MIN, f64::max);
            for id in 0..model.vocab_size() as u32 {
                let (lp, rank, _) = model.position_scores(&ctx, id);
                if rank == 1 {
                    assert!((lp.exp() - max).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_text_is_an_error() {
        let model = train_ngram(&corpus_of(&["a b"]), 2, 1.0, 10).unwrap();
        assert!(matches!(model.score_text("  "), Err(ScorerError::EmptyText)));
    }

    #[test]
    fn retrain_is_byte_identical() {
        let corpus = corpus_of(&["the cat sat", "the dog ran off", "a cat ran"]);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        train_ngram(&corpus, 3, 1.0, 100).unwrap().save(&p1).unwrap();
        train_ngram(&corpus, 3, 1.0, 100).unwrap().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn save_load_round_trip_scores() {
        let corpus = corpus_of(&["one two three two one", "three one two"]);
        let model = train_ngram(&corpus, 2, 0.25, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = NGramModel::load(&path).unwrap();
        let a = model.score_text("one two three").unwrap();
        let b = loaded.score_text("one two three").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vocab_truncation_ties_lexicographic() {
        // "b" and "c" both occur twice; with room for one, "b" wins.
        let model = train_ngram(&corpus_of(&["a a a c b b c"]), 1, 1.0, 2).unwrap();
        assert!(model.token_ids.contains_key("a"));
        assert!(model.token_ids.contains_key("b"));
        assert!(!model.token_ids.contains_key("c"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scoring_is_pure(seed in 0u64..500) {
            let corpus = corpus_of(&["alpha beta gamma beta", "gamma alpha beta"]);
            let model = train_ngram(&corpus, 2, 1.0, 20).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let words = ["alpha", "beta", "gamma", "delta"];
            let text: Vec<&str> = (0..rng.gen_range(1..10))
                .map(|_| words[rng.gen_range(0..words.len())])
                .collect();
            let text = text.join(" ");
            let a = model.score_text(&text).unwrap();
            let b = model.score_text(&text).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn entropy_bounded_by_ln_v(seed in 0u64..200) {
            let corpus = corpus_of(&["p q r p q", "r r q p"]);
            let model = train_ngram(&corpus, 2, 0.5, 10).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ctx = [rng.gen_range(0..model.vocab_size() as u32)];
            let id = rng.gen_range(0..model.vocab_size() as u32);
            let (_, _, ent) = model.position_scores(&ctx, id);
            prop_assert!(ent <= (model.vocab_size() as f64).ln() + 1e-12);
            prop_assert!(ent >= 0.0);
        }
    }
}
