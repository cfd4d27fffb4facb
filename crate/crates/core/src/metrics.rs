//! Metric-based detector features.
//!
//! From a [`TokenScoreSequence`] this module derives the per-document
//! feature vector used by the classifier: mean log-likelihood, mean rank,
//! mean log-rank, mean entropy, the four GLTR top-k rank fractions, the
//! log-likelihood/log-rank ratio, and the perturbation-based DetectGPT
//! and NPR scores.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::scorer::{tokenize, RankBucket, ScorerError, TokenScoreSequence, TokenScorer};

const EPS: f64 = 1e-6;

/// Feature column names without the perturbation scores, in the fixed
/// order used by every serialization.
pub const BASIC_FEATURE_NAMES: [&str; 9] = [
    "log_likelihood",
    "mean_rank",
    "mean_log_rank",
    "mean_entropy",
    "gltr_top10",
    "gltr_top100",
    "gltr_top1000",
    "gltr_beyond",
    "lrr",
];

/// Perturbation feature columns appended when a perturbation config is
/// active.
pub const PERTURBATION_FEATURE_NAMES: [&str; 2] = ["detectgpt", "npr"];

/// The metric-detector features for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub log_likelihood: f64,
    pub mean_rank: f64,
    pub mean_log_rank: f64,
    pub mean_entropy: f64,
    /// Fractions of tokens ranked in the top 10 / top 100 / top 1000 /
    /// beyond; always sums to 1.
    pub gltr_frac: [f64; 4],
    pub lrr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectgpt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npr: Option<f64>,
}

impl FeatureVector {
    pub fn has_perturbation(&self) -> bool {
        self.detectgpt.is_some() && self.npr.is_some()
    }

    /// Values in the documented column order. Perturbation columns are
    /// included only when present.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.log_likelihood,
            self.mean_rank,
            self.mean_log_rank,
            self.mean_entropy,
            self.gltr_frac[0],
            self.gltr_frac[1],
            self.gltr_frac[2],
            self.gltr_frac[3],
            self.lrr,
        ];
        if let (Some(d), Some(n)) = (self.detectgpt, self.npr) {
            v.push(d);
            v.push(n);
        }
        v
    }

    pub fn feature_names(with_perturbation: bool) -> Vec<String> {
        let mut names: Vec<String> = BASIC_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        if with_perturbation {
            names.extend(PERTURBATION_FEATURE_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("token score sequence is empty")]
    EmptySequence,
    #[error("text too short to perturb (need at least 2 tokens)")]
    TooShort,
    #[error("no perturbations supplied")]
    NoPerturbations,
    #[error("scorer: {0}")]
    Scorer(#[from] ScorerError),
    #[error("document {id}: {source}")]
    Document {
        id: String,
        #[source]
        source: Box<MetricsError>,
    },
    #[error("feature file: {0}")]
    FeatureFile(String),
}

/// Computes the non-perturbation features of one scored document.
///
/// All means are arithmetic over token positions. LRR divides the summed
/// negated log-probabilities by the summed log-ranks, clamping an exactly
/// zero denominator to 1e-6.
pub fn basic_features(seq: &TokenScoreSequence) -> Result<FeatureVector, MetricsError> {
    let n = seq.len();
    if n == 0 {
        return Err(MetricsError::EmptySequence);
    }
    let nf = n as f64;
    let sum_lp: f64 = seq.log_prob.iter().sum();
    let sum_rank: f64 = seq.rank.iter().map(|&r| r as f64).sum();
    let sum_log_rank: f64 = seq.rank.iter().map(|&r| (r as f64).ln()).sum();
    let sum_entropy: f64 = seq.entropy.iter().sum();

    let mut bucket_counts = [0usize; 4];
    for b in &seq.bucket {
        let idx = match b {
            RankBucket::Top10 => 0,
            RankBucket::Top100 => 1,
            RankBucket::Top1000 => 2,
            RankBucket::Beyond => 3,
        };
        bucket_counts[idx] += 1;
    }
    let gltr_frac = [
        bucket_counts[0] as f64 / nf,
        bucket_counts[1] as f64 / nf,
        bucket_counts[2] as f64 / nf,
        bucket_counts[3] as f64 / nf,
    ];

    let lrr_denom = if sum_log_rank == 0.0 { EPS } else { sum_log_rank };
    Ok(FeatureVector {
        log_likelihood: sum_lp / nf,
        mean_rank: sum_rank / nf,
        mean_log_rank: sum_log_rank / nf,
        mean_entropy: sum_entropy / nf,
        gltr_frac,
        lrr: -sum_lp / lrr_denom,
        detectgpt: None,
        npr: None,
    })
}

/// How perturbed variants of a text are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMethod {
    WordDrop,
    WordSwap,
}

/// Settings for rule-based text perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Number of perturbed variants per document.
    pub k: usize,
    pub method: PerturbMethod,
    /// Fraction of tokens edited per perturbation, in (0, 1).
    pub edit_fraction: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            k: 10,
            method: PerturbMethod::WordDrop,
            edit_fraction: 0.15,
            seed: 0,
        }
    }
}

/// Produces `cfg.k` perturbed variants of `text`, deterministic in
/// `cfg.seed`, each guaranteed to differ from the original token stream.
///
/// `word_drop` removes `ceil(edit_fraction * L)` tokens at seeded-random
/// positions (always leaving at least one); `word_swap` exchanges that
/// many adjacent pairs. A swap set that happens to reproduce the original
/// (all chosen pairs equal) falls back to dropping the first token.
pub fn perturb(text: &str, cfg: &PerturbationConfig) -> Result<Vec<String>, MetricsError> {
    assert!(cfg.k >= 1, "k must be >= 1");
    assert!(
        cfg.edit_fraction > 0.0 && cfg.edit_fraction < 1.0,
        "edit_fraction must be in (0, 1)"
    );
    let tokens = tokenize(text);
    let len = tokens.len();
    if len < 2 {
        return Err(MetricsError::TooShort);
    }
    let edits = ((cfg.edit_fraction * len as f64).ceil() as usize).clamp(1, len - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let perturbed = match cfg.method {
            PerturbMethod::WordDrop => {
                let drop: std::collections::HashSet<usize> =
                    sample(&mut rng, len, edits).into_iter().collect();
                tokens
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !drop.contains(i))
                    .map(|(_, t)| t.clone())
                    .collect::<Vec<_>>()
            }
            PerturbMethod::WordSwap => {
                let mut swapped = tokens.clone();
                let mut positions: Vec<usize> = sample(&mut rng, len - 1, edits.min(len - 1))
                    .into_iter()
                    .collect();
                positions.sort_unstable();
                for &i in &positions {
                    swapped.swap(i, i + 1);
                }
                if swapped == tokens {
                    swapped.remove(0);
                }
                swapped
            }
        };
        out.push(perturbed.join(" "));
    }
    Ok(out)
}

/// DetectGPT perturbation discrepancy: the original text's mean
/// log-likelihood minus the mean over perturbed variants'. With
/// `normalize` set and at least two perturbations, the discrepancy is
/// divided by the sample standard deviation of the perturbed means
/// (clamped to 1e-6).
pub fn detectgpt_score(
    orig: &TokenScoreSequence,
    perturbed: &[TokenScoreSequence],
    normalize: bool,
) -> Result<f64, MetricsError> {
    if perturbed.is_empty() {
        return Err(MetricsError::NoPerturbations);
    }
    let means: Vec<f64> = perturbed.iter().map(|s| s.mean_log_prob()).collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let mut d = orig.mean_log_prob() - mean;
    if normalize && means.len() >= 2 {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        d /= var.sqrt().max(EPS);
    }
    Ok(d)
}

/// Normalized perturbation log-rank: mean perturbed log-rank over the
/// original's (denominator clamped to 1e-6).
pub fn npr_score(
    orig: &TokenScoreSequence,
    perturbed: &[TokenScoreSequence],
) -> Result<f64, MetricsError> {
    if perturbed.is_empty() {
        return Err(MetricsError::NoPerturbations);
    }
    let mean_perturbed = perturbed.iter().map(|s| s.mean_log_rank()).sum::<f64>()
        / perturbed.len() as f64;
    Ok(mean_perturbed / orig.mean_log_rank().max(EPS))
}

/// Extracts one feature vector per document, in corpus order.
///
/// Documents are scored independently (and in parallel); with a
/// perturbation config, each document uses the derived seed
/// `cfg.seed + document_index`, so results do not depend on scheduling.
/// DetectGPT is reported unnormalized here.
pub fn featurize_corpus(
    corpus: &Corpus,
    scorer: &dyn TokenScorer,
    perturbation: Option<&PerturbationConfig>,
) -> Result<Vec<(String, FeatureVector)>, MetricsError> {
    corpus
        .documents()
        .par_iter()
        .enumerate()
        .map(|(idx, doc)| {
            featurize_one(doc.text.as_str(), idx, scorer, perturbation)
                .map(|fv| (doc.id.clone(), fv))
                .map_err(|e| MetricsError::Document {
                    id: doc.id.clone(),
                    source: Box::new(e),
                })
        })
        .collect()
}

fn featurize_one(
    text: &str,
    doc_index: usize,
    scorer: &dyn TokenScorer,
    perturbation: Option<&PerturbationConfig>,
) -> Result<FeatureVector, MetricsError> {
    let seq = scorer.score_text(text)?;
    let mut fv = basic_features(&seq)?;
    if let Some(cfg) = perturbation {
        let doc_cfg = PerturbationConfig {
            seed: cfg.seed.wrapping_add(doc_index as u64),
            ..cfg.clone()
        };
        let texts = perturb(text, &doc_cfg)?;
        let perturbed = scorer.score_batch(&texts)?;
        fv.detectgpt = Some(detectgpt_score(&seq, &perturbed, false)?);
        fv.npr = Some(npr_score(&seq, &perturbed)?);
    }
    Ok(fv)
}

/// Feature matrix with ids and column names, ready for training or
/// CSV/JSON serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_features(features: &[(String, FeatureVector)]) -> Self {
        let with_perturbation = features.first().map(|(_, f)| f.has_perturbation()).unwrap_or(false);
        FeatureMatrix {
            feature_names: FeatureVector::feature_names(with_perturbation),
            ids: features.iter().map(|(id, _)| id.clone()).collect(),
            rows: features.iter().map(|(_, f)| f.values()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// CSV with a header row: `id` first, then the feature columns.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), MetricsError> {
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        let mut header = vec!["id".to_string()];
        header.extend(self.feature_names.clone());
        writer
            .write_record(&header)
            .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut record = vec![id.clone()];
            record.extend(row.iter().map(|v| format!("{v}")));
            writer
                .write_record(&record)
                .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        }
        writer
            .flush()
            .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self, MetricsError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
        if headers.is_empty() || &headers[0] != "id" {
            return Err(MetricsError::FeatureFile("first column must be id".into()));
        }
        let feature_names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (lineno, record) in reader.records().enumerate() {
            let record = record.map_err(|e| MetricsError::FeatureFile(e.to_string()))?;
            if record.len() != feature_names.len() + 1 {
                return Err(MetricsError::FeatureFile(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    feature_names.len() + 1,
                    record.len()
                )));
            }
            ids.push(record[0].to_string());
            let row: Result<Vec<f64>, _> = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| MetricsError::FeatureFile(format!("row {}: {e}", lineno + 2)))
                })
                .collect();
            rows.push(row?);
        }
        Ok(FeatureMatrix {
            feature_names,
            ids,
            rows,
        })
    }
}
