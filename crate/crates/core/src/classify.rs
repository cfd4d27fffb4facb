//! Logistic-regression detector head and evaluation.
//!
//! Features are standardized to zero mean and unit variance, then fit
//! with full-batch gradient descent on l2-regularized cross-entropy.
//! Training is deterministic: weights start at zero and the data order
//! is taken as given, so a fixed input always yields the same model.
//! External model-based detectors attach through the remote protocol.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::metrics::{basic_features, detectgpt_score, npr_score, perturb, FeatureMatrix,
    PerturbationConfig};
use crate::scorer::remote::{run_batched, HttpJson};
use crate::scorer::{ScorerEndpoint, ScorerError, TokenScorer};

const FORMAT_VERSION: u32 = 1;
const STD_FLOOR: f64 = 1e-9;

pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_L2: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("non-finite feature value in document {0:?}")]
    NonFiniteFeature(String),
    #[error("feature vector does not match the model (expected {expected} features, got {got})")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("prediction and truth sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no examples to evaluate")]
    EmptyInput,
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Remote(#[from] ScorerError),
    #[error("metrics: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Hyperparameters recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

/// Trained metric-based detector: standardization statistics, weights,
/// bias, and decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Probability cutoff; the boundary itself classifies as AI.
    pub threshold: f64,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            l2: DEFAULT_L2,
            seed: 0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Trains a logistic-regression model over the matrix rows.
pub fn train(
    matrix: &FeatureMatrix,
    labels: &[Label],
    params: &TrainParams,
) -> Result<LogisticModel, ClassifyError> {
    train_with_history(matrix, labels, params).map(|(model, _)| model)
}

/// Like [`train`] but also returns the regularized loss measured at the
/// start of every epoch (before that epoch's update).
pub fn train_with_history(
    matrix: &FeatureMatrix,
    labels: &[Label],
    params: &TrainParams,
) -> Result<(LogisticModel, Vec<f64>), ClassifyError> {
    let n = matrix.rows.len();
    if n != labels.len() {
        return Err(ClassifyError::LengthMismatch(n, labels.len()));
    }
    if n == 0 {
        return Err(ClassifyError::EmptyInput);
    }
    let n_ai = labels.iter().filter(|&&l| l == Label::Ai).count();
    if n_ai == 0 || n_ai == n {
        return Err(ClassifyError::SingleClass);
    }
    for (id, row) in matrix.ids.iter().zip(&matrix.rows) {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFiniteFeature(id.clone()));
        }
    }

    let d = matrix.feature_names.len();
    let nf = n as f64;

    let mut means = vec![0.0; d];
    for row in &matrix.rows {
        for (m, &x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= nf;
    }
    let mut stds = vec![0.0; d];
    for row in &matrix.rows {
        for ((s, &x), &m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut stds {
        *s = (*s / nf).sqrt().max(STD_FLOOR);
    }

    let standardized: Vec<Vec<f64>> = matrix
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&stds)
                .map(|((&x, &m), &s)| (x - m) / s)
                .collect()
        })
        .collect();
    let targets: Vec<f64> = labels
        .iter()
        .map(|l| if *l == Label::Ai { 1.0 } else { 0.0 })
        .collect();

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut history = Vec::with_capacity(params.epochs);

    for _ in 0..params.epochs {
        let mut grad_w = vec![0.0; d];
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (row, &y) in standardized.iter().zip(&targets) {
            let z = bias + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
            loss += softplus(z) - y * z;
            let err = sigmoid(z) - y;
            for (g, &x) in grad_w.iter_mut().zip(row) {
                *g += err * x;
            }
            grad_b += err;
        }
        loss /= nf;
        loss += 0.5 * params.l2 * weights.iter().map(|w| w * w).sum::<f64>();
        history.push(loss);

        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= params.learning_rate * (g / nf + params.l2 * *w);
        }
        bias -= params.learning_rate * grad_b / nf;
    }

    let model = LogisticModel {
        feature_names: matrix.feature_names.clone(),
        means,
        stds,
        weights,
        bias,
        threshold: 0.5,
        train_meta: TrainMeta {
            seed: params.seed,
            epochs: params.epochs,
            learning_rate: params.learning_rate,
            l2: params.l2,
        },
    };
    Ok((model, history))
}

impl LogisticModel {
    /// AI-class probability for one raw (unstandardized) feature vector.
    pub fn predict_proba(&self, features: &[f64]) -> Result<f64, ClassifyError> {
        if features.len() != self.weights.len() {
            return Err(ClassifyError::FeatureMismatch {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        let z = self.bias
            + features
                .iter()
                .zip(&self.means)
                .zip(&self.stds)
                .zip(&self.weights)
                .map(|(((&x, &m), &s), &w)| w * (x - m) / s)
                .sum::<f64>();
        Ok(sigmoid(z))
    }

    /// AI iff the probability reaches the threshold (boundary inclusive).
    pub fn predict_label(&self, features: &[f64]) -> Result<Label, ClassifyError> {
        let p = self.predict_proba(features)?;
        Ok(if p >= self.threshold { Label::Ai } else { Label::Human })
    }

    /// Predicts every row of a matrix, validating the column names.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<(Label, f64)>, ClassifyError> {
        if matrix.feature_names != self.feature_names {
            return Err(ClassifyError::FeatureMismatch {
                expected: self.feature_names.len(),
                got: matrix.feature_names.len(),
            });
        }
        matrix
            .rows
            .iter()
            .map(|row| {
                let p = self.predict_proba(row)?;
                Ok((if p >= self.threshold { Label::Ai } else { Label::Human }, p))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        let file = LogisticModelFile {
            format_version: FORMAT_VERSION,
            model: self.clone(),
        };
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &file)
            .map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        let reader = BufReader::new(File::open(path)?);
        let file: LogisticModelFile = serde_json::from_reader(reader)
            .map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(ClassifyError::ModelFile(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        let m = &file.model;
        let d = m.feature_names.len();
        if m.means.len() != d || m.stds.len() != d || m.weights.len() != d {
            return Err(ClassifyError::ModelFile("inconsistent vector lengths".into()));
        }
        if m.stds.iter().any(|&s| !(s > 0.0)) {
            return Err(ClassifyError::ModelFile("standard deviations must be positive".into()));
        }
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct LogisticModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: LogisticModel,
}

/// Confusion counts and derived metrics, with the AI class positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// F1 of the AI class; 0 by convention when precision+recall is 0.
    pub f1: f64,
    /// Share of truth-human examples misclassified as AI.
    pub fpr: f64,
}

impl EvalReport {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub const CSV_HEADER: &'static str = "accuracy,precision,recall,f1,fpr,tp,fp,tn,fn";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.fpr,
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }
}

/// Scores a prediction sequence against ground truth.
pub fn evaluate(predictions: &[Label], truth: &[Label]) -> Result<EvalReport, ClassifyError> {
    if predictions.len() != truth.len() {
        return Err(ClassifyError::LengthMismatch(predictions.len(), truth.len()));
    }
    if predictions.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&pred, &actual) in predictions.iter().zip(truth) {
        match (pred, actual) {
            (Label::Ai, Label::Ai) => tp += 1,
            (Label::Ai, Label::Human) => fp += 1,
            (Label::Human, Label::Human) => tn += 1,
            (Label::Human, Label::Ai) => fn_ += 1,
        }
    }
    let n = predictions.len() as f64;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp + tn) as f64 / n,
        precision,
        recall,
        f1,
        fpr: ratio(fp, fp + tn),
    })
}

/// Local end-to-end detector: scorer, feature extraction, then the
/// logistic head. The perturbation config must match how the model was
/// trained (present iff the model has DetectGPT/NPR columns).
pub struct LocalDetector<'a> {
    pub scorer: &'a dyn TokenScorer,
    pub model: &'a LogisticModel,
    pub perturbation: Option<PerturbationConfig>,
}

impl LocalDetector<'_> {
    pub fn prob_ai(&self, text: &str) -> Result<f64, ClassifyError> {
        let seq = self.scorer.score_text(text)?;
        let mut fv = basic_features(&seq)?;
        if let Some(cfg) = &self.perturbation {
            let texts = perturb(text, cfg)?;
            let perturbed = self.scorer.score_batch(&texts)?;
            fv.detectgpt = Some(detectgpt_score(&seq, &perturbed, false)?);
            fv.npr = Some(npr_score(&seq, &perturbed)?);
        }
        self.model.predict_proba(&fv.values())
    }
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct DetectResponse {
    results: Vec<DetectResult>,
}

#[derive(Deserialize)]
struct DetectResult {
    label: String,
    prob_ai: f64,
}

pub const DEFAULT_DETECT_BATCH: usize = 32;

/// Client for an external detector service speaking
/// `POST {base_url}/v1/detect`.
pub struct RemoteDetector {
    http: HttpJson,
    batch_size: usize,
}

impl RemoteDetector {
    pub fn new(endpoint: ScorerEndpoint) -> Result<Self, ClassifyError> {
        Ok(RemoteDetector {
            http: HttpJson::new(endpoint)?,
            batch_size: DEFAULT_DETECT_BATCH,
        })
    }

    /// Labels texts remotely; output order matches input order.
    pub fn predict_remote(&self, texts: &[String]) -> Result<Vec<(Label, f64)>, ClassifyError> {
        let max_in_flight = self.http.endpoint().max_in_flight;
        let results = run_batched(texts, self.batch_size, max_in_flight, |batch| {
            let response: DetectResponse =
                self.http.post("/v1/detect", &DetectRequest { texts: batch })?;
            if response.results.len() != batch.len() {
                return Err(ScorerError::Protocol(format!(
                    "expected {} results, got {}",
                    batch.len(),
                    response.results.len()
                )));
            }
            response
                .results
                .into_iter()
                .map(|r| {
                    let label: Label = r
                        .label
                        .parse()
                        .map_err(|e: String| ScorerError::Protocol(e))?;
                    if !r.prob_ai.is_finite() || !(0.0..=1.0).contains(&r.prob_ai) {
                        return Err(ScorerError::Protocol(format!(
                            "prob_ai out of range: {}",
                            r.prob_ai
                        )));
                    }
                    Ok((label, r.prob_ai))
                })
                .collect()
        })?;
        Ok(results)
    }
}
