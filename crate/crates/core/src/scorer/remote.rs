//! HTTP client for external scorer backends.
//!
//! Protocol: `POST {base_url}/v1/score` with body
//! `{"texts": [...], "top_k_thresholds": [10, 100, 1000]}`. The response
//! carries per-text `tokens`, `log_prob`, `rank`, and `entropy` arrays;
//! rank buckets are derived client-side. Requests are batched, bounded
//! to `max_in_flight` concurrent calls, and never retried.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ScorerError, TokenScoreSequence, TokenScorer};

/// Connection settings for a remote scorer or detector service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerEndpoint {
    pub base_url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_in_flight() -> usize {
    4
}

impl ScorerEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ScorerEndpoint {
            base_url: base_url.into(),
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_max_in_flight(),
            auth_token: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Shared blocking HTTP plumbing for the remote scorer and detector.
pub(crate) struct HttpJson {
    endpoint: ScorerEndpoint,
    client: reqwest::blocking::Client,
}

impl HttpJson {
    pub(crate) fn new(endpoint: ScorerEndpoint) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout())
            .build()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        Ok(HttpJson { endpoint, client })
    }

    pub(crate) fn endpoint(&self) -> &ScorerEndpoint {
        &self.endpoint
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, ScorerError> {
        let url = format!("{}{path}", self.endpoint.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(body);
        if let Some(token) = &self.endpoint.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(map_reqwest_err)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ScorerError::Transport(format!("server returned {status}")));
        }
        resp.json::<R>()
            .map_err(|e| ScorerError::Protocol(format!("invalid response body: {e}")))
    }
}

fn map_reqwest_err(e: reqwest::Error) -> ScorerError {
    if e.is_timeout() {
        ScorerError::Timeout
    } else {
        ScorerError::Transport(e.to_string())
    }
}

/// Splits `items` into batches and runs `f` over them on up to
/// `max_in_flight` worker threads. Output order matches input order; the
/// first failure aborts the whole call with no partial results.
pub(crate) fn run_batched<T, R, F>(
    items: &[T],
    batch_size: usize,
    max_in_flight: usize,
    f: F,
) -> Result<Vec<R>, ScorerError>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Result<Vec<R>, ScorerError> + Sync,
{
    let batches: Vec<&[T]> = items.chunks(batch_size.max(1)).collect();
    let n_batches = batches.len();
    if n_batches == 0 {
        return Ok(Vec::new());
    }
    let workers = max_in_flight.max(1).min(n_batches);

    let (job_tx, job_rx) = crossbeam_channel::unbounded::<usize>();
    for i in 0..n_batches {
        job_tx.send(i).expect("queue open");
    }
    drop(job_tx);

    let (res_tx, res_rx) = crossbeam_channel::unbounded();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let res_tx = res_tx.clone();
            let batches = &batches;
            let f = &f;
            scope.spawn(move || {
                while let Ok(i) = job_rx.recv() {
                    if res_tx.send((i, f(batches[i]))).is_err() {
                        break;
                    }
                }
            });
        }
    });
    drop(res_tx);

    let mut collected: Vec<Option<Vec<R>>> = (0..n_batches).map(|_| None).collect();
    for (i, result) in res_rx {
        collected[i] = Some(result?);
    }
    Ok(collected
        .into_iter()
        .flat_map(|v| v.expect("every batch reported"))
        .collect())
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    texts: &'a [String],
    top_k_thresholds: [u32; 3],
}

#[derive(Deserialize)]
struct ScoreResponse {
    results: Vec<ScoreResult>,
}

#[derive(Deserialize)]
struct ScoreResult {
    tokens: Vec<String>,
    log_prob: Vec<f64>,
    rank: Vec<u32>,
    entropy: Vec<f64>,
}

/// Scorer backed by a remote HTTP service.
pub struct RemoteScorer {
    http: HttpJson,
    batch_size: usize,
}

pub const DEFAULT_SCORE_BATCH: usize = 16;

impl RemoteScorer {
    pub fn new(endpoint: ScorerEndpoint) -> Result<Self, ScorerError> {
        Self::with_batch_size(endpoint, DEFAULT_SCORE_BATCH)
    }

    pub fn with_batch_size(endpoint: ScorerEndpoint, batch_size: usize) -> Result<Self, ScorerError> {
        Ok(RemoteScorer {
            http: HttpJson::new(endpoint)?,
            batch_size: batch_size.max(1),
        })
    }

    /// Scores texts via batched requests; responses are validated against
    /// the [`TokenScoreSequence`] invariants before anything is returned.
    pub fn score_remote(&self, texts: &[String]) -> Result<Vec<TokenScoreSequence>, ScorerError> {
        let max_in_flight = self.http.endpoint().max_in_flight;
        run_batched(texts, self.batch_size, max_in_flight, |batch| {
            let request = ScoreRequest {
                texts: batch,
                top_k_thresholds: [10, 100, 1000],
            };
            let response: ScoreResponse = self.http.post("/v1/score", &request)?;
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
                .map(|r| TokenScoreSequence::from_raw(r.tokens, r.log_prob, r.rank, r.entropy))
                .collect()
        })
    }
}

impl TokenScorer for RemoteScorer {
    fn score_text(&self, text: &str) -> Result<TokenScoreSequence, ScorerError> {
        let mut result = self.score_remote(std::slice::from_ref(&text.to_string()))?;
        result
            .pop()
            .ok_or_else(|| ScorerError::Protocol("empty result set".into()))
    }

    fn score_batch(&self, texts: &[String]) -> Result<Vec<TokenScoreSequence>, ScorerError> {
        self.score_remote(texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_batched_preserves_order() {
        let items: Vec<usize> = (0..37).collect();
        let out = run_batched(&items, 5, 3, |batch| {
            Ok(batch.iter().map(|&x| x * 2).collect())
        })
        .unwrap();
        assert_eq!(out, (0..37).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn run_batched_propagates_errors() {
        let items: Vec<usize> = (0..10).collect();
        let out: Result<Vec<usize>, _> = run_batched(&items, 2, 2, |batch| {
            if batch.contains(&6) {
                Err(ScorerError::Protocol("boom".into()))
            } else {
                Ok(batch.to_vec())
            }
        });
        assert!(matches!(out, Err(ScorerError::Protocol(_))));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // Port 1 on localhost: nothing listens there.
        let endpoint = ScorerEndpoint {
            base_url: "http://127.0.0.1:1".into(),
            timeout_secs: 2,
            max_in_flight: 1,
            auth_token: None,
        };
        let scorer = RemoteScorer::new(endpoint).unwrap();
        let result = scorer.score_remote(&["hello".to_string()]);
        assert!(matches!(
            result,
            Err(ScorerError::Transport(_)) | Err(ScorerError::Timeout)
        ));
    }
}
