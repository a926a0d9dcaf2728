//! Client for embedding services speaking `POST /embed`.
//!
//! Request: `{"texts": [...], "kind": "sentence"|"word"}`.
//! Response: `{"vectors": [[...], ...], "dim": int, "model": string}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedKind, Embedder};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    pub kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f32>>,
    pub dim: usize,
    #[serde(default)]
    pub model: String,
}

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Retries after the first attempt.
    pub retries: usize,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_in_flight: 4,
            retries: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

pub struct HttpProvider {
    endpoint: String,
    agent: ureq::Agent,
    options: HttpOptions,
    model_name: String,
}

impl HttpProvider {
    pub fn new(url: &str, model_name: &str, options: HttpOptions) -> Self {
        let trimmed = url.trim_end_matches('/');
        let endpoint = if trimmed.ends_with("/embed") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/embed")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            agent,
            options,
            model_name: model_name.to_string(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request_once(&self, texts: &[String], kind: EmbedKind) -> Result<EmbedResponse, String> {
        let body = EmbedRequest {
            texts: texts.to_vec(),
            kind: kind.as_str().to_string(),
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if status != 200 {
            return Err(format!("HTTP status {status}"));
        }
        response
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json::<EmbedResponse>()
            .map_err(|e| format!("bad response body: {e}"))
    }

    fn fetch_batch(&self, texts: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        let attempts = self.options.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.options.backoff.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("embedding request failed ({last_error}); retry {attempt} in {delay:?}");
                thread::sleep(delay);
            }
            match self.request_once(texts, kind) {
                Ok(resp) => return validate(resp, texts.len()),
                Err(e) => last_error = e,
            }
        }
        Err(EmbedError::Transport {
            attempts,
            message: last_error,
        })
    }
}

fn validate(resp: EmbedResponse, expected: usize) -> Result<Vec<Vec<f32>>, EmbedError> {
    if resp.vectors.len() != expected {
        return Err(EmbedError::Protocol(format!(
            "response has {} vectors for {expected} texts",
            resp.vectors.len()
        )));
    }
    if let Some(bad) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
        return Err(EmbedError::DimensionMismatch {
            expected: resp.dim,
            found: bad.len(),
        });
    }
    Ok(resp.vectors)
}

impl Embedder for HttpProvider {
    /// Splits `texts` into batches fetched by up to `max_in_flight` workers;
    /// results are reassembled by batch index.
    fn embed_batch(&self, texts: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        let batches: Vec<&[String]> = texts.chunks(self.options.batch_size.max(1)).collect();
        let results: Mutex<Vec<Option<Result<Vec<Vec<f32>>, EmbedError>>>> =
            Mutex::new((0..batches.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.options.max_in_flight.clamp(1, batches.len().max(1));
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    if b >= batches.len() {
                        break;
                    }
                    let result = self.fetch_batch(batches[b], kind);
                    let failed = result.is_err();
                    results.lock().expect("results poisoned")[b] = Some(result);
                    if failed {
                        // stop handing out work; remaining slots stay empty
                        next.store(batches.len(), Ordering::SeqCst);
                    }
                });
            }
        });

        let mut out = Vec::with_capacity(texts.len());
        let mut dim: Option<usize> = None;
        for slot in results.into_inner().expect("results poisoned") {
            let rows = match slot {
                Some(r) => r?,
                None => continue,
            };
            for row in rows {
                match dim {
                    None => dim = Some(row.len()),
                    Some(d) if d != row.len() => {
                        return Err(EmbedError::DimensionMismatch {
                            expected: d,
                            found: row.len(),
                        })
                    }
                    _ => {}
                }
                out.push(row);
            }
        }
        if out.len() != texts.len() {
            return Err(EmbedError::Protocol("incomplete batch results".into()));
        }
        Ok(out)
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}
