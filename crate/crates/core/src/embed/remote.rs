//! Client for the optional embedding sidecar.
//!
//! Texts are posted to `{endpoint}/v1/embed/text` as `{"texts": [...]}` and
//! images to `{endpoint}/v1/embed/image` as `{"images": [base64...]}`. The
//! service answers `{"dim": D, "vectors": [[...], ...], "model": "..."}`.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::error::{Error, Result};

/// What to embed remotely.
#[derive(Debug, Clone, Copy)]
pub enum RemoteInput<'a> {
    /// Caption strings; resulting ids are `text:<caption>`.
    Texts(&'a [String]),
    /// Image references, resolved against [`RemoteConfig::image_root`] and
    /// sent as base64; resulting ids are `image:<ref>`.
    Images(&'a [String]),
}

impl RemoteInput<'_> {
    fn len(&self) -> usize {
        match self {
            RemoteInput::Texts(v) | RemoteInput::Images(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Expected embedding dimension; responses of any other size are rejected.
    pub dim: usize,
    /// Bearer token sent in the `Authorization` header, if set.
    pub token: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Additional attempts after a transport failure or 5xx response.
    pub retries: u32,
    pub timeout: Duration,
    pub image_root: PathBuf,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            dim,
            token: None,
            batch_size: 64,
            max_in_flight: 4,
            retries: 2,
            timeout: Duration::from_secs(60),
            image_root: PathBuf::from("."),
        }
    }

    /// Fills endpoint-independent settings from `EMBED_TOKEN`.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var("EMBED_TOKEN").ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Serialize)]
struct TextRequest<'a> {
    texts: &'a [String],
}

#[derive(Serialize)]
struct ImageRequest {
    images: Vec<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    #[allow(dead_code)]
    #[serde(default)]
    model: Option<String>,
}

/// Fetches one embedding per input, in input order.
///
/// Inputs are split into batches of `batch_size`; at most `max_in_flight`
/// batches are outstanding at once. An empty input makes no request.
pub fn fetch_remote(input: RemoteInput<'_>, config: &RemoteConfig) -> Result<Vec<Embedding>> {
    if input.len() == 0 {
        return Ok(Vec::new());
    }
    if config.batch_size == 0 || config.max_in_flight == 0 {
        return Err(Error::Config("batch_size and max_in_flight must be positive".into()));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout))
        .http_status_as_error(false)
        .build()
        .into();

    let (route, ids, items): (&str, Vec<String>, &[String]) = match input {
        RemoteInput::Texts(t) => ("text", t.iter().map(|s| super::text_key(s)).collect(), t),
        RemoteInput::Images(r) => ("image", r.iter().map(|s| super::image_key(s)).collect(), r),
    };
    let url = format!("{}/v1/embed/{route}", config.endpoint.trim_end_matches('/'));
    let batches: Vec<&[String]> = items.chunks(config.batch_size).collect();

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(items.len());
    for wave in batches.chunks(config.max_in_flight) {
        let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    let agent = &agent;
                    let url = &url;
                    s.spawn(move || {
                        let body = match input {
                            RemoteInput::Texts(_) => serde_json::to_value(TextRequest { texts: batch })?,
                            RemoteInput::Images(_) => {
                                serde_json::to_value(ImageRequest { images: encode_images(batch, config)? })?
                            }
                        };
                        post_batch(agent, url, &body, batch.len(), config)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(Error::Remote {
                            message: "request thread panicked".into(),
                            retries: 0,
                        })
                    })
                })
                .collect()
        });
        for r in results {
            vectors.extend(r?);
        }
    }

    ids.into_iter()
        .zip(vectors)
        .map(|(id, v)| {
            Embedding::new(id, v).map_err(|e| Error::Remote {
                message: e.to_string(),
                retries: 0,
            })
        })
        .collect()
}

fn encode_images(refs: &[String], config: &RemoteConfig) -> Result<Vec<String>> {
    refs.iter()
        .map(|r| {
            let path = config.image_root.join(r);
            let bytes = std::fs::read(&path).map_err(|e| Error::load(&path, e.to_string()))?;
            Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
        })
        .collect()
}

fn post_batch(
    agent: &ureq::Agent,
    url: &str,
    body: &serde_json::Value,
    expected: usize,
    config: &RemoteConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut attempt = 0u32;
    loop {
        let outcome = send_once(agent, url, body, config);
        let retryable = matches!(&outcome, Err(Attempt::Retryable(_)));
        match outcome {
            Ok(resp) => return check_response(resp, expected, config.dim, attempt),
            Err(Attempt::Retryable(message)) | Err(Attempt::Fatal(message)) => {
                if retryable && attempt < config.retries {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                    continue;
                }
                return Err(Error::Remote {
                    message,
                    retries: attempt,
                });
            }
        }
    }
}

enum Attempt {
    Retryable(String),
    Fatal(String),
}

fn send_once(
    agent: &ureq::Agent,
    url: &str,
    body: &serde_json::Value,
    config: &RemoteConfig,
) -> Result<EmbedResponse, Attempt> {
    let mut req = agent.post(url);
    if let Some(token) = &config.token {
        req = req.header("Authorization", format!("Bearer {token}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| Attempt::Retryable(format!("transport failure: {e}")))?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let detail = resp.body_mut().read_to_string().unwrap_or_default();
        let message = format!("{url} returned status {status}: {}", detail.trim());
        return Err(if status >= 500 {
            Attempt::Retryable(message)
        } else {
            Attempt::Fatal(message)
        });
    }
    resp.body_mut()
        .read_json::<EmbedResponse>()
        .map_err(|e| Attempt::Fatal(format!("malformed response from {url}: {e}")))
}

fn check_response(resp: EmbedResponse, expected: usize, dim: usize, retries: u32) -> Result<Vec<Vec<f64>>> {
    let fail = |message: String| Err(Error::Remote { message, retries });
    if resp.dim != dim {
        return fail(format!("service returned dim {}, configured dim is {dim}", resp.dim));
    }
    if resp.vectors.len() != expected {
        return fail(format!("service returned {} vectors for {expected} inputs", resp.vectors.len()));
    }
    if let Some(v) = resp.vectors.iter().find(|v| v.len() != dim) {
        return fail(format!("service returned a vector of length {}, configured dim is {dim}", v.len()));
    }
    Ok(resp.vectors)
}
