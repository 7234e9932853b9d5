//! Embedding providers: the deterministic local hasher and a generic HTTP
//! client for hosted embedding APIs.
//!
//! The remote client batches requests, retries transient failures with
//! exponential backoff, and validates the response shape strictly; anything
//! off-contract surfaces as a schema error rather than a bad vector.

use std::fmt;
use std::time::Duration;

use serde::Deserialize;

use plansteer_core::{EmbedError, Embedder, EmbeddingVector, HashEmbedder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Local,
    Remote,
}

#[derive(Clone, Debug)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Environment variable holding the bearer token; unset or empty means
    /// unauthenticated requests.
    pub auth_env_var: Option<String>,
    pub batch_size: usize,
    pub max_retries: usize,
}

impl Default for ProviderConfig {
    fn default() -> ProviderConfig {
        ProviderConfig {
            kind: ProviderKind::Local,
            dimension: 256,
            endpoint: None,
            model_name: None,
            auth_env_var: None,
            batch_size: 64,
            max_retries: 3,
        }
    }
}

#[derive(Debug)]
pub enum ProviderError {
    MissingField { field: &'static str },
    InvalidConfig { detail: String },
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::MissingField { field } => {
                write!(f, "remote provider requires {field}")
            }
            ProviderError::InvalidConfig { detail } => write!(f, "{detail}"),
        }
    }
}

impl std::error::Error for ProviderError {}

/// Instantiates the embedder a config describes.
pub fn build_embedder(config: &ProviderConfig) -> Result<Box<dyn Embedder>, ProviderError> {
    if config.dimension == 0 {
        return Err(ProviderError::InvalidConfig {
            detail: "dimension must be positive".to_string(),
        });
    }
    if config.batch_size == 0 {
        return Err(ProviderError::InvalidConfig {
            detail: "batch size must be positive".to_string(),
        });
    }
    match config.kind {
        ProviderKind::Local => Ok(Box::new(HashEmbedder::new(config.dimension))),
        ProviderKind::Remote => {
            let endpoint = config
                .endpoint
                .clone()
                .ok_or(ProviderError::MissingField { field: "--endpoint" })?;
            let model = config
                .model_name
                .clone()
                .ok_or(ProviderError::MissingField { field: "--model" })?;
            let token = config
                .auth_env_var
                .as_deref()
                .and_then(|name| std::env::var(name).ok())
                .filter(|t| !t.is_empty());
            Ok(Box::new(RemoteEmbedder {
                endpoint,
                model,
                token,
                dimension: config.dimension,
                batch_size: config.batch_size,
                max_retries: config.max_retries,
                agent: ureq::AgentBuilder::new()
                    .timeout(Duration::from_secs(60))
                    .build(),
            }))
        }
    }
}

pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    token: Option<String>,
    dimension: usize,
    batch_size: usize,
    max_retries: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireResponse {
    data: Vec<WireItem>,
}

#[derive(Deserialize)]
struct WireItem {
    index: usize,
    embedding: Vec<f64>,
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl RemoteEmbedder {
    fn post_once(&self, texts: &[&str]) -> Result<ureq::Response, ureq::Error> {
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        request.send_json(body)
    }

    /// One batch over the wire, with retries on transport errors, 429, and
    /// 5xx. Permanent rejections (other 4xx) fail immediately.
    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut last_detail = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << (attempt - 1)));
            }
            match self.post_once(texts) {
                Ok(response) => return self.parse_response(response, texts.len()),
                Err(ureq::Error::Status(status, response)) => {
                    last_detail = format!(
                        "{} returned status {status}",
                        self.endpoint
                    );
                    if !retryable_status(status) {
                        let body = response.into_string().unwrap_or_default();
                        return Err(EmbedError::RemoteUnavailable {
                            detail: format!("{last_detail}: {}", body.trim()),
                        });
                    }
                }
                Err(ureq::Error::Transport(t)) => {
                    last_detail = format!("{}: {t}", self.endpoint);
                }
            }
        }
        Err(EmbedError::RemoteUnavailable {
            detail: format!("{last_detail} (after {} retries)", self.max_retries),
        })
    }

    fn parse_response(
        &self,
        response: ureq::Response,
        expected: usize,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let wire: WireResponse = response.into_json().map_err(|e| EmbedError::RemoteSchema {
            detail: format!("response body: {e}"),
        })?;
        if wire.data.len() != expected {
            return Err(EmbedError::RemoteSchema {
                detail: format!("expected {expected} embeddings, got {}", wire.data.len()),
            });
        }
        let mut ordered: Vec<Option<Vec<f64>>> = vec![None; expected];
        for item in wire.data {
            if item.index >= expected {
                return Err(EmbedError::RemoteSchema {
                    detail: format!("index {} out of range 0..{expected}", item.index),
                });
            }
            if ordered[item.index].is_some() {
                return Err(EmbedError::RemoteSchema {
                    detail: format!("duplicate index {}", item.index),
                });
            }
            if item.embedding.len() != self.dimension {
                return Err(EmbedError::RemoteSchema {
                    detail: format!(
                        "embedding at index {} has dimension {}, configured {}",
                        item.index,
                        item.embedding.len(),
                        self.dimension
                    ),
                });
            }
            ordered[item.index] = Some(item.embedding);
        }
        ordered
            .into_iter()
            .map(|values| {
                EmbeddingVector::new(values.expect("all indices filled by the checks above"))
                    .map_err(|e| EmbedError::RemoteSchema {
                        detail: format!("embedding values: {e}"),
                    })
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut batch = self.embed_batch(&[text])?;
        Ok(batch.pop().expect("batch of one yields one vector"))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        for text in texts {
            if text.trim().is_empty() {
                return Err(EmbedError::EmptyText);
            }
        }
        let mut vectors = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            vectors.extend(self.embed_chunk(chunk)?);
        }
        Ok(vectors)
    }
}
