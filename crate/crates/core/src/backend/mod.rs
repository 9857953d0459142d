//! Text-generation and embedding providers behind one contract.
//!
//! [`MockBackend`] is a deterministic scripted backend for offline runs and
//! tests; [`HttpBackend`] speaks the OpenAI-compatible chat/embedding API.

mod http;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{prompt_digest, ExactMatchEmbedder, MockBackend, MockRule, MockScript};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("no scripted response for prompt {digest}")]
    Unscripted { digest: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_auth(&self) -> bool {
        matches!(self, BackendError::Auth(_))
    }
}

/// Decoding parameters. Temperature defaults to 0 for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: f64,
}

/// A text-generation + embedding provider. Implementations must tolerate
/// concurrent calls.
pub trait LlmBackend: Send + Sync {
    fn provider_id(&self) -> &str;

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>, BackendError> {
        (**self).embed(text)
    }
}

/// Exponential backoff for transient failures. Auth and protocol errors are
/// returned immediately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(BackendError::Transient(msg)) => {
                    if attempt >= self.max_retries {
                        return Err(BackendError::Exhausted {
                            attempts: attempt + 1,
                            last: msg,
                        });
                    }
                    log::warn!("transient backend failure (attempt {}): {msg}", attempt + 1);
                    thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Pipeline steps that may be bound to distinct providers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStep {
    Triplets,
    Merge,
    Relations,
    Filter,
    Roles,
    Groups,
    Embed,
}

impl fmt::Display for PipelineStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PipelineStep::Triplets => "triplets",
            PipelineStep::Merge => "merge",
            PipelineStep::Relations => "relations",
            PipelineStep::Filter => "filter",
            PipelineStep::Roles => "roles",
            PipelineStep::Groups => "groups",
            PipelineStep::Embed => "embed",
        };
        f.write_str(s)
    }
}

/// Per-step backend binding with a shared default.
#[derive(Clone)]
pub struct StageBackends {
    default: Arc<dyn LlmBackend>,
    overrides: BTreeMap<PipelineStep, Arc<dyn LlmBackend>>,
}

impl StageBackends {
    pub fn single(backend: Arc<dyn LlmBackend>) -> Self {
        StageBackends {
            default: backend,
            overrides: BTreeMap::new(),
        }
    }

    pub fn bind(mut self, step: PipelineStep, backend: Arc<dyn LlmBackend>) -> Self {
        self.overrides.insert(step, backend);
        self
    }

    pub fn for_step(&self, step: PipelineStep) -> &dyn LlmBackend {
        self.overrides.get(&step).unwrap_or(&self.default).as_ref()
    }
}

/// Tagged provider description, as found in pipeline config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Mock {
        #[serde(default)]
        script: MockScript,
    },
    Http(HttpConfig),
}

impl ProviderConfig {
    pub fn build(&self, id: &str) -> Result<Arc<dyn LlmBackend>, BackendError> {
        Ok(match self {
            ProviderConfig::Mock { script } => Arc::new(MockBackend::new(id, script.clone())),
            ProviderConfig::Http(cfg) => Arc::new(HttpBackend::new(id, cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("embedding has no components")]
    Empty,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Fixed-length embedding. Not normalized; similarity normalizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, SimilarityError> {
        if values.is_empty() {
            return Err(SimilarityError::Empty);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector {
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T, SimilarityError> {
    if a.dimension() != b.dimension() {
        return Err(SimilarityError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == T::zero() || nb == T::zero() {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: T = a.values.iter().zip(&b.values).map(|(x, y)| *x * *y).sum();
    let cos = dot / (na * nb);
    Ok(cos.max(-T::one()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn v(x: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // dot = 1, |a| = sqrt 2, |b| = 1
        let c = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - 0.707_106_781_186_547_5).abs() < 1e-6);
        let c32 = cosine_similarity(&v(&[1.0, 1.0]).cast::<f32>(), &v(&[1.0, 0.0]).cast::<f32>()).unwrap();
        assert!((c32 - 0.707_106_77).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(SimilarityError::ZeroVector)
        );
        assert_eq!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(SimilarityError::DimensionMismatch { left: 1, right: 2 })
        );
        assert_eq!(EmbeddingVector::<f64>::new(vec![]), Err(SimilarityError::Empty));
    }

    #[test]
    fn retry_gives_up_after_budget() {
        let policy = RetryPolicy {
            max_retries: 2,
            initial_backoff_ms: 1,
            max_backoff_ms: 2,
        };
        let calls = Cell::new(0);
        let out: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(BackendError::Transient("503".into()))
        });
        assert_eq!(calls.get(), 3);
        assert!(matches!(out, Err(BackendError::Exhausted { attempts: 3, .. })));

        calls.set(0);
        let auth: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(BackendError::Auth("bad key".into()))
        });
        assert_eq!(calls.get(), 1);
        assert!(auth.unwrap_err().is_auth());
    }

    #[test]
    fn retry_recovers() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 1,
            max_backoff_ms: 1,
        };
        let out = policy.run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(BackendError::Transient("timeout".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(out, Ok(7));
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let p = RetryPolicy {
            max_retries: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
        assert_eq!(p.backoff(2), Duration::from_millis(350));
    }
}
