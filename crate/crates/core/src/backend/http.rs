use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, Completion, EmbeddingVector, GenerationParams, LlmBackend, RetryPolicy};

/// Connection settings for an OpenAI-compatible endpoint. The API key is
/// read from the environment variable named by `api_key_env`, never from
/// the config file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_key_env() -> String {
    "CRS_API_KEY".to_owned()
}

fn default_timeout() -> u64 {
    120
}

impl HttpConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        HttpConfig {
            base_url: base_url.to_owned(),
            model: model.to_owned(),
            embedding_model: None,
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    api_key: String,
    client: Client,
}

impl HttpBackend {
    pub fn new(id: &str, config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Auth(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_key(id, config, api_key)
    }

    pub fn with_key(id: &str, config: HttpConfig, api_key: String) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            id: id.to_owned(),
            config,
            api_key,
            client,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        self.config.retry.run(|| {
            let resp = self
                .client
                .post(self.url(path))
                .bearer_auth(&self.api_key)
                .json(body)
                .send()
                .map_err(|e| BackendError::Transient(e.to_string()))?;
            let status = resp.status();
            let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
            classify(status, &text)?;
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))
        })
    }
}

fn classify(status: StatusCode, body: &str) -> Result<(), BackendError> {
    let snippet: String = body.chars().take(200).collect();
    match status {
        s if s.is_success() => Ok(()),
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Err(BackendError::Auth(format!("{status}: {snippet}"))),
        StatusCode::REQUEST_TIMEOUT | StatusCode::TOO_MANY_REQUESTS => {
            Err(BackendError::Transient(format!("{status}: {snippet}")))
        }
        s if s.is_server_error() => Err(BackendError::Transient(format!("{s}: {snippet}"))),
        s => Err(BackendError::Protocol(format!("{s}: {snippet}"))),
    }
}

impl LlmBackend for HttpBackend {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyInput("prompt"));
        }
        // user message only, no system prompt
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let start = Instant::now();
        let value = self.post("chat/completions", &body)?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?;
        Ok(Completion {
            text: text.to_owned(),
            provider_id: self.id.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
        })
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyInput("embedding text"));
        }
        let model = self.config.embedding_model.as_deref().unwrap_or(&self.config.model);
        let value = self.post("embeddings", &json!({"model": model, "input": text}))?;
        let values = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Protocol("missing data[0].embedding".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| BackendError::Protocol("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        EmbeddingVector::new(values).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}
