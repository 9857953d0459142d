use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, Completion, EmbeddingVector, GenerationParams, LlmBackend};
use crate::model::fold_label;

/// Hex SHA-256 of a prompt; the key used by [`MockScript::by_hash`].
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Response for any prompt containing `contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    pub response: String,
}

/// Scripted responses. Lookup order: exact prompt digest, then the first
/// matching substring rule, then the next unconsumed entry of `sequence`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub by_hash: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub sequence: Vec<String>,
    #[serde(default = "default_dimension")]
    pub embedding_dimension: usize,
}

fn default_dimension() -> usize {
    1024
}

impl Default for MockScript {
    fn default() -> Self {
        MockScript {
            by_hash: BTreeMap::new(),
            rules: Vec::new(),
            sequence: Vec::new(),
            embedding_dimension: default_dimension(),
        }
    }
}

impl MockScript {
    pub fn with_prompt(mut self, prompt: &str, response: &str) -> Self {
        self.by_hash.insert(prompt_digest(prompt), response.to_owned());
        self
    }

    pub fn with_rule(mut self, contains: &str, response: &str) -> Self {
        self.rules.push(MockRule {
            contains: contains.to_owned(),
            response: response.to_owned(),
        });
        self
    }

    pub fn then(mut self, response: &str) -> Self {
        self.sequence.push(response.to_owned());
        self
    }
}

/// One-hot embedder: equal labels (after [`fold_label`]) map to identical
/// vectors, distinct labels to orthogonal ones. Slots are handed out on
/// first sight, so capacity is bounded by the dimension.
#[derive(Debug)]
pub struct ExactMatchEmbedder {
    dimension: usize,
    slots: Mutex<HashMap<String, usize>>,
}

impl ExactMatchEmbedder {
    pub fn new(dimension: usize) -> Self {
        ExactMatchEmbedder {
            dimension: dimension.max(1),
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>, BackendError> {
        let key = fold_label(text);
        if key.is_empty() {
            return Err(BackendError::EmptyInput("embedding text"));
        }
        let mut slots = self.slots.lock().expect("embedder lock poisoned");
        let next = slots.len();
        let slot = *slots.entry(key).or_insert(next);
        if slot >= self.dimension {
            return Err(BackendError::Config(format!(
                "exact-match embedder capacity of {} labels exhausted",
                self.dimension
            )));
        }
        let mut values = vec![0.0; self.dimension];
        values[slot] = 1.0;
        Ok(EmbeddingVector::new(values).expect("dimension >= 1"))
    }
}

/// Deterministic backend driven by a [`MockScript`].
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    script: MockScript,
    cursor: Mutex<usize>,
    embedder: ExactMatchEmbedder,
    calls: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(id: &str, script: MockScript) -> Self {
        MockBackend {
            id: id.to_owned(),
            embedder: ExactMatchEmbedder::new(script.embedding_dimension),
            script,
            cursor: Mutex::new(0),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Prompts received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("mock lock poisoned").clone()
    }

    fn lookup(&self, prompt: &str) -> Option<String> {
        if let Some(r) = self.script.by_hash.get(&prompt_digest(prompt)) {
            return Some(r.clone());
        }
        if let Some(rule) = self.script.rules.iter().find(|r| prompt.contains(&r.contains)) {
            return Some(rule.response.clone());
        }
        let mut cursor = self.cursor.lock().expect("mock lock poisoned");
        let r = self.script.sequence.get(*cursor).cloned();
        if r.is_some() {
            *cursor += 1;
        }
        r
    }
}

impl LlmBackend for MockBackend {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<Completion, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyInput("prompt"));
        }
        self.calls.lock().expect("mock lock poisoned").push(prompt.to_owned());
        let text = self.lookup(prompt).ok_or_else(|| BackendError::Unscripted {
            digest: prompt_digest(prompt),
        })?;
        Ok(Completion {
            text,
            provider_id: self.id.clone(),
            latency_ms: 0.0,
        })
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f64>, BackendError> {
        self.embedder.embed(text)
    }
}
