//! Adapter for an OpenAI-compatible HTTP API: chat completions for text
//! generation and membership questions, `/embeddings` for text embeddings.
//!
//! The API key is read from `PREFALIGN_API_KEY` at construction.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClientResult, Embedder, EmbeddingVector, JudgeVerdict, MembershipJudge, TextGen, TextGenRequest};
use crate::error::ClientError;

pub const API_KEY_VAR: &str = "PREFALIGN_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            embedding_dim: 256,
            timeout_secs: 60,
            retries: 2,
        }
    }
}

pub struct HttpClient {
    config: HttpConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn from_env(config: HttpConfig) -> ClientResult<Self> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| ClientError::MissingKey(API_KEY_VAR))?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: HttpConfig, key: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Self { config, key, agent }
    }

    fn post(&self, path: &str, body: &Value) -> ClientResult<Value> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            let res = self
                .agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.key))
                .set("Content-Type", "application/json")
                .send_string(&body.to_string());
            match res {
                Ok(r) => {
                    let text = r
                        .into_string()
                        .map_err(|e| ClientError::Malformed(e.to_string()))?;
                    return serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()));
                }
                Err(ureq::Error::Status(code, r)) if code < 500 && code != 429 => {
                    let text = r.into_string().unwrap_or_default();
                    return Err(ClientError::Malformed(format!("HTTP {code}: {text}")));
                }
                Err(e) => {
                    log::warn!("request to {url} failed (attempt {}): {e}", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(ClientError::Unreachable(last))
    }

    fn chat(&self, prompt: &str, n: usize, seed: u64) -> ClientResult<Vec<String>> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": n,
            "seed": seed,
        });
        let v = self.post("chat/completions", &body)?;
        parse_chat(&v, n)
    }
}

/// Message contents of a chat-completions response; exactly `n` expected.
pub fn parse_chat(v: &Value, n: usize) -> ClientResult<Vec<String>> {
    let choices = v
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| ClientError::Malformed("missing choices".into()))?;
    let out: Vec<String> = choices
        .iter()
        .map(|c| {
            c.pointer("/message/content")
                .and_then(Value::as_str)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| ClientError::Malformed("choice without message content".into()))
        })
        .collect::<ClientResult<_>>()?;
    if out.len() != n {
        return Err(ClientError::Malformed(format!("expected {n} choices, got {}", out.len())));
    }
    Ok(out)
}

/// First embedding of an `/embeddings` response.
pub fn parse_embedding(v: &Value, dim: usize) -> ClientResult<EmbeddingVector> {
    let values: Vec<f64> = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| ClientError::Malformed("missing data[0].embedding".into()))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| ClientError::Malformed("non-numeric embedding".into())))
        .collect::<ClientResult<_>>()?;
    if values.len() != dim {
        return Err(ClientError::Malformed(format!("embedding length {} != {dim}", values.len())));
    }
    EmbeddingVector::normalized(values)
}

/// `yes`/`no` answer at the start of a reply.
pub fn parse_yes_no(reply: &str) -> ClientResult<JudgeVerdict> {
    let lower = reply.trim_start().to_lowercase();
    if lower.starts_with("yes") {
        Ok(JudgeVerdict::accept(reply.trim()))
    } else if lower.starts_with("no") {
        Ok(JudgeVerdict::reject(reply.trim()))
    } else {
        Err(ClientError::Malformed(format!("expected yes/no, got {reply:?}")))
    }
}

impl TextGen for HttpClient {
    fn textgen(&self, request: &TextGenRequest) -> ClientResult<Vec<String>> {
        request.validate()?;
        self.chat(&request.prompt, request.n_completions, request.seed)
    }
}

impl Embedder for HttpClient {
    fn embed(&self, text: &str) -> ClientResult<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(ClientError::EmptyText);
        }
        let body = json!({
            "model": self.config.embedding_model,
            "input": text,
            "dimensions": self.config.embedding_dim,
        });
        parse_embedding(&self.post("embeddings", &body)?, self.config.embedding_dim)
    }

    fn dim(&self) -> usize {
        self.config.embedding_dim
    }
}

impl MembershipJudge for HttpClient {
    fn confirm_membership(&self, entity: &str, subtopic: &str) -> ClientResult<JudgeVerdict> {
        let reply = self.chat(&super::prompts::membership(entity, subtopic), 1, 0)?;
        parse_yes_no(&reply[0])
    }
}
