//! Blocking client for OpenAI-compatible `/chat/completions` and `/embeddings`.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use mael_core::backend::whitespace_tokens;
use mael_core::embed::normalize;
use mael_core::{
    BackendError, CompletionRequest, CompletionResponse, EmbeddingBackend, EmbeddingError,
    ModelBackend,
};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const ENV_API_KEY: &str = "MAEL_API_KEY";
pub const ENV_BASE_URL: &str = "MAEL_BASE_URL";
pub const ENV_MODEL: &str = "MAEL_MODEL";
pub const ENV_EMBED_MODEL: &str = "MAEL_EMBED_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiSettings {
    pub base_url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub embed_dimension: usize,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for OpenAiSettings {
    fn default() -> Self {
        OpenAiSettings {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: None,
            embed_model: None,
            embed_dimension: 1536,
            max_attempts: 3,
            initial_backoff_ms: 1000,
            timeout_secs: 120,
        }
    }
}

impl OpenAiSettings {
    /// Environment variables take precedence over configured values.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        if let Some(v) = lookup(ENV_BASE_URL) {
            self.base_url = v;
        }
        if let Some(v) = lookup(ENV_MODEL) {
            self.model = Some(v);
        }
        if let Some(v) = lookup(ENV_EMBED_MODEL) {
            self.embed_model = Some(v);
        }
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}/{endpoint}", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiClient {
    http: Client,
    settings: OpenAiSettings,
    embed_tag: String,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

enum Attempt {
    Done(serde_json::Value),
    Retry(BackendError),
    Fail(BackendError),
}

impl OpenAiClient {
    pub fn new(settings: OpenAiSettings) -> Result<Self, BackendError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let embed_tag = format!(
            "openai:{}:{}",
            settings.embed_model.as_deref().unwrap_or("unset"),
            settings.embed_dimension
        );
        Ok(OpenAiClient {
            http,
            settings,
            embed_tag,
        })
    }

    pub fn settings(&self) -> &OpenAiSettings {
        &self.settings
    }

    fn attempt(&self, url: &str, body: &serde_json::Value) -> Attempt {
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        if status.is_success() {
            return match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(BackendError::InvalidResponse(e.to_string())),
            };
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Fail(BackendError::Auth(text));
        }
        let err = BackendError::Http {
            status: status.as_u16(),
            body: text,
        };
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            Attempt::Retry(err)
        } else {
            Attempt::Fail(err)
        }
    }

    /// Posts with retries on transport errors, 429 and 5xx. Backoff doubles
    /// after each failed attempt.
    fn post(
        &self,
        endpoint: &str,
        body: serde_json::Value,
    ) -> Result<serde_json::Value, BackendError> {
        let url = self.settings.url(endpoint);
        let attempts = self.settings.max_attempts.max(1);
        let mut delay = Duration::from_millis(self.settings.initial_backoff_ms);
        let mut last = BackendError::Transport("no attempt made".into());
        for n in 1..=attempts {
            match self.attempt(&url, &body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    warn!("{endpoint} attempt {n}/{attempts} failed: {e}");
                    last = e;
                }
            }
            if n < attempts {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(last)
    }

    fn model(&self) -> Result<&str, BackendError> {
        self.settings.model.as_deref().ok_or_else(|| {
            BackendError::InvalidResponse(format!("no chat model configured; set {ENV_MODEL}"))
        })
    }
}

impl ModelBackend for OpenAiClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = json!({
            "model": self.model()?,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.post("chat/completions", body)?;
        let reply: ChatReply = serde_json::from_value(value)
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        let text = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::InvalidResponse("reply has no message content".into()))?;
        let (prompt_tokens, completion_tokens) = match reply.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => {
                debug!("provider omitted usage; counting whitespace tokens");
                (whitespace_tokens(&request.prompt), whitespace_tokens(&text))
            }
        };
        Ok(CompletionResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}

impl EmbeddingBackend for OpenAiClient {
    fn provider_tag(&self) -> &str {
        &self.embed_tag
    }

    fn dimension(&self) -> usize {
        self.settings.embed_dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let model = self.settings.embed_model.as_deref().ok_or_else(|| {
            EmbeddingError::Provider(format!(
                "no embedding model configured; set {ENV_EMBED_MODEL}"
            ))
        })?;
        let value = self
            .post("embeddings", json!({"model": model, "input": text}))
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        let reply: EmbeddingReply =
            serde_json::from_value(value).map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        let mut v = reply
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Provider("reply has no embedding".into()))?
            .embedding;
        if v.len() != self.settings.embed_dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.settings.embed_dimension,
                found: v.len(),
            });
        }
        normalize(&mut v);
        Ok(v)
    }
}
