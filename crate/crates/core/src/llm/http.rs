use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, ChatRequest};
use crate::{Error, Result};

/// Client for any endpoint speaking the OpenAI chat-completions and
/// embeddings wire format.
pub struct OpenAiBackend {
    agent: ureq::Agent,
}

impl Default for OpenAiBackend {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

impl OpenAiBackend {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }

    fn url(cfg: &BackendConfig, path: &str) -> String {
        format!("{}/{}", cfg.endpoint_url.trim_end_matches('/'), path)
    }

    fn post_once(&self, url: &str, cfg: &BackendConfig, body: &Value) -> Result<String, Failure> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&cfg.api_key_env) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(body.to_string())
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Fatal(Error::BackendResponse(format!(
                "HTTP {status}: {text}"
            )))),
        }
    }

    /// POSTs with exponential backoff: `max_retries` retries after the first
    /// attempt, sleeping `retry_base_ms * 2^k` before retry `k`.
    fn post(&self, path: &str, cfg: &BackendConfig, body: &Value) -> Result<String> {
        let url = Self::url(cfg, path);
        let attempts = cfg.max_retries + 1;
        let mut last = String::new();
        for k in 0..attempts {
            if k > 0 {
                let delay = cfg.retry_base_ms.saturating_mul(1 << (k - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
            match self.post_once(&url, cfg, body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    log::warn!("{url}: attempt {} of {attempts} failed: {msg}", k + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::BackendResponse(format!("invalid JSON: {e}")))
}

impl Backend for OpenAiBackend {
    fn chat(&self, request: &ChatRequest<'_>, cfg: &BackendConfig) -> Result<String> {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({
            "model": cfg.model_name,
            "messages": messages,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        });
        let value = parse_json(&self.post("chat/completions", cfg, &body)?)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::BackendResponse("no choices[0].message.content".into()))
    }

    fn embed(&self, text: &str, cfg: &BackendConfig) -> Result<Vec<f64>> {
        let body = json!({"model": cfg.model_name, "input": text});
        let value = parse_json(&self.post("embeddings", cfg, &body)?)?;
        let vector = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| Error::BackendResponse("no data[0].embedding".into()))?;
        vector
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::BackendResponse("non-numeric embedding component".into()))
            })
            .collect()
    }
}
