//! Chat-completion and embedding access behind a content-addressed cache.
//!
//! Every request is keyed by the SHA-256 of (endpoint, model, rendered
//! prompt, sampling parameters, attempt tag). A hit returns the stored body
//! byte for byte; a miss goes to the backend once and the body is persisted
//! before it is returned. Two backends ship with the crate: an
//! OpenAI-compatible HTTP client and a replay provider over recorded
//! transcripts.

mod cache;
mod fixture;
mod http;
pub mod prompts;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use cache::{CacheRequest, CachedResponse, ResponseCache};
pub use fixture::{EmbeddingFixtures, FixtureBackend, FixtureEntry};
pub use http::OpenAiBackend;
pub use prompts::{render, render_prompt, PromptSpec, TemplateId};

use crate::{Error, Result};

fn default_sampling() -> f64 {
    1.0
}

fn default_retries() -> u32 {
    3
}

fn default_retry_base_ms() -> u64 {
    500
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

/// Connection and sampling settings for one backend model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_sampling")]
    pub temperature: f64,
    #[serde(default = "default_sampling")]
    pub top_p: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: default_sampling(),
            top_p: default_sampling(),
            max_retries: default_retries(),
            retry_base_ms: default_retry_base_ms(),
            cache_dir: default_cache_dir(),
            api_key_env: default_api_key_env(),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = dir.into();
        self
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::new("https://api.openai.com/v1", "gpt-4o")
    }
}

/// A chat request as seen by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest<'a> {
    pub template_id: TemplateId,
    pub system: &'a str,
    pub user: &'a str,
    /// 0 for the first attempt, incremented on every re-prompt.
    pub attempt: u32,
}

pub trait Backend: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>, cfg: &BackendConfig) -> Result<String>;

    fn embed(&self, text: &str, cfg: &BackendConfig) -> Result<Vec<f64>>;
}

/// One LLM exchange, persisted next to derived artifacts for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub template_id: TemplateId,
    pub attempt: u32,
    pub cache_key: String,
    pub system: String,
    pub user: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Cache-first access to a backend with bounded parallelism.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: ResponseCache,
    pool: rayon::ThreadPool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, parallelism: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .build()
            .expect("thread pool");
        Self {
            backend,
            cache: ResponseCache::default(),
            pool,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    /// Runs `f` inside the gateway's bounded worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn chat(&self, spec: &PromptSpec, cfg: &BackendConfig, attempt: u32) -> Result<TranscriptEntry> {
        let request = CacheRequest::chat(cfg, spec, attempt);
        let key = request.key();
        let response = if let Some(hit) = self.cache.get(&cfg.cache_dir, &key)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            hit.body
        } else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            let body = self.backend.chat(
                &ChatRequest {
                    template_id: spec.template_id,
                    system: &spec.system,
                    user: &spec.user,
                    attempt,
                },
                cfg,
            )?;
            self.cache.put(&cfg.cache_dir, &key, request, &body)?;
            body
        };
        Ok(TranscriptEntry {
            template_id: spec.template_id,
            attempt,
            cache_key: key,
            system: spec.system.clone(),
            user: spec.user.clone(),
            response,
        })
    }

    pub fn embed(&self, text: &str, cfg: &BackendConfig) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyInput("cannot embed empty text"));
        }
        let request = CacheRequest::embedding(cfg, text);
        let key = request.key();
        if let Some(hit) = self.cache.get(&cfg.cache_dir, &key)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return serde_json::from_str(&hit.body)
                .map_err(|e| Error::BackendResponse(format!("cached embedding {key}: {e}")));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let vector = self.backend.embed(text, cfg)?;
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::BackendResponse("embedding is empty or non-finite".into()));
        }
        let body = serde_json::to_string(&vector).expect("vector serializes");
        self.cache.put(&cfg.cache_dir, &key, request, &body)?;
        Ok(vector)
    }
}
