use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendConfig, PromptSpec, TemplateId};
use crate::{Error, Result};

/// The request echo stored with each cached response. Its canonical JSON
/// serialization is what gets hashed into the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRequest {
    pub kind: String,
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
}

impl CacheRequest {
    pub fn chat(cfg: &BackendConfig, spec: &PromptSpec, attempt: u32) -> Self {
        Self {
            kind: "chat".into(),
            endpoint: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            template_id: Some(spec.template_id),
            system: Some(spec.system.clone()),
            user: Some(spec.user.clone()),
            input: None,
            temperature: Some(cfg.temperature),
            top_p: Some(cfg.top_p),
            attempt: Some(attempt),
        }
    }

    pub fn embedding(cfg: &BackendConfig, text: &str) -> Self {
        Self {
            kind: "embedding".into(),
            endpoint: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            template_id: None,
            system: None,
            user: None,
            input: Some(text.to_string()),
            temperature: None,
            top_p: None,
            attempt: None,
        }
    }

    /// Hex SHA-256 of the canonical request JSON.
    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Contents of `cache/<sha256>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub key: String,
    pub request: CacheRequest,
    pub body: String,
    /// Unix seconds at which the response was stored.
    pub timestamp: u64,
}

/// File-backed response cache. Reads are lock-free; writes are serialized
/// and land atomically through a rename.
#[derive(Debug, Default)]
pub struct ResponseCache {
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn path(dir: &Path, key: &str) -> std::path::PathBuf {
        dir.join(format!("{key}.json"))
    }

    pub fn get(&self, dir: &Path, key: &str) -> Result<Option<CachedResponse>> {
        let path = Self::path(dir, key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let entry: CachedResponse = crate::corpus::store::from_json_str(&text, &path.display().to_string())?;
        if entry.key != key {
            return Err(Error::schema(
                path.display().to_string(),
                "key",
                format!("entry is keyed {}", entry.key),
            ));
        }
        Ok(Some(entry))
    }

    pub fn put(&self, dir: &Path, key: &str, request: CacheRequest, body: &str) -> Result<()> {
        let entry = CachedResponse {
            key: key.to_string(),
            request,
            body: body.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let text = crate::corpus::store::to_json_string(&entry);
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::path(dir, key);
        let tmp = dir.join(format!(".{key}.tmp"));
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
