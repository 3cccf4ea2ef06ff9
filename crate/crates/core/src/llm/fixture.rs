use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendConfig, ChatRequest, TemplateId};
use crate::corpus::store::from_json_str;
use crate::{Error, Result};

/// A recorded chat response. It matches a request when the template and
/// attempt agree and every `contains` string occurs in the rendered system
/// or user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub template: TemplateId,
    #[serde(default)]
    pub attempt: u32,
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct EmbeddingFixtures {
    /// Hex SHA-256 of the input text to its vector.
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingFixtures {
    pub fn text_key(text: &str) -> String {
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Replays recorded transcripts. Never touches the network.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    entries: Vec<FixtureEntry>,
    embeddings: EmbeddingFixtures,
}

impl FixtureBackend {
    pub fn new(entries: Vec<FixtureEntry>, embeddings: BTreeMap<String, Vec<f64>>) -> Self {
        Self {
            entries,
            embeddings: EmbeddingFixtures { vectors: embeddings },
        }
    }

    /// Loads every `*.json` transcript list in `dir`, plus `embeddings.json`
    /// when present.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact(dir.to_path_buf()),
                _ => Error::io(dir, e),
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut backend = FixtureBackend::default();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let origin = path.display().to_string();
            if path.file_name().is_some_and(|n| n == "embeddings.json") {
                backend.embeddings = from_json_str(&text, &origin)?;
            } else {
                let entries: Vec<FixtureEntry> = from_json_str(&text, &origin)?;
                backend.entries.extend(entries);
            }
        }
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Finds the most specific matching entry (most `contains` strings).
    fn lookup(&self, request: &ChatRequest<'_>) -> Result<&FixtureEntry> {
        let haystack = format!("{}\n{}", request.system, request.user);
        let mut best: Vec<&FixtureEntry> = Vec::new();
        for entry in &self.entries {
            if entry.template != request.template_id
                || entry.attempt != request.attempt
                || !entry.contains.iter().all(|c| haystack.contains(c.as_str()))
            {
                continue;
            }
            match best.first() {
                Some(b) if b.contains.len() > entry.contains.len() => {}
                Some(b) if b.contains.len() == entry.contains.len() => best.push(entry),
                _ => best = vec![entry],
            }
        }
        let describe = || {
            let head: String = request.user.chars().take(80).collect();
            format!("{} attempt {} ({head:?})", request.template_id, request.attempt)
        };
        match best.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::NoFixture(describe())),
            _ => Err(Error::NoFixture(format!(
                "{}: {} entries match equally",
                describe(),
                best.len()
            ))),
        }
    }
}

impl Backend for FixtureBackend {
    fn chat(&self, request: &ChatRequest<'_>, _cfg: &BackendConfig) -> Result<String> {
        self.lookup(request).map(|e| e.response.clone())
    }

    fn embed(&self, text: &str, _cfg: &BackendConfig) -> Result<Vec<f64>> {
        self.embeddings
            .vectors
            .get(&EmbeddingFixtures::text_key(text))
            .cloned()
            .ok_or_else(|| {
                let head: String = text.chars().take(60).collect();
                Error::NoFixture(format!("embedding of {head:?}"))
            })
    }
}
