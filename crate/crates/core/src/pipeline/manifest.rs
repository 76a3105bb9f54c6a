//! Run manifest: effective configuration, seeds, asset hashes, backend id and
//! per-stage counts.
//!
//! Timestamps live in their own section and are excluded from the manifest
//! hash, so identical configuration and caches give an identical hash.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::seed::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub items: usize,
    pub completed: usize,
    pub dropped: BTreeMap<String, usize>,
    #[serde(default)]
    pub identical: usize,
    #[serde(default)]
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub hashes: BTreeMap<String, String>,
    pub backend_id: Option<String>,
    pub stages: BTreeMap<String, StageSummary>,
    pub corpus: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub timestamps: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn load_or_default(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| PipelineError::CacheCorrupt {
                path: path.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(run_dir).map_err(|e| PipelineError::io(run_dir, e))?;
        let path = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    pub fn touch(&mut self, event: &str) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.timestamps.insert(event.to_string(), now);
    }

    /// SHA-256 over everything except timestamps.
    pub fn content_hash(&self) -> String {
        let mut stable = self.clone();
        stable.timestamps.clear();
        sha256_hex(serde_json::to_string(&stable).expect("manifest serializes").as_bytes())
    }
}
