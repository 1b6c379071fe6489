use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of every stage run against one output directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    pub argv: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub backend: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn load_or_new(path: &Path, seed: u64, now: DateTime<Utc>) -> Result<Self> {
        if path.exists() {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let digest = Sha256::digest(format!("{seed}:{}", now.to_rfc3339()).as_bytes());
        Ok(Self {
            run_id: hex::encode(&digest[..6]),
            stages: Vec::new(),
        })
    }

    pub fn record(&mut self, stage: StageRecord) {
        self.stages.push(stage);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Manifest next to the primary output unless given explicitly.
pub fn manifest_path(explicit: Option<&Path>, out: &Path) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let dir = if out.extension().is_some() {
        out.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        out.to_path_buf()
    };
    dir.join("run_manifest.json")
}
