use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::ChainConfig;

pub fn file_sha256(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub sha256: String,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub records_used: usize,
}

impl DatasetInfo {
    pub fn from_file(path: &Path, limit: Option<usize>, seed: Option<u64>, records_used: usize) -> io::Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
            limit,
            seed,
            records_used,
        })
    }
}

const SCOPE_NOTE: &str = "Scores depend on the chat model, its hosting, the embedding model and the exact record \
sample. They are comparable across rows of this run and across runs with identical manifests, not with numbers \
obtained from other models or datasets.";

/// Everything needed to rerun a report, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ChainConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperatures: Vec<f64>,
    pub dataset: DatasetInfo,
    pub template_sha256: BTreeMap<String, String>,
    pub chat_backend: String,
    pub embed_backend: String,
    pub created_unix: u64,
    pub tool_version: String,
    pub note: String,
}

impl RunManifest {
    pub fn new(
        command: impl Into<String>,
        config: ChainConfig,
        dataset: DatasetInfo,
        template_sha256: BTreeMap<String, String>,
        chat_backend: impl Into<String>,
        embed_backend: impl Into<String>,
    ) -> Self {
        Self {
            command: command.into(),
            config,
            temperatures: Vec::new(),
            dataset,
            template_sha256,
            chat_backend: chat_backend.into(),
            embed_backend: embed_backend.into(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            note: SCOPE_NOTE.to_string(),
        }
    }

    /// `report.json` → `report.json.manifest.json`.
    pub fn path_for(report_path: &Path) -> PathBuf {
        let mut s = report_path.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_beside(&self, report_path: &Path) -> io::Result<PathBuf> {
        let path = Self::path_for(report_path);
        let mut body = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        body.push('\n');
        fs::write(&path, body)?;
        Ok(path)
    }
}
