use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MctError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the run directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_clock_s: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: Vec<StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| MctError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn file_record(run_dir: &Path, path: &Path) -> Result<FileRecord> {
    let shown: PathBuf = path
        .strip_prefix(run_dir)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf());
    Ok(FileRecord {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: sha256_file(path)?,
    })
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| MctError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| MctError::Format {
            offset: e.column() as u64,
            message: format!("{}: {e}", path.display()),
        })
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Replaces any earlier record of the same stage and writes the file.
    pub fn record(run_dir: &Path, stage: StageRecord) -> Result<()> {
        let mut m = Self::load(run_dir)?;
        m.stages.retain(|s| s.name != stage.name);
        m.stages.push(stage);
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| MctError::io(&path, e))
    }
}
