//! Run manifests. Every artifact-producing command writes `manifest.json`
//! beside its outputs: the configuration hash, the seed, the code version,
//! and the produced files. Deliberately no timestamps or host details —
//! two identical invocations must produce identical manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub code_version: String,
    pub outputs: Vec<String>,
}

/// SHA-256 of the config's canonical JSON form (struct fields serialize
/// in declaration order, so the hash is stable across runs).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("configs are plain data");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: config_hash(config),
            seed,
            code_version: code_version().to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    /// Write `manifest.json` into `dir`; outputs are sorted first so the
    /// file does not depend on production order.
    pub fn write(&mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.outputs.sort();
        self.outputs.dedup();
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("plain data"))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
