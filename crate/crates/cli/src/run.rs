//! Run records: what a command read, what it wrote, and with which
//! settings, so a rerun can be checked against the original.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Path to sha256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timestamp_unix_s: u64,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub struct RunRecorder {
    manifest: RunManifest,
}

impl RunRecorder {
    pub fn new(command: &str, config: impl Serialize, seed: u64) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timestamp_unix_s: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
        }
    }

    fn hash(path: &Path) -> CliResult<String> {
        sha256_file(path).map_err(|e| CliError::failed(format!("hashing {}: {e}", path.display())))
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let h = Self::hash(path)?;
        self.manifest.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let h = Self::hash(path)?;
        self.manifest.outputs.insert(path.display().to_string(), h);
        Ok(())
    }

    /// Writes the record as pretty JSON to `path`.
    pub fn finish(self, path: &Path) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("run manifest serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::failed(format!("writing {}: {e}", path.display())))?;
        Ok(path.to_path_buf())
    }
}

/// `run.json` inside a directory, or `<file>.run.json` next to a file.
pub fn record_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("run.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".run.json");
        out.with_file_name(name)
    }
}
