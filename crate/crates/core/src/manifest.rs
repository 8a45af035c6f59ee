//! The clip manifest shared by the corpus pipeline, feature extraction,
//! the study service and the embedding extractor.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    FiCa,
    Fisher,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::FiCa, Dataset::Fisher, Dataset::Synthetic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dataset::FiCa => "FiCa",
            Dataset::Fisher => "Fisher",
            Dataset::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fica" => Ok(Dataset::FiCa),
            "fisher" => Ok(Dataset::Fisher),
            "synthetic" => Ok(Dataset::Synthetic),
            _ => Err(format!("unknown dataset {s:?} (expected FiCa, Fisher or synthetic)")),
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub dataset: Dataset,
    pub lexical_form: String,
    pub speaker_id: String,
    pub wav_path: String,
    /// Model name to PEMB path.
    #[serde(default)]
    pub emb_paths: BTreeMap<String, String>,
}

/// A manifest plus the directory its relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let path = path.as_ref();
        Ok(Self {
            entries: read_jsonl(path)?,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), JsonlError> {
        write_jsonl(path, &self.entries)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn wav_path(&self, e: &ManifestEntry) -> PathBuf {
        self.resolve(&e.wav_path)
    }

    pub fn emb_path(&self, e: &ManifestEntry, model: &str) -> Option<PathBuf> {
        e.emb_paths.get(model).map(|p| self.resolve(p))
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &ManifestEntry> {
        self.entries.iter().map(|e| (e.clip_id.as_str(), e)).collect()
    }
}
