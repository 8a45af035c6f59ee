//! Loading a study directory.
//!
//! Layout: `manifest.jsonl` (clip WAV paths relative to the directory),
//! `triads.jsonl`, optional `study.toml` holding a [`StudyConfig`], and the
//! event log `events.jsonl`, created on first use.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use prosody_core::jsonl::read_jsonl;
use prosody_core::manifest::Manifest;
use prosody_core::triad::Triad;

use crate::store::{StudyConfig, StudyError};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRIADS_FILE: &str = "triads.jsonl";
pub const CONFIG_FILE: &str = "study.toml";
pub const LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone)]
pub struct StudyData {
    pub triads: Vec<Triad>,
    /// Clip id to WAV file.
    pub clips: HashMap<String, PathBuf>,
    pub config: StudyConfig,
}

pub fn load_study_data(dir: &Path) -> Result<StudyData, StudyError> {
    let missing = |what: String| StudyError::MissingData(what);
    if !dir.is_dir() {
        return Err(missing(format!("{} is not a directory", dir.display())));
    }
    let manifest = Manifest::load(dir.join(MANIFEST_FILE)).map_err(|e| missing(e.to_string()))?;
    let triads: Vec<Triad> = read_jsonl(dir.join(TRIADS_FILE)).map_err(|e| missing(e.to_string()))?;
    let config = match std::fs::read_to_string(dir.join(CONFIG_FILE)) {
        Ok(text) => toml::from_str(&text).map_err(|e| missing(format!("{CONFIG_FILE}: {e}")))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => StudyConfig::default(),
        Err(source) => {
            return Err(StudyError::Io {
                path: dir.join(CONFIG_FILE),
                source,
            })
        }
    };
    let clips: HashMap<String, PathBuf> = manifest
        .entries
        .iter()
        .map(|e| (e.clip_id.clone(), manifest.wav_path(e)))
        .collect();
    for t in &triads {
        for c in &t.clips {
            let path = clips
                .get(c)
                .ok_or_else(|| missing(format!("triad {} uses clip {c} absent from the manifest", t.triad_id)))?;
            if !path.is_file() {
                return Err(missing(format!("audio for clip {c} not found at {}", path.display())));
            }
        }
    }
    Ok(StudyData { triads, clips, config })
}
