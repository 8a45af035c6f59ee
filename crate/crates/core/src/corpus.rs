//! Feedback-clip extraction from word alignments and conversation audio.
//!
//! Alignment input is either a whitespace-separated interval file with rows
//! `speaker start end word [channel]` (blank lines and `#` comments are
//! skipped), or a long-format TextGrid whose word tiers are named `words` or
//! `<speaker> - words`. Without an explicit channel, speakers are assigned
//! channels 0 and 1 in order of first appearance.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{load_wav_channel, resample, write_wav, AudioError, CANONICAL_RATE};
use crate::manifest::{Dataset, ManifestEntry};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("audio file missing: {0}")]
    AudioMissing(PathBuf),
    #[error("word {word:?} at [{start_s:.3}, {end_s:.3}] s lies outside audio of {duration_s:.3} s")]
    OutOfBounds {
        word: String,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("review file: {0}")]
    Review(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub conversation_id: String,
    pub channel: u16,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker_id: String,
}

/// Parsed words plus rows that were dropped with a reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignment {
    pub words: Vec<AlignedWord>,
    pub warnings: Vec<String>,
}

struct Row {
    line: usize,
    speaker: String,
    start_s: f64,
    end_s: f64,
    word: String,
    channel: Option<u16>,
}

fn conversation_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn parse_alignment(path: impl AsRef<Path>) -> Result<Alignment, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_alignment_str(&text, &conversation_id(path), path)
}

/// Parses alignment text; `origin` is only used in error messages.
pub fn parse_alignment_str(text: &str, conversation: &str, origin: &Path) -> Result<Alignment, CorpusError> {
    let err = |line: usize, msg: String| CorpusError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let rows = if text.trim_start().starts_with("File type") {
        parse_textgrid(text, conversation).map_err(|(l, m)| err(l, m))?
    } else {
        parse_intervals(text).map_err(|(l, m)| err(l, m))?
    };

    let mut speakers: Vec<String> = Vec::new();
    let mut out = Alignment::default();
    for r in rows {
        if !(r.start_s < r.end_s) {
            out.warnings.push(format!(
                "line {}: dropped {:?} with start {} not before end {}",
                r.line, r.word, r.start_s, r.end_s
            ));
            continue;
        }
        let channel = match r.channel {
            Some(c) => c,
            None => {
                let idx = match speakers.iter().position(|s| *s == r.speaker) {
                    Some(i) => i,
                    None => {
                        speakers.push(r.speaker.clone());
                        speakers.len() - 1
                    }
                };
                if idx > 1 {
                    return Err(err(
                        r.line,
                        format!("third speaker {:?} needs an explicit channel column", r.speaker),
                    ));
                }
                idx as u16
            }
        };
        out.words.push(AlignedWord {
            conversation_id: conversation.to_string(),
            channel,
            word: r.word,
            start_s: r.start_s,
            end_s: r.end_s,
            speaker_id: r.speaker,
        });
    }
    Ok(out)
}

fn parse_intervals(text: &str) -> Result<Vec<Row>, (usize, String)> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 4 && f.len() != 5 {
            return Err((line, format!("expected 4 or 5 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64, (usize, String)> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or((line, format!("invalid {what} time {s:?}")))
        };
        let channel = match f.get(4) {
            Some(c) => Some(c.parse::<u16>().map_err(|_| (line, format!("invalid channel {c:?}")))?),
            None => None,
        };
        rows.push(Row {
            line,
            speaker: f[0].to_string(),
            start_s: num(f[1], "start")?,
            end_s: num(f[2], "end")?,
            word: f[3].to_string(),
            channel,
        });
    }
    Ok(rows)
}

fn parse_textgrid(text: &str, conversation: &str) -> Result<Vec<Row>, (usize, String)> {
    let mut rows = Vec::new();
    let mut tier_speaker: Option<String> = None;
    let mut word_tiers = 0u16;
    let mut in_interval = false;
    let (mut xmin, mut xmax, mut interval_line) = (None::<f64>, None::<f64>, 0usize);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.starts_with("item [") {
            tier_speaker = None;
            in_interval = false;
            continue;
        }
        if t.starts_with("intervals [") {
            in_interval = true;
            (xmin, xmax, interval_line) = (None, None, line);
            continue;
        }
        let Some((key, value)) = t.split_once('=') else { continue };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" if !in_interval => {
                let name = value.trim_matches('"');
                tier_speaker = if name == "words" {
                    Some(conversation.to_string())
                } else {
                    name.strip_suffix(" - words").map(str::to_string)
                };
                if tier_speaker.is_some() {
                    word_tiers += 1;
                }
            }
            "xmin" | "xmax" if in_interval => {
                let v = value
                    .parse::<f64>()
                    .map_err(|_| (line, format!("invalid {key} {value:?}")))?;
                if key == "xmin" {
                    xmin = Some(v);
                } else {
                    xmax = Some(v);
                }
            }
            "text" if in_interval => {
                in_interval = false;
                let Some(speaker) = &tier_speaker else { continue };
                let word = value.trim_matches('"').trim();
                if word.is_empty() {
                    continue;
                }
                let (Some(s), Some(e)) = (xmin, xmax) else {
                    return Err((interval_line, "interval without xmin/xmax".into()));
                };
                rows.push(Row {
                    line: interval_line,
                    speaker: speaker.clone(),
                    start_s: s,
                    end_s: e,
                    word: word.to_string(),
                    channel: Some(word_tiers - 1),
                });
            }
            _ => {}
        }
    }
    Ok(rows)
}

/// Spelling variants mapped to one canonical token.
pub fn default_variants() -> BTreeMap<String, String> {
    [
        ("mm-hmm", "mhm"),
        ("mmhmm", "mhm"),
        ("mm-hm", "mhm"),
        ("mhmm", "mhm"),
        ("uhhuh", "uh-huh"),
        ("uh-uh-huh", "uh-huh"),
        ("yea", "yeah"),
        ("ok", "okay"),
        ("hmm", "hm"),
        ("mm", "mmm"),
        ("uhoh", "uh-oh"),
        ("yep", "yup"),
        ("awww", "aww"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Union of the feedback forms studied for both corpora.
pub fn default_inventory() -> BTreeSet<String> {
    [
        "absolutely", "ah", "aww", "exactly", "gosh", "goodness", "hm", "huh", "interesting", "jeez", "mhm",
        "mmm", "no", "oh", "okay", "ooh", "pardon", "really", "right", "sorry", "sure", "uh", "uh-huh",
        "uh-oh", "ugh", "what", "wow", "yeah", "yes", "yup",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Lowercases, strips punctuation other than inner hyphens and apostrophes,
/// then applies the variant table.
pub fn normalize_token(raw: &str, variants: &BTreeMap<String, String>) -> String {
    let kept: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '-' || *c == '\'')
        .collect();
    let t = kept.trim_matches(|c| c == '-' || c == '\'');
    variants.get(t).cloned().unwrap_or_else(|| t.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub isolation_gap_s: f64,
    pub pad_s: f64,
    pub inventory: BTreeSet<String>,
    pub variants: BTreeMap<String, String>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            isolation_gap_s: 0.5,
            pad_s: 0.1,
            inventory: default_inventory(),
            variants: default_variants(),
        }
    }
}

/// An isolated inventory token, with the span its padded clip may occupy
/// without reaching into a neighboring word on the same channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub word: AlignedWord,
    pub lexical_form: String,
    pub clip_id: String,
    pub min_start_s: f64,
    pub max_end_s: f64,
}

/// Content-derived clip id: stable across runs and machines.
pub fn clip_id(conversation_id: &str, channel: u16, start_s: f64, word: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("{conversation_id}\t{channel}\t{start_s:.3}\t{word}").as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// A word is a candidate when its normalized token is in the inventory and
/// no other word of the same speaker lies within the isolation gap on
/// either side.
pub fn extract_feedback(words: &[AlignedWord], cfg: &ExtractConfig) -> Vec<Candidate> {
    let mut by_channel: BTreeMap<(u16, &str), Vec<&AlignedWord>> = BTreeMap::new();
    for w in words {
        by_channel.entry((w.channel, w.speaker_id.as_str())).or_default().push(w);
    }
    let mut out = Vec::new();
    for (_, mut ws) in by_channel {
        ws.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for (i, w) in ws.iter().enumerate() {
            let form = normalize_token(&w.word, &cfg.variants);
            if !cfg.inventory.contains(&form) {
                continue;
            }
            let prev = i.checked_sub(1).map(|j| ws[j]);
            let next = ws.get(i + 1).copied();
            let isolated_before = prev.is_none_or(|p| w.start_s - p.end_s >= cfg.isolation_gap_s);
            let isolated_after = next.is_none_or(|n| n.start_s - w.end_s >= cfg.isolation_gap_s);
            if !(isolated_before && isolated_after) {
                continue;
            }
            out.push(Candidate {
                word: (*w).clone(),
                clip_id: clip_id(&w.conversation_id, w.channel, w.start_s, &form),
                lexical_form: form,
                min_start_s: prev.map_or(0.0, |p| 0.5 * (p.end_s + w.start_s)),
                max_end_s: next.map_or(f64::INFINITY, |n| 0.5 * (w.end_s + n.start_s)),
            });
        }
    }
    out.sort_by(|a, b| {
        (a.word.channel, a.word.start_s.to_bits()).cmp(&(b.word.channel, b.word.start_s.to_bits()))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackClip {
    pub clip_id: String,
    pub dataset: Dataset,
    pub lexical_form: String,
    pub speaker_id: String,
    pub gender: Option<String>,
    pub wav_path: String,
    pub duration_s: f64,
    pub conversation_id: String,
    pub channel: u16,
    pub start_s: f64,
    pub end_s: f64,
}

impl FeedbackClip {
    pub fn manifest_entry(&self) -> ManifestEntry {
        ManifestEntry {
            clip_id: self.clip_id.clone(),
            dataset: self.dataset,
            lexical_form: self.lexical_form.clone(),
            speaker_id: self.speaker_id.clone(),
            wav_path: self.wav_path.clone(),
            emb_paths: BTreeMap::new(),
        }
    }
}

/// Cuts `[start - pad, end + pad]` (clamped to the file and the
/// candidate's neighbor limits) from the word's channel, resamples to the
/// canonical rate and writes `<out_dir>/<clip_id>.wav`. `wav_path` in the
/// result is the bare file name.
pub fn cut_clip(
    audio_path: &Path,
    cand: &Candidate,
    pad_s: f64,
    dataset: Dataset,
    out_dir: &Path,
) -> Result<FeedbackClip, CorpusError> {
    if !audio_path.exists() {
        return Err(CorpusError::AudioMissing(audio_path.to_path_buf()));
    }
    let src = load_wav_channel(audio_path, cand.word.channel)?;
    let duration = src.duration_s();
    let w = &cand.word;
    let tolerance = 1.0 / f64::from(src.sample_rate);
    if w.start_s < 0.0 || w.end_s > duration + tolerance {
        return Err(CorpusError::OutOfBounds {
            word: w.word.clone(),
            start_s: w.start_s,
            end_s: w.end_s,
            duration_s: duration,
        });
    }
    let start = (w.start_s - pad_s).max(cand.min_start_s).max(0.0);
    let end = (w.end_s + pad_s).min(cand.max_end_s).min(duration);
    let sr = f64::from(src.sample_rate);
    let (i0, i1) = ((start * sr).round() as usize, ((end * sr).round() as usize).min(src.len()));
    let mut piece = src.clone();
    piece.samples = src.samples[i0..i1.max(i0 + 1).min(src.len())].to_vec();
    piece.clip_id = cand.clip_id.clone();
    let clip = resample(&piece, CANONICAL_RATE)?;
    let file_name = format!("{}.wav", cand.clip_id);
    std::fs::create_dir_all(out_dir).map_err(|source| CorpusError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_wav(out_dir.join(&file_name), &clip)?;
    Ok(FeedbackClip {
        clip_id: cand.clip_id.clone(),
        dataset,
        lexical_form: cand.lexical_form.clone(),
        speaker_id: w.speaker_id.clone(),
        gender: None,
        wav_path: file_name,
        duration_s: clip.duration_s(),
        conversation_id: w.conversation_id.clone(),
        channel: w.channel,
        start_s: start,
        end_s: end,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub clip_id: String,
    pub dataset: Dataset,
    pub lexical_form: String,
    pub speaker_id: String,
    pub conversation_id: String,
    pub channel: u16,
    pub start_s: f64,
    pub end_s: f64,
    pub wav_path: String,
    /// `pending` until a reviewer writes `yes` or `no`.
    pub approved: String,
}

pub fn write_review_csv(path: &Path, clips: &[FeedbackClip]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    for c in clips {
        w.serialize(ReviewRow {
            clip_id: c.clip_id.clone(),
            dataset: c.dataset,
            lexical_form: c.lexical_form.clone(),
            speaker_id: c.speaker_id.clone(),
            conversation_id: c.conversation_id.clone(),
            channel: c.channel,
            start_s: c.start_s,
            end_s: c.end_s,
            wav_path: c.wav_path.clone(),
            approved: "pending".into(),
        })?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Clip ids a reviewer marked `yes` (also `y`, `true`, `approved`).
pub fn approved_clips(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeSet::new();
    for row in r.deserialize::<ReviewRow>() {
        let row = row?;
        if matches!(row.approved.trim().to_ascii_lowercase().as_str(), "yes" | "y" | "true" | "approved") {
            out.insert(row.clip_id);
        }
    }
    Ok(out)
}
