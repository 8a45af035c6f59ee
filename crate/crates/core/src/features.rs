//! Per-clip prosodic features, stored one JSON object per line.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::manifest::Dataset;
use crate::pitch::{fit_legendre, pitch_stats, track_pitch, LegendreCoeffs, PitchConfig, PitchStats};
use crate::similarity::{lp_combined_vector, ScalarFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub dataset: Dataset,
    pub lexical_form: String,
    pub n_frames: usize,
    pub voiced_len: usize,
    /// Absent when no frame is voiced.
    pub pitch: Option<PitchStats>,
    /// Absent when the contour is too short to fit.
    pub lp: Option<LegendreCoeffs>,
    /// Why `pitch` or `lp` is missing, if either is.
    pub reason: Option<String>,
}

impl ClipFeatures {
    pub fn scalar(&self, f: ScalarFeature) -> Option<f64> {
        use ScalarFeature::*;
        match f {
            VoicedLength => Some(self.voiced_len as f64),
            MeanPitch => self.pitch.map(|p| p.mean_hz),
            MinPitch => self.pitch.map(|p| p.min_hz),
            MaxPitch => self.pitch.map(|p| p.max_hz),
            PitchRange => self.pitch.map(|p| p.range_hz),
            LpHeight => self.lp.map(|l| l.c0),
            LpSlope => self.lp.map(|l| l.c1),
            LpConvexity => self.lp.map(|l| l.c2),
        }
    }

    pub fn lp_vector(&self) -> Option<[f64; 3]> {
        self.lp.as_ref().map(lp_combined_vector)
    }
}

/// Tracks pitch and fits the contour. Failures are recorded in `reason`
/// rather than returned, so a batch never stops on one bad clip.
pub fn compute_features(
    clip_id: &str,
    dataset: Dataset,
    lexical_form: &str,
    w: &Waveform,
    cfg: &PitchConfig,
) -> ClipFeatures {
    let mut out = ClipFeatures {
        clip_id: clip_id.to_string(),
        dataset,
        lexical_form: lexical_form.to_string(),
        n_frames: 0,
        voiced_len: 0,
        pitch: None,
        lp: None,
        reason: None,
    };
    let contour = match track_pitch(w, cfg) {
        Ok(c) => c,
        Err(e) => {
            out.reason = Some(e.to_string());
            return out;
        }
    };
    out.n_frames = contour.frames.len();
    out.voiced_len = contour.voiced_len();
    match pitch_stats(&contour) {
        Ok(s) => out.pitch = Some(s),
        Err(e) => {
            out.reason = Some(e.to_string());
            return out;
        }
    }
    match fit_legendre(&contour) {
        Ok(l) => out.lp = Some(l),
        Err(e) => out.reason = Some(e.to_string()),
    }
    out
}
