//! Pairwise similarity scores with one orientation: higher means more
//! similar. Distance-like quantities are negated at this boundary so the
//! agreement evaluator never needs to know which kind it is scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::MelSpectrogram;
use crate::pitch::LegendreCoeffs;

/// Number of frames every spectrogram is resampled to before comparison.
pub const SPECTROGRAM_FRAMES: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("spectral convergence undefined against an all-zero spectrogram")]
    ZeroReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    ScalarDifference,
    VectorCosine,
    SpectralConvergence,
    Reference,
}

/// Scalar features, compared by negated absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFeature {
    MeanPitch,
    MinPitch,
    MaxPitch,
    VoicedLength,
    PitchRange,
    LpHeight,
    LpSlope,
    LpConvexity,
}

/// One row of the agreement table, in the order rows are reported.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimilarityMetric {
    Scalar(ScalarFeature),
    LpCombined,
    /// Cosine on pooled hidden states of one model; reported as a range
    /// across layers.
    Embedding(String),
    SpectrogramCosine,
    SpectralConvergence,
    /// Reads the consensus answer: 100% by construction, a pipeline check.
    ConsensusOracle,
    /// Seeded pseudo-random pair scores: the empirical chance level.
    RandomScores(u64),
}

impl SimilarityMetric {
    pub fn name(&self) -> String {
        match self {
            Self::Scalar(f) => match f {
                ScalarFeature::MeanPitch => "mean pitch",
                ScalarFeature::MinPitch => "min pitch",
                ScalarFeature::MaxPitch => "max pitch",
                ScalarFeature::VoicedLength => "voiced length",
                ScalarFeature::PitchRange => "pitch range",
                ScalarFeature::LpHeight => "height (LP curve)",
                ScalarFeature::LpSlope => "slope (LP curve)",
                ScalarFeature::LpConvexity => "convexity (LP curve)",
            }
            .to_string(),
            Self::LpCombined => "LP combined cos. sim.".to_string(),
            Self::Embedding(model) => format!("{model} cos. sim."),
            Self::SpectrogramCosine => "spectrogram cos. sim.".to_string(),
            Self::SpectralConvergence => "spectral convergence".to_string(),
            Self::ConsensusOracle => "consensus oracle".to_string(),
            Self::RandomScores(seed) => format!("random scores (seed {seed})"),
        }
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            Self::Scalar(_) => MetricKind::ScalarDifference,
            Self::LpCombined | Self::Embedding(_) | Self::SpectrogramCosine => {
                MetricKind::VectorCosine
            }
            Self::SpectralConvergence => MetricKind::SpectralConvergence,
            Self::ConsensusOracle | Self::RandomScores(_) => MetricKind::Reference,
        }
    }

    /// Pitch and spectral rows in table order; embedding rows are inserted
    /// by the caller between the LP and spectrogram rows.
    pub fn standard_rows() -> Vec<SimilarityMetric> {
        use ScalarFeature::*;
        let mut rows: Vec<_> = [
            MeanPitch,
            MinPitch,
            MaxPitch,
            VoicedLength,
            PitchRange,
            LpHeight,
            LpSlope,
            LpConvexity,
        ]
        .into_iter()
        .map(Self::Scalar)
        .collect();
        rows.push(Self::LpCombined);
        rows.push(Self::SpectrogramCosine);
        rows.push(Self::SpectralConvergence);
        rows
    }
}

pub fn scalar_similarity(x: f64, y: f64) -> f64 {
    -(x - y).abs()
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// `f32` convenience for pooled embeddings.
pub fn cosine_similarity_f32(u: &[f32], v: &[f32]) -> Result<f64, SimilarityError> {
    let u: Vec<f64> = u.iter().map(|&x| f64::from(x)).collect();
    let v: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    cosine_similarity(&u, &v)
}

/// Linearly interpolates the time axis to `n_out` frames and flattens the
/// result frame by frame.
pub fn resample_frames(s: &MelSpectrogram, n_out: usize) -> Vec<f64> {
    let n_in = s.frames.len();
    let mut out = Vec::with_capacity(n_out * s.n_mels);
    for j in 0..n_out {
        let pos = if n_out > 1 && n_in > 1 {
            j as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        let frac = pos - lo as f64;
        for m in 0..s.n_mels {
            out.push(s.frames[lo][m] * (1.0 - frac) + s.frames[hi][m] * frac);
        }
    }
    out
}

fn check_bands(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<(), SimilarityError> {
    if a.n_mels != b.n_mels {
        return Err(SimilarityError::DimensionMismatch(a.n_mels, b.n_mels));
    }
    Ok(())
}

/// Cosine similarity of the two spectrograms after resampling both to
/// [`SPECTROGRAM_FRAMES`] frames.
pub fn spectrogram_similarity(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64, SimilarityError> {
    check_bands(a, b)?;
    cosine_similarity(
        &resample_frames(a, SPECTROGRAM_FRAMES),
        &resample_frames(b, SPECTROGRAM_FRAMES),
    )
}

/// Symmetrized spectral convergence,
/// `(‖A − B‖_F / ‖A‖_F + ‖B − A‖_F / ‖B‖_F) / 2`, on time-resampled
/// spectrograms. A distance: zero for identical inputs.
pub fn spectral_convergence(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64, SimilarityError> {
    check_bands(a, b)?;
    let ra = resample_frames(a, SPECTROGRAM_FRAMES);
    let rb = resample_frames(b, SPECTROGRAM_FRAMES);
    spectral_convergence_flat(&ra, &rb)
}

pub fn spectral_convergence_flat(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroReference);
    }
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(0.5 * (diff / na + diff / nb))
}

/// Spectral convergence as a similarity (negated).
pub fn spectral_convergence_similarity(
    a: &MelSpectrogram,
    b: &MelSpectrogram,
) -> Result<f64, SimilarityError> {
    spectral_convergence(a, b).map(|sc| -sc)
}

/// Height, slope and convexity; `c3` is not part of the combined vector.
pub fn lp_combined_vector(l: &LegendreCoeffs) -> [f64; 3] {
    [l.c0, l.c1, l.c2]
}
