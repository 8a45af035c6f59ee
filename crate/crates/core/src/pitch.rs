//! Fundamental-frequency tracking, pitch statistics and Legendre contour fits.
//!
//! The tracker follows Boersma's normalized-autocorrelation method: each
//! frame's autocorrelation is divided by the autocorrelation of the analysis
//! window, peaks are refined on a sinc-interpolated curve, and a small octave
//! cost breaks ties between a period and its multiples. There is no
//! cross-frame path search; every frame keeps its own best candidate.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{hann, Waveform};

#[derive(Debug, Error, PartialEq)]
pub enum PitchError {
    #[error("audio too short: {len} samples, analysis window needs {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid pitch range: floor {floor_hz} Hz, ceiling {ceil_hz} Hz")]
    InvalidRange { floor_hz: f64, ceil_hz: f64 },
    #[error("contour has no voiced frames")]
    NoVoicedFrames,
    #[error("contour has {found} voiced frames, Legendre fit needs at least 4")]
    TooFewVoicedFrames { found: usize },
    #[error("least-squares fit failed: {0}")]
    FitFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub floor_hz: f64,
    pub ceil_hz: f64,
    pub hop_s: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames whose local peak amplitude is below this fraction of the
    /// global peak are unvoiced.
    pub silence_threshold: f64,
    /// Strength penalty per octave of lag, favoring the shortest period.
    pub octave_cost: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            floor_hz: 75.0,
            ceil_hz: 600.0,
            hop_s: 0.010,
            voicing_threshold: 0.45,
            silence_threshold: 0.03,
            octave_cost: 0.01,
        }
    }
}

impl PitchConfig {
    pub fn with_range(floor_hz: f64, ceil_hz: f64) -> Self {
        Self {
            floor_hz,
            ceil_hz,
            ..Self::default()
        }
    }

    /// Analysis window: three periods of the pitch floor.
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (3.0 / self.floor_hz * f64::from(sample_rate)).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        ((self.hop_s * f64::from(sample_rate)).round() as usize).max(1)
    }

    /// Number of frames the tracker produces for `len` samples.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        let win = self.window_len(sample_rate);
        if len < win {
            0
        } else {
            1 + (len - win) / self.hop_len(sample_rate)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    pub time_s: f64,
    /// `None` for unvoiced frames.
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchContour {
    pub frames: Vec<PitchFrame>,
    pub hop_s: f64,
    pub floor_hz: f64,
    pub ceil_hz: f64,
}

impl PitchContour {
    /// Builds a contour on a regular time grid starting at `start_s`.
    pub fn from_values(start_s: f64, hop_s: f64, values: &[Option<f64>]) -> Self {
        let frames = values
            .iter()
            .enumerate()
            .map(|(i, &f0)| PitchFrame {
                time_s: start_s + i as f64 * hop_s,
                f0,
            })
            .collect();
        let voiced = values.iter().flatten();
        let floor_hz = voiced.clone().fold(f64::INFINITY, |m, &v| m.min(v));
        let ceil_hz = voiced.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        Self {
            frames,
            hop_s,
            floor_hz,
            ceil_hz,
        }
    }

    pub fn voiced(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.frames
            .iter()
            .filter_map(|f| f.f0.map(|f0| (f.time_s, f0)))
    }

    pub fn voiced_len(&self) -> usize {
        self.frames.iter().filter(|f| f.f0.is_some()).count()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.voiced_len() as f64 / self.frames.len() as f64
        }
    }
}

/// Normalized-autocorrelation pitch tracker with a fixed configuration.
/// Reusable across clips of the same sample rate.
pub struct PitchTracker {
    cfg: PitchConfig,
    sample_rate: u32,
    win: usize,
    hop: usize,
    window: Vec<f64>,
    window_acf: Vec<f64>,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl PitchTracker {
    pub fn new(cfg: PitchConfig, sample_rate: u32) -> Result<Self, PitchError> {
        if !(cfg.floor_hz > 0.0 && cfg.floor_hz < cfg.ceil_hz) {
            return Err(PitchError::InvalidRange {
                floor_hz: cfg.floor_hz,
                ceil_hz: cfg.ceil_hz,
            });
        }
        let win = cfg.window_len(sample_rate).max(4);
        let hop = cfg.hop_len(sample_rate);
        let n_fft = (2 * win).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_fft);
        let ifft = planner.plan_fft_inverse(n_fft);
        let window = hann(win);
        let mut tracker = Self {
            cfg,
            sample_rate,
            win,
            hop,
            window: window.clone(),
            window_acf: Vec::new(),
            n_fft,
            fft,
            ifft,
        };
        tracker.window_acf = tracker.autocorrelation(&window);
        Ok(tracker)
    }

    /// Autocorrelation normalized to 1 at lag 0 (all zeros for silence).
    fn autocorrelation(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.n_fft)
            .collect();
        self.fft.process(&mut buf);
        for c in &mut buf {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.ifft.process(&mut buf);
        let r0 = buf[0].re;
        if r0 <= 1e-20 {
            return vec![0.0; self.win];
        }
        buf[..self.win].iter().map(|c| c.re / r0).collect()
    }

    pub fn track(&self, w: &Waveform) -> Result<PitchContour, PitchError> {
        if w.len() < self.win {
            return Err(PitchError::TooShort {
                len: w.len(),
                needed: self.win,
            });
        }
        let sr = f64::from(self.sample_rate);
        let global_peak = w.peak();
        let n_frames = 1 + (w.len() - self.win) / self.hop;
        let min_lag = ((sr / self.cfg.ceil_hz).floor() as usize).max(2);
        let max_lag = ((sr / self.cfg.floor_hz).ceil() as usize).min(self.win / 2);

        let mut frames = Vec::with_capacity(n_frames);
        let mut segment = vec![0.0; self.win];
        for i in 0..n_frames {
            let start = i * self.hop;
            let raw = &w.samples[start..start + self.win];
            let time_s = (start as f64 + self.win as f64 / 2.0) / sr;
            let local_peak = raw.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
            let f0 = if global_peak <= 0.0
                || local_peak < self.cfg.silence_threshold * global_peak
            {
                None
            } else {
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                for ((dst, &src), &h) in segment.iter_mut().zip(raw).zip(&self.window) {
                    *dst = (src - mean) * h;
                }
                self.best_candidate(&segment, min_lag, max_lag)
            };
            frames.push(PitchFrame { time_s, f0 });
        }
        Ok(PitchContour {
            frames,
            hop_s: self.hop as f64 / sr,
            floor_hz: self.cfg.floor_hz,
            ceil_hz: self.cfg.ceil_hz,
        })
    }

    fn best_candidate(&self, segment: &[f64], min_lag: usize, max_lag: usize) -> Option<f64> {
        let acf = self.autocorrelation(segment);
        if acf[0] == 0.0 {
            return None;
        }
        let sr = f64::from(self.sample_rate);
        let r = |lag: usize| acf[lag] / self.window_acf[lag];

        let mut best: Option<(f64, f64, f64)> = None; // (strength, peak, lag)
        for lag in min_lag.max(1)..max_lag {
            let (prev, cur, next) = (r(lag - 1), r(lag), r(lag + 1));
            if !(cur > prev && cur >= next) || cur < 0.5 * self.cfg.voicing_threshold {
                continue;
            }
            let (lag_f, peak) = refine_peak(&r, lag, max_lag + SINC_DEPTH);
            let peak = peak.min(1.0);
            let lag_s = lag_f / sr;
            let strength = peak - self.cfg.octave_cost * (self.cfg.floor_hz * lag_s).log2();
            if best.is_none_or(|(s, _, _)| strength > s) {
                best = Some((strength, peak, lag_f));
            }
        }
        let (_, peak, lag) = best?;
        if peak < self.cfg.voicing_threshold {
            return None;
        }
        Some((sr / lag).clamp(self.cfg.floor_hz, self.cfg.ceil_hz))
    }
}

/// Half-width (in lags) of the sinc kernel used to interpolate the
/// autocorrelation between integer lags.
const SINC_DEPTH: usize = 16;

fn interpolate(r: &impl Fn(usize) -> f64, x: f64, limit: usize) -> f64 {
    let center = x.floor() as isize;
    let lo = (center - SINC_DEPTH as isize + 1).max(0);
    let hi = (center + SINC_DEPTH as isize).min(limit as isize - 1);
    let mut acc = 0.0;
    for k in lo..=hi {
        let d = x - k as f64;
        let taper = 0.5 + 0.5 * (std::f64::consts::PI * d / SINC_DEPTH as f64).cos();
        let sinc = if d.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * d).sin() / (std::f64::consts::PI * d)
        };
        acc += r(k as usize) * sinc * taper;
    }
    acc
}

/// Locates the maximum of the sinc-interpolated autocorrelation within one
/// lag of an integer local maximum, by golden-section search.
fn refine_peak(r: &impl Fn(usize) -> f64, lag: usize, limit: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let (mut a, mut b) = (lag as f64 - 1.0, lag as f64 + 1.0);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (interpolate(r, x1, limit), interpolate(r, x2, limit));
    for _ in 0..40 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = interpolate(r, x2, limit);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = interpolate(r, x1, limit);
        }
    }
    let x = 0.5 * (a + b);
    let at_integer = r(lag);
    let refined = interpolate(r, x, limit);
    if refined >= at_integer {
        (x, refined)
    } else {
        (lag as f64, at_integer)
    }
}

/// Tracks f0 over a waveform. The analysis window is `3 / floor_hz` seconds.
pub fn track_pitch(w: &Waveform, cfg: &PitchConfig) -> Result<PitchContour, PitchError> {
    PitchTracker::new(*cfg, w.sample_rate)?.track(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchStats {
    pub mean_hz: f64,
    pub min_hz: f64,
    pub max_hz: f64,
    pub range_hz: f64,
    pub voiced_len: usize,
}

/// Mean, extremes, range and count over the voiced frames of a contour.
pub fn pitch_stats(c: &PitchContour) -> Result<PitchStats, PitchError> {
    stats_from_values(c.voiced().map(|(_, f0)| f0))
}

pub fn stats_from_values(values: impl IntoIterator<Item = f64>) -> Result<PitchStats, PitchError> {
    let (mut sum, mut min, mut max, mut n) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for v in values {
        sum += v;
        min = min.min(v);
        max = max.max(v);
        n += 1;
    }
    if n == 0 {
        return Err(PitchError::NoVoicedFrames);
    }
    // Clamp guards the ordering invariant against summation rounding.
    let mean = (sum / n as f64).clamp(min, max);
    Ok(PitchStats {
        mean_hz: mean,
        min_hz: min,
        max_hz: max,
        range_hz: max - min,
        voiced_len: n,
    })
}

/// Coefficients of `P0..P3` over normalized time. `c0` is height, `c1`
/// slope, `c2` convexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LegendreCoeffs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c0, self.c1, self.c2, self.c3]
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.as_array()
            .iter()
            .zip(legendre_basis(u))
            .map(|(c, p)| c * p)
            .sum()
    }
}

/// `[P0(u), P1(u), P2(u), P3(u)]`.
pub fn legendre_basis(u: f64) -> [f64; 4] {
    [
        1.0,
        u,
        0.5 * (3.0 * u * u - 1.0),
        0.5 * (5.0 * u * u * u - 3.0 * u),
    ]
}

/// Least-squares third-order Legendre fit over the voiced frames only.
/// Voiced times are mapped affinely so the first voiced frame sits at -1 and
/// the last at +1; unvoiced gaps are not interpolated.
pub fn fit_legendre(c: &PitchContour) -> Result<LegendreCoeffs, PitchError> {
    let points: Vec<(f64, f64)> = c.voiced().collect();
    fit_legendre_points(&points)
}

/// Fits `(time, value)` pairs; times need not be uniform.
pub fn fit_legendre_points(points: &[(f64, f64)]) -> Result<LegendreCoeffs, PitchError> {
    if points.len() < 4 {
        return Err(PitchError::TooFewVoicedFrames {
            found: points.len(),
        });
    }
    let t_first = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_last = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = t_last - t_first;
    if span <= 0.0 {
        return Err(PitchError::FitFailed("voiced frames share one time stamp".into()));
    }
    let design = DMatrix::from_fn(points.len(), 4, |r, k| {
        let u = 2.0 * (points[r].0 - t_first) / span - 1.0;
        legendre_basis(u)[k]
    });
    let target = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coeffs = design
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| PitchError::FitFailed(e.to_string()))?;
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(PitchError::FitFailed("non-finite coefficients".into()));
    }
    Ok(LegendreCoeffs {
        c0: coeffs[0],
        c1: coeffs[1],
        c2: coeffs[2],
        c3: coeffs[3],
    })
}
