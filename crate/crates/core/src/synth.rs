//! Deterministic test signals.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::audio::Waveform;

fn n_samples(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * f64::from(sample_rate)).round().max(1.0) as usize
}

fn wave(id: &str, samples: Vec<f64>, sample_rate: u32) -> Waveform {
    Waveform::new(id, samples, sample_rate).expect("synthetic signal is nonempty")
}

pub fn sine(freq_hz: f64, duration_s: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let sr = f64::from(sample_rate);
    let samples = (0..n_samples(duration_s, sample_rate))
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / sr).sin())
        .collect();
    wave("sine", samples, sample_rate)
}

/// Band-limited sawtooth: the Fourier series truncated below Nyquist, scaled
/// so the ideal waveform spans `[-amplitude, amplitude]`.
pub fn sawtooth(freq_hz: f64, duration_s: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let sr = f64::from(sample_rate);
    let n_harmonics = ((sr / 2.0) / freq_hz).floor().max(1.0) as usize;
    let samples = (0..n_samples(duration_s, sample_rate))
        .map(|i| {
            let phase = 2.0 * PI * freq_hz * i as f64 / sr;
            let v: f64 = (1..=n_harmonics)
                .map(|k| (k as f64 * phase).sin() / k as f64)
                .sum();
            -amplitude * 2.0 / PI * v
        })
        .collect();
    wave("sawtooth", samples, sample_rate)
}

pub fn white_noise(duration_s: f64, sample_rate: u32, amplitude: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-amplitude, amplitude).expect("valid range");
    let samples = (0..n_samples(duration_s, sample_rate))
        .map(|_| dist.sample(&mut rng))
        .collect();
    wave("noise", samples, sample_rate)
}

pub fn silence(duration_s: f64, sample_rate: u32) -> Waveform {
    wave("silence", vec![0.0; n_samples(duration_s, sample_rate)], sample_rate)
}

/// Harmonic tone whose instantaneous f0 follows `f0(u)` for `u ∈ [0, 1]`
/// across the clip. Phase is integrated sample by sample, so the contour is
/// exact. Three harmonics with 1, 1/2, 1/3 amplitudes give a voice-like
/// spectrum.
pub fn contour_tone(
    f0: impl Fn(f64) -> f64,
    duration_s: f64,
    sample_rate: u32,
    amplitude: f64,
) -> Waveform {
    let sr = f64::from(sample_rate);
    let n = n_samples(duration_s, sample_rate);
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let u = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let v = (1..=3)
                .map(|h| (h as f64 * phase).sin() / h as f64)
                .sum::<f64>();
            phase += 2.0 * PI * f0(u) / sr;
            amplitude * v / 1.84
        })
        .collect();
    wave("contour", samples, sample_rate)
}

/// Concatenates signals sharing one sample rate.
pub fn concat(parts: &[Waveform]) -> Waveform {
    let sr = parts.first().map(|w| w.sample_rate).unwrap_or(16_000);
    let samples = parts.iter().flat_map(|w| w.samples.iter().copied()).collect();
    wave("concat", samples, sr)
}
