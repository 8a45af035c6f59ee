//! Waveform loading, resampling and mel spectrograms.
//!
//! Every feature in this crate derives from a mono, peak-normalized
//! [`Waveform`]. Stereo input is averaged on load; corpus code that needs a
//! specific channel uses [`load_wav_channel`] instead.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

/// Canonical analysis rate. Clips are resampled to this rate before any
/// feature extraction.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("audio too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("channel {channel} out of range for {channels}-channel audio")]
    ChannelOutOfRange { channel: u16, channels: u16 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A mono signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub clip_id: String,
}

impl Waveform {
    pub fn new(
        clip_id: impl Into<String>,
        samples: Vec<f64>,
        sample_rate: u32,
    ) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidParameter("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            clip_id: clip_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Scales the signal so that `max |sample| = 1`. Silent signals are left
    /// untouched.
    pub fn peak_normalize(&mut self) {
        let peak = self.peak();
        if peak > 0.0 {
            for s in &mut self.samples {
                *s /= peak;
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * k).collect(),
            sample_rate: self.sample_rate,
            clip_id: self.clip_id.clone(),
        }
    }
}

/// Interleaved PCM as read from disk, before any channel mixing.
#[derive(Debug, Clone)]
pub struct PcmAudio {
    pub channels: u16,
    pub sample_rate: u32,
    /// Interleaved samples scaled to `[-1, 1]`.
    pub interleaved: Vec<f64>,
}

impl PcmAudio {
    pub fn frames(&self) -> usize {
        self.interleaved.len() / usize::from(self.channels.max(1))
    }

    pub fn channel(&self, channel: u16) -> Result<Vec<f64>, AudioError> {
        if channel >= self.channels {
            return Err(AudioError::ChannelOutOfRange {
                channel,
                channels: self.channels,
            });
        }
        let step = usize::from(self.channels);
        Ok(self
            .interleaved
            .iter()
            .skip(usize::from(channel))
            .step_by(step)
            .copied()
            .collect())
    }

    pub fn mixdown(&self) -> Vec<f64> {
        let step = usize::from(self.channels);
        self.interleaved
            .chunks_exact(step)
            .map(|frame| frame.iter().sum::<f64>() / step as f64)
            .collect()
    }
}

/// Reads a RIFF/WAVE file with 16-bit integer or 32-bit float payload.
pub fn read_pcm(path: impl AsRef<Path>) -> Result<PcmAudio, AudioError> {
    let reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    if spec.channels == 0 {
        return Err(AudioError::UnsupportedFormat("zero channels".into()));
    }
    Ok(PcmAudio {
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        interleaved,
    })
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::Io(e),
        other => AudioError::UnsupportedFormat(other.to_string()),
    }
}

fn clip_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a WAV file as a mono, peak-normalized waveform. Stereo channels are
/// averaged.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let pcm = read_pcm(path)?;
    let samples = if pcm.channels == 1 {
        pcm.interleaved
    } else {
        pcm.mixdown()
    };
    let mut w = Waveform::new(clip_id_from_path(path), samples, pcm.sample_rate)?;
    w.peak_normalize();
    Ok(w)
}

/// Loads a single channel of a WAV file, without normalization.
pub fn load_wav_channel(path: impl AsRef<Path>, channel: u16) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let pcm = read_pcm(path)?;
    Waveform::new(clip_id_from_path(path), pcm.channel(channel)?, pcm.sample_rate)
}

/// Writes a mono 16-bit PCM WAV. Samples outside `[-1, 1]` are clipped.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)?;
    Ok(())
}

/// Half-width of the interpolation kernel, in zero crossings of the
/// low-pass sinc.
const SINC_ZERO_CROSSINGS: usize = 16;

/// Band-limited resampling with a Blackman-windowed sinc kernel.
///
/// The output has `round(len * target / source)` samples, so duration is
/// preserved to within one sample period. Resampling to the source rate
/// returns the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidParameter("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = f64::from(target_rate) / f64::from(w.sample_rate);
    let out_len = ((w.samples.len() as f64) * ratio).round().max(1.0) as usize;
    // Cut off at the lower of the two Nyquist frequencies.
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS as f64 / cutoff;
    let n_in = w.samples.len() as isize;

    let samples: Vec<f64> = (0..out_len)
        .map(|n| {
            let x = n as f64 / ratio;
            let lo = (x - half_width).ceil() as isize;
            let hi = (x + half_width).floor() as isize;
            let mut acc = 0.0;
            for k in lo.max(0)..=hi.min(n_in - 1) {
                let t = x - k as f64;
                acc += w.samples[k as usize] * cutoff * sinc(cutoff * t) * blackman(t / half_width);
            }
            acc
        })
        .collect();

    let mut out = Waveform::new(w.clip_id.clone(), samples, target_rate)?;
    // Gibbs overshoot can push a normalized signal slightly past full scale.
    if out.peak() > 1.0 {
        out.peak_normalize();
    }
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman window over `u ∈ [-1, 1]`.
fn blackman(u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    let phase = PI * (u + 1.0);
    0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos()
}

/// Periodic-free (symmetric) Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub win_s: f64,
    pub hop_s: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            win_s: 0.025,
            hop_s: 0.010,
        }
    }
}

/// `n_frames × n_mels` magnitudes, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub frame_hop_s: f64,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn argmax_band(&self, frame: usize) -> usize {
        let row = &self.frames[frame];
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` triangular filters spanning
/// 0 Hz to Nyquist.
pub fn mel_band_centers(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let max_mel = hz_to_mel(f64::from(sample_rate) / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filterbank, `n_mels × (n_fft/2 + 1)`, unit peak height.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let max_mel = hz_to_mel(f64::from(sample_rate) / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Magnitude STFT (Hann window) mapped through a triangular mel filterbank.
///
/// Frames are taken only where a full window fits:
/// `n_frames = 1 + floor((len - win) / hop)`.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram, AudioError> {
    if cfg.n_mels == 0 || cfg.win_s <= 0.0 || cfg.hop_s <= 0.0 {
        return Err(AudioError::InvalidParameter(format!("{cfg:?}")));
    }
    let sr = f64::from(w.sample_rate);
    let win = (cfg.win_s * sr).round() as usize;
    let hop = ((cfg.hop_s * sr).round() as usize).max(1);
    if win == 0 || w.len() < win {
        return Err(AudioError::TooShort {
            len: w.len(),
            needed: win.max(1),
        });
    }
    let n_fft = win.next_power_of_two();
    let n_frames = 1 + (w.len() - win) / hop;
    let window = hann(win);
    let bank = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < win {
                w.samples[start + i] * window[i]
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let mags: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
        frames.push(
            bank.iter()
                .map(|filter| filter.iter().zip(&mags).map(|(h, m)| h * m).sum())
                .collect(),
        );
    }
    Ok(MelSpectrogram {
        frames,
        frame_hop_s: hop as f64 / sr,
        n_mels: cfg.n_mels,
    })
}
