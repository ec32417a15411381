//! Log-mel front end: fixed-length clips, Hann-windowed STFT without
//! centering, HTK mel filterbank and natural-log compression.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW: usize = 2048;
pub const N_MELS: usize = 128;
pub const LOG_FLOOR: f64 = 1e-10;
pub const CLIP_SECONDS: f64 = 10.0;
pub const SUPPORTED_HOPS: [usize; 2] = [160, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub clip_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(clip_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("audio samples must be finite"));
        }
        Ok(Self { clip_id: clip_id.into(), samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// `[T × M]` natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub frame_period: f64,
    pub mel_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub clip_seconds: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            window: WINDOW,
            hop: 256,
            n_mels: N_MELS,
            f_min: 0.0,
            f_max: 8000.0,
            clip_seconds: CLIP_SECONDS,
        }
    }
}

impl FeatureConfig {
    pub fn frame_period(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }
}

pub fn num_frames(n_samples: usize, window: usize, hop: usize) -> Result<usize> {
    if hop == 0 {
        return Err(invalid("hop must be at least one sample"));
    }
    if n_samples < window {
        return Err(invalid(format!("{n_samples} samples do not fill a {window}-sample window")));
    }
    Ok(1 + (n_samples - window) / hop)
}

/// Zero-pads or truncates at the end to exactly `target_seconds`.
pub fn pad_or_trim(clip: &AudioClip, target_seconds: f64) -> AudioClip {
    let n = (target_seconds * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(n, 0.0);
    AudioClip { clip_id: clip.clip_id.clone(), samples, sample_rate: clip.sample_rate }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Peak frequencies of the triangular filters.
pub fn mel_center_frequencies(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Unnormalized triangular filters `[M × (n_fft/2 + 1)]` on the HTK mel scale.
pub fn mel_filterbank(n_mels: usize, f_min: f64, f_max: f64, sample_rate: u32, n_fft: usize) -> Result<Array2<f64>> {
    if n_mels < 2 {
        return Err(invalid("at least two mel bands are required"));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(invalid(format!("mel range ({f_min}, {f_max}) must lie inside [0, {nyquist}]")));
    }
    let n_freqs = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    Ok(Array2::from_shape_fn((n_mels, n_freqs), |(m, k)| {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let rising = (f - left) / (center - left);
        let falling = (right - f) / (right - center);
        rising.min(falling).max(0.0)
    }))
}

/// Reusable STFT plan plus filterbank for one configuration.
pub struct Extractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Array2<f64>,
}

impl Extractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        if !SUPPORTED_HOPS.contains(&cfg.hop) {
            log::warn!("hop {} differs from the supported 160 and 256 samples", cfg.hop);
        }
        let filterbank = mel_filterbank(cfg.n_mels, cfg.f_min, cfg.f_max, cfg.sample_rate, cfg.window)?;
        Ok(Self {
            window: hann(cfg.window),
            fft: FftPlanner::new().plan_fft_forward(cfg.window),
            filterbank,
            cfg,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    /// Magnitude spectrogram `[T × (window/2 + 1)]`; frame `t` covers samples
    /// `[t·hop, t·hop + window)`.
    pub fn stft_magnitude(&self, samples: &[f64]) -> Result<Array2<f64>> {
        let (win, hop) = (self.cfg.window, self.cfg.hop);
        let t_count = num_frames(samples.len(), win, hop)?;
        let n_bins = win / 2 + 1;
        let mut out = Array2::zeros((t_count, n_bins));
        let mut buf = vec![Complex::new(0.0, 0.0); win];
        for t in 0..t_count {
            let frame = &samples[t * hop..t * hop + win];
            for ((b, s), w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, v) in buf[..n_bins].iter().enumerate() {
                out[[t, k]] = v.norm();
            }
        }
        Ok(out)
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        if clip.sample_rate != self.cfg.sample_rate {
            return Err(invalid(format!(
                "{}: sample rate {} Hz, expected {} Hz",
                clip.clip_id, clip.sample_rate, self.cfg.sample_rate
            )));
        }
        let clip = pad_or_trim(clip, self.cfg.clip_seconds);
        let mag = self.stft_magnitude(&clip.samples)?;
        Ok(MelSpectrogram {
            values: log_mel(&mag, &self.filterbank)?,
            frame_period: self.cfg.frame_period(),
            mel_range: (self.cfg.f_min, self.cfg.f_max),
        })
    }
}

/// `log(max(power · fbᵀ, 1e-10))` for a magnitude spectrogram `[T × K]` and
/// filterbank `[M × K]`.
pub fn log_mel(magnitude: &Array2<f64>, filterbank: &Array2<f64>) -> Result<Array2<f64>> {
    if magnitude.ncols() != filterbank.ncols() {
        return Err(invalid("spectrogram and filterbank disagree on the number of bins"));
    }
    let power = magnitude.mapv(|m| m * m);
    Ok(power.dot(&filterbank.t()).mapv(|e| e.max(LOG_FLOOR).ln()))
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(path, format!("{} channels, expected mono", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => return Err(Error::format(path, format!("unsupported sample format {fmt:?} with {bits} bits"))),
    };
    let clip_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    AudioClip::new(clip_id, samples, spec.sample_rate)
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Writes a mono WAV file in the given sample format.
pub fn write_wav(path: &Path, clip: &AudioClip, float: bool) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: if float { 32 } else { 16 },
        sample_format: if float { hound::SampleFormat::Float } else { hound::SampleFormat::Int },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &clip.samples {
        let r = if float {
            writer.write_sample(s as f32)
        } else {
            writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
        };
        r.map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}
