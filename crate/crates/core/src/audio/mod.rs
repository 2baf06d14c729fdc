//! Audio decoding and time-domain preprocessing.
//!
//! Accepts mono 16-bit PCM WAV only; samples are normalized by 1/32768 so
//! every decoded value lies in [-1, 1). Preprocessing (DC removal and
//! pre-emphasis) and energy-based endpoint trimming condition the signal
//! before feature extraction.

mod wav;

pub use wav::{load_wav, save_wav};

use std::path::PathBuf;
use thiserror::Error;

/// Conventional pre-emphasis coefficient used by the enrollment and
/// verification pipelines.
pub const DEFAULT_PREEMPHASIS: f64 = 0.97;

/// Lowest sample rate the engine accepts.
pub const MIN_SAMPLE_RATE_HZ: u32 = 8_000;

/// Rates below this are accepted but flagged: the front end is tuned for
/// speech bands that assume roughly 10 kHz sampling or better.
pub const RECOMMENDED_SAMPLE_RATE_HZ: u32 = 10_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("sample rate too low: {0} Hz (minimum {MIN_SAMPLE_RATE_HZ} Hz)")]
    SampleRateTooLow(u32),
    #[error("empty signal")]
    EmptySignal,
    #[error("no speech detected: signal shorter than one analysis frame")]
    NoSpeechDetected,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A mono PCM signal with normalized amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    /// Samples in [-1.0, 1.0) as decoded; intermediate processing may
    /// push values outside that range.
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// True when the rate is legal but below the recommended band for
    /// speech capture; callers may warn.
    pub fn below_recommended_rate(&self) -> bool {
        self.sample_rate_hz < RECOMMENDED_SAMPLE_RATE_HZ
    }
}

/// Energy-based endpoint detector settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    /// Analysis frame length in milliseconds.
    pub frame_ms: f64,
    /// Fraction of the peak frame energy below which a frame counts as
    /// silence. Must lie in (0, 1).
    pub energy_floor_ratio: f64,
    /// Frames of padding kept on each side of the detected speech span.
    pub margin_frames: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            energy_floor_ratio: 0.05,
            margin_frames: 3,
        }
    }
}

/// DC removal followed by first-order pre-emphasis.
///
/// With `m = mean(x)`: `y[0] = x[0] - m`, `y[n] = (x[n] - m) - alpha * (x[n-1] - m)`.
/// Output length and rate match the input; values may leave [-1, 1).
pub fn preprocess(signal: &AudioSignal, alpha: f64) -> Result<AudioSignal, AudioError> {
    if signal.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let mean = signal.samples.iter().sum::<f64>() / signal.samples.len() as f64;
    let mut out = Vec::with_capacity(signal.samples.len());
    out.push(signal.samples[0] - mean);
    for n in 1..signal.samples.len() {
        out.push((signal.samples[n] - mean) - alpha * (signal.samples[n - 1] - mean));
    }
    Ok(AudioSignal::new(out, signal.sample_rate_hz))
}

/// Keeps the contiguous sample span from the first to the last frame whose
/// energy reaches `energy_floor_ratio` times the peak frame energy,
/// widened by `margin_frames` per side and clamped to the signal bounds.
///
/// Frames are non-overlapping; a trailing partial frame never qualifies on
/// its own but survives when the margin extends past the last full frame.
pub fn trim_endpoints(signal: &AudioSignal, cfg: &VadConfig) -> Result<AudioSignal, AudioError> {
    if signal.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let frame_len = (cfg.frame_ms * f64::from(signal.sample_rate_hz) / 1000.0).round() as usize;
    if frame_len == 0 || signal.len() < frame_len {
        return Err(AudioError::NoSpeechDetected);
    }

    let energies: Vec<f64> = signal
        .samples
        .chunks_exact(frame_len)
        .map(|frame| frame.iter().map(|s| s * s).sum())
        .collect();
    let peak = energies.iter().copied().fold(0.0_f64, f64::max);
    let threshold = cfg.energy_floor_ratio * peak;

    // The peak frame always satisfies energy >= threshold, so both
    // endpoints exist whenever at least one full frame does.
    let first = energies.iter().position(|&e| e >= threshold).unwrap();
    let last = energies.iter().rposition(|&e| e >= threshold).unwrap();

    let start_frame = first.saturating_sub(cfg.margin_frames);
    let end_frame = last + 1 + cfg.margin_frames;
    let start = start_frame * frame_len;
    let end = (end_frame * frame_len).min(signal.len());

    Ok(AudioSignal::new(
        signal.samples[start..end].to_vec(),
        signal.sample_rate_hz,
    ))
}
