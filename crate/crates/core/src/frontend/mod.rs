//! MFCC signal-processing front end.
//!
//! Frames the signal, applies a Hamming window, computes the one-sided
//! power spectrum, pools it through a mel filterbank, log-compresses, and
//! takes an orthonormal DCT-II keeping c1..=c_{n_coeffs}. Dropping c0
//! removes the overall log-energy term, so features are invariant to
//! amplitude scaling of the input.

mod dct;
mod fft;
mod mel;

pub use dct::dct_ii;
pub use fft::power_spectrum;
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, FilterBank};

use thiserror::Error;

use crate::audio::AudioSignal;
use crate::util::fnv1a_64;

/// Floor applied to filterbank energies before the log.
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("negative frequency: {0} Hz")]
    NegativeFrequency(f64),
    #[error("invalid band: f_max {f_max_hz} Hz exceeds Nyquist {nyquist_hz} Hz")]
    InvalidBand { f_max_hz: f64, nyquist_hz: f64 },
    #[error("fft size {0} is not a power of two")]
    NonPowerOfTwoSize(usize),
    #[error("frame of {frame} samples does not fit fft size {fft_size}")]
    FrameLongerThanFft { frame: usize, fft_size: usize },
    #[error("cannot keep {keep} non-DC DCT coefficients of a length-{input} input")]
    InvalidLength { input: usize, keep: usize },
    #[error("signal too short: {got} samples, need at least {needed}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("invalid front-end config: {0}")]
    InvalidConfig(String),
}

/// Front-end parameters. The fingerprint of this struct is stored with
/// every speaker profile so that features and models produced under
/// different configurations can never be mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    /// Analysis window length in milliseconds.
    pub frame_ms: f64,
    /// Frame shift in milliseconds.
    pub hop_ms: f64,
    /// FFT length; power of two, at least one window of samples.
    pub fft_size: usize,
    /// Number of triangular mel filters.
    pub n_filters: usize,
    /// Cepstral coefficients kept (c1..=c_n; c0 is always dropped).
    pub n_coeffs: usize,
    /// Filterbank band edges in Hz.
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Subtract the per-coefficient mean over the utterance.
    pub use_cmn: bool,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        // Tuned for 16 kHz input; f_max_hz is the Nyquist rate there.
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_filters: 26,
            n_coeffs: 13,
            f_min_hz: 0.0,
            f_max_hz: 8000.0,
            use_cmn: false,
        }
    }
}

impl FrontendConfig {
    /// Canonical single-line rendering, the input to [`fingerprint`](Self::fingerprint)
    /// and the form echoed into profile files.
    pub fn canonical_string(&self) -> String {
        format!(
            "frame_ms={:?};hop_ms={:?};fft_size={};n_filters={};n_coeffs={};f_min_hz={:?};f_max_hz={:?};use_cmn={}",
            self.frame_ms,
            self.hop_ms,
            self.fft_size,
            self.n_filters,
            self.n_coeffs,
            self.f_min_hz,
            self.f_max_hz,
            self.use_cmn
        )
    }

    /// Stable 64-bit hash of the canonical serialization.
    pub fn fingerprint(&self) -> u64 {
        fnv1a_64(self.canonical_string().as_bytes())
    }

    fn validate(&self, sample_rate_hz: u32) -> Result<(), FrontendError> {
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.frame_ms) {
            return Err(FrontendError::InvalidConfig(format!(
                "hop_ms {} must lie in (0, frame_ms {}]",
                self.hop_ms, self.frame_ms
            )));
        }
        if self.n_coeffs == 0 || self.n_coeffs >= self.n_filters {
            return Err(FrontendError::InvalidConfig(format!(
                "n_coeffs {} must lie in [1, n_filters {})",
                self.n_coeffs, self.n_filters
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(FrontendError::NonPowerOfTwoSize(self.fft_size));
        }
        let window = self.window_samples(sample_rate_hz);
        if window > self.fft_size {
            return Err(FrontendError::FrameLongerThanFft {
                frame: window,
                fft_size: self.fft_size,
            });
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate_hz: u32) -> usize {
        (self.frame_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate_hz: u32) -> usize {
        ((self.hop_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize).max(1)
    }
}

/// A T x D matrix of cepstral feature vectors plus the fingerprint of the
/// configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<Vec<f64>>,
    config_fingerprint: u64,
}

impl FeatureSequence {
    /// Wraps externally produced frames. All rows must be non-empty, share
    /// one dimension, and contain only finite values.
    pub fn new(frames: Vec<Vec<f64>>, config_fingerprint: u64) -> Result<Self, FrontendError> {
        if frames.is_empty() {
            return Err(FrontendError::InvalidConfig(
                "feature sequence needs at least one frame".into(),
            ));
        }
        let dim = frames[0].len();
        if dim == 0 {
            return Err(FrontendError::InvalidConfig(
                "feature frames must be non-empty".into(),
            ));
        }
        for row in &frames {
            if row.len() != dim || row.iter().any(|v| !v.is_finite()) {
                return Err(FrontendError::InvalidConfig(
                    "feature frames must be rectangular and finite".into(),
                ));
            }
        }
        Ok(Self {
            frames,
            config_fingerprint,
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub fn config_fingerprint(&self) -> u64 {
        self.config_fingerprint
    }
}

fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Runs the full MFCC pipeline over a signal.
///
/// Frame count is `floor((L - W) / H) + 1`; the trailing partial frame is
/// dropped. Fails with `SignalTooShort` when not even one window fits.
pub fn extract_mfcc(
    signal: &AudioSignal,
    cfg: &FrontendConfig,
) -> Result<FeatureSequence, FrontendError> {
    cfg.validate(signal.sample_rate_hz)?;
    let window = cfg.window_samples(signal.sample_rate_hz);
    let hop = cfg.hop_samples(signal.sample_rate_hz);
    if signal.len() < window {
        return Err(FrontendError::SignalTooShort {
            needed: window,
            got: signal.len(),
        });
    }

    let bank = build_mel_filterbank(cfg, signal.sample_rate_hz)?;
    let win = hamming_window(window);
    let n_frames = (signal.len() - window) / hop + 1;

    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0; window];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = signal.samples[start + i] * win[i];
        }
        let power = power_spectrum(&buf, cfg.fft_size)?;
        let log_energies: Vec<f64> = bank
            .apply(&power)
            .into_iter()
            .map(|e| e.max(LOG_ENERGY_FLOOR).ln())
            .collect();
        frames.push(dct_ii(&log_energies, cfg.n_coeffs)?);
    }

    let seq = FeatureSequence::new(frames, cfg.fingerprint())?;
    if cfg.use_cmn {
        Ok(cepstral_mean_normalize(&seq))
    } else {
        Ok(seq)
    }
}

/// Subtracts the per-coefficient mean over the sequence, leaving every
/// column zero-mean. Idempotent.
pub fn cepstral_mean_normalize(seq: &FeatureSequence) -> FeatureSequence {
    let t = seq.len() as f64;
    let dim = seq.dim();
    let mut means = vec![0.0; dim];
    for row in seq.frames() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= t;
    }
    let frames = seq
        .frames()
        .iter()
        .map(|row| row.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    FeatureSequence {
        frames,
        config_fingerprint: seq.config_fingerprint,
    }
}
