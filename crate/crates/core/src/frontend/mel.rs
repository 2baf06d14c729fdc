//! Mel scale conversions and the triangular mel filterbank.

use super::{FrontendConfig, FrontendError};

/// Converts Hz to mel: linear below roughly 1 kHz, logarithmic above.
pub fn hz_to_mel(f_hz: f64) -> Result<f64, FrontendError> {
    if f_hz < 0.0 {
        return Err(FrontendError::NegativeFrequency(f_hz));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced uniformly on the mel scale, evaluated at FFT
/// bin frequencies.
#[derive(Debug, Clone)]
pub struct FilterBank {
    /// n_filters x (fft_size/2 + 1), all weights non-negative.
    pub weights: Vec<Vec<f64>>,
    pub center_freqs_hz: Vec<f64>,
}

impl FilterBank {
    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    /// Dot product of each filter row with the power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Builds the filterbank for `cfg` at a given sample rate. Filter peaks sit
/// at `cfg.n_filters` points spaced uniformly in mel between `f_min_hz` and
/// `f_max_hz`; each triangle spans its two neighboring centers, with the
/// band edges closing the first and last triangles.
pub fn build_mel_filterbank(
    cfg: &FrontendConfig,
    sample_rate_hz: u32,
) -> Result<FilterBank, FrontendError> {
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    if cfg.f_max_hz > nyquist {
        return Err(FrontendError::InvalidBand {
            f_max_hz: cfg.f_max_hz,
            nyquist_hz: nyquist,
        });
    }
    if cfg.f_min_hz < 0.0 || cfg.f_min_hz >= cfg.f_max_hz {
        return Err(FrontendError::InvalidConfig(format!(
            "filterbank band [{}, {}] Hz is empty or negative",
            cfg.f_min_hz, cfg.f_max_hz
        )));
    }
    if cfg.n_filters == 0 {
        return Err(FrontendError::InvalidConfig("n_filters must be > 0".into()));
    }

    let n_bins = cfg.fft_size / 2 + 1;
    let mel_lo = hz_to_mel(cfg.f_min_hz)?;
    let mel_hi = hz_to_mel(cfg.f_max_hz)?;

    // n_filters + 2 edge points: band edge, the filter centers, band edge.
    let n_pts = cfg.n_filters + 2;
    let edges_hz: Vec<f64> = (0..n_pts)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_pts - 1) as f64))
        .collect();

    let bin_hz = f64::from(sample_rate_hz) / cfg.fft_size as f64;
    let mut weights = Vec::with_capacity(cfg.n_filters);
    for f in 0..cfg.n_filters {
        let (lo, center, hi) = (edges_hz[f], edges_hz[f + 1], edges_hz[f + 2]);
        let mut row = vec![0.0; n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let freq = k as f64 * bin_hz;
            if freq > lo && freq < center {
                *w = (freq - lo) / (center - lo);
            } else if freq == center {
                *w = 1.0;
            } else if freq > center && freq < hi {
                *w = (hi - freq) / (hi - center);
            }
        }
        weights.push(row);
    }

    Ok(FilterBank {
        weights,
        center_freqs_hz: edges_hz[1..=cfg.n_filters].to_vec(),
    })
}
