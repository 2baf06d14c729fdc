//! Radix-2 FFT and the half-spectrum power computation built on it.

use std::f64::consts::PI;

use super::FrontendError;

/// In-place iterative radix-2 Cooley-Tukey FFT over interleaved
/// (re, im) pairs. `n` must be a power of two.
fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let even = start + k;
                let odd = start + k + len / 2;
                let t_re = re[odd] * cur_re - im[odd] * cur_im;
                let t_im = re[odd] * cur_im + im[odd] * cur_re;
                re[odd] = re[even] - t_re;
                im[odd] = im[even] - t_im;
                re[even] += t_re;
                im[even] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized DFT of a real frame zero-padded to `fft_size`, reduced to
/// the one-sided power spectrum `P[k] = |X[k]|^2` for `k = 0..fft_size/2`.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>, FrontendError> {
    if fft_size == 0 || !fft_size.is_power_of_two() {
        return Err(FrontendError::NonPowerOfTwoSize(fft_size));
    }
    if frame.len() > fft_size {
        return Err(FrontendError::FrameLongerThanFft {
            frame: frame.len(),
            fft_size,
        });
    }
    let mut re = vec![0.0; fft_size];
    let mut im = vec![0.0; fft_size];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im);
    Ok((0..=fft_size / 2)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect())
}
