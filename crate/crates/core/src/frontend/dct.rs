//! Orthonormal DCT-II, returning the non-DC coefficients.

use std::f64::consts::PI;

use super::FrontendError;

/// Orthonormal DCT-II of `v`, keeping coefficients c1..=cn and dropping c0.
///
/// `c[k] = w(k) * sum_m v[m] * cos(pi * k * (m + 0.5) / M)` with
/// `w(0) = sqrt(1/M)` and `w(k>0) = sqrt(2/M)`. Excluding c0 makes the
/// output invariant to a constant shift of the input, which is what gives
/// the front end its amplitude-scaling invariance.
pub fn dct_ii(v: &[f64], n: usize) -> Result<Vec<f64>, FrontendError> {
    let m = v.len();
    // Only M-1 non-DC coefficients exist, so n must stay below M.
    if m == 0 || n == 0 || n >= m {
        return Err(FrontendError::InvalidLength { input: m, keep: n });
    }
    let scale = (2.0 / m as f64).sqrt();
    Ok((1..=n)
        .map(|k| {
            let sum: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (PI * k as f64 * (i as f64 + 0.5) / m as f64).cos())
                .sum();
            scale * sum
        })
        .collect())
}
