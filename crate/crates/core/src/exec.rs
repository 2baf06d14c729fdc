//! Ordered batch mapping with an optional rayon backend.
//!
//! Every batch loop in the engine (trial scoring, per-sequence training
//! statistics, corpus synthesis) goes through [`map_ordered`]. Outputs are
//! collected in input order, so enabling or disabling the `parallel`
//! feature never changes a result bit. [`map_ordered_seq`] is the plain
//! sequential path, kept public so benchmarks can compare the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sequential counterpart of [`map_ordered`], available regardless of the
/// `parallel` feature.
pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let inputs: Vec<f64> = (0..257).map(|i| 1.0 + i as f64 * 0.37).collect();
        let f = |x: &f64| (x.sin() * x.ln()).exp();
        let par = map_ordered(&inputs, f);
        let seq = map_ordered_seq(&inputs, f);
        assert_eq!(par.len(), seq.len());
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
