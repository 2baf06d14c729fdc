//! Log-domain forward/backward and Viterbi passes.

use crate::frontend::FeatureSequence;
use crate::util::logsumexp;

use super::{GmmHmm, HmmError};

/// Forward/backward lattices plus the sequence log-likelihood.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    /// T x N; `log_alpha[t][j]` = log P(o_0..o_t, state_t = j).
    pub log_alpha: Vec<Vec<f64>>,
    /// T x N; `log_beta[t][i]` = log P(o_{t+1}..o_{T-1} | state_t = i).
    pub log_beta: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

/// Most likely state path and its joint log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub log_prob: f64,
}

/// Runs the forward and backward recursions in the log domain.
///
/// Structural zeros (forbidden transitions, zeroed pi entries) stay exactly
/// `-inf`; no flooring is applied anywhere.
pub fn forward_backward(
    model: &GmmHmm,
    seq: &FeatureSequence,
) -> Result<ForwardBackward, HmmError> {
    model.check_sequence(seq)?;
    let log_b = model.log_emissions(seq);
    let fb = forward_backward_from_emissions(model, &log_b)?;
    Ok(fb)
}

/// Same recursion, but over a precomputed T x N emission matrix so training
/// can reuse the per-component densities.
pub(super) fn forward_backward_from_emissions(
    model: &GmmHmm,
    log_b: &[Vec<f64>],
) -> Result<ForwardBackward, HmmError> {
    let t_len = log_b.len();
    let n = model.n_states();
    let log_pi: Vec<f64> = model.pi.iter().map(|&p| p.ln()).collect();
    let log_trans: Vec<Vec<f64>> = model
        .trans
        .iter()
        .map(|row| row.iter().map(|&p| p.ln()).collect())
        .collect();

    let mut log_alpha = vec![vec![f64::NEG_INFINITY; n]; t_len];
    for j in 0..n {
        log_alpha[0][j] = log_pi[j] + log_b[0][j];
    }
    let mut cand = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            for i in 0..n {
                cand[i] = log_alpha[t - 1][i] + log_trans[i][j];
            }
            log_alpha[t][j] = logsumexp(&cand) + log_b[t][j];
        }
    }
    let log_likelihood = logsumexp(&log_alpha[t_len - 1]);
    if !log_likelihood.is_finite() {
        return Err(HmmError::NumericalUnderflow);
    }

    let mut log_beta = vec![vec![f64::NEG_INFINITY; n]; t_len];
    log_beta[t_len - 1] = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            for j in 0..n {
                cand[j] = log_trans[i][j] + log_b[t + 1][j] + log_beta[t + 1][j];
            }
            log_beta[t][i] = logsumexp(&cand);
        }
    }

    Ok(ForwardBackward {
        log_alpha,
        log_beta,
        log_likelihood,
    })
}

/// Finds the single most likely state path. Ties at any step resolve to the
/// lower state index, making the path deterministic.
pub fn viterbi(model: &GmmHmm, seq: &FeatureSequence) -> Result<ViterbiPath, HmmError> {
    model.check_sequence(seq)?;
    let log_b = model.log_emissions(seq);
    let t_len = log_b.len();
    let n = model.n_states();
    let log_pi: Vec<f64> = model.pi.iter().map(|&p| p.ln()).collect();
    let log_trans: Vec<Vec<f64>> = model
        .trans
        .iter()
        .map(|row| row.iter().map(|&p| p.ln()).collect())
        .collect();

    let mut delta = vec![vec![f64::NEG_INFINITY; n]; t_len];
    let mut psi = vec![vec![0usize; n]; t_len];
    for j in 0..n {
        delta[0][j] = log_pi[j] + log_b[0][j];
    }
    for t in 1..t_len {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for i in 0..n {
                let score = delta[t - 1][i] + log_trans[i][j];
                // Strict comparison keeps the lowest index on exact ties.
                if score > best {
                    best = score;
                    arg = i;
                }
            }
            delta[t][j] = best + log_b[t][j];
            psi[t][j] = arg;
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for (j, &score) in delta[t_len - 1].iter().enumerate() {
        if score > best {
            best = score;
            last = j;
        }
    }

    let mut states = vec![0usize; t_len];
    states[t_len - 1] = last;
    for t in (0..t_len - 1).rev() {
        states[t] = psi[t + 1][states[t + 1]];
    }

    Ok(ViterbiPath {
        states,
        log_prob: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{gmm_log_density, GaussianComponent, Topology};

    fn seq(frames: Vec<Vec<f64>>) -> FeatureSequence {
        FeatureSequence::new(frames, 0).unwrap()
    }

    fn comp(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> GaussianComponent {
        GaussianComponent { weight, mean, var }
    }

    /// Two-state ergodic model with well-separated 1-D emissions.
    fn toy_model() -> GmmHmm {
        GmmHmm {
            pi: vec![0.6, 0.4],
            trans: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            states: vec![
                vec![comp(1.0, vec![0.0], vec![1.0])],
                vec![
                    comp(0.5, vec![3.0], vec![0.5]),
                    comp(0.5, vec![5.0], vec![2.0]),
                ],
            ],
            topology: Topology::Ergodic,
            dim: 1,
            var_floor: vec![1e-9],
        }
    }

    /// Brute force: enumerate all N^T state paths and sum (or maximize)
    /// their joint densities in plain log arithmetic.
    fn enumerate_paths(model: &GmmHmm, frames: &[Vec<f64>]) -> (f64, f64, Vec<usize>) {
        let n = model.n_states();
        let t_len = frames.len();
        let mut total_terms = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut best_path = vec![0; t_len];
        let n_paths = n.pow(t_len as u32);
        for code in 0..n_paths {
            let mut path = Vec::with_capacity(t_len);
            let mut c = code;
            for _ in 0..t_len {
                path.push(c % n);
                c /= n;
            }
            let mut lp = model.pi[path[0]].ln()
                + gmm_log_density(&frames[0], &model.states[path[0]]).unwrap();
            for t in 1..t_len {
                lp += model.trans[path[t - 1]][path[t]].ln()
                    + gmm_log_density(&frames[t], &model.states[path[t]]).unwrap();
            }
            total_terms.push(lp);
            if lp > best {
                best = lp;
                best_path = path;
            }
        }
        (crate::util::logsumexp(&total_terms), best, best_path)
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let model = toy_model();
        let frames = vec![vec![0.1], vec![2.9], vec![4.5], vec![0.2], vec![5.1]];
        let (oracle_ll, _, _) = enumerate_paths(&model, &frames);
        let fb = forward_backward(&model, &seq(frames)).unwrap();
        assert!(
            (fb.log_likelihood - oracle_ll).abs() < 1e-10,
            "{} vs {}",
            fb.log_likelihood,
            oracle_ll
        );
    }

    #[test]
    fn backward_recomputes_the_same_likelihood() {
        let model = toy_model();
        let frames = vec![vec![0.5], vec![3.5], vec![4.0], vec![-0.3]];
        let fb = forward_backward(&model, &seq(frames.clone())).unwrap();
        // P(O) = sum_j pi_j b_j(o_0) beta_0(j)
        let terms: Vec<f64> = (0..model.n_states())
            .map(|j| {
                model.pi[j].ln()
                    + gmm_log_density(&frames[0], &model.states[j]).unwrap()
                    + fb.log_beta[0][j]
            })
            .collect();
        let via_beta = crate::util::logsumexp(&terms);
        assert!((fb.log_likelihood - via_beta).abs() < 1e-10);
    }

    #[test]
    fn alpha_beta_product_is_constant_over_time() {
        let model = toy_model();
        let frames = vec![
            vec![0.0],
            vec![3.0],
            vec![5.0],
            vec![1.0],
            vec![4.0],
            vec![0.5],
        ];
        let t_len = frames.len();
        let fb = forward_backward(&model, &seq(frames)).unwrap();
        for t in 0..t_len {
            let terms: Vec<f64> = (0..model.n_states())
                .map(|j| fb.log_alpha[t][j] + fb.log_beta[t][j])
                .collect();
            let ll_t = crate::util::logsumexp(&terms);
            assert!((ll_t - fb.log_likelihood).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn viterbi_matches_exhaustive_best_path() {
        let model = toy_model();
        let frames = vec![vec![0.1], vec![2.9], vec![4.5], vec![0.2], vec![5.1]];
        let (_, oracle_best, oracle_path) = enumerate_paths(&model, &frames);
        let vp = viterbi(&model, &seq(frames)).unwrap();
        assert!((vp.log_prob - oracle_best).abs() < 1e-10);
        assert_eq!(vp.states, oracle_path);
    }

    #[test]
    fn viterbi_breaks_ties_toward_lower_state() {
        // Two indistinguishable states: every path has equal probability.
        let model = GmmHmm {
            pi: vec![0.5, 0.5],
            trans: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            states: vec![
                vec![comp(1.0, vec![0.0], vec![1.0])],
                vec![comp(1.0, vec![0.0], vec![1.0])],
            ],
            topology: Topology::Ergodic,
            dim: 1,
            var_floor: vec![1e-9],
        };
        let vp = viterbi(&model, &seq(vec![vec![0.0]; 4])).unwrap();
        assert_eq!(vp.states, vec![0, 0, 0, 0]);
    }

    #[test]
    fn left_to_right_zeros_stay_exact() {
        let model = GmmHmm {
            pi: vec![1.0, 0.0],
            trans: vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            states: vec![
                vec![comp(1.0, vec![0.0], vec![1.0])],
                vec![comp(1.0, vec![4.0], vec![1.0])],
            ],
            topology: Topology::LeftToRight,
            dim: 1,
            var_floor: vec![1e-9],
        };
        let frames = vec![vec![0.0], vec![4.0], vec![4.0]];
        let fb = forward_backward(&model, &seq(frames.clone())).unwrap();
        // State 1 is unreachable at t=0: alpha must be exactly -inf.
        assert_eq!(fb.log_alpha[0][1], f64::NEG_INFINITY);
        let (oracle_ll, _, oracle_path) = enumerate_paths(&model, &frames);
        assert!((fb.log_likelihood - oracle_ll).abs() < 1e-10);
        let vp = viterbi(&model, &seq(frames)).unwrap();
        assert_eq!(vp.states, oracle_path);
        assert_eq!(vp.states, vec![0, 1, 1]);
    }

    #[test]
    fn single_frame_sequence_reduces_to_weighted_density() {
        let model = toy_model();
        let frames = vec![vec![1.7]];
        let fb = forward_backward(&model, &seq(frames.clone())).unwrap();
        let expected = crate::util::logsumexp(
            &(0..2)
                .map(|j| model.pi[j].ln() + gmm_log_density(&frames[0], &model.states[j]).unwrap())
                .collect::<Vec<_>>(),
        );
        assert!((fb.log_likelihood - expected).abs() < 1e-12);
    }

    #[test]
    fn long_sequence_does_not_underflow() {
        let model = toy_model();
        let frames: Vec<Vec<f64>> = (0..2000)
            .map(|i| vec![if i % 2 == 0 { 0.0 } else { 4.0 }])
            .collect();
        let fb = forward_backward(&model, &seq(frames)).unwrap();
        assert!(fb.log_likelihood.is_finite());
        assert!(fb.log_likelihood < 0.0);
    }

    #[test]
    fn dimension_and_empty_checks() {
        let model = toy_model();
        assert!(matches!(
            forward_backward(&model, &seq(vec![vec![0.0, 1.0]])),
            Err(HmmError::DimensionMismatch { .. })
        ));
        let empty = FeatureSequence::new(Vec::new(), 0);
        // An empty sequence is rejected at construction time already.
        assert!(empty.is_err());
    }
}
