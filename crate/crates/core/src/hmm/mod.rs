//! Continuous-density Gaussian-mixture hidden Markov models.
//!
//! States emit feature vectors through diagonal-covariance Gaussian
//! mixtures. All probability arithmetic runs in the log domain with
//! log-sum-exp, so long utterances cannot underflow and structural zeros
//! stay exact (-inf) through every operation.

mod decode;
mod kmeans;
mod train;

pub use decode::{forward_backward, viterbi, ForwardBackward, ViterbiPath};
pub use train::{baum_welch_update, init_model, train, TrainOutcome};

use thiserror::Error;

use crate::frontend::FeatureSequence;
use crate::util::logsumexp;

const LN_2PI: f64 = 1.8378770664093453;

/// Transition structure of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Each state may hold or advance one step; entry pinned to state 0.
    LeftToRight,
    /// Every transition allowed.
    Ergodic,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::LeftToRight => "left_to_right",
            Topology::Ergodic => "ergodic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left_to_right" => Some(Topology::LeftToRight),
            "ergodic" => Some(Topology::Ergodic),
            _ => None,
        }
    }

    fn arc_allowed(self, from: usize, to: usize) -> bool {
        match self {
            Topology::Ergodic => true,
            Topology::LeftToRight => to == from || to == from + 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty observation sequence")]
    EmptySequence,
    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("numerical underflow: model cannot score the data")]
    NumericalUnderflow,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// One diagonal-covariance Gaussian with its mixture weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianComponent {
    /// log N(x; mean, diag(var)). Dimensions must already agree.
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xv, &m), &v) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xv - m;
            acc += LN_2PI + v.ln() + d * d / v;
        }
        -0.5 * acc
    }
}

/// Log density of a Gaussian mixture at `x`, via log-sum-exp over the
/// weighted components.
pub fn gmm_log_density(x: &[f64], mixture: &[GaussianComponent]) -> Result<f64, HmmError> {
    if mixture.is_empty() {
        return Err(HmmError::InvalidModel("empty mixture".into()));
    }
    for c in mixture {
        if c.mean.len() != x.len() || c.var.len() != x.len() {
            return Err(HmmError::DimensionMismatch {
                expected: c.mean.len(),
                got: x.len(),
            });
        }
    }
    let terms: Vec<f64> = mixture
        .iter()
        .map(|c| c.weight.ln() + c.log_density(x))
        .collect();
    Ok(logsumexp(&terms))
}

/// A Gaussian-mixture HMM over `dim`-dimensional feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmHmm {
    /// Initial state distribution, length N.
    pub pi: Vec<f64>,
    /// Row-stochastic N x N transition matrix.
    pub trans: Vec<Vec<f64>>,
    /// Per-state emission mixtures; weights per state sum to 1.
    pub states: Vec<Vec<GaussianComponent>>,
    pub topology: Topology,
    pub dim: usize,
    /// Per-dimension lower bound applied to variances during training;
    /// fixed at initialization from the training data.
    pub var_floor: Vec<f64>,
}

impl GmmHmm {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// Checks every structural invariant: stochastic rows, topology zeros,
    /// unit mixture weights, floored and positive variances.
    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.n_states();
        let fail = |msg: String| Err(HmmError::InvalidModel(msg));
        if n == 0 || self.trans.len() != n || self.states.len() != n {
            return fail("inconsistent state count".into());
        }
        if self.var_floor.len() != self.dim {
            return fail("variance floor dimension mismatch".into());
        }
        let pi_sum: f64 = self.pi.iter().sum();
        if (pi_sum - 1.0).abs() > 1e-9 || self.pi.iter().any(|&p| p < 0.0) {
            return fail(format!("pi sums to {pi_sum}, not 1"));
        }
        for (i, row) in self.trans.iter().enumerate() {
            if row.len() != n {
                return fail(format!("transition row {i} has wrong length"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return fail(format!("transition row {i} sums to {sum}, not 1"));
            }
            for (j, &p) in row.iter().enumerate() {
                if !self.topology.arc_allowed(i, j) && p != 0.0 {
                    return fail(format!("forbidden arc {i}->{j} has probability {p}"));
                }
            }
        }
        if self.topology == Topology::LeftToRight
            && (self.pi[0] != 1.0 || self.pi[1..].iter().any(|&p| p != 0.0))
        {
            return fail("left-to-right models must start in state 0".into());
        }
        for (j, mixture) in self.states.iter().enumerate() {
            if mixture.is_empty() {
                return fail(format!("state {j} has no components"));
            }
            let wsum: f64 = mixture.iter().map(|c| c.weight).sum();
            if (wsum - 1.0).abs() > 1e-9 {
                return fail(format!("state {j} mixture weights sum to {wsum}"));
            }
            for (m, c) in mixture.iter().enumerate() {
                if c.weight <= 0.0 {
                    return fail(format!("state {j} component {m} has weight {}", c.weight));
                }
                if c.mean.len() != self.dim || c.var.len() != self.dim {
                    return fail(format!("state {j} component {m} dimension mismatch"));
                }
                if c.var.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                    return fail(format!("state {j} component {m} has a bad variance"));
                }
                if c.var
                    .iter()
                    .zip(&self.var_floor)
                    .any(|(&v, &f)| v < f - 1e-12)
                {
                    return fail(format!("state {j} component {m} breaks the variance floor"));
                }
                if c.mean.iter().any(|&v| !v.is_finite()) {
                    return fail(format!("state {j} component {m} has a non-finite mean"));
                }
            }
        }
        Ok(())
    }

    fn check_sequence(&self, seq: &FeatureSequence) -> Result<(), HmmError> {
        if seq.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        if seq.dim() != self.dim {
            return Err(HmmError::DimensionMismatch {
                expected: self.dim,
                got: seq.dim(),
            });
        }
        Ok(())
    }

    /// T x N matrix of per-state mixture log densities.
    fn log_emissions(&self, seq: &FeatureSequence) -> Vec<Vec<f64>> {
        seq.frames()
            .iter()
            .map(|x| {
                self.states
                    .iter()
                    .map(|mixture| {
                        let terms: Vec<f64> = mixture
                            .iter()
                            .map(|c| c.weight.ln() + c.log_density(x))
                            .collect();
                        logsumexp(&terms)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Training knobs left open by the model structure itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_states: usize,
    pub n_mix: usize,
    pub topology: Topology,
    pub max_iters: usize,
    /// Stop when the relative log-likelihood improvement falls below this.
    pub rel_tol: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub var_floor_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Text-independent speaker mode: a single ergodic state with an
        // 8-component mixture, i.e. a plain GMM.
        Self {
            n_states: 1,
            n_mix: 8,
            topology: Topology::Ergodic,
            max_iters: 20,
            rel_tol: 1e-4,
            var_floor_ratio: 1e-3,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Conventional small left-to-right setup for isolated-word use.
    pub fn isolated_word() -> Self {
        Self {
            n_states: 5,
            n_mix: 2,
            topology: Topology::LeftToRight,
            ..Self::default()
        }
    }
}
