//! Model initialization and Baum-Welch (EM) re-estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec;
use crate::frontend::FeatureSequence;
use crate::util::is_positive;

use super::decode::forward_backward_from_emissions;
use super::kmeans::kmeans;
use super::{GaussianComponent, GmmHmm, HmmError, Topology, TrainConfig};

/// Minimum soft occupancy below which a component's Gaussian parameters are
/// frozen instead of re-estimated from near-zero statistics.
const MIN_OCCUPANCY: f64 = 1e-6;

/// Trained model plus the per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GmmHmm,
    /// `history[i]` is the total data log-likelihood under the model as it
    /// stood *before* update `i`.
    pub history: Vec<f64>,
}

fn check_dataset(seqs: &[FeatureSequence]) -> Result<usize, HmmError> {
    let Some(first) = seqs.first() else {
        return Err(HmmError::InsufficientData { needed: 1, got: 0 });
    };
    let dim = first.dim();
    for seq in seqs {
        if seq.dim() != dim {
            return Err(HmmError::DimensionMismatch {
                expected: dim,
                got: seq.dim(),
            });
        }
    }
    Ok(dim)
}

fn check_config(cfg: &TrainConfig) -> Result<(), HmmError> {
    if cfg.n_states == 0 {
        return Err(HmmError::InvalidModel("n_states must be at least 1".into()));
    }
    if cfg.n_mix == 0 {
        return Err(HmmError::InvalidModel("n_mix must be at least 1".into()));
    }
    if cfg.max_iters == 0 {
        return Err(HmmError::InvalidModel(
            "max_iters must be at least 1".into(),
        ));
    }
    if !is_positive(cfg.rel_tol) || !is_positive(cfg.var_floor_ratio) {
        return Err(HmmError::InvalidModel(
            "rel_tol and var_floor_ratio must be positive".into(),
        ));
    }
    Ok(())
}

/// Builds a starting model from the data.
///
/// Frames are split evenly across states by position within each sequence,
/// then each state's pool is clustered into `n_mix` groups whose moments
/// seed the Gaussians. The variance floor is fixed here as
/// `var_floor_ratio` times the global per-dimension variance and travels
/// with the model from then on.
pub fn init_model(seqs: &[FeatureSequence], cfg: &TrainConfig) -> Result<GmmHmm, HmmError> {
    check_config(cfg)?;
    let dim = check_dataset(seqs)?;
    let n = cfg.n_states;
    let total_frames: usize = seqs.iter().map(|s| s.len()).sum();
    if total_frames < n * cfg.n_mix {
        return Err(HmmError::InsufficientData {
            needed: n * cfg.n_mix,
            got: total_frames,
        });
    }

    // Global per-dimension population variance -> variance floor.
    let mut gmean = vec![0.0; dim];
    for seq in seqs {
        for frame in seq.frames() {
            for (g, &v) in gmean.iter_mut().zip(frame) {
                *g += v;
            }
        }
    }
    for g in &mut gmean {
        *g /= total_frames as f64;
    }
    let mut gvar = vec![0.0; dim];
    for seq in seqs {
        for frame in seq.frames() {
            for (g, (&v, &m)) in gvar.iter_mut().zip(frame.iter().zip(&gmean)) {
                let d = v - m;
                *g += d * d;
            }
        }
    }
    let var_floor: Vec<f64> = gvar
        .iter()
        .map(|&v| (cfg.var_floor_ratio * v / total_frames as f64).max(1e-12))
        .collect();

    // Pool frames per state by uniform segmentation of each sequence.
    let mut pools: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for seq in seqs {
        let t_len = seq.len();
        for (s, pool) in pools.iter_mut().enumerate() {
            let start = s * t_len / n;
            let end = (s + 1) * t_len / n;
            for frame in &seq.frames()[start..end] {
                pool.push(frame.as_slice());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = Vec::with_capacity(n);
    for pool in &pools {
        if pool.len() < cfg.n_mix {
            return Err(HmmError::InsufficientData {
                needed: cfg.n_mix,
                got: pool.len(),
            });
        }
        let clusters = kmeans(pool, cfg.n_mix, &mut rng);
        let raw: Vec<f64> = clusters
            .iter()
            .map(|c| c.count as f64 / pool.len() as f64)
            .collect();
        let wsum: f64 = raw.iter().sum();
        let mixture: Vec<GaussianComponent> = clusters
            .iter()
            .zip(&raw)
            .map(|(c, &w)| GaussianComponent {
                weight: w / wsum,
                mean: c.mean.clone(),
                var: c
                    .var
                    .iter()
                    .zip(&var_floor)
                    .map(|(&v, &f)| v.max(f))
                    .collect(),
            })
            .collect();
        states.push(mixture);
    }

    let (pi, trans) = match cfg.topology {
        Topology::Ergodic => {
            let u = 1.0 / n as f64;
            (vec![u; n], vec![vec![u; n]; n])
        }
        Topology::LeftToRight => {
            let mut pi = vec![0.0; n];
            pi[0] = 1.0;
            let mut trans = vec![vec![0.0; n]; n];
            for (i, row) in trans.iter_mut().enumerate() {
                if i + 1 < n {
                    row[i] = 0.5;
                    row[i + 1] = 0.5;
                } else {
                    row[i] = 1.0;
                }
            }
            (pi, trans)
        }
    };

    let model = GmmHmm {
        pi,
        trans,
        states,
        topology: cfg.topology,
        dim,
        var_floor,
    };
    model.validate()?;
    Ok(model)
}

/// Soft-count statistics gathered from one sequence.
struct SeqStats {
    log_likelihood: f64,
    /// State posterior at t = 0.
    pi: Vec<f64>,
    /// Expected transition counts, N x N.
    trans_num: Vec<Vec<f64>>,
    /// Soft occupancy per state and component.
    occ: Vec<Vec<f64>>,
    /// Responsibility-weighted feature sums, per state/component/dim.
    mean_num: Vec<Vec<Vec<f64>>>,
    /// Responsibility-weighted squared-feature sums.
    sq_num: Vec<Vec<Vec<f64>>>,
}

fn collect_stats(model: &GmmHmm, seq: &FeatureSequence) -> Result<SeqStats, HmmError> {
    model.check_sequence(seq)?;
    let n = model.n_states();
    let dim = model.dim;
    let t_len = seq.len();
    let frames = seq.frames();

    // Per-component and mixture log densities for every frame.
    let mut log_comp = vec![Vec::with_capacity(n); t_len];
    let mut log_b = vec![vec![0.0; n]; t_len];
    for (t, frame) in frames.iter().enumerate() {
        for (j, mixture) in model.states.iter().enumerate() {
            let per: Vec<f64> = mixture
                .iter()
                .map(|c| c.weight.ln() + c.log_density(frame))
                .collect();
            log_b[t][j] = crate::util::logsumexp(&per);
            log_comp[t].push(per);
        }
    }

    let fb = forward_backward_from_emissions(model, &log_b)?;
    let ll = fb.log_likelihood;
    let log_trans: Vec<Vec<f64>> = model
        .trans
        .iter()
        .map(|row| row.iter().map(|&p| p.ln()).collect())
        .collect();

    let m_of = |j: usize| model.states[j].len();
    let mut stats = SeqStats {
        log_likelihood: ll,
        pi: vec![0.0; n],
        trans_num: vec![vec![0.0; n]; n],
        occ: (0..n).map(|j| vec![0.0; m_of(j)]).collect(),
        mean_num: (0..n).map(|j| vec![vec![0.0; dim]; m_of(j)]).collect(),
        sq_num: (0..n).map(|j| vec![vec![0.0; dim]; m_of(j)]).collect(),
    };

    for t in 0..t_len {
        for j in 0..n {
            let gamma = (fb.log_alpha[t][j] + fb.log_beta[t][j] - ll).exp();
            if t == 0 {
                stats.pi[j] = gamma;
            }
            if gamma <= 0.0 {
                continue;
            }
            for (m, &lc) in log_comp[t][j].iter().enumerate() {
                let r = gamma * (lc - log_b[t][j]).exp();
                if r <= 0.0 {
                    continue;
                }
                stats.occ[j][m] += r;
                for (d, &x) in frames[t].iter().enumerate() {
                    stats.mean_num[j][m][d] += r * x;
                    stats.sq_num[j][m][d] += r * x * x;
                }
            }
        }
        if t + 1 < t_len {
            for (i, log_trans_row) in log_trans.iter().enumerate() {
                for j in 0..n {
                    let v = fb.log_alpha[t][i]
                        + log_trans_row[j]
                        + log_b[t + 1][j]
                        + fb.log_beta[t + 1][j]
                        - ll;
                    if v > f64::NEG_INFINITY {
                        stats.trans_num[i][j] += v.exp();
                    }
                }
            }
        }
    }
    Ok(stats)
}

fn merge_into(total: &mut SeqStats, part: &SeqStats) {
    total.log_likelihood += part.log_likelihood;
    for (a, &b) in total.pi.iter_mut().zip(&part.pi) {
        *a += b;
    }
    for (ar, br) in total.trans_num.iter_mut().zip(&part.trans_num) {
        for (a, &b) in ar.iter_mut().zip(br) {
            *a += b;
        }
    }
    for j in 0..total.occ.len() {
        for m in 0..total.occ[j].len() {
            total.occ[j][m] += part.occ[j][m];
            for d in 0..total.mean_num[j][m].len() {
                total.mean_num[j][m][d] += part.mean_num[j][m][d];
                total.sq_num[j][m][d] += part.sq_num[j][m][d];
            }
        }
    }
}

/// One full EM step over all sequences.
///
/// Returns the re-estimated model together with the total log-likelihood of
/// the *input* model on the data, so a training loop can watch convergence
/// without an extra forward pass. Sequences are scored independently (in
/// parallel when the `parallel` feature is on) and their statistics merged
/// in input order, so the result never depends on scheduling.
pub fn baum_welch_update(
    model: &GmmHmm,
    seqs: &[FeatureSequence],
) -> Result<(GmmHmm, f64), HmmError> {
    model.validate()?;
    check_dataset(seqs)?;
    let n = model.n_states();

    let partials = exec::map_ordered(seqs, |seq| collect_stats(model, seq));
    let mut iter = partials.into_iter();
    let mut total = iter.next().unwrap()?;
    for part in iter {
        merge_into(&mut total, &part?);
    }

    // Initial distribution.
    let pi_sum: f64 = total.pi.iter().sum();
    let pi: Vec<f64> = total.pi.iter().map(|&v| v / pi_sum).collect();

    // Transitions; a row with no expected outgoing counts keeps its old
    // probabilities.
    let mut trans = Vec::with_capacity(n);
    for i in 0..n {
        let row_sum: f64 = total.trans_num[i].iter().sum();
        if row_sum > 0.0 {
            trans.push(total.trans_num[i].iter().map(|&v| v / row_sum).collect());
        } else {
            trans.push(model.trans[i].clone());
        }
    }

    // Emission mixtures.
    let mut states = Vec::with_capacity(n);
    for j in 0..n {
        let occ = &total.occ[j];
        let state_occ: f64 = occ.iter().sum();
        if state_occ <= 0.0 {
            states.push(model.states[j].clone());
            continue;
        }
        let old = &model.states[j];
        let mut raw_weights = Vec::with_capacity(occ.len());
        let mut mixture = Vec::with_capacity(occ.len());
        for (m, &o) in occ.iter().enumerate() {
            if o < MIN_OCCUPANCY {
                // Too little evidence: freeze the component as it was.
                raw_weights.push(old[m].weight);
                mixture.push(old[m].clone());
                continue;
            }
            raw_weights.push(o / state_occ);
            let mean: Vec<f64> = total.mean_num[j][m].iter().map(|&v| v / o).collect();
            let var: Vec<f64> = total.sq_num[j][m]
                .iter()
                .zip(&mean)
                .zip(&model.var_floor)
                .map(|((&sq, &mu), &floor)| (sq / o - mu * mu).max(floor))
                .collect();
            mixture.push(GaussianComponent {
                weight: 0.0, // filled in below after normalization
                mean,
                var,
            });
        }
        let wsum: f64 = raw_weights.iter().sum();
        for (c, &w) in mixture.iter_mut().zip(&raw_weights) {
            c.weight = w / wsum;
        }
        states.push(mixture);
    }

    let next = GmmHmm {
        pi,
        trans,
        states,
        topology: model.topology,
        dim: model.dim,
        var_floor: model.var_floor.clone(),
    };
    next.validate()?;
    Ok((next, total.log_likelihood))
}

/// Initializes a model and refines it with EM until the relative
/// log-likelihood gain drops below `rel_tol` or `max_iters` is reached.
pub fn train(seqs: &[FeatureSequence], cfg: &TrainConfig) -> Result<TrainOutcome, HmmError> {
    let mut model = init_model(seqs, cfg)?;
    let mut history = Vec::with_capacity(cfg.max_iters);
    for _ in 0..cfg.max_iters {
        let (next, ll) = baum_welch_update(&model, seqs)?;
        model = next;
        if let Some(&prev) = history.last() {
            history.push(ll);
            let gain = (ll - prev) / prev.abs().max(1e-12);
            if gain < cfg.rel_tol {
                break;
            }
        } else {
            history.push(ll);
        }
    }
    Ok(TrainOutcome { model, history })
}
