//! Release gate for the engine. Each test checks one numbered criterion of
//! the acceptance checklist and prints a single `criterion N (...): PASS` or
//! `FAIL` line (visible with `cargo test --test acceptance -- --nocapture`).
//! Criterion 9, the command-line session contract, lives in the CLI crate's
//! integration tests; everything else is here.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voicegate_core::audio::AudioSignal;
use voicegate_core::eval::{run_experiment, synth_corpus, ExperimentConfig, ExperimentOutcome};
use voicegate_core::frontend::{power_spectrum, FeatureSequence};
use voicegate_core::hmm::{
    baum_welch_update, forward_backward, init_model, train, viterbi, GaussianComponent, GmmHmm,
    Topology, TrainConfig,
};
use voicegate_core::speaker::{
    load_profile, save_profile, threshold_from_scores, utterance_features, verify_features,
    EnrollStats, SpeakerProfile,
};

/// Prints the per-criterion verdict line, then fails the test on FAIL.
fn report(n: u32, label: &str, pass: bool, detail: String) {
    println!(
        "criterion {n} ({label}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({label}) failed: {detail}");
}

fn experiment(snr_db: Option<f64>) -> (ExperimentOutcome, Duration) {
    let started = Instant::now();
    let outcome = run_experiment(&ExperimentConfig {
        snr_db,
        ..ExperimentConfig::default()
    })
    .expect("default experiment must run");
    (outcome, started.elapsed())
}

fn clean_experiment() -> &'static (ExperimentOutcome, Duration) {
    static CLEAN: OnceLock<(ExperimentOutcome, Duration)> = OnceLock::new();
    CLEAN.get_or_init(|| experiment(None))
}

fn noisy_experiment() -> &'static (ExperimentOutcome, Duration) {
    static NOISY: OnceLock<(ExperimentOutcome, Duration)> = OnceLock::new();
    NOISY.get_or_init(|| experiment(Some(5.0)))
}

#[test]
fn c1_end_to_end_noise_degradation() {
    let (clean, clean_time) = clean_experiment();
    let (noisy, noisy_time) = noisy_experiment();
    let acc_clean = clean.metrics.identification_accuracy;
    let acc_noisy = noisy.metrics.identification_accuracy;
    let total = *clean_time + *noisy_time;

    let pass =
        acc_clean >= 0.90 && acc_clean - acc_noisy >= 0.10 && total <= Duration::from_secs(60);
    report(
        1,
        "end-to-end noise degradation",
        pass,
        format!(
            "clean accuracy {acc_clean:.3} (need >= 0.90), 5 dB accuracy {acc_noisy:.3} \
             (need a drop >= 0.10), runtime {total:.2?} (need <= 60 s)"
        ),
    );
}

#[test]
fn c2_verification_error_rises_with_noise() {
    let (clean, _) = clean_experiment();
    let (noisy, _) = noisy_experiment();
    let clean_err = clean.metrics.far + clean.metrics.frr;
    let noisy_err = noisy.metrics.far + noisy.metrics.frr;
    report(
        2,
        "verification error rises with noise",
        noisy_err > clean_err,
        format!("FAR+FRR at 5 dB = {noisy_err:.3} must strictly exceed clean = {clean_err:.3}"),
    );
}

/// Builds a random valid model within the small-fixture bounds.
fn random_small_model(rng: &mut ChaCha8Rng, n_states: usize, n_mix: usize, dim: usize) -> GmmHmm {
    let topology = if rng.random::<bool>() {
        Topology::Ergodic
    } else {
        Topology::LeftToRight
    };
    let arc_allowed = |from: usize, to: usize| match topology {
        Topology::Ergodic => true,
        Topology::LeftToRight => to == from || to == from + 1,
    };

    let pi = match topology {
        Topology::LeftToRight => {
            let mut pi = vec![0.0; n_states];
            pi[0] = 1.0;
            pi
        }
        Topology::Ergodic => normalized_positive(rng, n_states),
    };
    let trans = (0..n_states)
        .map(|i| {
            let weights: Vec<f64> = (0..n_states)
                .map(|j| {
                    if arc_allowed(i, j) {
                        0.1 + rng.random::<f64>()
                    } else {
                        0.0
                    }
                })
                .collect();
            let sum: f64 = weights.iter().sum();
            weights.iter().map(|w| w / sum).collect()
        })
        .collect();
    let states = (0..n_states)
        .map(|_| {
            let weights = normalized_positive(rng, n_mix);
            weights
                .into_iter()
                .map(|weight| GaussianComponent {
                    weight,
                    mean: (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                    var: (0..dim).map(|_| 0.5 + rng.random::<f64>()).collect(),
                })
                .collect()
        })
        .collect();
    let model = GmmHmm {
        pi,
        trans,
        states,
        topology,
        dim,
        var_floor: vec![1e-12; dim],
    };
    model.validate().expect("random fixture must be valid");
    model
}

fn normalized_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|w| w / sum).collect()
}

/// Probability-domain density of one frame under one state's mixture,
/// written independently of the crate's log-domain code.
fn oracle_emission(model: &GmmHmm, state: usize, x: &[f64]) -> f64 {
    model.states[state]
        .iter()
        .map(|c| {
            let mut density = c.weight;
            for ((&xv, &m), &v) in x.iter().zip(&c.mean).zip(&c.var) {
                let d = xv - m;
                density *= (-0.5 * d * d / v).exp() / (2.0 * PI * v).sqrt();
            }
            density
        })
        .sum()
}

/// Enumerates every state path: total likelihood and the best path.
fn oracle_enumerate(model: &GmmHmm, frames: &[Vec<f64>]) -> (f64, f64, Vec<usize>) {
    let n = model.n_states();
    let t_len = frames.len();
    let mut total = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut best_path = Vec::new();
    let n_paths = n.pow(t_len as u32);
    for code in 0..n_paths {
        let mut path = Vec::with_capacity(t_len);
        let mut rest = code;
        for _ in 0..t_len {
            path.push(rest % n);
            rest /= n;
        }
        path.reverse(); // lexicographic order over paths
        let mut p = model.pi[path[0]] * oracle_emission(model, path[0], &frames[0]);
        for t in 1..t_len {
            p *= model.trans[path[t - 1]][path[t]] * oracle_emission(model, path[t], &frames[t]);
        }
        total += p;
        if p > best {
            best = p;
            best_path = path;
        }
    }
    (total, best, best_path)
}

#[test]
fn c3_forward_viterbi_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let mut worst_fwd = 0.0f64;
    let mut worst_vit = 0.0f64;
    let mut path_mismatches = 0usize;

    for _ in 0..200 {
        let n_states = rng.random_range(1..=3);
        let n_mix = rng.random_range(1..=2);
        let dim = rng.random_range(1..=2);
        let t_len = rng.random_range(1..=6);
        let model = random_small_model(&mut rng, n_states, n_mix, dim);
        let frames: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let seq = FeatureSequence::new(frames.clone(), 0).unwrap();

        let (total, best, best_path) = oracle_enumerate(&model, &frames);
        let fb = forward_backward(&model, &seq).unwrap();
        let vit = viterbi(&model, &seq).unwrap();

        worst_fwd = worst_fwd.max((fb.log_likelihood - total.ln()).abs());
        worst_vit = worst_vit.max((vit.log_prob - best.ln()).abs());
        if vit.states != best_path {
            path_mismatches += 1;
        }
    }

    let pass = worst_fwd <= 1e-8 && worst_vit <= 1e-8 && path_mismatches == 0;
    report(
        3,
        "forward/Viterbi match brute force",
        pass,
        format!(
            "max forward deviation {worst_fwd:.3e}, max Viterbi score deviation {worst_vit:.3e} \
             (need <= 1e-8), {path_mismatches} path mismatches (need 0) over 200 fixtures"
        ),
    );
}

/// Stochasticity/floor invariants checked to an explicit tolerance,
/// independent of the crate's own `validate`.
fn invariant_violation(model: &GmmHmm, tol: f64) -> Option<String> {
    let pi_sum: f64 = model.pi.iter().sum();
    if (pi_sum - 1.0).abs() > tol {
        return Some(format!("pi sums to {pi_sum}"));
    }
    for (i, row) in model.trans.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Some(format!("transition row {i} sums to {sum}"));
        }
    }
    for (j, mixture) in model.states.iter().enumerate() {
        let wsum: f64 = mixture.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > tol {
            return Some(format!("state {j} weights sum to {wsum}"));
        }
        for c in mixture {
            for (d, &v) in c.var.iter().enumerate() {
                if v < model.var_floor[d] - tol {
                    return Some(format!("state {j} var[{d}] = {v} below floor"));
                }
            }
        }
    }
    None
}

#[test]
fn c4_em_monotonic_and_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe4);
    let mut worst_drop = 0.0f64;
    let mut violation = None;

    for run in 0..100 {
        let dim = rng.random_range(1..=2);
        let n_seqs = rng.random_range(2..=3);
        let seqs: Vec<FeatureSequence> = (0..n_seqs)
            .map(|_| {
                let t_len = rng.random_range(8..=14);
                let frames = (0..t_len)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                    .collect();
                FeatureSequence::new(frames, 0).unwrap()
            })
            .collect();
        let cfg = TrainConfig {
            n_states: rng.random_range(1..=2),
            n_mix: rng.random_range(1..=2),
            topology: if rng.random::<bool>() {
                Topology::Ergodic
            } else {
                Topology::LeftToRight
            },
            max_iters: 5,
            rel_tol: 1e-12,
            var_floor_ratio: 1e-3,
            seed: run,
        };
        let outcome = train(&seqs, &cfg).unwrap();
        for pair in outcome.history.windows(2) {
            worst_drop = worst_drop.max(pair[0] - pair[1]);
        }
        if violation.is_none() {
            violation =
                invariant_violation(&outcome.model, 1e-9).map(|v| format!("run {run}: {v}"));
        }
    }

    let pass = worst_drop <= 1e-8 && violation.is_none();
    report(
        4,
        "EM monotonicity and invariants",
        pass,
        format!(
            "worst log-likelihood drop {worst_drop:.3e} (need <= 1e-8); invariants: {}",
            violation.unwrap_or_else(|| "ok".into())
        ),
    );
}

#[test]
fn c5_fft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xff7);
    let mut worst_rel = 0.0f64;
    let mut size = 2usize;
    while size <= 1024 {
        let frame: Vec<f64> = (0..size).map(|_| rng.random::<f64>() - 0.5).collect();
        let fast = power_spectrum(&frame, size).unwrap();
        // Independent O(N^2) reference.
        let slow: Vec<f64> = (0..=size / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / size as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        let scale = slow.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            worst_rel = worst_rel.max((a - b).abs() / scale);
        }
        size *= 2;
    }
    report(
        5,
        "FFT matches naive DFT",
        worst_rel <= 1e-9,
        format!("worst relative deviation {worst_rel:.3e} over sizes 2..=1024 (need <= 1e-9)"),
    );
}

#[test]
fn c6_amplitude_invariant_features_and_decisions() {
    let cfg = ExperimentConfig::default();
    let (clean, _) = clean_experiment();
    let corpus = synth_corpus(&cfg.specs, cfg.utterances_per_speaker, cfg.seed).unwrap();

    let mut worst_feature_delta = 0.0f64;
    let mut decision_flips = 0usize;

    for utterances in corpus.values() {
        for utt in &utterances[cfg.n_enroll..] {
            let base = utterance_features(utt, &cfg.frontend, &cfg.vad).unwrap();
            let base_decisions: Vec<bool> = clean
                .profiles
                .iter()
                .map(|p| verify_features(p, &base).unwrap().accepted)
                .collect();

            for scale in [0.1, 0.5, 2.0, 10.0] {
                let scaled = AudioSignal {
                    samples: utt.samples.iter().map(|s| s * scale).collect(),
                    sample_rate_hz: utt.sample_rate_hz,
                };
                let feats = utterance_features(&scaled, &cfg.frontend, &cfg.vad).unwrap();
                for (a, b) in feats.frames().iter().zip(base.frames()) {
                    for (x, y) in a.iter().zip(b) {
                        worst_feature_delta = worst_feature_delta.max((x - y).abs());
                    }
                }
                for (profile, &expected) in clean.profiles.iter().zip(&base_decisions) {
                    if verify_features(profile, &feats).unwrap().accepted != expected {
                        decision_flips += 1;
                    }
                }
            }
        }
    }

    let pass = worst_feature_delta <= 1e-8 && decision_flips == 0;
    report(
        6,
        "amplitude-invariant features and decisions",
        pass,
        format!(
            "worst feature delta {worst_feature_delta:.3e} (need <= 1e-8), \
             {decision_flips} verification decisions changed (need 0)"
        ),
    );
}

#[test]
fn c7_degenerate_em_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7);
    let dim = 3;
    let frames: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect())
        .collect();
    let seqs = [FeatureSequence::new(frames.clone(), 0).unwrap()];
    let cfg = TrainConfig {
        n_states: 1,
        n_mix: 1,
        max_iters: 1,
        ..TrainConfig::default()
    };
    let init = init_model(&seqs, &cfg).unwrap();
    let (updated, _) = baum_welch_update(&init, &seqs).unwrap();

    let n = frames.len() as f64;
    let mut worst = 0.0f64;
    for d in 0..dim {
        let mean: f64 = frames.iter().map(|f| f[d]).sum::<f64>() / n;
        let var: f64 = frames.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
        let var = var.max(updated.var_floor[d]);
        worst = worst.max((updated.states[0][0].mean[d] - mean).abs());
        worst = worst.max((updated.states[0][0].var[d] - var).abs());
    }
    report(
        7,
        "degenerate EM closed form",
        worst <= 1e-9,
        format!("worst deviation from sample mean/variance {worst:.3e} (need <= 1e-9)"),
    );
}

fn models_bit_identical(a: &GmmHmm, b: &GmmHmm) -> bool {
    let floats_eq = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    };
    floats_eq(&a.pi, &b.pi)
        && a.trans.len() == b.trans.len()
        && a.trans.iter().zip(&b.trans).all(|(x, y)| floats_eq(x, y))
        && a.states.len() == b.states.len()
        && a.states.iter().zip(&b.states).all(|(sa, sb)| {
            sa.len() == sb.len()
                && sa.iter().zip(sb).all(|(ca, cb)| {
                    ca.weight.to_bits() == cb.weight.to_bits()
                        && floats_eq(&ca.mean, &cb.mean)
                        && floats_eq(&ca.var, &cb.var)
                })
        })
        && a.topology == b.topology
        && a.dim == b.dim
        && floats_eq(&a.var_floor, &b.var_floor)
}

#[test]
fn c8_profile_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x8);
    let mut failures = Vec::new();

    for i in 0..100 {
        let n_states = rng.random_range(1..=3);
        let n_mix = rng.random_range(1..=4);
        let dim = [1usize, 2, 5, 13][rng.random_range(0..4)];
        let model = random_small_model(&mut rng, n_states, n_mix, dim);

        let n_utts = rng.random_range(2..=6);
        let scores: Vec<f64> = (0..n_utts).map(|_| -20.0 * rng.random::<f64>()).collect();
        let k = [1.0, 1.5, 2.0, 2.5, 3.0][rng.random_range(0..5)];
        let (mean, std, threshold) = threshold_from_scores(&scores, k);
        let frontend_config = voicegate_core::frontend::FrontendConfig::default();
        let profile = SpeakerProfile {
            speaker_id: format!("spk{i:03}"),
            model,
            threshold,
            threshold_k: k,
            enroll_stats: EnrollStats {
                n_utterances: n_utts,
                mean_score: mean,
                std_score: std,
            },
            frontend_fingerprint: frontend_config.fingerprint(),
            frontend_config,
            format_version: 1,
        };

        let path = dir.path().join(format!("{}.profile", profile.speaker_id));
        save_profile(&profile, &path).unwrap();
        let loaded = load_profile(&path).unwrap();

        let ok = models_bit_identical(&profile.model, &loaded.model)
            && loaded.threshold.to_bits() == profile.threshold.to_bits()
            && loaded.threshold_k.to_bits() == profile.threshold_k.to_bits()
            && loaded.enroll_stats.mean_score.to_bits()
                == profile.enroll_stats.mean_score.to_bits()
            && loaded.enroll_stats.std_score.to_bits() == profile.enroll_stats.std_score.to_bits()
            && loaded.enroll_stats.n_utterances == profile.enroll_stats.n_utterances
            && loaded.speaker_id == profile.speaker_id
            && loaded.frontend_fingerprint == profile.frontend_fingerprint
            && loaded.frontend_config == profile.frontend_config;
        if !ok {
            failures.push(i);
        }
    }

    report(
        8,
        "profile round-trip",
        failures.is_empty(),
        format!("profiles {failures:?} did not round-trip bit-identically"),
    );
}
