//! Noise-robustness evaluation harness.
//!
//! Provides the three ingredients for a desk-scale adverse-condition study:
//! seeded additive white Gaussian noise at an exact SNR, a deterministic
//! source-filter corpus synthesizer standing in for real recordings, and
//! trial scoring that reports identification accuracy alongside
//! verification FAR/FRR.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::audio::{load_wav, AudioError, AudioSignal, VadConfig};
use crate::exec;
use crate::frontend::FrontendConfig;
use crate::hmm::TrainConfig;
use crate::speaker::{
    enroll, identify_features, is_valid_speaker_id, utterance_features, verify_features,
    SpeakerError, SpeakerProfile, DEFAULT_THRESHOLD_K,
};
use crate::util::{derive_seed, is_positive};

/// Salt domain separating noise-injection seeds from synthesis seeds.
const NOISE_SALT: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("signal has zero power; SNR is undefined")]
    SilentSignal,
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("trial set has neither genuine nor impostor trials")]
    EmptyTrialSet,
    #[error("trial references speaker {0:?} which is not in the registry")]
    UnknownSpeaker(String),
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("manifest line {line}: {msg}")]
    BadManifest { line: usize, msg: String },
    #[error(transparent)]
    Speaker(#[from] SpeakerError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One verification attempt: a signal, who it claims to be, and who really
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub claimed_id: String,
    pub true_id: String,
    pub signal: AudioSignal,
}

/// A labelled set of genuine and impostor trials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    /// Trials where the claim is truthful (`claimed_id == true_id`).
    pub genuine: Vec<Trial>,
    /// Trials where the claim is false (`claimed_id != true_id`).
    pub impostor: Vec<Trial>,
}

/// Aggregate results of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Fraction of genuine trials whose closed-set identification picked
    /// the true speaker. Zero when there are no genuine trials.
    pub identification_accuracy: f64,
    /// Impostor acceptances / impostor trials (zero when none were run).
    pub far: f64,
    /// Genuine rejections / genuine trials (zero when none were run).
    pub frr: f64,
    /// (true_id, predicted_id) -> count over genuine identification trials.
    pub confusion: BTreeMap<(String, String), usize>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl Metrics {
    /// Machine-readable key/value rendering; keys are emitted in a fixed
    /// order so two identical runs produce byte-identical documents.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "identification_accuracy = {:?}",
            self.identification_accuracy
        );
        let _ = writeln!(out, "far = {:?}", self.far);
        let _ = writeln!(out, "frr = {:?}", self.frr);
        let _ = writeln!(out, "n_genuine = {}", self.n_genuine);
        let _ = writeln!(out, "n_impostor = {}", self.n_impostor);
        for ((true_id, predicted), count) in &self.confusion {
            let _ = writeln!(out, "confusion.{true_id}.{predicted} = {count}");
        }
        out
    }
}

/// Adds seeded zero-mean white Gaussian noise so that the realized
/// signal-to-noise ratio equals `snr_db` exactly (the noise is rescaled by
/// its own measured power, not its nominal variance).
pub fn add_white_noise(
    signal: &AudioSignal,
    snr_db: f64,
    seed: u64,
) -> Result<AudioSignal, EvalError> {
    let n = signal.samples.len();
    let signal_power: f64 = signal.samples.iter().map(|&v| v * v).sum::<f64>() / n as f64;
    if !is_positive(signal_power) {
        return Err(EvalError::SilentSignal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let noise_power: f64 = noise.iter().map(|&v| v * v).sum::<f64>() / n as f64;
    let target_power = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (target_power / noise_power).sqrt();
    Ok(AudioSignal {
        samples: signal
            .samples
            .iter()
            .zip(&noise)
            .map(|(&s, &v)| s + scale * v)
            .collect(),
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// Recipe for one synthetic speaker: a pitched impulse train shaped by
/// three formant resonators, mimicking a vocal tract whose geometry is
/// unique to the speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpeakerSpec {
    pub speaker_id: String,
    /// Fundamental frequency in Hz (50..=400).
    pub f0_hz: f64,
    /// Resonance centers, strictly increasing, below Nyquist.
    pub formants_hz: [f64; 3],
    pub formant_bandwidths_hz: [f64; 3],
    /// Per-utterance random perturbation of f0 and formants, in percent.
    pub jitter_pct: f64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

impl SynthSpeakerSpec {
    fn validate(&self) -> Result<(), EvalError> {
        let fail = |msg: String| Err(EvalError::InvalidSpec(msg));
        if !is_valid_speaker_id(&self.speaker_id) {
            return fail(format!("bad speaker id {:?}", self.speaker_id));
        }
        if !(50.0..=400.0).contains(&self.f0_hz) {
            return fail(format!("f0 {} outside 50..=400 Hz", self.f0_hz));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let jitter = self.jitter_pct / 100.0;
        if !(0.0..0.5).contains(&jitter) {
            return fail(format!("jitter {}% outside 0..50%", self.jitter_pct));
        }
        let f = &self.formants_hz;
        if !(f[0] < f[1] && f[1] < f[2]) {
            return fail(format!("formants {f:?} must be strictly increasing"));
        }
        // Worst case: per-utterance jitter plus double-depth intra-utterance
        // drift, both upward.
        if f[2] * (1.0 + jitter) * (1.0 + 2.0 * jitter) >= nyquist {
            return fail(format!("formant {} too close to Nyquist {nyquist}", f[2]));
        }
        if self.formant_bandwidths_hz.iter().any(|&b| b <= 0.0) {
            return fail("formant bandwidths must be positive".into());
        }
        if !is_positive(self.duration_s) {
            return fail("duration must be positive".into());
        }
        if !(8000..=48000).contains(&self.sample_rate_hz) {
            return fail(format!("sample rate {} unsupported", self.sample_rate_hz));
        }
        Ok(())
    }
}

/// Eight well-separated synthetic speakers: distinct fundamentals and
/// vowel-like formant layouts, 0.5 s at 16 kHz, 2% jitter.
pub fn default_speaker_specs() -> Vec<SynthSpeakerSpec> {
    let table: [(&str, f64, [f64; 3]); 8] = [
        ("spk1", 95.0, [270.0, 2290.0, 3010.0]),
        ("spk2", 110.0, [300.0, 870.0, 2240.0]),
        ("spk3", 125.0, [390.0, 1990.0, 2550.0]),
        ("spk4", 140.0, [440.0, 1020.0, 2240.0]),
        ("spk5", 155.0, [530.0, 1840.0, 2480.0]),
        ("spk6", 175.0, [570.0, 840.0, 2410.0]),
        ("spk7", 195.0, [660.0, 1720.0, 2410.0]),
        ("spk8", 215.0, [730.0, 1090.0, 2440.0]),
    ];
    table
        .iter()
        .map(|&(id, f0, formants)| SynthSpeakerSpec {
            speaker_id: id.to_string(),
            f0_hz: f0,
            formants_hz: formants,
            formant_bandwidths_hz: [70.0, 110.0, 160.0],
            jitter_pct: 2.0,
            duration_s: 0.5,
            sample_rate_hz: 16000,
        })
        .collect()
}

/// Slow sinusoidal modulation of a base value, used for intra-utterance
/// pitch vibrato and formant drift.
#[derive(Debug, Clone, Copy)]
struct Modulation {
    depth: f64,
    rate_hz: f64,
    phase: f64,
}

impl Modulation {
    fn draw(rng: &mut ChaCha8Rng, depth: f64, min_rate: f64, max_rate: f64) -> Self {
        Self {
            depth,
            rate_hz: min_rate + (max_rate - min_rate) * rng.random::<f64>(),
            phase: std::f64::consts::TAU * rng.random::<f64>(),
        }
    }

    fn at(&self, t_s: f64) -> f64 {
        1.0 + self.depth * (std::f64::consts::TAU * self.rate_hz * t_s + self.phase).sin()
    }
}

/// Two-pole resonator with a slowly drifting center frequency, applied in
/// place: y[n] = x[n] + a1*y[n-1] + a2*y[n-2].
fn apply_resonator(
    samples: &mut [f64],
    center_hz: f64,
    bandwidth_hz: f64,
    rate: f64,
    drift: Modulation,
) {
    let r = (-std::f64::consts::PI * bandwidth_hz / rate).exp();
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for (i, s) in samples.iter_mut().enumerate() {
        let theta = std::f64::consts::TAU * center_hz * drift.at(i as f64 / rate) / rate;
        let a1 = 2.0 * r * theta.cos();
        let y = *s + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *s = y;
    }
}

fn synth_utterance(spec: &SynthSpeakerSpec, seed: u64) -> Result<AudioSignal, EvalError> {
    let rate = spec.sample_rate_hz as f64;
    let n = (spec.duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = spec.jitter_pct / 100.0;
    let mut perturb = |v: f64| v * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0));

    // Each take gets its own draw of pitch and formant positions...
    let f0 = perturb(spec.f0_hz);
    let formants = spec.formants_hz.map(&mut perturb);
    // ...plus movement *within* the take (vibrato on the pitch, drift on
    // the formants), so a take sweeps part of the speaker's natural spread
    // instead of freezing one spectral snapshot.
    let vibrato = Modulation::draw(&mut rng, 1.0 * jitter, 4.0, 6.0);
    let drifts: [Modulation; 3] =
        std::array::from_fn(|_| Modulation::draw(&mut rng, 1.0 * jitter, 2.0, 5.0));
    let noise_seed: u64 = rng.random();

    // Glottal source: unit impulses at the instantaneous pitch period.
    let mut samples = vec![0.0; n];
    let mut phase = 1.0; // fire immediately so short signals are not empty
    for (i, s) in samples.iter_mut().enumerate() {
        if phase >= 1.0 {
            *s = 1.0;
            phase -= 1.0;
        }
        phase += f0 * vibrato.at(i as f64 / rate) / rate;
    }
    // Vocal tract: cascade of three formant resonators.
    for ((f, bw), drift) in formants.iter().zip(&spec.formant_bandwidths_hz).zip(drifts) {
        apply_resonator(&mut samples, *f, *bw, rate, drift);
    }
    let voiced = AudioSignal {
        samples,
        sample_rate_hz: spec.sample_rate_hz,
    };
    // Breath noise 40 dB below the voiced signal, then peak-normalize.
    let mut out = add_white_noise(&voiced, 40.0, noise_seed)?;
    let peak = out.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for s in &mut out.samples {
        *s *= 0.5 / peak;
    }
    Ok(out)
}

/// Generates `utterances_per_speaker` takes for every spec. The output is a
/// pure function of the specs and the seed; utterances differ from each
/// other through seeded jitter and noise only.
pub fn synth_corpus(
    specs: &[SynthSpeakerSpec],
    utterances_per_speaker: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<AudioSignal>>, EvalError> {
    if specs.is_empty() {
        return Err(EvalError::InvalidSpec("no speaker specs given".into()));
    }
    if utterances_per_speaker == 0 {
        return Err(EvalError::InvalidSpec(
            "utterances_per_speaker must be at least 1".into(),
        ));
    }
    for spec in specs {
        spec.validate()?;
    }
    let mut corpus = BTreeMap::new();
    for (i, spec) in specs.iter().enumerate() {
        let speaker_seed = derive_seed(seed, i as u64);
        let utts = exec::map_ordered(&(0..utterances_per_speaker).collect::<Vec<_>>(), |&j| {
            synth_utterance(spec, derive_seed(speaker_seed, j as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        if corpus.insert(spec.speaker_id.clone(), utts).is_some() {
            return Err(EvalError::InvalidSpec(format!(
                "duplicate speaker id {:?}",
                spec.speaker_id
            )));
        }
    }
    Ok(corpus)
}

/// Scores a full trial set against a registry.
///
/// Genuine trials drive both closed-set identification (accuracy, confusion
/// matrix) and verification against the true identity (FRR); impostor
/// trials drive verification against the false claim (FAR). Trials are
/// independent, so they are scored concurrently and merged in input order.
pub fn evaluate(
    registry: &[SpeakerProfile],
    trials: &TrialSet,
    frontend_cfg: &FrontendConfig,
    vad_cfg: &VadConfig,
) -> Result<Metrics, EvalError> {
    if registry.is_empty() {
        return Err(SpeakerError::EmptyRegistry.into());
    }
    if trials.genuine.is_empty() && trials.impostor.is_empty() {
        return Err(EvalError::EmptyTrialSet);
    }
    let known: BTreeSet<&str> = registry.iter().map(|p| p.speaker_id.as_str()).collect();
    for t in trials.genuine.iter().chain(&trials.impostor) {
        for id in [&t.claimed_id, &t.true_id] {
            if !known.contains(id.as_str()) {
                return Err(EvalError::UnknownSpeaker(id.clone()));
            }
        }
    }
    for t in &trials.genuine {
        if t.claimed_id != t.true_id {
            return Err(EvalError::InvalidTrial(format!(
                "genuine trial claims {:?} but is labelled {:?}",
                t.claimed_id, t.true_id
            )));
        }
    }
    for t in &trials.impostor {
        if t.claimed_id == t.true_id {
            return Err(EvalError::InvalidTrial(format!(
                "impostor trial for {:?} claims its own identity",
                t.claimed_id
            )));
        }
    }
    let by_id: BTreeMap<&str, &SpeakerProfile> = registry
        .iter()
        .map(|p| (p.speaker_id.as_str(), p))
        .collect();

    // (true_id, predicted_id, accepted_by_true_model) per genuine trial.
    let genuine_results = exec::map_ordered(&trials.genuine, |t| -> Result<_, EvalError> {
        let features = utterance_features(&t.signal, frontend_cfg, vad_cfg)?;
        let id_result = identify_features(registry, &features)?;
        let v = verify_features(by_id[t.claimed_id.as_str()], &features)?;
        Ok((t.true_id.clone(), id_result.best_speaker_id, v.accepted))
    });
    let impostor_results = exec::map_ordered(&trials.impostor, |t| -> Result<_, EvalError> {
        let features = utterance_features(&t.signal, frontend_cfg, vad_cfg)?;
        let v = verify_features(by_id[t.claimed_id.as_str()], &features)?;
        Ok(v.accepted)
    });

    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut correct = 0usize;
    let mut genuine_rejections = 0usize;
    for r in genuine_results {
        let (true_id, predicted, accepted) = r?;
        if predicted == true_id {
            correct += 1;
        }
        if !accepted {
            genuine_rejections += 1;
        }
        *confusion.entry((true_id, predicted)).or_insert(0) += 1;
    }
    let mut impostor_acceptances = 0usize;
    for r in impostor_results {
        if r? {
            impostor_acceptances += 1;
        }
    }

    let n_genuine = trials.genuine.len();
    let n_impostor = trials.impostor.len();
    let rate = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(Metrics {
        identification_accuracy: rate(correct, n_genuine),
        far: rate(impostor_acceptances, n_impostor),
        frr: rate(genuine_rejections, n_genuine),
        confusion,
        n_genuine,
        n_impostor,
    })
}

// ---------------------------------------------------------------------------
// Trial manifests: `genuine|impostor <claimed_id> <true_id> <wav_path>`
// per line, paths relative to the manifest file.
// ---------------------------------------------------------------------------

/// One line of a trial manifest, before the audio is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub genuine: bool,
    pub claimed_id: String,
    pub true_id: String,
    /// WAV path relative to the manifest location.
    pub wav_path: String,
}

/// Writes a manifest document for the given entries.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    for e in entries {
        let kind = if e.genuine { "genuine" } else { "impostor" };
        let _ = writeln!(out, "{kind} {} {} {}", e.claimed_id, e.true_id, e.wav_path);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a manifest and loads every referenced WAV file.
pub fn load_manifest(path: &Path) -> Result<TrialSet, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut set = TrialSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kind, claimed, true_id, wav_path] = fields.as_slice() else {
            return Err(EvalError::BadManifest {
                line: idx + 1,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        };
        let genuine = match *kind {
            "genuine" => true,
            "impostor" => false,
            other => {
                return Err(EvalError::BadManifest {
                    line: idx + 1,
                    msg: format!("unknown trial kind {other:?}"),
                })
            }
        };
        if genuine != (claimed == true_id) {
            return Err(EvalError::BadManifest {
                line: idx + 1,
                msg: "trial kind contradicts the id labels".into(),
            });
        }
        let signal = load_wav(base.join(wav_path))?;
        let trial = Trial {
            claimed_id: claimed.to_string(),
            true_id: true_id.to_string(),
            signal,
        };
        if genuine {
            set.genuine.push(trial);
        } else {
            set.impostor.push(trial);
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// The canned end-to-end experiment: synthesize, enroll, trial, score.
// ---------------------------------------------------------------------------

/// Everything an end-to-end run needs; `Default` reproduces the standard
/// desk-scale study (8 speakers x 10 utterances, 5 enroll / 5 test).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub specs: Vec<SynthSpeakerSpec>,
    pub utterances_per_speaker: usize,
    /// Leading utterances per speaker used for enrollment; the rest test.
    pub n_enroll: usize,
    /// When set, white noise is added to *test* utterances only.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub frontend: FrontendConfig,
    pub vad: VadConfig,
    pub train: TrainConfig,
    pub threshold_k: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            specs: default_speaker_specs(),
            utterances_per_speaker: 10,
            n_enroll: 5,
            snr_db: None,
            seed: 42,
            frontend: FrontendConfig::default(),
            vad: VadConfig::default(),
            train: TrainConfig::default(),
            threshold_k: DEFAULT_THRESHOLD_K,
        }
    }
}

/// Result of [`run_experiment`]: the enrolled registry and its metrics.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub profiles: Vec<SpeakerProfile>,
    pub metrics: Metrics,
}

/// Synthesizes the corpus, enrolls every speaker on the leading utterances,
/// builds genuine trials from each held-out utterance and impostor trials
/// by claiming every other enrolled identity, then scores the lot.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, EvalError> {
    if cfg.n_enroll < 2 || cfg.n_enroll >= cfg.utterances_per_speaker {
        return Err(EvalError::InvalidSpec(format!(
            "n_enroll {} must be in 2..utterances_per_speaker ({})",
            cfg.n_enroll, cfg.utterances_per_speaker
        )));
    }
    let corpus = synth_corpus(&cfg.specs, cfg.utterances_per_speaker, cfg.seed)?;
    let speakers: Vec<(&String, &Vec<AudioSignal>)> = corpus.iter().collect();

    let profiles = exec::map_ordered(&speakers, |(id, utts)| {
        enroll(
            id,
            &utts[..cfg.n_enroll],
            &cfg.frontend,
            &cfg.vad,
            &cfg.train,
            cfg.threshold_k,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let ids: Vec<&String> = speakers.iter().map(|(id, _)| *id).collect();
    let mut trials = TrialSet::default();
    for (spk_idx, (id, utts)) in speakers.iter().enumerate() {
        for (utt_idx, utt) in utts[cfg.n_enroll..].iter().enumerate() {
            let signal = match cfg.snr_db {
                Some(snr) => {
                    let s = derive_seed(
                        derive_seed(cfg.seed, NOISE_SALT + spk_idx as u64),
                        utt_idx as u64,
                    );
                    add_white_noise(utt, snr, s)?
                }
                None => utt.clone(),
            };
            trials.genuine.push(Trial {
                claimed_id: (*id).clone(),
                true_id: (*id).clone(),
                signal: signal.clone(),
            });
            for other in &ids {
                if other != id {
                    trials.impostor.push(Trial {
                        claimed_id: (**other).clone(),
                        true_id: (*id).clone(),
                        signal: signal.clone(),
                    });
                }
            }
        }
    }

    let metrics = evaluate(&profiles, &trials, &cfg.frontend, &cfg.vad)?;
    Ok(ExperimentOutcome { profiles, metrics })
}
