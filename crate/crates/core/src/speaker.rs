//! Speaker enrollment, verification, identification, and profile storage.
//!
//! Enrollment runs every utterance through the shared front-end pipeline
//! (preprocess, endpoint trimming, MFCC extraction), trains a per-speaker
//! model, and derives a speaker-specific acceptance threshold from the
//! spread of the speaker's own enrollment scores. Verification replays the
//! identical pipeline: a claimed identity is accepted when the per-frame
//! log-likelihood clears the stored threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio::{self, AudioError, AudioSignal, VadConfig};
use crate::exec;
use crate::frontend::{self, FeatureSequence, FrontendConfig, FrontendError};
use crate::hmm::{
    forward_backward, train, GaussianComponent, GmmHmm, HmmError, Topology, TrainConfig,
};
use crate::util::mean_and_pop_std;

/// Current on-disk profile format.
pub const PROFILE_FORMAT_VERSION: u32 = 1;

/// Default multiplier `k` in `threshold = mean - k * std`.
pub const DEFAULT_THRESHOLD_K: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SpeakerError {
    #[error("need at least {needed} enrollment utterances, got {got}")]
    TooFewUtterances { needed: usize, got: usize },
    #[error("speaker id {0:?} is invalid: ids are 1-64 chars of [A-Za-z0-9_-]")]
    InvalidSpeakerId(String),
    #[error("front-end config mismatch: profile was enrolled with fingerprint {expected:016x}, caller supplied {got:016x}")]
    ConfigMismatch { expected: u64, got: u64 },
    #[error("no enrolled speakers in the registry")]
    EmptyRegistry,
    #[error("unsupported profile format version {got} (supported: {PROFILE_FORMAT_VERSION})")]
    UnsupportedVersion { got: u32 },
    #[error("corrupt profile: {0}")]
    CorruptProfile(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Summary of the enrollment scores a threshold was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrollStats {
    pub n_utterances: usize,
    pub mean_score: f64,
    pub std_score: f64,
}

/// A stored reference model for one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub model: GmmHmm,
    /// Acceptance threshold in per-frame log-likelihood units; always equals
    /// `mean_score - threshold_k * std_score`.
    pub threshold: f64,
    pub threshold_k: f64,
    pub enroll_stats: EnrollStats,
    /// Fingerprint of the front-end config used at enrollment.
    pub frontend_fingerprint: u64,
    /// Full echo of that config, kept so stored profiles are self-describing.
    pub frontend_config: FrontendConfig,
    pub format_version: u32,
}

/// Outcome of a verification attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationResult {
    pub accepted: bool,
    /// Per-frame average log-likelihood of the utterance under the model.
    pub score: f64,
    pub threshold: f64,
    /// `score - threshold`; acceptance means the margin is non-negative.
    pub margin: f64,
}

/// Outcome of closed-set identification.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub best_speaker_id: String,
    /// Every profile once, sorted by descending score; exact ties fall back
    /// to lexicographic speaker id order.
    pub ranked_scores: Vec<(String, f64)>,
}

/// Speaker ids double as registry file names, so they are restricted to a
/// filesystem-safe alphabet.
pub fn is_valid_speaker_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Mean, population standard deviation, and the resulting threshold
/// `mean - k * std` for a set of enrollment scores.
pub fn threshold_from_scores(scores: &[f64], k: f64) -> (f64, f64, f64) {
    let (mean, std) = mean_and_pop_std(scores);
    (mean, std, mean - k * std)
}

/// The shared utterance pipeline: preprocess, trim endpoints, extract MFCCs.
/// Enrollment and every later verification must agree on this exactly.
pub fn utterance_features(
    signal: &AudioSignal,
    frontend_cfg: &FrontendConfig,
    vad_cfg: &VadConfig,
) -> Result<FeatureSequence, SpeakerError> {
    let pre = audio::preprocess(signal, audio::DEFAULT_PREEMPHASIS)?;
    let trimmed = audio::trim_endpoints(&pre, vad_cfg)?;
    Ok(frontend::extract_mfcc(&trimmed, frontend_cfg)?)
}

/// Per-frame average log-likelihood of `features` under `model`.
pub fn score(model: &GmmHmm, features: &FeatureSequence) -> Result<f64, SpeakerError> {
    let fb = forward_backward(model, features)?;
    Ok(fb.log_likelihood / features.len() as f64)
}

/// Trains a reference model from enrollment utterances and fixes the
/// speaker's acceptance threshold at `mean - threshold_k * std` of the
/// speaker's own per-utterance scores.
pub fn enroll(
    speaker_id: &str,
    utterances: &[AudioSignal],
    frontend_cfg: &FrontendConfig,
    vad_cfg: &VadConfig,
    train_cfg: &TrainConfig,
    threshold_k: f64,
) -> Result<SpeakerProfile, SpeakerError> {
    if !is_valid_speaker_id(speaker_id) {
        return Err(SpeakerError::InvalidSpeakerId(speaker_id.to_string()));
    }
    if utterances.len() < 2 {
        return Err(SpeakerError::TooFewUtterances {
            needed: 2,
            got: utterances.len(),
        });
    }
    let features = exec::map_ordered(utterances, |u| utterance_features(u, frontend_cfg, vad_cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let outcome = train(&features, train_cfg)?;
    let scores = features
        .iter()
        .map(|f| score(&outcome.model, f))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean_score, std_score, threshold) = threshold_from_scores(&scores, threshold_k);

    Ok(SpeakerProfile {
        speaker_id: speaker_id.to_string(),
        model: outcome.model,
        threshold,
        threshold_k,
        enroll_stats: EnrollStats {
            n_utterances: utterances.len(),
            mean_score,
            std_score,
        },
        frontend_fingerprint: frontend_cfg.fingerprint(),
        frontend_config: frontend_cfg.clone(),
        format_version: PROFILE_FORMAT_VERSION,
    })
}

fn check_fingerprint(profile: &SpeakerProfile, cfg: &FrontendConfig) -> Result<(), SpeakerError> {
    let got = cfg.fingerprint();
    if got != profile.frontend_fingerprint {
        return Err(SpeakerError::ConfigMismatch {
            expected: profile.frontend_fingerprint,
            got,
        });
    }
    Ok(())
}

/// Verification on already-extracted features. The features must come from
/// the same front-end config the profile was enrolled with; the boundary is
/// inclusive: a score exactly on the threshold is accepted.
pub fn verify_features(
    profile: &SpeakerProfile,
    features: &FeatureSequence,
) -> Result<VerificationResult, SpeakerError> {
    if features.config_fingerprint() != profile.frontend_fingerprint {
        return Err(SpeakerError::ConfigMismatch {
            expected: profile.frontend_fingerprint,
            got: features.config_fingerprint(),
        });
    }
    let s = score(&profile.model, features)?;
    Ok(VerificationResult {
        accepted: s >= profile.threshold,
        score: s,
        threshold: profile.threshold,
        margin: s - profile.threshold,
    })
}

/// Scores an utterance against a claimed identity.
pub fn verify(
    profile: &SpeakerProfile,
    utterance: &AudioSignal,
    frontend_cfg: &FrontendConfig,
    vad_cfg: &VadConfig,
) -> Result<VerificationResult, SpeakerError> {
    check_fingerprint(profile, frontend_cfg)?;
    let features = utterance_features(utterance, frontend_cfg, vad_cfg)?;
    verify_features(profile, &features)
}

/// Closed-set identification on already-extracted features.
pub fn identify_features(
    profiles: &[SpeakerProfile],
    features: &FeatureSequence,
) -> Result<IdentificationResult, SpeakerError> {
    if profiles.is_empty() {
        return Err(SpeakerError::EmptyRegistry);
    }
    let mut ranked = Vec::with_capacity(profiles.len());
    for p in profiles {
        if features.config_fingerprint() != p.frontend_fingerprint {
            return Err(SpeakerError::ConfigMismatch {
                expected: p.frontend_fingerprint,
                got: features.config_fingerprint(),
            });
        }
        ranked.push((p.speaker_id.clone(), score(&p.model, features)?));
    }
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(IdentificationResult {
        best_speaker_id: ranked[0].0.clone(),
        ranked_scores: ranked,
    })
}

/// Closed-set identification: scores the utterance against every profile
/// and ranks them. Thresholds play no part here.
pub fn identify(
    profiles: &[SpeakerProfile],
    utterance: &AudioSignal,
    frontend_cfg: &FrontendConfig,
    vad_cfg: &VadConfig,
) -> Result<IdentificationResult, SpeakerError> {
    if profiles.is_empty() {
        return Err(SpeakerError::EmptyRegistry);
    }
    for p in profiles {
        check_fingerprint(p, frontend_cfg)?;
    }
    let features = utterance_features(utterance, frontend_cfg, vad_cfg)?;
    identify_features(profiles, &features)
}

// ---------------------------------------------------------------------------
// Persistence: a flat `key = value` text format, one file per speaker.
// Floats are written with Rust's shortest round-trip formatting, so a
// load(save(p)) trip reproduces every parameter bit for bit.
// ---------------------------------------------------------------------------

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    let joined = values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(out, "{key} = {joined}");
}

fn profile_to_string(p: &SpeakerProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format_version = {}", p.format_version);
    let _ = writeln!(out, "speaker_id = {}", p.speaker_id);
    let _ = writeln!(out, "threshold = {:?}", p.threshold);
    let _ = writeln!(out, "threshold_k = {:?}", p.threshold_k);
    let _ = writeln!(out, "enroll.n_utterances = {}", p.enroll_stats.n_utterances);
    let _ = writeln!(out, "enroll.mean_score = {:?}", p.enroll_stats.mean_score);
    let _ = writeln!(out, "enroll.std_score = {:?}", p.enroll_stats.std_score);
    let _ = writeln!(out, "frontend.fingerprint = {}", p.frontend_fingerprint);
    let f = &p.frontend_config;
    let _ = writeln!(out, "frontend.frame_ms = {:?}", f.frame_ms);
    let _ = writeln!(out, "frontend.hop_ms = {:?}", f.hop_ms);
    let _ = writeln!(out, "frontend.fft_size = {}", f.fft_size);
    let _ = writeln!(out, "frontend.n_filters = {}", f.n_filters);
    let _ = writeln!(out, "frontend.n_coeffs = {}", f.n_coeffs);
    let _ = writeln!(out, "frontend.f_min_hz = {:?}", f.f_min_hz);
    let _ = writeln!(out, "frontend.f_max_hz = {:?}", f.f_max_hz);
    let _ = writeln!(out, "frontend.use_cmn = {}", f.use_cmn);
    let m = &p.model;
    let _ = writeln!(out, "model.topology = {}", m.topology.as_str());
    let _ = writeln!(out, "model.dim = {}", m.dim);
    let _ = writeln!(out, "model.n_states = {}", m.n_states());
    push_floats(&mut out, "model.var_floor", &m.var_floor);
    push_floats(&mut out, "model.pi", &m.pi);
    for (i, row) in m.trans.iter().enumerate() {
        push_floats(&mut out, &format!("model.trans.{i}"), row);
    }
    for (j, mixture) in m.states.iter().enumerate() {
        let _ = writeln!(out, "model.state.{j}.n_components = {}", mixture.len());
        for (c, comp) in mixture.iter().enumerate() {
            let _ = writeln!(out, "model.state.{j}.{c}.weight = {:?}", comp.weight);
            push_floats(&mut out, &format!("model.state.{j}.{c}.mean"), &comp.mean);
            push_floats(&mut out, &format!("model.state.{j}.{c}.var"), &comp.var);
        }
    }
    out
}

/// Writes the profile atomically: the document lands in a sibling temp file
/// first and is renamed into place, so readers never see a torn profile.
pub fn save_profile(profile: &SpeakerProfile, path: &Path) -> Result<(), SpeakerError> {
    let doc = profile_to_string(profile);
    let file_name = path
        .file_name()
        .ok_or_else(|| SpeakerError::Io(std::io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, doc)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct ProfileDoc(BTreeMap<String, String>);

impl ProfileDoc {
    fn parse(text: &str) -> Result<Self, SpeakerError> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(SpeakerError::CorruptProfile(format!(
                    "line {}: expected `key = value`",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(SpeakerError::CorruptProfile(format!(
                    "duplicate key {key:?}"
                )));
            }
        }
        Ok(Self(map))
    }

    fn get(&self, key: &str) -> Result<&str, SpeakerError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| SpeakerError::CorruptProfile(format!("missing key {key:?}")))
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T, SpeakerError> {
        self.get(key)?.parse().map_err(|_| {
            SpeakerError::CorruptProfile(format!("key {key:?} has an unparseable value"))
        })
    }

    fn floats(&self, key: &str, expected_len: usize) -> Result<Vec<f64>, SpeakerError> {
        let raw = self.get(key)?;
        let values: Result<Vec<f64>, _> = raw.split_whitespace().map(str::parse).collect();
        let values = values.map_err(|_| {
            SpeakerError::CorruptProfile(format!("key {key:?} has a non-numeric entry"))
        })?;
        if values.len() != expected_len {
            return Err(SpeakerError::CorruptProfile(format!(
                "key {key:?} has {} values, expected {expected_len}",
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Loads and fully re-validates a stored profile. Anything that violates a
/// model or profile invariant is rejected as corrupt rather than repaired.
pub fn load_profile(path: &Path) -> Result<SpeakerProfile, SpeakerError> {
    let text = std::fs::read_to_string(path)?;
    let doc = ProfileDoc::parse(&text)?;

    let version: u32 = doc.parse_value("format_version")?;
    if version != PROFILE_FORMAT_VERSION {
        return Err(SpeakerError::UnsupportedVersion { got: version });
    }

    let speaker_id: String = doc.get("speaker_id")?.to_string();
    if !is_valid_speaker_id(&speaker_id) {
        return Err(SpeakerError::CorruptProfile(format!(
            "invalid speaker id {speaker_id:?}"
        )));
    }

    let frontend_config = FrontendConfig {
        frame_ms: doc.parse_value("frontend.frame_ms")?,
        hop_ms: doc.parse_value("frontend.hop_ms")?,
        fft_size: doc.parse_value("frontend.fft_size")?,
        n_filters: doc.parse_value("frontend.n_filters")?,
        n_coeffs: doc.parse_value("frontend.n_coeffs")?,
        f_min_hz: doc.parse_value("frontend.f_min_hz")?,
        f_max_hz: doc.parse_value("frontend.f_max_hz")?,
        use_cmn: doc.parse_value("frontend.use_cmn")?,
    };
    let frontend_fingerprint: u64 = doc.parse_value("frontend.fingerprint")?;
    if frontend_fingerprint != frontend_config.fingerprint() {
        return Err(SpeakerError::CorruptProfile(
            "front-end fingerprint does not match the echoed config".into(),
        ));
    }

    let topology = Topology::parse(doc.get("model.topology")?)
        .ok_or_else(|| SpeakerError::CorruptProfile("unknown topology".into()))?;
    let dim: usize = doc.parse_value("model.dim")?;
    let n_states: usize = doc.parse_value("model.n_states")?;
    if n_states == 0 || dim == 0 {
        return Err(SpeakerError::CorruptProfile(
            "model must have at least one state and one dimension".into(),
        ));
    }
    let var_floor = doc.floats("model.var_floor", dim)?;
    let pi = doc.floats("model.pi", n_states)?;
    let mut trans = Vec::with_capacity(n_states);
    for i in 0..n_states {
        trans.push(doc.floats(&format!("model.trans.{i}"), n_states)?);
    }
    let mut states = Vec::with_capacity(n_states);
    for j in 0..n_states {
        let n_components: usize = doc.parse_value(&format!("model.state.{j}.n_components"))?;
        if n_components == 0 {
            return Err(SpeakerError::CorruptProfile(format!(
                "state {j} has no components"
            )));
        }
        let mut mixture = Vec::with_capacity(n_components);
        for c in 0..n_components {
            let prefix = format!("model.state.{j}.{c}");
            mixture.push(GaussianComponent {
                weight: doc.parse_value(&format!("{prefix}.weight"))?,
                mean: doc.floats(&format!("{prefix}.mean"), dim)?,
                var: doc.floats(&format!("{prefix}.var"), dim)?,
            });
        }
        states.push(mixture);
    }
    let model = GmmHmm {
        pi,
        trans,
        states,
        topology,
        dim,
        var_floor,
    };
    model
        .validate()
        .map_err(|e| SpeakerError::CorruptProfile(e.to_string()))?;

    let enroll_stats = EnrollStats {
        n_utterances: doc.parse_value("enroll.n_utterances")?,
        mean_score: doc.parse_value("enroll.mean_score")?,
        std_score: doc.parse_value("enroll.std_score")?,
    };
    if enroll_stats.n_utterances == 0 {
        return Err(SpeakerError::CorruptProfile(
            "profile claims zero enrollment utterances".into(),
        ));
    }
    let threshold: f64 = doc.parse_value("threshold")?;
    let threshold_k: f64 = doc.parse_value("threshold_k")?;
    let recomputed = enroll_stats.mean_score - threshold_k * enroll_stats.std_score;
    if threshold != recomputed {
        return Err(SpeakerError::CorruptProfile(format!(
            "threshold {threshold:?} is not mean - k*std = {recomputed:?}"
        )));
    }

    Ok(SpeakerProfile {
        speaker_id,
        model,
        threshold,
        threshold_k,
        enroll_stats,
        frontend_fingerprint,
        frontend_config,
        format_version: version,
    })
}

/// Path of a speaker's profile inside a registry directory.
pub fn profile_path(registry_dir: &Path, speaker_id: &str) -> PathBuf {
    registry_dir.join(format!("{speaker_id}.profile"))
}

/// Loads every `*.profile` file in a registry directory, sorted by file
/// name so the result is stable across platforms.
pub fn load_registry(registry_dir: &Path) -> Result<Vec<SpeakerProfile>, SpeakerError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(registry_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "profile"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_profile(p)).collect()
}
