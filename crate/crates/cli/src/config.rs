//! Engine configuration: one flat `key = value` file holding every knob.
//!
//! The format matches the profile files: UTF-8, one dotted key per line,
//! `#` comments and blank lines ignored. Unknown and duplicate keys are
//! hard errors so a typo can never silently fall back to a default.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use voicegate_core::audio::VadConfig;
use voicegate_core::frontend::FrontendConfig;
use voicegate_core::hmm::{Topology, TrainConfig};
use voicegate_core::speaker::DEFAULT_THRESHOLD_K;

/// Every setting the engine exposes, with the registry location.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub frontend: FrontendConfig,
    pub training: TrainConfig,
    pub vad: VadConfig,
    pub threshold_k: f64,
    pub registry_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            training: TrainConfig::default(),
            vad: VadConfig::default(),
            threshold_k: DEFAULT_THRESHOLD_K,
            registry_dir: PathBuf::from("registry"),
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Malformed {
        line: usize,
        msg: String,
    },
    UnknownKey {
        line: usize,
        key: String,
    },
    DuplicateKey {
        line: usize,
        key: String,
    },
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Malformed { line, msg } => {
                write!(f, "config line {line}: {msg}")
            }
            ConfigError::UnknownKey { line, key } => {
                write!(f, "config line {line}: unknown key {key:?}")
            }
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "config line {line}: duplicate key {key:?}")
            }
            ConfigError::BadValue { line, key, msg } => {
                write!(f, "config line {line}: bad value for {key:?}: {msg}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

impl EngineConfig {
    /// Parses a config document, starting from the defaults; keys not
    /// present keep their default values.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();
        let mut seen = BTreeSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    msg: format!("expected `key = value`, got {trimmed:?}"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.apply(line, key, value)?;
        }
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            line: usize,
            key: &str,
            value: &str,
        ) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg: e.to_string(),
            })
        }

        match key {
            "frontend.frame_ms" => self.frontend.frame_ms = parse(line, key, value)?,
            "frontend.hop_ms" => self.frontend.hop_ms = parse(line, key, value)?,
            "frontend.fft_size" => self.frontend.fft_size = parse(line, key, value)?,
            "frontend.n_filters" => self.frontend.n_filters = parse(line, key, value)?,
            "frontend.n_coeffs" => self.frontend.n_coeffs = parse(line, key, value)?,
            "frontend.f_min_hz" => self.frontend.f_min_hz = parse(line, key, value)?,
            "frontend.f_max_hz" => self.frontend.f_max_hz = parse(line, key, value)?,
            "frontend.use_cmn" => self.frontend.use_cmn = parse(line, key, value)?,
            "training.n_states" => self.training.n_states = parse(line, key, value)?,
            "training.n_mix" => self.training.n_mix = parse(line, key, value)?,
            "training.topology" => {
                self.training.topology =
                    Topology::parse(value).ok_or_else(|| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        msg: format!("expected `ergodic` or `left_to_right`, got {value:?}"),
                    })?;
            }
            "training.max_iters" => self.training.max_iters = parse(line, key, value)?,
            "training.rel_tol" => self.training.rel_tol = parse(line, key, value)?,
            "training.var_floor_ratio" => self.training.var_floor_ratio = parse(line, key, value)?,
            "training.seed" => self.training.seed = parse(line, key, value)?,
            "vad.frame_ms" => self.vad.frame_ms = parse(line, key, value)?,
            "vad.energy_floor_ratio" => self.vad.energy_floor_ratio = parse(line, key, value)?,
            "vad.margin_frames" => self.vad.margin_frames = parse(line, key, value)?,
            "threshold_k" => self.threshold_k = parse(line, key, value)?,
            "registry_dir" => self.registry_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = EngineConfig::parse("").unwrap();
        assert_eq!(cfg, EngineConfig::default());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = EngineConfig::parse("# a comment\n\n  \n# another\n").unwrap();
        assert_eq!(cfg, EngineConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let text = "frontend.n_coeffs = 10\n\
                    training.topology = left_to_right\n\
                    training.n_mix = 4\n\
                    threshold_k = 2.5\n\
                    registry_dir = /tmp/reg\n\
                    vad.margin_frames = 7\n";
        let cfg = EngineConfig::parse(text).unwrap();
        assert_eq!(cfg.frontend.n_coeffs, 10);
        assert_eq!(cfg.training.topology, Topology::LeftToRight);
        assert_eq!(cfg.training.n_mix, 4);
        assert_eq!(cfg.threshold_k, 2.5);
        assert_eq!(cfg.registry_dir, PathBuf::from("/tmp/reg"));
        assert_eq!(cfg.vad.margin_frames, 7);
        // Untouched knobs keep their defaults.
        assert_eq!(cfg.frontend.fft_size, 512);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = EngineConfig::parse("frontend.n_mels = 26\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = EngineConfig::parse("threshold_k = 2\nthreshold_k = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 2, .. }));
    }

    #[test]
    fn missing_equals_is_an_error() {
        let err = EngineConfig::parse("threshold_k 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Malformed { line: 1, .. }));
    }

    #[test]
    fn bad_value_reports_key_and_line() {
        let err = EngineConfig::parse("\ntraining.n_mix = many\n").unwrap_err();
        match err {
            ConfigError::BadValue { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "training.n_mix");
            }
            other => panic!("expected BadValue, got {other:?}"),
        }
    }

    #[test]
    fn bad_topology_is_an_error() {
        let err = EngineConfig::parse("training.topology = circular\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }
}
