//! Command-line surface for the voicegate engine.
//!
//! Subcommands: `enroll`, `verify`, `identify`, `eval`, `synth`. Settings
//! come from a flat key/value config file (default `./voicegate.conf`,
//! missing file means built-in defaults). Results go to standard output in
//! a stable `key = value` shape; diagnostics go to standard error.
//!
//! Exit codes are a three-way contract so shell pipelines can gate on the
//! decision without parsing text: 0 success/accept, 1 clean reject,
//! 2 any error. No other code is ever returned.

mod config;

pub use config::{ConfigError, EngineConfig};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use voicegate_core::audio::load_wav;
use voicegate_core::eval::{
    add_white_noise, default_speaker_specs, evaluate, load_manifest, synth_corpus, write_manifest,
    ManifestEntry, TrialSet,
};
use voicegate_core::speaker::{
    enroll, identify, load_profile, load_registry, profile_path, save_profile, verify,
};
use voicegate_core::util::derive_seed;

/// Corpus shape written by `synth`: it matches the engine's canned
/// experiment so the bundled manifest exercises the same trial set.
const SYNTH_UTTERANCES_PER_SPEAKER: usize = 10;
const SYNTH_ENROLL_SPLIT: usize = 5;
const SYNTH_DEFAULT_SEED: u64 = 42;
/// Salt for per-trial noise seeds in `eval --snr`, fixed so repeated runs
/// add identical noise.
const EVAL_NOISE_SALT: u64 = 0x6576616c;

const USAGE: &str = "\
voicegate - voice-password enrollment and verification

USAGE:
    voicegate [--config <path>] [--registry <dir>] <command> [args]

COMMANDS:
    enroll <id> <wav>...      train a profile from utterances, store it
    verify <id> <wav>         test an utterance against a claimed identity
    identify <wav>            rank all enrolled speakers for an utterance
    eval <manifest> [--snr <db>]
                              score a labelled trial set, print metrics
    synth <out_dir> [--seed <u64>]
                              write the deterministic demo corpus + manifest

FLAGS:
    --config <path>           config file (default ./voicegate.conf;
                              missing default file means built-in defaults)
    --registry <dir>          override the profile directory
    --snr <db>                eval only: add white noise to every trial
    --seed <u64>              synth only: corpus seed (default 42)

EXIT CODES:
    0  success (verify: accepted)
    1  verify: rejected
    2  any error
";

/// Runs the CLI on `argv` (program name excluded) and returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    match run_inner(&argv) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

struct Invocation {
    command: String,
    positionals: Vec<String>,
    config_path: Option<PathBuf>,
    registry_dir: Option<PathBuf>,
    snr_db: Option<f64>,
    seed: Option<u64>,
}

fn parse_argv(argv: &[String]) -> Result<Option<Invocation>, String> {
    let mut positionals = Vec::new();
    let mut config_path = None;
    let mut registry_dir = None;
    let mut snr_db = None;
    let mut seed = None;

    let mut iter = argv.iter().peekable();
    while let Some(arg) = iter.next() {
        if arg == "--help" || arg == "-h" || arg == "help" {
            return Ok(None);
        }
        let (flag, inline) = match arg.strip_prefix("--") {
            Some(rest) => match rest.split_once('=') {
                Some((f, v)) => (Some(f.to_string()), Some(v.to_string())),
                None => (Some(rest.to_string()), None),
            },
            None => (None, None),
        };
        let Some(flag) = flag else {
            positionals.push(arg.clone());
            continue;
        };
        let mut value = || -> Result<String, String> {
            match inline.clone() {
                Some(v) => Ok(v),
                None => iter
                    .next()
                    .cloned()
                    .ok_or_else(|| format!("flag --{flag} needs a value")),
            }
        };
        match flag.as_str() {
            "config" => config_path = Some(PathBuf::from(value()?)),
            "registry" => registry_dir = Some(PathBuf::from(value()?)),
            "snr" => {
                snr_db = Some(
                    value()?
                        .parse::<f64>()
                        .map_err(|e| format!("bad --snr value: {e}"))?,
                )
            }
            "seed" => {
                seed = Some(
                    value()?
                        .parse::<u64>()
                        .map_err(|e| format!("bad --seed value: {e}"))?,
                )
            }
            other => return Err(format!("unknown flag --{other}")),
        }
    }

    let mut positionals = positionals.into_iter();
    let Some(command) = positionals.next() else {
        return Err(format!("no command given\n{USAGE}"));
    };
    Ok(Some(Invocation {
        command,
        positionals: positionals.collect(),
        config_path,
        registry_dir,
        snr_db,
        seed,
    }))
}

fn load_engine_config(inv: &Invocation) -> Result<EngineConfig, String> {
    let mut cfg = match &inv.config_path {
        // An explicitly named config must exist.
        Some(path) => EngineConfig::load(path).map_err(|e| e.to_string())?,
        None => {
            let default = Path::new("voicegate.conf");
            if default.exists() {
                EngineConfig::load(default).map_err(|e| e.to_string())?
            } else {
                EngineConfig::default()
            }
        }
    };
    if let Some(dir) = &inv.registry_dir {
        cfg.registry_dir = dir.clone();
    }
    Ok(cfg)
}

fn run_inner(argv: &[String]) -> Result<i32, String> {
    let Some(inv) = parse_argv(argv)? else {
        print!("{USAGE}");
        return Ok(0);
    };

    let reject = |flag: &str, present: bool| -> Result<(), String> {
        if present {
            Err(format!("--{flag} is not valid for `{}`", inv.command))
        } else {
            Ok(())
        }
    };
    if inv.command != "eval" {
        reject("snr", inv.snr_db.is_some())?;
    }
    if inv.command != "synth" {
        reject("seed", inv.seed.is_some())?;
    }

    let cfg = load_engine_config(&inv)?;
    match inv.command.as_str() {
        "enroll" => cmd_enroll(&cfg, &inv.positionals),
        "verify" => cmd_verify(&cfg, &inv.positionals),
        "identify" => cmd_identify(&cfg, &inv.positionals),
        "eval" => cmd_eval(&cfg, &inv.positionals, inv.snr_db),
        "synth" => cmd_synth(&inv.positionals, inv.seed.unwrap_or(SYNTH_DEFAULT_SEED)),
        other => Err(format!("unknown command `{other}`\n{USAGE}")),
    }
}

fn cmd_enroll(cfg: &EngineConfig, args: &[String]) -> Result<i32, String> {
    let [id, wavs @ ..] = args else {
        return Err("usage: enroll <id> <wav>...".into());
    };
    if wavs.is_empty() {
        return Err("usage: enroll <id> <wav>...".into());
    }
    let utterances = wavs
        .iter()
        .map(|p| load_wav(p).map_err(|e| format!("{p}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;

    let profile = enroll(
        id,
        &utterances,
        &cfg.frontend,
        &cfg.vad,
        &cfg.training,
        cfg.threshold_k,
    )
    .map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&cfg.registry_dir)
        .map_err(|e| format!("cannot create registry dir: {e}"))?;
    save_profile(&profile, &profile_path(&cfg.registry_dir, id)).map_err(|e| e.to_string())?;

    println!("enrolled = {id}");
    println!("utterances = {}", profile.enroll_stats.n_utterances);
    println!("mean_score = {:?}", profile.enroll_stats.mean_score);
    println!("std_score = {:?}", profile.enroll_stats.std_score);
    println!("threshold = {:?}", profile.threshold);
    Ok(0)
}

fn cmd_verify(cfg: &EngineConfig, args: &[String]) -> Result<i32, String> {
    let [id, wav] = args else {
        return Err("usage: verify <id> <wav>".into());
    };
    let profile = load_profile(&profile_path(&cfg.registry_dir, id))
        .map_err(|e| format!("cannot load profile for {id:?}: {e}"))?;
    let utterance = load_wav(wav).map_err(|e| format!("{wav}: {e}"))?;
    let result =
        verify(&profile, &utterance, &cfg.frontend, &cfg.vad).map_err(|e| e.to_string())?;

    println!("speaker = {id}");
    println!("score = {:?}", result.score);
    println!("threshold = {:?}", result.threshold);
    println!("margin = {:?}", result.margin);
    println!(
        "decision = {}",
        if result.accepted { "ACCEPT" } else { "REJECT" }
    );
    Ok(if result.accepted { 0 } else { 1 })
}

fn cmd_identify(cfg: &EngineConfig, args: &[String]) -> Result<i32, String> {
    let [wav] = args else {
        return Err("usage: identify <wav>".into());
    };
    let registry = load_registry(&cfg.registry_dir).map_err(|e| e.to_string())?;
    let utterance = load_wav(wav).map_err(|e| format!("{wav}: {e}"))?;
    let result =
        identify(&registry, &utterance, &cfg.frontend, &cfg.vad).map_err(|e| e.to_string())?;

    println!("best = {}", result.best_speaker_id);
    for (rank, (speaker, score)) in result.ranked_scores.iter().enumerate() {
        println!("rank.{} = {speaker} {score:?}", rank + 1);
    }
    Ok(0)
}

fn cmd_eval(cfg: &EngineConfig, args: &[String], snr_db: Option<f64>) -> Result<i32, String> {
    let [manifest] = args else {
        return Err("usage: eval <manifest> [--snr <db>]".into());
    };
    let registry = load_registry(&cfg.registry_dir).map_err(|e| e.to_string())?;
    let mut trials = load_manifest(Path::new(manifest)).map_err(|e| e.to_string())?;
    if let Some(snr) = snr_db {
        trials = degrade_trials(trials, snr)?;
    }
    let metrics =
        evaluate(&registry, &trials, &cfg.frontend, &cfg.vad).map_err(|e| e.to_string())?;
    print!("{}", metrics.to_kv());
    Ok(0)
}

/// Adds white noise to every trial, seeded by position in the manifest so
/// repeated runs produce identical signals.
fn degrade_trials(trials: TrialSet, snr_db: f64) -> Result<TrialSet, String> {
    let degrade = |list: Vec<voicegate_core::eval::Trial>,
                   salt: u64|
     -> Result<Vec<voicegate_core::eval::Trial>, String> {
        list.into_iter()
            .enumerate()
            .map(|(i, mut t)| {
                let seed = derive_seed(derive_seed(EVAL_NOISE_SALT, salt), i as u64);
                t.signal = add_white_noise(&t.signal, snr_db, seed)
                    .map_err(|e| format!("trial {}: {e}", i + 1))?;
                Ok(t)
            })
            .collect()
    };
    Ok(TrialSet {
        genuine: degrade(trials.genuine, 0)?,
        impostor: degrade(trials.impostor, 1)?,
    })
}

fn cmd_synth(args: &[String], seed: u64) -> Result<i32, String> {
    let [out_dir] = args else {
        return Err("usage: synth <out_dir> [--seed <u64>]".into());
    };
    let out_dir = Path::new(out_dir);
    std::fs::create_dir_all(out_dir).map_err(|e| format!("cannot create {out_dir:?}: {e}"))?;

    let specs = default_speaker_specs();
    let corpus =
        synth_corpus(&specs, SYNTH_UTTERANCES_PER_SPEAKER, seed).map_err(|e| e.to_string())?;

    let mut wrote = 0usize;
    let mut entries = Vec::new();
    let ids: Vec<&String> = corpus.keys().collect();
    for (id, utterances) in &corpus {
        for (i, utt) in utterances.iter().enumerate() {
            let name = format!("{id}_{i:02}.wav");
            voicegate_core::audio::save_wav(utt, out_dir.join(&name))
                .map_err(|e| format!("{name}: {e}"))?;
            wrote += 1;
            // Held-out takes become trials: one genuine claim plus an
            // impostor claim against every other speaker.
            if i >= SYNTH_ENROLL_SPLIT {
                entries.push(ManifestEntry {
                    genuine: true,
                    claimed_id: id.clone(),
                    true_id: id.clone(),
                    wav_path: name.clone(),
                });
                for other in &ids {
                    if *other != id {
                        entries.push(ManifestEntry {
                            genuine: false,
                            claimed_id: (*other).clone(),
                            true_id: id.clone(),
                            wav_path: name.clone(),
                        });
                    }
                }
            }
        }
    }
    write_manifest(&entries, &out_dir.join("manifest.txt")).map_err(|e| e.to_string())?;

    let mut summary = String::new();
    let _ = writeln!(summary, "speakers = {}", corpus.len());
    let _ = writeln!(
        summary,
        "utterances_per_speaker = {SYNTH_UTTERANCES_PER_SPEAKER}"
    );
    let _ = writeln!(summary, "enroll_split = {SYNTH_ENROLL_SPLIT}");
    let _ = writeln!(summary, "seed = {seed}");
    let _ = writeln!(summary, "wav_files = {wrote}");
    let _ = writeln!(summary, "trials = {}", entries.len());
    let _ = writeln!(summary, "manifest = manifest.txt");
    print!("{summary}");
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn unknown_command_is_an_error() {
        assert_eq!(run(args(&["frobnicate"])), 2);
    }

    #[test]
    fn no_arguments_is_an_error() {
        assert_eq!(run(vec![]), 2);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(args(&["--help"])), 0);
        assert_eq!(run(args(&["help"])), 0);
    }

    #[test]
    fn unknown_flag_is_an_error() {
        assert_eq!(run(args(&["--frobnicate", "enroll"])), 2);
    }

    #[test]
    fn flag_missing_value_is_an_error() {
        assert_eq!(run(args(&["enroll", "--config"])), 2);
    }

    #[test]
    fn snr_rejected_outside_eval() {
        assert_eq!(run(args(&["identify", "x.wav", "--snr", "5"])), 2);
    }

    #[test]
    fn seed_rejected_outside_synth() {
        assert_eq!(run(args(&["eval", "m.txt", "--seed", "7"])), 2);
    }

    #[test]
    fn missing_explicit_config_is_an_error() {
        assert_eq!(
            run(args(&[
                "--config",
                "/nonexistent/vg.conf",
                "identify",
                "x.wav"
            ])),
            2
        );
    }

    #[test]
    fn enroll_requires_id_and_wavs() {
        assert_eq!(run(args(&["enroll"])), 2);
        assert_eq!(run(args(&["enroll", "alice"])), 2);
    }

    #[test]
    fn inline_flag_values_parse() {
        let inv = parse_argv(&args(&["--snr=12.5", "eval", "m.txt"]))
            .unwrap()
            .unwrap();
        assert_eq!(inv.snr_db, Some(12.5));
        assert_eq!(inv.command, "eval");
        assert_eq!(inv.positionals, vec!["m.txt".to_string()]);
    }

    #[test]
    fn registry_flag_overrides_config() {
        let inv = parse_argv(&args(&["--registry", "/tmp/reg", "identify", "x.wav"]))
            .unwrap()
            .unwrap();
        let cfg = load_engine_config(&inv).unwrap();
        assert_eq!(cfg.registry_dir, PathBuf::from("/tmp/reg"));
    }
}
