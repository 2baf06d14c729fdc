//! Speaker-dependent, text-independent voice-password verification engine.
//!
//! The pipeline: WAV decoding and endpointing ([`audio`]), MFCC feature
//! extraction ([`frontend`]), Gaussian-mixture HMM training and scoring
//! ([`hmm`]), per-speaker enrollment with speaker-specific acceptance
//! thresholds ([`speaker`]), and a noise-degradation evaluation harness
//! over a deterministic synthetic corpus ([`eval`]).
//!
//! All operations are deterministic given their seeds. Batch work (trial
//! scoring, per-sequence training statistics, corpus synthesis) runs on a
//! rayon pool when the `parallel` feature is enabled (the default) and
//! falls back to plain iteration without it; results are bit-identical
//! either way because partial results are merged in input order.

pub mod audio;
pub mod eval;
pub mod exec;
pub mod frontend;
pub mod hmm;
pub mod speaker;
pub mod util;
