//! Minimal RIFF/WAVE reader and writer for mono 16-bit PCM.
//!
//! The reader walks the chunk list, skipping anything that is not `fmt `
//! or `data`, and rejects everything the engine cannot process bit-exactly
//! (stereo, compressed codecs, bit depths other than 16).

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use super::{AudioError, AudioSignal, MIN_SAMPLE_RATE_HZ};

const PCM_FORMAT_CODE: u16 = 1;
const MAX_SAMPLE_RATE_HZ: u32 = 48_000;

/// Decodes a mono 16-bit PCM WAV file, normalizing samples by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == ErrorKind::NotFound {
            AudioError::FileNotFound(path.to_path_buf())
        } else {
            AudioError::Io(e)
        }
    })?;
    decode_wav(&bytes)
}

/// Decodes a WAV byte stream; see [`load_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioSignal, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedContainer(
            "shorter than a RIFF header".into(),
        ));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedContainer("missing RIFF tag".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedContainer("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                AudioError::MalformedContainer(format!(
                    "chunk {:?} overruns the file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(AudioError::MalformedContainer("fmt chunk too short".into()));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, cue, and friends
        }
        // Chunk bodies are word-aligned; odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::MalformedContainer("no fmt chunk".into()))?;
    if format != PCM_FORMAT_CODE {
        return Err(AudioError::UnsupportedFormat(format!(
            "audio format code {format}, want PCM (1)"
        )));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{channels} channels, want mono"
        )));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{bits} bits per sample, want 16"
        )));
    }
    if rate < MIN_SAMPLE_RATE_HZ {
        return Err(AudioError::SampleRateTooLow(rate));
    }
    if rate > MAX_SAMPLE_RATE_HZ {
        return Err(AudioError::UnsupportedFormat(format!(
            "sample rate {rate} Hz above supported maximum {MAX_SAMPLE_RATE_HZ} Hz"
        )));
    }

    let data = data.ok_or_else(|| AudioError::MalformedContainer("no data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(AudioError::MalformedContainer(
            "data chunk holds a partial 16-bit sample".into(),
        ));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|pair| f64::from(i16::from_le_bytes([pair[0], pair[1]])) / 32768.0)
        .collect();
    Ok(AudioSignal::new(samples, rate))
}

/// Writes a mono 16-bit PCM WAV file. Samples are scaled by 32768,
/// rounded, and clamped to the i16 range, so `save(load(w))` reproduces
/// the original payload bit-exactly.
pub fn save_wav(signal: &AudioSignal, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(signal);
    fs::write(path, bytes)?;
    Ok(())
}

/// Encodes a signal as WAV bytes; see [`save_wav`].
pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let n = signal.samples.len();
    let data_size = (n * 2) as u32;
    let rate = signal.sample_rate_hz;
    let byte_rate = rate * 2;

    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT_CODE.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // channels
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
