//! WAV ingestion and rational-ratio resampling.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Target rate for every downstream stage.
pub const SAMPLE_RATE: u32 = 16_000;

/// Load a RIFF/WAVE file as mono samples in `[-1, 1]` at 16 kHz.
pub fn load_audio(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Decode an in-memory WAV document to 16 kHz mono.
pub fn decode_wav(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::UnsupportedFormat(format!(
            "expected a RIFF/WAVE container, found `{magic}`"
        )));
    }
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedFormat(format!(
                    "{}-bit IEEE float PCM",
                    spec.bits_per_sample
                )));
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(resample(&mono, spec.sample_rate, SAMPLE_RATE))
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedFormat("non-PCM WAVE encoding".into()),
        hound::Error::FormatError(msg) => Error::UnsupportedFormat(msg.to_string()),
        hound::Error::IoError(err) => Error::InvalidInput(format!("truncated WAVE data: {err}")),
        other => Error::InvalidInput(other.to_string()),
    }
}

/// Encode mono 16-bit PCM; used for fixtures and the service round trip.
pub fn encode_wav_i16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
        for &s in samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Windowed-sinc polyphase resampler for a rational ratio `to / from`.
///
/// Each of the `L` output phases owns a fixed Kaiser-windowed sinc kernel spanning
/// `ZERO_CROSSINGS` lobes of the anti-aliasing cutoff on each side.
pub fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    const ZERO_CROSSINGS: f64 = 16.0;
    const BETA: f64 = 8.6;
    let g = gcd(from as u64, to as u64);
    let up = to as u64 / g;
    let down = from as u64 / g;
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half = ZERO_CROSSINGS / cutoff;
    let reach = half.ceil() as i64;
    let i0_beta = bessel_i0(BETA);
    let kernel = |d: f64| {
        let r = d / half;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let x = cutoff * d;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        cutoff * sinc * bessel_i0(BETA * (1.0 - r * r).sqrt()) / i0_beta
    };
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            (-reach + 1..=reach).map(|j| kernel(frac - j as f64)).collect()
        })
        .collect();
    let n_out = (input.len() as u64 * up).div_ceil(down) as usize;
    let n_in = input.len() as i64;
    (0..n_out as u64)
        .map(|m| {
            let pos = m * down;
            let k0 = (pos / up) as i64;
            let taps = &phases[(pos % up) as usize];
            let mut acc = 0.0;
            for (t, j) in (-reach + 1..=reach).enumerate() {
                let k = k0 + j;
                if (0..n_in).contains(&k) {
                    acc += input[k as usize] * taps[t];
                }
            }
            acc
        })
        .collect()
}
