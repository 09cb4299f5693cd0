//! Audio ingestion, windowing, content features and the utterance style encoder.

mod features;
mod style;
mod wav;

pub use features::{
    content_features, content_matrix, ContentExtractor, ContentFrame, FeatureNormalizer,
    FilterbankExtractor, CONTENT_DIM,
};
pub use style::{style_vector, StyleConfig, StyleEncoder, StyleVector, STYLE_DIM};
pub use wav::{decode_wav, encode_wav_i16, load_audio, resample, SAMPLE_RATE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowingConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub stride_ms: f64,
    /// Number of neighbouring segments attached on each side (Δt).
    pub neighbor_radius: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            window_ms: 100.0,
            stride_ms: 33.0,
            neighbor_radius: 1,
        }
    }
}

impl WindowingConfig {
    pub fn window_len(&self) -> usize {
        (self.sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn stride_len(&self) -> usize {
        (self.sample_rate as f64 * self.stride_ms / 1000.0).round() as usize
    }

    /// Frame rate implied by the stride (≈30.3 fps at defaults).
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.stride_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let (w, s) = (self.window_len(), self.stride_len());
        if s == 0 || w < s {
            return Err(Error::Config(format!(
                "windowing needs window_length ≥ stride > 0, got {w} and {s} samples"
            )));
        }
        Ok(())
    }

    /// `floor((len - window) / stride) + 1`, or 0 if shorter than one window.
    pub fn segment_count(&self, len: usize) -> usize {
        let (w, s) = (self.window_len(), self.stride_len());
        if len < w || s == 0 {
            0
        } else {
            (len - w) / s + 1
        }
    }
}

/// One analysis window plus `Δt` neighbours on each side (zero-filled past the ends).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub index: usize,
    pub start: usize,
    pub samples: Vec<f64>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

pub fn window_audio(waveform: &[f64], config: &WindowingConfig) -> Result<Vec<AudioSegment>> {
    config.validate()?;
    let (w, s) = (config.window_len(), config.stride_len());
    let count = config.segment_count(waveform.len());
    if count == 0 {
        return Err(Error::InvalidInput(format!(
            "waveform has {} samples, shorter than one {w}-sample window",
            waveform.len()
        )));
    }
    let window = |k: isize| -> Vec<f64> {
        if k < 0 || k as usize >= count {
            vec![0.0; w]
        } else {
            let start = k as usize * s;
            waveform[start..start + w].to_vec()
        }
    };
    let r = config.neighbor_radius as isize;
    Ok((0..count)
        .map(|k| {
            let ki = k as isize;
            AudioSegment {
                index: k,
                start: k * s,
                samples: window(ki),
                left: (1..=r).rev().map(|d| window(ki - d)).collect(),
                right: (1..=r).map(|d| window(ki + d)).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_second_gives_28_segments() {
        let segs = window_audio(&vec![0.1; 16_000], &WindowingConfig::default()).unwrap();
        assert_eq!(segs.len(), (16_000 - 1600) / 528 + 1);
        assert_eq!(segs.len(), 28);
        assert_eq!(segs[1].start, 528);
    }

    #[test]
    fn single_window_has_zero_neighbours() {
        let wave: Vec<f64> = (0..1600).map(|i| i as f64 / 1600.0).collect();
        let segs = window_audio(&wave, &WindowingConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].samples, wave);
        assert_eq!(segs[0].left, vec![vec![0.0; 1600]]);
        assert_eq!(segs[0].right, vec![vec![0.0; 1600]]);
    }

    #[test]
    fn non_overlapping_tiling_reproduces_prefix() {
        let cfg = WindowingConfig {
            stride_ms: 100.0,
            ..WindowingConfig::default()
        };
        let wave: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.01).sin()).collect();
        let segs = window_audio(&wave, &cfg).unwrap();
        let joined: Vec<f64> = segs.iter().flat_map(|s| s.samples.clone()).collect();
        assert_eq!(joined, wave[..joined.len()]);
        assert_eq!(joined.len(), 4800);
    }

    #[test]
    fn too_short_waveform_errors() {
        assert!(window_audio(&[0.0; 100], &WindowingConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn partition_arithmetic_matches_index_sets(
            len in 0usize..6000,
            window_ms in 5.0f64..120.0,
            stride_frac in 0.05f64..1.0,
        ) {
            let cfg = WindowingConfig {
                window_ms,
                stride_ms: window_ms * stride_frac,
                neighbor_radius: 1,
                ..WindowingConfig::default()
            };
            prop_assume!(cfg.validate().is_ok());
            let (w, s) = (cfg.window_len(), cfg.stride_len());
            // Oracle: every start position whose window fits.
            let starts: Vec<usize> = (0..len).step_by(s).filter(|&st| st + w <= len).collect();
            let wave: Vec<f64> = (0..len).map(|i| i as f64).collect();
            match window_audio(&wave, &cfg) {
                Ok(segs) => {
                    prop_assert_eq!(segs.len(), starts.len());
                    for (seg, &st) in segs.iter().zip(&starts) {
                        prop_assert_eq!(seg.start, st);
                        prop_assert_eq!(seg.samples[0], st as f64);
                        prop_assert_eq!(seg.samples.len(), w);
                    }
                }
                Err(_) => prop_assert!(starts.is_empty()),
            }
        }
    }
}
