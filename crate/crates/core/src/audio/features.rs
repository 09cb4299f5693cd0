use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioSegment, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Default content dimension: 24 bands × 8 sub-hops.
pub const CONTENT_DIM: usize = 192;

#[derive(Debug, Clone, PartialEq)]
pub struct ContentFrame {
    pub vector: Vec<f64>,
    /// Start of the analysis window, in seconds.
    pub frame_time: f64,
}

/// A frozen per-segment feature extractor. Implementations must be pure functions of the
/// segment samples and safe to call from several threads.
pub trait ContentExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, segment: &AudioSegment) -> Vec<f64>;
}

pub fn content_features(
    segments: &[AudioSegment],
    extractor: &dyn ContentExtractor,
    expected_dim: usize,
) -> Result<Vec<ContentFrame>> {
    if extractor.dim() != expected_dim {
        return Err(Error::Config(format!(
            "extractor `{}` produces {} dims, pipeline expects {expected_dim}",
            extractor.name(),
            extractor.dim()
        )));
    }
    segments
        .iter()
        .map(|seg| {
            let vector = extractor.extract(seg);
            if vector.len() != expected_dim {
                return Err(Error::Config(format!(
                    "extractor `{}` returned {} values for segment {}",
                    extractor.name(),
                    vector.len(),
                    seg.index
                )));
            }
            Ok(ContentFrame {
                vector,
                frame_time: seg.start as f64 / SAMPLE_RATE as f64,
            })
        })
        .collect()
}

/// Stack frames into a `T×C` matrix.
pub fn content_matrix(frames: &[ContentFrame]) -> Array2<f64> {
    let c = frames.first().map_or(0, |f| f.vector.len());
    Array2::from_shape_fn((frames.len(), c), |(t, j)| frames[t].vector[j])
}

/// Log mel-spaced filterbank energies over equal sub-hops of the window.
pub struct FilterbankExtractor {
    bands: usize,
    sub_hops: usize,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
    /// `bands × (fft_len/2+1)` triangular weights.
    filters: Vec<Vec<f64>>,
}

impl FilterbankExtractor {
    pub fn new(bands: usize, sub_hops: usize, window_len: usize) -> Self {
        let hop = window_len / sub_hops.max(1);
        let fft_len = (2 * hop).next_power_of_two().max(64);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let n_bins = fft_len / 2 + 1;
        let mel = |hz: f64| 1127.0 * (1.0 + hz / 700.0).ln();
        let hz = |m: f64| 700.0 * ((m / 1127.0).exp() - 1.0);
        let (lo, hi) = (mel(100.0), mel(7600.0));
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
            .collect();
        let filters = (0..bands)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * SAMPLE_RATE as f64 / fft_len as f64;
                        if f <= l || f >= r {
                            0.0
                        } else if f <= c {
                            (f - l) / (c - l)
                        } else {
                            (r - f) / (r - c)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            bands,
            sub_hops,
            fft_len,
            fft,
            filters,
        }
    }
}

impl Default for FilterbankExtractor {
    fn default() -> Self {
        Self::new(24, 8, 1600)
    }
}

impl ContentExtractor for FilterbankExtractor {
    fn name(&self) -> &str {
        "filterbank"
    }

    fn dim(&self) -> usize {
        self.bands * self.sub_hops
    }

    fn extract(&self, segment: &AudioSegment) -> Vec<f64> {
        let hop = segment.samples.len() / self.sub_hops;
        let mut out = Vec::with_capacity(self.dim());
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for h in 0..self.sub_hops {
            let chunk = &segment.samples[h * hop..(h + 1) * hop];
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < hop {
                    let w = 0.5
                        - 0.5 * (std::f64::consts::TAU * i as f64 / (hop as f64 - 1.0).max(1.0)).cos();
                    Complex::new(chunk[i] * w, 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for filt in &self.filters {
                let energy: f64 = filt
                    .iter()
                    .zip(&buf)
                    .map(|(w, z)| w * z.norm_sqr())
                    .sum();
                out.push((energy + 1e-10).ln());
            }
        }
        out
    }
}

/// Per-dimension mean/variance normalization fitted on a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    const STD_FLOOR: f64 = 1e-6;

    pub fn fit<'a>(clips: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let views: Vec<_> = clips.into_iter().map(|c| c.view()).collect();
        if views.is_empty() {
            return Err(Error::InvalidInput("no frames to fit a normalizer".into()));
        }
        let all = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::InvalidInput(format!("inconsistent feature widths: {e}")))?;
        Ok(Self::from_frames(&all))
    }

    /// Statistics of one clip's own frames.
    pub fn from_frames(frames: &Array2<f64>) -> Self {
        let mean = frames.mean_axis(Axis(0)).expect("non-empty frames");
        let std = frames.std_axis(Axis(0), 0.0);
        Self {
            mean: mean.to_vec(),
            std: std.iter().map(|s| s.max(Self::STD_FLOOR)).collect(),
        }
    }

    pub fn apply(&self, frames: &Array2<f64>) -> Result<Array2<f64>> {
        if frames.ncols() != self.mean.len() {
            return Err(Error::Dimension {
                axis: "content channels",
                expected: self.mean.len(),
                got: frames.ncols(),
            });
        }
        Ok(Array2::from_shape_fn(frames.dim(), |(t, j)| {
            (frames[[t, j]] - self.mean[j]) / self.std[j]
        }))
    }
}
