use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emotion::EMOTIONS;
use crate::error::{Error, Result};

/// Scores one frame of face parameters as an emotion category index.
pub trait EmotionClassifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn classify(&self, params: ArrayView1<f64>) -> usize;
}

/// Cosine match against per-category expression signatures on the non-articulation
/// dimensions; frames whose emotional component is weaker than `neutral_norm` are neutral.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    signatures: Array2<f64>,
    dims: Vec<usize>,
    neutral_norm: f64,
}

impl OracleClassifier {
    pub fn new(signatures: Array2<f64>, dims: Vec<usize>, neutral_norm: f64) -> Result<Self> {
        if dims.iter().any(|&d| d >= signatures.ncols()) {
            return Err(Error::Config("classifier dimension out of range".into()));
        }
        Ok(Self {
            signatures,
            dims,
            neutral_norm,
        })
    }

    fn project(&self, row: ArrayView1<f64>) -> Vec<f64> {
        self.dims.iter().map(|&d| row[d]).collect()
    }
}

impl EmotionClassifier for OracleClassifier {
    fn n_classes(&self) -> usize {
        self.signatures.nrows()
    }

    fn classify(&self, params: ArrayView1<f64>) -> usize {
        let x = self.project(params);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < self.neutral_norm {
            return 0;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (c, sig) in self.signatures.rows().into_iter().enumerate() {
            let s = self.project(sig);
            let sn = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if sn == 0.0 {
                continue;
            }
            let cos = x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / (norm * sn);
            if cos > best.1 {
                best = (c, cos);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub label: usize,
    /// `T×56` parameters.
    pub params: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            labels: EMOTIONS.iter().take(n).map(|s| s.to_string()).collect(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    /// Diagonal of the row-normalized matrix; `None` for classes with no clips.
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        let norm = self.row_normalized();
        (0..self.counts.len())
            .map(|i| (self.row_total(i) > 0).then(|| norm[i][i]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub matrix: ConfusionMatrix,
    /// Clips shorter than the frame budget, sampled with replacement.
    pub resampled_clips: Vec<usize>,
}

/// Classify `frames_per_clip` seeded random frames of each clip; the clip vote is the argmax.
pub fn emotion_confusion(
    clips: &[LabeledClip],
    classifier: &dyn EmotionClassifier,
    frames_per_clip: usize,
    seed: u64,
) -> Result<ConfusionReport> {
    let n = classifier.n_classes();
    let mut matrix = ConfusionMatrix::new(n);
    let mut resampled = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, clip) in clips.iter().enumerate() {
        let t = clip.params.nrows();
        if t == 0 {
            return Err(Error::InvalidInput(format!("clip {i} has no frames")));
        }
        if clip.label >= n {
            return Err(Error::InvalidInput(format!("clip {i} has label {} ≥ {n}", clip.label)));
        }
        let frames: Vec<usize> = if t >= frames_per_clip {
            sample(&mut rng, t, frames_per_clip).into_vec()
        } else {
            resampled.push(i);
            (0..frames_per_clip).map(|_| rng.random_range(0..t)).collect()
        };
        let mut votes = vec![0usize; n];
        for f in frames {
            votes[classifier.classify(clip.params.row(f))] += 1;
        }
        let predicted = (0..n).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).expect("n > 0");
        matrix.counts[clip.label][predicted] += 1;
    }
    Ok(ConfusionReport {
        matrix,
        resampled_clips: resampled,
    })
}
