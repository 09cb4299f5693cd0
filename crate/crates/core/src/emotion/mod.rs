//! Emotion priors, user schedules, blending and the residual augment network.

mod augment;
mod linearity;
mod predictor;

pub use augment::{augment, AugmentConfig, EmotionAugmentNet};
pub use linearity::{default_grid, verify_logit_linearity, LinearityMode, LinearityReport};
pub use predictor::{predict_priors, EmotionPredictorNet, LogitStats, PredictorConfig};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMOTIONS: [&str; 7] = [
    "neutral",
    "happiness",
    "anger",
    "sadness",
    "disgust",
    "fear",
    "surprise",
];
pub const N_EMOTIONS: usize = EMOTIONS.len();

pub fn label_index(label: &str) -> Result<usize> {
    EMOTIONS
        .iter()
        .position(|&l| l == label)
        .ok_or_else(|| Error::UnknownCategory {
            label: label.to_string(),
            valid: EMOTIONS.iter().map(|s| s.to_string()).collect(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    VideoOracle,
    AudioPredicted,
    Blended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionPriors {
    /// `T×7` logits (rescaled to `[0, 1]` for audio-predicted priors).
    pub logits: Array2<f64>,
    pub source: PriorSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Hold,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub category: String,
    pub intensity: f64,
}

/// User keyframes expanded into per-frame `one_hot · intensity` conditions.
///
/// Before the first keyframe its value is held backwards; after the last it is held forwards.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EmotionSchedule {
    pub interpolation: Interpolation,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleDoc {
    Bare(Vec<Keyframe>),
    Full {
        #[serde(default)]
        interpolation: Interpolation,
        #[serde(default)]
        keyframes: Vec<Keyframe>,
    },
}

impl<'de> Deserialize<'de> for EmotionSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match ScheduleDoc::deserialize(d)? {
            ScheduleDoc::Bare(keyframes) => Self {
                interpolation: Interpolation::Hold,
                keyframes,
            },
            ScheduleDoc::Full {
                interpolation,
                keyframes,
            } => Self {
                interpolation,
                keyframes,
            },
        })
    }
}

impl EmotionSchedule {
    pub fn constant(category: &str, intensity: f64) -> Self {
        Self {
            interpolation: Interpolation::Hold,
            keyframes: vec![Keyframe {
                time: 0.0,
                category: category.into(),
                intensity,
            }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.keyframes.iter().enumerate() {
            label_index(&k.category)?;
            if !(0.0..=1.0).contains(&k.intensity) {
                return Err(Error::InvalidInput(format!(
                    "keyframe {i}: intensity {} outside [0, 1]",
                    k.intensity
                )));
            }
            if !k.time.is_finite() {
                return Err(Error::InvalidInput(format!("keyframe {i}: non-finite time")));
            }
            if i > 0 && k.time <= self.keyframes[i - 1].time {
                return Err(Error::InvalidInput(format!(
                    "keyframe times must be strictly increasing (keyframe {i} at {})",
                    k.time
                )));
            }
        }
        Ok(())
    }

    /// `T×7` matrix of `γ_u` at times `t / fps`.
    pub fn conditions(&self, frames: usize, fps: f64) -> Result<Array2<f64>> {
        self.validate()?;
        let vectors: Vec<[f64; N_EMOTIONS]> = self
            .keyframes
            .iter()
            .map(|k| {
                let mut v = [0.0; N_EMOTIONS];
                v[label_index(&k.category).expect("validated")] = k.intensity;
                v
            })
            .collect();
        let mut out = Array2::zeros((frames, N_EMOTIONS));
        if vectors.is_empty() {
            return Ok(out);
        }
        for t in 0..frames {
            let time = t as f64 / fps;
            let next = self.keyframes.partition_point(|k| k.time <= time);
            let row = if next == 0 {
                vectors[0]
            } else if next == vectors.len() || self.interpolation == Interpolation::Hold {
                vectors[next - 1]
            } else {
                let (a, b) = (&self.keyframes[next - 1], &self.keyframes[next]);
                let w = (time - a.time) / (b.time - a.time);
                let mut v = [0.0; N_EMOTIONS];
                for (j, slot) in v.iter_mut().enumerate() {
                    *slot = (1.0 - w) * vectors[next - 1][j] + w * vectors[next][j];
                }
                v
            };
            for (j, &x) in row.iter().enumerate() {
                out[[t, j]] = x;
            }
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("schedule serializes")))
    }
}

/// Symmetric moving average of width `2·radius + 1`; indices past the ends are clamped.
pub fn smooth_priors(priors: &Array2<f64>, radius: usize) -> Array2<f64> {
    let t = priors.nrows();
    if radius == 0 || t == 0 {
        return priors.clone();
    }
    let r = radius as isize;
    let width = (2 * radius + 1) as f64;
    Array2::from_shape_fn(priors.dim(), |(i, j)| {
        (-r..=r)
            .map(|d| priors[[(i as isize + d).clamp(0, t as isize - 1) as usize, j]])
            .sum::<f64>()
            / width
    })
}

/// `γ_t = γ_u,t + (γ_a,t − mean_t γ_a)`.
pub fn blend_with_conditions(audio: &Array2<f64>, user: &Array2<f64>) -> Result<Array2<f64>> {
    if audio.dim() != user.dim() {
        return Err(Error::InvalidInput(format!(
            "audio priors {:?} and user conditions {:?} differ in shape",
            audio.dim(),
            user.dim()
        )));
    }
    let t = audio.nrows();
    if t == 0 {
        return Ok(audio.clone());
    }
    let mut out = user.clone();
    for j in 0..audio.ncols() {
        let col = audio.column(j);
        // Shifted mean: a constant column centres to exactly zero.
        let first = col[0];
        let offset = col.iter().map(|a| a - first).sum::<f64>() / t as f64;
        for i in 0..t {
            out[[i, j]] += (col[i] - first) - offset;
        }
    }
    Ok(out)
}

pub fn blend_condition(audio: &Array2<f64>, schedule: &EmotionSchedule, fps: f64) -> Result<Array2<f64>> {
    let user = schedule.conditions(audio.nrows(), fps)?;
    blend_with_conditions(audio, &user)
}
