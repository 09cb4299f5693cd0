use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmotionPriors, PriorSource, N_EMOTIONS};
use crate::audio::CONTENT_DIM;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{init_linear, init_lstm, linear, lstm};
use crate::params::ParamSet;

/// Per-dimension corpus extrema of the oracle logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl LogitStats {
    pub fn from_logits<'a>(clips: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; N_EMOTIONS];
        let mut max = vec![f64::NEG_INFINITY; N_EMOTIONS];
        for clip in clips {
            for row in clip.rows() {
                for (j, &x) in row.iter().enumerate() {
                    min[j] = min[j].min(x);
                    max[j] = max[j].max(x);
                }
            }
        }
        if min.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("no logits to take statistics over".into()));
        }
        Ok(Self { min, max })
    }

    /// `(x − min) / (max − min)`, clamped to `[0, 1]`.
    pub fn rescale(&self, logits: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(logits.dim(), |(t, j)| {
            let span = (self.max[j] - self.min[j]).max(1e-12);
            ((logits[[t, j]] - self.min[j]) / span).clamp(0.0, 1.0)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub content_dim: usize,
    pub hidden: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            content_dim: CONTENT_DIM,
            hidden: 128,
        }
    }
}

/// One bidirectional LSTM layer and a linear head to 7 logits per frame.
#[derive(Debug, Clone)]
pub struct EmotionPredictorNet {
    pub config: PredictorConfig,
    pub params: ParamSet,
    pub stats: Option<LogitStats>,
}

impl EmotionPredictorNet {
    pub fn init(config: PredictorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        init_lstm(&mut rng, &mut params, "emo.forward", config.content_dim, config.hidden);
        init_lstm(&mut rng, &mut params, "emo.backward", config.content_dim, config.hidden);
        init_linear(&mut rng, &mut params, "emo.head", 2 * config.hidden, N_EMOTIONS);
        Self {
            config,
            params,
            stats: None,
        }
    }

    /// Raw (unscaled) logits, `T×7`.
    pub fn forward(&self, g: &mut Graph, content: Var) -> Var {
        let h = self.config.hidden;
        let fwd = lstm(g, &self.params, "emo.forward", content, h, false);
        let bwd = lstm(g, &self.params, "emo.backward", content, h, true);
        let both = g.concat_cols(&[fwd, bwd]);
        linear(g, &self.params, "emo.head", both)
    }

    pub fn logits(&self, content: &Array2<f64>) -> Result<Array2<f64>> {
        if content.nrows() == 0 {
            return Err(Error::InvalidInput("emotion predictor needs at least one frame".into()));
        }
        if content.ncols() != self.config.content_dim {
            return Err(Error::Dimension {
                axis: "content channels",
                expected: self.config.content_dim,
                got: content.ncols(),
            });
        }
        let mut g = Graph::new();
        let x = g.constant(content.clone());
        let y = self.forward(&mut g, x);
        Ok(g.value(y).clone())
    }
}

pub fn predict_priors(content: &Array2<f64>, net: &EmotionPredictorNet) -> Result<EmotionPriors> {
    let stats = net.stats.as_ref().ok_or_else(|| {
        Error::Config("emotion predictor has no corpus logit statistics for rescaling".into())
    })?;
    Ok(EmotionPriors {
        logits: stats.rescale(&net.logits(content)?),
        source: PriorSource::AudioPredicted,
    })
}
