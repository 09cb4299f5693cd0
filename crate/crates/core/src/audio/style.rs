use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CONTENT_DIM;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{attention_block, init_attention, init_linear, linear, sinusoidal_encoding};
use crate::params::ParamSet;

pub const STYLE_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub content_dim: usize,
    pub dim: usize,
    pub blocks: usize,
    pub positional_encoding: bool,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            content_dim: CONTENT_DIM,
            dim: STYLE_DIM,
            blocks: 4,
            positional_encoding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector(pub Vec<f64>);

/// Transformer encoder over content frames; the last token's output is the style vector.
#[derive(Debug, Clone)]
pub struct StyleEncoder {
    pub config: StyleConfig,
    pub params: ParamSet,
}

impl StyleEncoder {
    pub fn init(config: StyleConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        init_linear(&mut rng, &mut params, "style.input", config.content_dim, config.dim);
        for b in 0..config.blocks {
            init_attention(&mut rng, &mut params, &format!("style.block{b}"), config.dim);
        }
        Self { config, params }
    }

    /// `content` is `T×C`; returns a `1×dim` node.
    pub fn forward(&self, g: &mut Graph, content: Var) -> Var {
        let (t, _) = g.shape(content);
        let mut x = linear(g, &self.params, "style.input", content);
        if self.config.positional_encoding {
            let pe = g.constant(sinusoidal_encoding(t, self.config.dim));
            x = g.add(x, pe);
        }
        for b in 0..self.config.blocks {
            x = attention_block(g, &self.params, &format!("style.block{b}"), x);
        }
        g.slice_rows(x, t - 1, 1)
    }
}

pub fn style_vector(content: &Array2<f64>, encoder: &StyleEncoder) -> Result<StyleVector> {
    if content.nrows() == 0 {
        return Err(Error::InvalidInput("style encoder needs at least one frame".into()));
    }
    if content.ncols() != encoder.config.content_dim {
        return Err(Error::Dimension {
            axis: "content channels",
            expected: encoder.config.content_dim,
            got: content.ncols(),
        });
    }
    let mut g = Graph::new();
    let x = g.constant(content.clone());
    let psi = encoder.forward(&mut g, x);
    Ok(StyleVector(g.value(psi).row(0).to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{finite_difference, relative_error};
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_frame_gives_64_finite_values() {
        let enc = StyleEncoder::init(StyleConfig::default(), 1000);
        let psi = style_vector(&random(1, 192, 1), &enc).unwrap();
        assert_eq!(psi.0.len(), 64);
        assert!(psi.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn output_length_is_independent_of_duration() {
        let enc = StyleEncoder::init(StyleConfig::default(), 1000);
        for t in [2, 9, 40] {
            assert_eq!(style_vector(&random(t, 192, t as u64), &enc).unwrap().0.len(), 64);
        }
    }

    #[test]
    fn empty_sequence_errors() {
        let enc = StyleEncoder::init(StyleConfig::default(), 1000);
        assert!(style_vector(&Array2::zeros((0, 192)), &enc).is_err());
    }

    #[test]
    fn permuting_context_frames_without_positions_keeps_psi() {
        let cfg = StyleConfig {
            positional_encoding: false,
            ..StyleConfig::default()
        };
        let enc = StyleEncoder::init(cfg, 7);
        let x = random(6, 192, 2);
        let order = [3, 0, 4, 1, 2, 5];
        let permuted = Array2::from_shape_fn((6, 192), |(t, j)| x[[order[t], j]]);
        let a = style_vector(&x, &enc).unwrap().0;
        let b = style_vector(&permuted, &enc).unwrap().0;
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn squared_norm_gradient_matches_finite_differences() {
        let cfg = StyleConfig {
            content_dim: 6,
            dim: 8,
            blocks: 2,
            positional_encoding: true,
        };
        let enc = StyleEncoder::init(cfg, 3);
        let x = random(4, 6, 4);
        let objective = |g: &mut Graph, xv: Var| {
            let psi = enc.forward(g, xv);
            let sq = g.square(psi);
            g.sum(sq)
        };
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = objective(&mut g, xv);
        g.backward(out);
        let analytic = g.grad(xv).unwrap().clone();
        let numeric = finite_difference(&x, 1e-5, |p| {
            let mut g = Graph::new();
            let xv = g.constant(p.clone());
            let out = objective(&mut g, xv);
            g.scalar(out)
        });
        assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-4);
    }
}
