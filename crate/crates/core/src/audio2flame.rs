//! The Audio2FLAME regressor: per-frame `[content | style]` to raw face parameters.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{StyleVector, CONTENT_DIM, STYLE_DIM};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{conv1d, hold_upsample, init_conv, Activation, ConvSpec};
use crate::params::ParamSet;

/// How the published `(in, out, kernel, stride, act)` tuples are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvLayout {
    /// Kernels 1, 3, 1 with stride 1: one output per frame, ±1 frame of context.
    #[default]
    Same,
    /// Kernels 1, 1, 1 with a stride-3 middle layer, hold-upsampled back to `T`.
    Literal,
}

impl ConvLayout {
    pub fn specs(self, input: usize, hidden: usize, output: usize) -> [ConvSpec; 3] {
        let (k, s) = match self {
            ConvLayout::Same => (3, 1),
            ConvLayout::Literal => (1, 3),
        };
        [
            ConvSpec::new(input, hidden, 1, 1, Activation::Relu),
            ConvSpec::new(hidden, hidden, k, s, Activation::Relu),
            ConvSpec::new(hidden, output, 1, 1, Activation::None),
        ]
    }

    /// Frames of input a single output frame can see.
    pub fn receptive_field(self) -> usize {
        match self {
            ConvLayout::Same => 3,
            ConvLayout::Literal => 3,
        }
    }
}

/// Three-layer temporal CNN shared by Audio2FLAME and the emotion augment network.
pub fn conv_stack(g: &mut Graph, set: &ParamSet, prefix: &str, specs: &[ConvSpec; 3], x: Var) -> Var {
    let (t, _) = g.shape(x);
    let mut h = x;
    let mut stride = 1;
    for (i, spec) in specs.iter().enumerate() {
        h = conv1d(g, set, &format!("{prefix}.conv{i}"), spec, h);
        stride *= spec.stride;
    }
    hold_upsample(g, h, stride, t)
}

pub fn init_conv_stack(rng: &mut ChaCha8Rng, set: &mut ParamSet, prefix: &str, specs: &[ConvSpec; 3]) {
    for (i, spec) in specs.iter().enumerate() {
        init_conv(rng, set, &format!("{prefix}.conv{i}"), spec);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Audio2FlameConfig {
    pub content_dim: usize,
    pub style_dim: usize,
    pub hidden: usize,
    pub n_params: usize,
    pub layout: ConvLayout,
}

impl Default for Audio2FlameConfig {
    fn default() -> Self {
        Self {
            content_dim: CONTENT_DIM,
            style_dim: STYLE_DIM,
            hidden: 128,
            n_params: 56,
            layout: ConvLayout::Same,
        }
    }
}

impl Audio2FlameConfig {
    pub fn specs(&self) -> [ConvSpec; 3] {
        self.layout
            .specs(self.content_dim + self.style_dim, self.hidden, self.n_params)
    }
}

#[derive(Debug, Clone)]
pub struct Audio2FlameNet {
    pub config: Audio2FlameConfig,
    pub params: ParamSet,
}

pub const PREFIX: &str = "a2f";

/// Fan-in scaled uniform initialization; the RandInit baseline is exactly this.
pub fn init_weights(config: Audio2FlameConfig, seed: u64) -> Audio2FlameNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::default();
    init_conv_stack(&mut rng, &mut params, PREFIX, &config.specs());
    Audio2FlameNet { config, params }
}

impl Audio2FlameNet {
    pub fn zero_biases(&mut self) {
        for i in 0..3 {
            if let Some(b) = self.params.get_mut(&format!("{PREFIX}.conv{i}.bias")) {
                b.fill(0.0);
            }
        }
    }

    /// `content` is `T×C`, `style` is `1×S`; returns `T×56`.
    pub fn forward(&self, g: &mut Graph, content: Var, style: Var) -> Var {
        let (t, _) = g.shape(content);
        let tiled = g.gather_rows(style, vec![Some(0); t]);
        let x = g.concat_cols(&[content, tiled]);
        conv_stack(g, &self.params, PREFIX, &self.config.specs(), x)
    }

    pub fn predict(&self, content: &Array2<f64>, style: &StyleVector) -> Result<Array2<f64>> {
        if content.nrows() == 0 {
            return Err(Error::InvalidInput("Audio2FLAME needs at least one frame".into()));
        }
        if content.ncols() != self.config.content_dim {
            return Err(Error::Dimension {
                axis: "content channels",
                expected: self.config.content_dim,
                got: content.ncols(),
            });
        }
        if style.0.len() != self.config.style_dim {
            return Err(Error::Dimension {
                axis: "style channels",
                expected: self.config.style_dim,
                got: style.0.len(),
            });
        }
        let mut g = Graph::new();
        let c = g.constant(content.clone());
        let s = g.constant(Array2::from_shape_vec((1, style.0.len()), style.0.clone()).expect("row"));
        let out = self.forward(&mut g, c, s);
        Ok(g.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{finite_difference, relative_error};
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn small() -> Audio2FlameConfig {
        Audio2FlameConfig {
            content_dim: 5,
            style_dim: 3,
            hidden: 6,
            n_params: 4,
            layout: ConvLayout::Same,
        }
    }

    #[test]
    fn single_frame_shape() {
        let net = init_weights(Audio2FlameConfig::default(), 1000);
        let out = net
            .predict(&random(1, 192, 1), &StyleVector(vec![0.1; 64]))
            .unwrap();
        assert_eq!(out.dim(), (1, 56));
    }

    #[test]
    fn zero_input_with_zero_biases_is_zero() {
        let mut net = init_weights(Audio2FlameConfig::default(), 1000);
        net.zero_biases();
        let out = net
            .predict(&Array2::zeros((7, 192)), &StyleVector(vec![0.0; 64]))
            .unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn checksum_tracks_seed() {
        let a = init_weights(Audio2FlameConfig::default(), 1000).params.checksum();
        let b = init_weights(Audio2FlameConfig::default(), 1000).params.checksum();
        let c = init_weights(Audio2FlameConfig::default(), 1001).params.checksum();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let net = init_weights(Audio2FlameConfig::default(), 1000);
        let err = net
            .predict(&random(3, 100, 1), &StyleVector(vec![0.0; 64]))
            .unwrap_err();
        assert!(err.to_string().contains("content channels"));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for layout in [ConvLayout::Same, ConvLayout::Literal] {
            let net = init_weights(Audio2FlameConfig { layout, ..small() }, 11);
            let x = random(7, 5, 2);
            let style = random(1, 3, 3);
            let run = |g: &mut Graph, xv: Var| {
                let s = g.constant(style.clone());
                let y = net.forward(g, xv, s);
                g.sum(y)
            };
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let out = run(&mut g, xv);
            g.backward(out);
            let analytic = g.grad(xv).unwrap().clone();
            let numeric = finite_difference(&x, 1e-5, |p| {
                let mut g = Graph::new();
                let xv = g.constant(p.clone());
                let out = run(&mut g, xv);
                g.scalar(out)
            });
            assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-4, "{layout:?}");
        }
    }

    #[test]
    fn literal_layout_keeps_length() {
        let net = init_weights(Audio2FlameConfig { layout: ConvLayout::Literal, ..small() }, 1);
        for t in [1, 2, 3, 10] {
            let out = net.predict(&random(t, 5, t as u64), &StyleVector(vec![0.0; 3])).unwrap();
            assert_eq!(out.nrows(), t);
        }
    }

    proptest! {
        #[test]
        fn output_length_equals_input_length(t in 1usize..40) {
            let net = init_weights(small(), 5);
            let out = net.predict(&random(t, 5, 9), &StyleVector(vec![0.2; 3])).unwrap();
            prop_assert_eq!(out.dim(), (t, 4));
        }

        #[test]
        fn changes_stay_within_the_receptive_field(t in 3usize..25, pick in 0usize..25) {
            let net = init_weights(small(), 8);
            let frame = pick % t;
            let x = random(t, 5, 1);
            let mut y = x.clone();
            for j in 0..5 {
                y[[frame, j]] += 0.7;
            }
            let style = StyleVector(vec![0.3, -0.1, 0.5]);
            let a = net.predict(&x, &style).unwrap();
            let b = net.predict(&y, &style).unwrap();
            let r = ConvLayout::Same.receptive_field() as isize;
            for i in 0..t {
                let far = (i as isize - frame as isize).abs() > r - 1;
                if far {
                    prop_assert_eq!(a.row(i), b.row(i));
                }
            }
        }
    }
}
