use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::N_EMOTIONS;
use crate::audio2flame::{conv_stack, init_conv_stack, ConvLayout};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{init_layer_norm, layer_norm};
use crate::params::{uniform_fan_in, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub embed_dim: usize,
    pub n_params: usize,
    pub hidden: usize,
    pub layout: ConvLayout,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            n_params: 56,
            hidden: 128,
            layout: ConvLayout::Same,
        }
    }
}

impl AugmentConfig {
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.n_params
    }
}

const PREFIX: &str = "aug";

/// Residual emotion augmentation: `raw + A(norm([γ·E | raw]))`.
#[derive(Debug, Clone)]
pub struct EmotionAugmentNet {
    pub config: AugmentConfig,
    pub params: ParamSet,
}

impl EmotionAugmentNet {
    /// Random init with the last convolution zeroed, so the network starts as the identity.
    pub fn init(config: AugmentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        params.insert(
            format!("{PREFIX}.embedding"),
            uniform_fan_in(&mut rng, N_EMOTIONS, config.embed_dim, N_EMOTIONS),
        );
        init_layer_norm(&mut params, &format!("{PREFIX}.norm"), config.input_dim());
        let specs = config.layout.specs(config.input_dim(), config.hidden, config.n_params);
        init_conv_stack(&mut rng, &mut params, PREFIX, &specs);
        let mut net = Self { config, params };
        net.zero_final_layer();
        net
    }

    pub fn zero_final_layer(&mut self) {
        for name in ["weight", "bias"] {
            if let Some(p) = self.params.get_mut(&format!("{PREFIX}.conv2.{name}")) {
                p.fill(0.0);
            }
        }
    }

    pub fn embedding(&self) -> &Array2<f64> {
        self.params
            .get(&format!("{PREFIX}.embedding"))
            .expect("embedding registered")
    }

    /// `blended` is `T×7`; returns the `T×embed_dim` emotion features.
    pub fn features(&self, g: &mut Graph, blended: Var) -> Var {
        let e = g.param(&self.params, &format!("{PREFIX}.embedding"));
        g.matmul(blended, e)
    }

    pub fn forward(&self, g: &mut Graph, raw: Var, blended: Var) -> Var {
        let feats = self.features(g, blended);
        let x = g.concat_cols(&[feats, raw]);
        let x = layer_norm(g, &self.params, &format!("{PREFIX}.norm"), x);
        let specs = self
            .config
            .layout
            .specs(self.config.input_dim(), self.config.hidden, self.config.n_params);
        let delta = conv_stack(g, &self.params, PREFIX, &specs, x);
        g.add(raw, delta)
    }
}

pub fn augment(raw: &Array2<f64>, blended: &Array2<f64>, net: &EmotionAugmentNet) -> Result<Array2<f64>> {
    if raw.nrows() != blended.nrows() {
        return Err(Error::InvalidInput(format!(
            "raw params have {} frames but emotion priors have {}",
            raw.nrows(),
            blended.nrows()
        )));
    }
    if raw.ncols() != net.config.n_params {
        return Err(Error::Dimension {
            axis: "face parameters",
            expected: net.config.n_params,
            got: raw.ncols(),
        });
    }
    if blended.ncols() != N_EMOTIONS {
        return Err(Error::Dimension {
            axis: "emotion categories",
            expected: N_EMOTIONS,
            got: blended.ncols(),
        });
    }
    if raw.nrows() == 0 {
        return Ok(raw.clone());
    }
    let mut g = Graph::new();
    let r = g.constant(raw.clone());
    let b = g.constant(blended.clone());
    let out = net.forward(&mut g, r, b);
    Ok(g.value(out).clone())
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

    fn perturb_final(net: &mut EmotionAugmentNet, seed: u64) {
        for name in ["weight", "bias"] {
            let p = net.params.get_mut(&format!("aug.conv2.{name}")).unwrap();
            *p = random(p.nrows(), p.ncols(), seed) * 0.1;
        }
    }

    #[test]
    fn zero_final_layer_is_identity() {
        let net = EmotionAugmentNet::init(AugmentConfig::default(), 1000);
        let raw = random(9, 56, 1);
        let out = augment(&raw, &random(9, 7, 2), &net).unwrap();
        assert_eq!(out, raw);
    }

    #[test]
    fn one_hot_selects_embedding_row() {
        let net = EmotionAugmentNet::init(AugmentConfig::default(), 1000);
        let mut g = Graph::new();
        let mut onehot = Array2::zeros((1, 7));
        onehot[[0, 4]] = 1.0;
        let b = g.constant(onehot);
        let f = net.features(&mut g, b);
        assert_eq!(g.value(f).row(0), net.embedding().row(4));
    }

    #[test]
    fn length_mismatch_errors() {
        let net = EmotionAugmentNet::init(AugmentConfig::default(), 1000);
        assert!(augment(&random(4, 56, 1), &random(5, 7, 2), &net).is_err());
    }

    #[test]
    fn gradient_wrt_priors_matches_finite_differences() {
        let cfg = AugmentConfig {
            embed_dim: 6,
            n_params: 5,
            hidden: 4,
            layout: ConvLayout::Same,
        };
        let mut net = EmotionAugmentNet::init(cfg, 3);
        perturb_final(&mut net, 9);
        let raw = random(6, 5, 4);
        let pri = random(6, 7, 5);
        let run = |g: &mut Graph, pv: Var| {
            let r = g.constant(raw.clone());
            let y = net.forward(g, r, pv);
            g.sum(y)
        };
        let mut g = Graph::new();
        let pv = g.input(pri.clone());
        let out = run(&mut g, pv);
        g.backward(out);
        let analytic = g.grad(pv).unwrap().clone();
        let numeric = finite_difference(&pri, 1e-5, |p| {
            let mut g = Graph::new();
            let pv = g.constant(p.clone());
            let out = run(&mut g, pv);
            g.scalar(out)
        });
        assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-4);
    }
}
