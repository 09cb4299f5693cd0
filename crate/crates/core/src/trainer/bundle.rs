//! A complete trained pipeline in one archive: face model, feature normalizer,
//! style encoder, Audio2FLAME, emotion predictor (with logit statistics) and augment network.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::archive::Archive;
use crate::audio::{FeatureNormalizer, StyleConfig, StyleEncoder};
use crate::audio2flame::{init_weights, Audio2FlameConfig, Audio2FlameNet};
use crate::autograd::Graph;
use crate::emotion::{
    blend_with_conditions, smooth_priors, AugmentConfig, EmotionAugmentNet, EmotionPredictorNet,
    LogitStats, PredictorConfig, N_EMOTIONS,
};
use crate::error::{Error, Result, StageExt};
use crate::face_model::FaceModel;
use crate::params::ParamSet;

const FORMAT: &str = "emoface-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const FACE_PREFIX: &str = "face/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub use_style: bool,
    pub use_emotion_module: bool,
    /// Moving-average radius applied to the audio priors.
    pub smooth_radius: usize,
    /// Project output parameters onto the mirror-symmetric subspace.
    pub symmetry: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            use_style: true,
            use_emotion_module: true,
            smooth_radius: 2,
            symmetry: true,
        }
    }
}

/// Architecture of the four networks; `n_params` fields are taken from the face model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfigs {
    pub a2f: Audio2FlameConfig,
    pub style: StyleConfig,
    pub predictor: PredictorConfig,
    pub augment: AugmentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    settings: PipelineSettings,
    normalizer: FeatureNormalizer,
    logit_stats: LogitStats,
    a2f: Audio2FlameConfig,
    style: StyleConfig,
    predictor: PredictorConfig,
    augment: AugmentConfig,
    face: Value,
    info: Value,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub face: FaceModel,
    pub normalizer: FeatureNormalizer,
    pub style: StyleEncoder,
    pub a2f: Audio2FlameNet,
    pub predictor: EmotionPredictorNet,
    pub augment: EmotionAugmentNet,
    pub settings: PipelineSettings,
    /// Free-form training provenance (stage, epochs, best epoch).
    pub info: Value,
}

/// Intermediate and final outputs of one pipeline pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub style: Array2<f64>,
    pub raw: Array2<f64>,
    /// Rescaled, smoothed audio priors.
    pub priors: Array2<f64>,
    pub blended: Array2<f64>,
    pub params: Array2<f64>,
}

impl ModelBundle {
    /// Untrained weights everywhere, augment final layer zeroed.
    pub fn random_init(
        face: FaceModel,
        normalizer: FeatureNormalizer,
        logit_stats: LogitStats,
        nets: &NetConfigs,
        seed: u64,
    ) -> Self {
        let a2f = init_weights(
            Audio2FlameConfig {
                n_params: face.n_params(),
                ..nets.a2f.clone()
            },
            seed,
        );
        let style = StyleEncoder::init(nets.style.clone(), seed.wrapping_add(1));
        let mut predictor = EmotionPredictorNet::init(nets.predictor.clone(), seed.wrapping_add(2));
        predictor.stats = Some(logit_stats);
        let augment = EmotionAugmentNet::init(
            AugmentConfig {
                n_params: face.n_params(),
                ..nets.augment.clone()
            },
            seed.wrapping_add(3),
        );
        Self {
            face,
            normalizer,
            style,
            a2f,
            predictor,
            augment,
            settings: PipelineSettings::default(),
            info: Value::Null,
        }
    }

    pub fn net_configs(&self) -> NetConfigs {
        NetConfigs {
            a2f: self.a2f.config.clone(),
            style: self.style.config.clone(),
            predictor: self.predictor.config.clone(),
            augment: self.augment.config.clone(),
        }
    }

    pub fn logit_stats(&self) -> &LogitStats {
        self.predictor.stats.as_ref().expect("bundles always carry logit statistics")
    }

    /// Style vector `1×S` for normalized content; zeros when style is disabled.
    pub fn style_of(&self, content: &Array2<f64>) -> Array2<f64> {
        if !self.settings.use_style {
            return Array2::zeros((1, self.a2f.config.style_dim));
        }
        let mut g = Graph::new();
        let x = g.constant(content.clone());
        let s = self.style.forward(&mut g, x);
        g.value(s).clone()
    }

    pub fn raw_params(&self, content: &Array2<f64>, style: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let x = g.constant(content.clone());
        let s = g.constant(style.clone());
        let y = self.a2f.forward(&mut g, x, s);
        g.value(y).clone()
    }

    /// Rescaled and smoothed priors from normalized content.
    pub fn audio_priors(&self, content: &Array2<f64>) -> Result<Array2<f64>> {
        let logits = self.predictor.logits(content)?;
        Ok(smooth_priors(&self.logit_stats().rescale(&logits), self.settings.smooth_radius))
    }

    pub fn enhance(&self, raw: &Array2<f64>, blended: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let r = g.constant(raw.clone());
        let b = g.constant(blended.clone());
        let y = self.augment.forward(&mut g, r, b);
        g.value(y).clone()
    }

    pub fn finish(&self, params: Array2<f64>) -> Array2<f64> {
        if self.settings.symmetry {
            self.face.symmetrize_params(params.view())
        } else {
            params
        }
    }

    /// Full pass from raw (unnormalized) content frames and per-frame user conditions `T×7`.
    pub fn run(&self, content: &Array2<f64>, user: &Array2<f64>) -> Result<PipelineOutput> {
        if content.nrows() == 0 {
            return Err(Error::InvalidInput("no content frames".into()));
        }
        if user.dim() != (content.nrows(), N_EMOTIONS) {
            return Err(Error::InvalidInput(format!(
                "user conditions {:?} do not cover {} frames",
                user.dim(),
                content.nrows()
            )));
        }
        let x = self.normalizer.apply(content).stage("content")?;
        let style = self.style_of(&x);
        let raw = self.raw_params(&x, &style);
        let (priors, blended, params) = if self.settings.use_emotion_module {
            let priors = self.audio_priors(&x).stage("predict_priors")?;
            let blended = blend_with_conditions(&priors, user).stage("blend_condition")?;
            let params = self.enhance(&raw, &blended);
            (priors, blended, params)
        } else {
            let zeros = Array2::zeros(user.dim());
            (zeros, user.clone(), raw.clone())
        };
        Ok(PipelineOutput {
            style,
            params: self.finish(params),
            raw,
            priors,
            blended,
        })
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let face = self.face.to_archive()?;
        let header = Header {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            settings: self.settings.clone(),
            normalizer: self.normalizer.clone(),
            logit_stats: self.logit_stats().clone(),
            a2f: self.a2f.config.clone(),
            style: self.style.config.clone(),
            predictor: self.predictor.config.clone(),
            augment: self.augment.config.clone(),
            face: face.meta,
            info: self.info.clone(),
        };
        let mut a = Archive::new(serde_json::to_value(header)?);
        for set in [&self.a2f.params, &self.style.params, &self.predictor.params, &self.augment.params] {
            for (name, t) in set.iter() {
                a.put(name.clone(), t.clone());
            }
        }
        for (name, t) in face.arrays {
            a.put(format!("{FACE_PREFIX}{name}"), t);
        }
        Ok(a)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_archive()?.to_bytes()
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::dataset::hash_bytes(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(Archive::load(path)?, path)
    }

    pub fn from_bytes(bytes: &[u8], file: &Path) -> Result<Self> {
        Self::from_archive(Archive::from_bytes(bytes, file)?, file)
    }

    fn from_archive(a: Archive, file: &Path) -> Result<Self> {
        let format = a.meta.get("format").and_then(Value::as_str).unwrap_or_default();
        let version = a.meta.get("version").and_then(Value::as_u64);
        if format != FORMAT {
            return Err(Error::format(file, format!("not a checkpoint (format `{format}`)")));
        }
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Version(format!(
                "{} has checkpoint version {version:?}, this build reads {CHECKPOINT_VERSION}",
                file.display()
            )));
        }
        let header: Header = serde_json::from_value(a.meta.clone())
            .map_err(|e| Error::format(file, format!("bad checkpoint header: {e}")))?;
        let mut face_arrays = Archive::new(header.face.clone());
        let mut nets: [ParamSet; 4] = Default::default();
        for (name, t) in a.arrays {
            if let Some(rest) = name.strip_prefix(FACE_PREFIX) {
                face_arrays.put(rest, t);
                continue;
            }
            let slot = match name.split('.').next() {
                Some("a2f") => 0,
                Some("style") => 1,
                Some("emo") => 2,
                Some("aug") => 3,
                _ => return Err(Error::format(file, format!("unexpected array `{name}`"))),
            };
            nets[slot].insert(name, t);
        }
        let face = FaceModel::from_archive(face_arrays, file)?;
        if header.a2f.n_params != face.n_params() || header.augment.n_params != face.n_params() {
            return Err(Error::Version(format!(
                "networks emit {} parameters but the face model has {}",
                header.a2f.n_params,
                face.n_params()
            )));
        }
        let [a2f, style, emo, aug] = nets;
        let bundle = Self {
            face,
            normalizer: header.normalizer,
            style: StyleEncoder {
                config: header.style,
                params: style,
            },
            a2f: Audio2FlameNet {
                config: header.a2f,
                params: a2f,
            },
            predictor: EmotionPredictorNet {
                config: header.predictor,
                params: emo,
                stats: Some(header.logit_stats),
            },
            augment: EmotionAugmentNet {
                config: header.augment,
                params: aug,
            },
            settings: header.settings,
            info: header.info,
        };
        bundle.check_complete(file)?;
        Ok(bundle)
    }

    /// Every weight the forward passes read must be present with the shape its init gives.
    fn check_complete(&self, file: &Path) -> Result<()> {
        let reference = Self::random_init(
            self.face.clone(),
            self.normalizer.clone(),
            self.logit_stats().clone(),
            &self.net_configs(),
            0,
        );
        let pairs = [
            (&reference.a2f.params, &self.a2f.params),
            (&reference.style.params, &self.style.params),
            (&reference.predictor.params, &self.predictor.params),
            (&reference.augment.params, &self.augment.params),
        ];
        for (want, got) in pairs {
            for (name, t) in want.iter() {
                match got.get(name) {
                    Some(g) if g.dim() == t.dim() => {}
                    Some(g) => {
                        return Err(Error::Version(format!(
                            "`{name}` in {} has shape {:?}, expected {:?}",
                            file.display(),
                            g.dim(),
                            t.dim()
                        )))
                    }
                    None => return Err(Error::format(file, format!("missing array `{name}`"))),
                }
            }
        }
        Ok(())
    }
}
