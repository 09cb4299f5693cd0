//! Staged training (Audio2FLAME with style encoder, emotion predictor, augment network)
//! and the evaluation harness.

mod bundle;
mod eval;

pub use bundle::{ModelBundle, NetConfigs, PipelineOutput, PipelineSettings, CHECKPOINT_VERSION};
pub use eval::{evaluate, split_ids, user_conditions, ClipLip, EvalOptions, EvalReport, LipSummary, SplitName};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::FeatureNormalizer;
use crate::autograd::{Graph, Var};
use crate::dataset::{split, Corpus, Sample, Splits};
use crate::emotion::blend_with_conditions;
use crate::error::{Error, Result};
use crate::face_model::FaceModel;
use crate::metrics::{lip_error, mouth_loss_graph, vertex_loss_graph, LossConfig};
use crate::params::{Adam, AdamConfig, ParamSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub no_lvx: bool,
    pub no_llm: bool,
    pub no_style: bool,
    pub no_emotion_module: bool,
}

impl Ablation {
    /// Flags set in either.
    pub fn union(self, other: Ablation) -> Ablation {
        Ablation {
            no_lvx: self.no_lvx || other.no_lvx,
            no_llm: self.no_llm || other.no_llm,
            no_style: self.no_style || other.no_style,
            no_emotion_module: self.no_emotion_module || other.no_emotion_module,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Audio2FLAME (and style encoder) epochs.
    pub epochs: usize,
    pub predictor_epochs: usize,
    pub augment_epochs: usize,
    /// Optional final stage updating Audio2FLAME, style and augment together.
    pub joint_epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub decay_every: usize,
    pub seed: u64,
    /// `w1` defaults to 1000 so the vertex term (meters) is commensurate with the mouth term.
    pub loss: LossConfig,
    pub ablation: Ablation,
    pub split: [f64; 3],
    /// Worker threads for per-clip gradients; 0 uses every core. Results do not depend on it.
    pub threads: usize,
    pub smooth_radius: usize,
    pub nets: NetConfigs,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            predictor_epochs: 10,
            augment_epochs: 30,
            joint_epochs: 0,
            batch_size: 1,
            lr_start: 1e-4,
            lr_end: 1e-5,
            decay_every: 10,
            seed: 1000,
            loss: LossConfig {
                w1: 1000.0,
                ..LossConfig::default()
            },
            ablation: Ablation::default(),
            split: [0.8, 0.1, 0.1],
            threads: 0,
            smooth_radius: 2,
            nets: NetConfigs::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("learning rates must satisfy 0 < lr_end ≤ lr_start");
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return bad("batch_size and decay_every must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.ablation.no_lvx && self.ablation.no_llm {
            return bad("disabling both losses leaves nothing to train");
        }
        Ok(())
    }
}

/// Piecewise-constant rate: one geometric step every `decay_every` epochs, sized so the
/// last block of a `total`-epoch run sits at `lr_end`.
pub fn learning_rate(config: &TrainConfig, epoch: usize, total: usize) -> f64 {
    let blocks = total.div_ceil(config.decay_every).max(1);
    if blocks == 1 {
        return config.lr_start;
    }
    let factor = (config.lr_end / config.lr_start).powf(1.0 / (blocks - 1) as f64);
    let k = (epoch / config.decay_every).min(blocks - 1);
    (config.lr_start * factor.powi(k as i32)).max(config.lr_end)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_l_vx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_l_lm: Option<f64>,
    pub val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_lip_mean_mm: Option<f64>,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub splits: Splits,
    pub log: Vec<EpochLog>,
    /// Epoch of the best validation loss in the Audio2FLAME stage, whose weights are kept.
    pub best_epoch: usize,
    pub checkpoint: PathBuf,
}

/// A training clip with normalized content.
struct Clip {
    content: Array2<f64>,
    params: Array2<f64>,
    beta: Vec<f64>,
    logits: Array2<f64>,
    /// `T×7` user condition `intensity · onehot(label)`.
    user: Array2<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    total: f64,
    l_vx: f64,
    l_lm: f64,
}

impl std::ops::AddAssign for Parts {
    fn add_assign(&mut self, o: Parts) {
        self.total += o.total;
        self.l_vx += o.l_vx;
        self.l_lm += o.l_lm;
    }
}

impl Parts {
    fn scaled(self, c: f64) -> Parts {
        Parts {
            total: self.total * c,
            l_vx: self.l_vx * c,
            l_lm: self.l_lm * c,
        }
    }
}

fn prepare(samples: &[Sample], normalizer: &FeatureNormalizer) -> Result<Vec<Clip>> {
    samples
        .iter()
        .map(|s| {
            Ok(Clip {
                content: normalizer.apply(&s.content)?,
                params: s.params.clone(),
                beta: s.meta.beta.clone(),
                logits: s.logits.clone(),
                user: user_conditions(s.label, s.meta.intensity, s.meta.frames),
            })
        })
        .collect()
}

/// `w1·L_vx + w2·L_lm` on the meshes of `pred` and the clip's ground truth.
fn mesh_loss(
    g: &mut Graph,
    face: &FaceModel,
    clip: &Clip,
    pred: Var,
    loss: &LossConfig,
    ablation: Ablation,
) -> Result<(Var, Parts)> {
    let gt = g.constant(face.evaluate_flat(&clip.beta, clip.params.view())?);
    let mesh = face.evaluate_graph(g, &clip.beta, pred)?;
    let lvx = vertex_loss_graph(g, mesh, gt, face.vertex_mask())?;
    let llm = mouth_loss_graph(g, mesh, gt, face, loss);
    let parts = Parts {
        total: 0.0,
        l_vx: g.scalar(lvx),
        l_lm: g.scalar(llm),
    };
    let total = match (ablation.no_lvx, ablation.no_llm) {
        (false, false) => {
            let a = g.scale(lvx, loss.w1);
            let b = g.scale(llm, loss.w2);
            g.add(a, b)
        }
        (true, _) => g.scale(llm, loss.w2),
        (_, true) => g.scale(lvx, loss.w1),
    };
    Ok((
        total,
        Parts {
            total: g.scalar(total),
            ..parts
        },
    ))
}

type Grads = Vec<(String, Array2<f64>)>;

/// Per-clip losses and gradients evaluated in parallel, reduced in clip order.
fn batch_step<F>(batch: &[usize], f: F) -> Result<(Parts, Grads)>
where
    F: Fn(usize) -> Result<(Parts, Grads)> + Sync,
{
    let per_clip: Vec<Result<(Parts, Grads)>> = batch.par_iter().map(|&i| f(i)).collect();
    let mut total = Parts::default();
    let mut sum: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    for r in per_clip {
        let (parts, grads) = r?;
        total += parts;
        for (name, gr) in grads {
            match sum.get_mut(&name) {
                Some(acc) => *acc += &gr,
                None => {
                    sum.insert(name, gr);
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let grads = sum.into_iter().map(|(n, g)| (n, g * scale)).collect();
    Ok((total.scaled(scale), grads))
}

fn mean_parts<F>(n: usize, f: F) -> Result<Parts>
where
    F: Fn(usize) -> Result<Parts> + Sync,
{
    let all: Vec<Result<Parts>> = (0..n).into_par_iter().map(&f).collect();
    let mut total = Parts::default();
    for p in all {
        total += p?;
    }
    Ok(total.scaled(1.0 / n.max(1) as f64))
}

struct Run<'a> {
    config: &'a TrainConfig,
    out: &'a Path,
    log: Vec<EpochLog>,
    log_file: File,
    /// Weights at the end of the most recent finite epoch.
    last_good: ModelBundle,
}

impl Run<'_> {
    fn record(&mut self, entry: EpochLog, bundle: &ModelBundle) -> Result<()> {
        self.last_good = bundle.clone();
        let path = self.out.join("train_log.jsonl");
        let line = serde_json::to_string(&entry)?;
        writeln!(self.log_file, "{line}").map_err(|e| Error::io(&path, e))?;
        log::info!("{line}");
        self.log.push(entry);
        Ok(())
    }

    fn shuffled(&self, n: usize, stage: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let seed = self.config.seed ^ (stage << 32) ^ epoch as u64;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    fn diverged(&self, epoch: usize) -> Error {
        let path = self.out.join("last_good.efc");
        if let Err(e) = self.last_good.save(&path) {
            log::error!("could not save last good checkpoint: {e}");
        }
        Error::Diverged { epoch }
    }
}

fn check_finite(parts: &Parts) -> bool {
    parts.total.is_finite()
}

/// Train every stage on the corpus train split; checkpoints and `train_log.jsonl` go to `out`.
pub fn train(config: &TrainConfig, corpus: &Corpus, out: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        builder = builder.num_threads(config.threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(|| train_inner(config, corpus, out))
}

fn train_inner(config: &TrainConfig, corpus: &Corpus, out: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let splits = split(&corpus.manifest, config.split, config.seed)?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Config("training needs non-empty train and val splits".into()));
    }
    let face = corpus.face_model()?;
    let train_samples = corpus.load_all(&splits.train)?;
    let val_samples = corpus.load_all(&splits.val)?;
    let normalizer = FeatureNormalizer::fit(train_samples.iter().map(|s| &s.content))?;
    let train_clips = prepare(&train_samples, &normalizer)?;
    let val_clips = prepare(&val_samples, &normalizer)?;
    drop((train_samples, val_samples));

    let mut bundle = ModelBundle::random_init(
        face,
        normalizer,
        corpus.manifest.logit_stats.clone(),
        &config.nets,
        config.seed,
    );
    bundle.settings = PipelineSettings {
        use_style: !config.ablation.no_style,
        use_emotion_module: !config.ablation.no_emotion_module,
        smooth_radius: config.smooth_radius,
        ..PipelineSettings::default()
    };
    let log_path = out.join("train_log.jsonl");
    let mut run = Run {
        config,
        out,
        log: Vec::new(),
        log_file: File::create(&log_path).map_err(|e| Error::io(&log_path, e))?,
        last_good: bundle.clone(),
    };

    let best_epoch = train_audio2flame(&mut run, &mut bundle, &train_clips, &val_clips)?;
    bundle.info = serde_json::json!({ "stage": "audio2flame", "best_epoch": best_epoch, "config": config });
    bundle.save(&out.join("stage1_audio2flame.efc"))?;

    if !config.ablation.no_emotion_module {
        train_predictor(&mut run, &mut bundle, &train_clips, &val_clips)?;
        bundle.info["stage"] = "predictor".into();
        bundle.save(&out.join("stage2_predictor.efc"))?;
        train_augment(&mut run, &mut bundle, &train_clips, &val_clips, false)?;
        if config.joint_epochs > 0 {
            train_augment(&mut run, &mut bundle, &train_clips, &val_clips, true)?;
        }
    }
    bundle.info["stage"] = "final".into();
    let checkpoint = out.join("model.efc");
    bundle.save(&checkpoint)?;
    Ok(TrainOutcome {
        bundle,
        splits,
        log: run.log,
        best_epoch,
        checkpoint,
    })
}

fn raw_forward(g: &mut Graph, bundle: &ModelBundle, clip: &Clip) -> Var {
    let x = g.constant(clip.content.clone());
    let style = if bundle.settings.use_style {
        bundle.style.forward(g, x)
    } else {
        g.constant(Array2::zeros((1, bundle.a2f.config.style_dim)))
    };
    bundle.a2f.forward(g, x, style)
}

fn val_lip_raw(bundle: &ModelBundle, clips: &[Clip]) -> Result<f64> {
    let errs: Vec<Result<(f64, usize)>> = clips
        .par_iter()
        .map(|c| {
            let style = bundle.style_of(&c.content);
            let raw = bundle.raw_params(&c.content, &style);
            let face = &bundle.face;
            let r = lip_error(
                face.evaluate_flat(&c.beta, raw.view())?.view(),
                face.evaluate_flat(&c.beta, c.params.view())?.view(),
                face,
            )?;
            Ok((r.mean_mm * r.frames as f64, r.frames))
        })
        .collect();
    let (mut sum, mut n) = (0.0, 0);
    for e in errs {
        let (s, f) = e?;
        sum += s;
        n += f;
    }
    Ok(sum / n as f64)
}

fn train_audio2flame(run: &mut Run, bundle: &mut ModelBundle, train: &[Clip], val: &[Clip]) -> Result<usize> {
    let config = run.config;
    let mut adam_a2f = Adam::new(AdamConfig::default());
    let mut adam_style = Adam::new(AdamConfig::default());
    let mut best: Option<(f64, usize, ParamSet, ParamSet)> = None;
    for epoch in 0..config.epochs {
        let lr = learning_rate(config, epoch, config.epochs);
        let order = run.shuffled(train.len(), 1, epoch);
        let mut epoch_parts = Parts::default();
        for batch in order.chunks(config.batch_size) {
            let b: &ModelBundle = bundle;
            let (parts, grads) = batch_step(batch, |i| {
                let mut g = Graph::new();
                let pred = raw_forward(&mut g, b, &train[i]);
                let (loss, parts) = mesh_loss(&mut g, &b.face, &train[i], pred, &config.loss, config.ablation)?;
                g.backward(loss);
                Ok((parts, g.param_grads()))
            })?;
            if !check_finite(&parts) {
                return Err(run.diverged(epoch));
            }
            epoch_parts += parts.scaled(batch.len() as f64);
            adam_a2f.step(&mut bundle.a2f.params, &grads, lr);
            if bundle.settings.use_style {
                adam_style.step(&mut bundle.style.params, &grads, lr);
            }
        }
        let epoch_parts = epoch_parts.scaled(1.0 / train.len() as f64);
        let b: &ModelBundle = bundle;
        let val_parts = mean_parts(val.len(), |i| {
            let mut g = Graph::new();
            let pred = raw_forward(&mut g, b, &val[i]);
            Ok(mesh_loss(&mut g, &b.face, &val[i], pred, &config.loss, config.ablation)?.1)
        })?;
        if !val_parts.total.is_finite() {
            return Err(run.diverged(epoch));
        }
        let val_lip = val_lip_raw(bundle, val)?;
        let is_best = best.as_ref().is_none_or(|(l, ..)| val_parts.total < *l);
        if is_best {
            best = Some((val_parts.total, epoch, bundle.a2f.params.clone(), bundle.style.params.clone()));
        }
        run.record(EpochLog {
            stage: "audio2flame".into(),
            epoch,
            lr,
            train_loss: epoch_parts.total,
            train_l_vx: Some(epoch_parts.l_vx),
            train_l_lm: Some(epoch_parts.l_lm),
            val_loss: val_parts.total,
            val_lip_mean_mm: Some(val_lip),
            best: is_best,
        }, bundle)?;
    }
    let (_, best_epoch, a2f, style) = best.expect("at least one epoch");
    bundle.a2f.params = a2f;
    bundle.style.params = style;
    Ok(best_epoch)
}

fn predictor_loss(g: &mut Graph, bundle: &ModelBundle, clip: &Clip) -> Var {
    let x = g.constant(clip.content.clone());
    let y = bundle.predictor.forward(g, x);
    let target = g.constant(clip.logits.clone());
    let d = g.sub(y, target);
    let sq = g.square(d);
    g.mean(sq)
}

fn train_predictor(run: &mut Run, bundle: &mut ModelBundle, train: &[Clip], val: &[Clip]) -> Result<()> {
    let config = run.config;
    let mut adam = Adam::new(AdamConfig::default());
    let epochs = config.predictor_epochs;
    for epoch in 0..epochs {
        let lr = learning_rate(config, epoch, epochs);
        let order = run.shuffled(train.len(), 2, epoch);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let b: &ModelBundle = bundle;
            let (parts, grads) = batch_step(batch, |i| {
                let mut g = Graph::new();
                let loss = predictor_loss(&mut g, b, &train[i]);
                g.backward(loss);
                let total = g.scalar(loss);
                Ok((Parts { total, ..Parts::default() }, g.param_grads()))
            })?;
            if !check_finite(&parts) {
                return Err(run.diverged(epoch));
            }
            sum += parts.total * batch.len() as f64;
            adam.step(&mut bundle.predictor.params, &grads, lr);
        }
        let b: &ModelBundle = bundle;
        let val_loss = mean_parts(val.len(), |i| {
            let mut g = Graph::new();
            let total = predictor_loss(&mut g, b, &val[i]);
            Ok(Parts {
                total: g.scalar(total),
                ..Parts::default()
            })
        })?
        .total;
        run.record(EpochLog {
            stage: "predictor".into(),
            epoch,
            lr,
            train_loss: sum / train.len() as f64,
            train_l_vx: None,
            train_l_lm: None,
            val_loss,
            val_lip_mean_mm: None,
            best: false,
        }, bundle)?;
    }
    Ok(())
}

/// Inputs of the augment stage that do not depend on its weights.
struct AugmentInput {
    raw: Array2<f64>,
    blended: Array2<f64>,
}

fn augment_inputs(bundle: &ModelBundle, clips: &[Clip]) -> Result<Vec<AugmentInput>> {
    clips
        .par_iter()
        .map(|c| {
            let style = bundle.style_of(&c.content);
            let raw = bundle.raw_params(&c.content, &style);
            let priors = bundle.audio_priors(&c.content)?;
            Ok(AugmentInput {
                raw,
                blended: blend_with_conditions(&priors, &c.user)?,
            })
        })
        .collect()
}

/// Augment stage; with `joint` the Audio2FLAME and style weights are updated too.
fn train_augment(
    run: &mut Run,
    bundle: &mut ModelBundle,
    train: &[Clip],
    val: &[Clip],
    joint: bool,
) -> Result<()> {
    let config = run.config;
    let epochs = if joint { config.joint_epochs } else { config.augment_epochs };
    let stage_name = if joint { "joint" } else { "augment" };
    let mut adam_aug = Adam::new(AdamConfig::default());
    let mut adam_a2f = Adam::new(AdamConfig::default());
    let mut adam_style = Adam::new(AdamConfig::default());
    let train_in = augment_inputs(bundle, train)?;
    let val_in = augment_inputs(bundle, val)?;
    let forward = |g: &mut Graph, b: &ModelBundle, clip: &Clip, input: &AugmentInput| {
        let raw = if joint { raw_forward(g, b, clip) } else { g.constant(input.raw.clone()) };
        let blended = g.constant(input.blended.clone());
        b.augment.forward(g, raw, blended)
    };
    for epoch in 0..epochs {
        let lr = learning_rate(config, epoch, epochs);
        let order = run.shuffled(train.len(), if joint { 4 } else { 3 }, epoch);
        let mut epoch_parts = Parts::default();
        for batch in order.chunks(config.batch_size) {
            let b: &ModelBundle = bundle;
            let (parts, grads) = batch_step(batch, |i| {
                let mut g = Graph::new();
                let pred = forward(&mut g, b, &train[i], &train_in[i]);
                let (loss, parts) = mesh_loss(&mut g, &b.face, &train[i], pred, &config.loss, config.ablation)?;
                g.backward(loss);
                Ok((parts, g.param_grads()))
            })?;
            if !check_finite(&parts) {
                return Err(run.diverged(epoch));
            }
            epoch_parts += parts.scaled(batch.len() as f64);
            adam_aug.step(&mut bundle.augment.params, &grads, lr);
            if joint {
                adam_a2f.step(&mut bundle.a2f.params, &grads, lr);
                if bundle.settings.use_style {
                    adam_style.step(&mut bundle.style.params, &grads, lr);
                }
            }
        }
        let epoch_parts = epoch_parts.scaled(1.0 / train.len() as f64);
        let b: &ModelBundle = bundle;
        let val_parts = mean_parts(val.len(), |i| {
            let mut g = Graph::new();
            let pred = forward(&mut g, b, &val[i], &val_in[i]);
            Ok(mesh_loss(&mut g, &b.face, &val[i], pred, &config.loss, config.ablation)?.1)
        })?;
        run.record(EpochLog {
            stage: stage_name.into(),
            epoch,
            lr,
            train_loss: epoch_parts.total,
            train_l_vx: Some(epoch_parts.l_vx),
            train_l_lm: Some(epoch_parts.l_lm),
            val_loss: val_parts.total,
            val_lip_mean_mm: None,
            best: false,
        }, bundle)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(learning_rate(&cfg, 0, 30), 1e-4);
        assert!((learning_rate(&cfg, 29, 30) - 1e-5).abs() < 1e-18);
        for total in [1, 5, 10, 11, 30, 45, 100] {
            let mut prev = f64::INFINITY;
            for e in 0..total {
                let lr = learning_rate(&cfg, e, total);
                assert!(lr <= prev && lr >= 1e-5 && lr <= 1e-4);
                if e % 10 != 0 {
                    assert_eq!(lr, prev);
                }
                prev = lr;
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.lr_end = 1e-3;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            ablation: Ablation {
                no_lvx: true,
                no_llm: true,
                ..Ablation::default()
            },
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
