use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ablation, ModelBundle, TrainConfig};
use crate::dataset::{split, Corpus, Sample};
use crate::emotion::N_EMOTIONS;
use crate::error::{Error, Result};
use crate::metrics::{emotion_confusion, lip_error, ConfusionReport, LabeledClip};

/// `T×7` constant condition `intensity · onehot(label)`.
pub fn user_conditions(label: usize, intensity: f64, frames: usize) -> Array2<f64> {
    let mut u = Array2::zeros((frames, N_EMOTIONS));
    u.column_mut(label).fill(intensity);
    u
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    #[default]
    Val,
    Test,
    All,
}

/// Clip ids of one split, cut with the ratios and seed the checkpoint was trained with
/// (training defaults when the checkpoint carries no config).
pub fn split_ids(bundle: &ModelBundle, corpus: &Corpus, which: SplitName) -> Result<Vec<String>> {
    let config: TrainConfig = bundle
        .info
        .get("config")
        .map(|c| serde_json::from_value(c.clone()))
        .transpose()?
        .unwrap_or_default();
    let s = split(&corpus.manifest, config.split, config.seed)?;
    Ok(match which {
        SplitName::Train => s.train,
        SplitName::Val => s.val,
        SplitName::Test => s.test,
        SplitName::All => corpus.ids(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ablation: Ablation,
    /// Categories animated for the confusion matrix (leading labels).
    pub confusion_classes: usize,
    pub confusion_intensity: f64,
    pub frames_per_clip: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ablation: Ablation::default(),
            confusion_classes: 6,
            confusion_intensity: 1.0,
            frames_per_clip: 10,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLip {
    pub id: String,
    pub frames: usize,
    pub mean_mm: f64,
    pub max_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipSummary {
    /// Frame-weighted mean of the keypoint distances.
    pub mean_mm: f64,
    pub max_mm: f64,
    pub per_clip: Vec<ClipLip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub ablation: Ablation,
    pub clips: usize,
    pub lip: LipSummary,
    /// RMSE between rescaled predicted and rescaled oracle priors.
    pub priors_rmse: Option<f64>,
    pub confusion: Option<ConfusionReport>,
}

fn with_flags(bundle: &ModelBundle, flags: Ablation) -> ModelBundle {
    let mut b = bundle.clone();
    if flags.no_style {
        b.settings.use_style = false;
    }
    if flags.no_emotion_module {
        b.settings.use_emotion_module = false;
    }
    b
}

/// Lip error, priors error and confusion matrix of `bundle` on the clips `ids`.
pub fn evaluate(bundle: &ModelBundle, corpus: &Corpus, ids: &[String], options: &EvalOptions) -> Result<EvalReport> {
    if ids.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let face = corpus.face_model()?;
    if face.n_params() != bundle.face.n_params() || face.n_vertices() != bundle.face.n_vertices() {
        return Err(Error::Version(format!(
            "checkpoint face model ({} params, {} vertices) does not match the corpus ({}, {})",
            bundle.face.n_params(),
            bundle.face.n_vertices(),
            face.n_params(),
            face.n_vertices()
        )));
    }
    let b = with_flags(bundle, options.ablation);
    let samples = corpus.load_all(ids)?;
    let per_clip: Vec<Result<(ClipLip, f64, usize)>> = samples
        .par_iter()
        .map(|s| clip_metrics(&b, s))
        .collect();
    let mut lips = Vec::with_capacity(samples.len());
    let (mut weighted, mut frames, mut max_mm) = (0.0, 0usize, 0.0f64);
    let (mut sq, mut count) = (0.0, 0usize);
    for r in per_clip {
        let (lip, prior_sq, n) = r?;
        weighted += lip.mean_mm * lip.frames as f64;
        frames += lip.frames;
        max_mm = max_mm.max(lip.max_mm);
        sq += prior_sq;
        count += n;
        lips.push(lip);
    }
    let confusion = if b.settings.use_emotion_module && options.confusion_classes > 0 {
        Some(confusion(&b, corpus, &samples, options)?)
    } else {
        None
    };
    Ok(EvalReport {
        checkpoint: bundle.hash()?,
        ablation: options.ablation,
        clips: samples.len(),
        lip: LipSummary {
            mean_mm: weighted / frames as f64,
            max_mm,
            per_clip: lips,
        },
        priors_rmse: (b.settings.use_emotion_module && count > 0).then(|| (sq / count as f64).sqrt()),
        confusion,
    })
}

fn clip_metrics(b: &ModelBundle, s: &Sample) -> Result<(ClipLip, f64, usize)> {
    let out = b.run(&s.content, &user_conditions(s.label, s.meta.intensity, s.meta.frames))?;
    let face = &b.face;
    let pred = face.evaluate_flat(&s.meta.beta, out.params.view())?;
    let gt = face.evaluate_flat(&s.meta.beta, s.params.view())?;
    let r = lip_error(pred.view(), gt.view(), face)?;
    let (mut sq, mut n) = (0.0, 0);
    if b.settings.use_emotion_module {
        let x = b.normalizer.apply(&s.content)?;
        let stats = b.logit_stats();
        let predicted = stats.rescale(&b.predictor.logits(&x)?);
        let oracle = stats.rescale(&s.logits);
        sq = (&predicted - &oracle).mapv(|d| d * d).sum();
        n = predicted.len();
    }
    Ok((
        ClipLip {
            id: s.id.clone(),
            frames: r.frames,
            mean_mm: r.mean_mm,
            max_mm: r.max_mm,
        },
        sq,
        n,
    ))
}

/// Animate every clip under each category at a fixed intensity and classify the results.
fn confusion(b: &ModelBundle, corpus: &Corpus, samples: &[Sample], options: &EvalOptions) -> Result<ConfusionReport> {
    let classifier = corpus.manifest.classifier()?;
    let classes = options.confusion_classes.min(N_EMOTIONS);
    let jobs: Vec<(usize, usize)> = (0..samples.len())
        .flat_map(|i| (0..classes).map(move |c| (i, c)))
        .collect();
    let clips: Vec<Result<LabeledClip>> = jobs
        .par_iter()
        .map(|&(i, c)| {
            let s = &samples[i];
            let out = b.run(&s.content, &user_conditions(c, options.confusion_intensity, s.meta.frames))?;
            Ok(LabeledClip {
                label: c,
                params: out.params,
            })
        })
        .collect();
    let clips = clips.into_iter().collect::<Result<Vec<_>>>()?;
    emotion_confusion(&clips, &classifier, options.frames_per_clip, options.seed)
}
