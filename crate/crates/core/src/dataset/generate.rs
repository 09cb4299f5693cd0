//! Generative oracle: latent articulation drives both a synthetic waveform and the
//! ground-truth face parameters; a clip-level style shifts only the audio.

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{
    hash_file, write_array, ClipEntry, ClipMeta, CorpusManifest, SyntheticCorpusConfig, FORMAT,
    VERSION,
};
use crate::audio::{
    content_features, content_matrix, window_audio, FilterbankExtractor, WindowingConfig,
    CONTENT_DIM, SAMPLE_RATE, STYLE_DIM,
};
use crate::emotion::{LogitStats, EMOTIONS, N_EMOTIONS};
use crate::error::{Error, Result};
use crate::face_model::{build_synthetic_model, FaceModel};

const LATENT: usize = 6;
const CARRIERS: usize = 16;
const TONES_PER_LATENT: usize = 3;

/// Hand-shaped expression signatures over the named modes, one per category.
const SIGNATURES: [&[(&str, f64)]; N_EMOTIONS] = [
    &[("lip_press", 0.5)],
    &[("smile", 1.0), ("cheek_raise", 0.8)],
    &[("brow_lower", 1.0), ("lip_press", 0.7), ("nose_wrinkle", 0.4)],
    &[("frown", 1.0), ("brow_raise", 0.4), ("lip_pucker", 0.2)],
    &[("nose_wrinkle", 1.0), ("upper_lip_raise", 0.9), ("frown", 0.3)],
    &[("brow_raise", 0.9), ("lip_press", 0.6), ("frown", 0.3)],
    &[("brow_raise", 1.0), ("lip_pucker", 0.6), ("upper_lip_raise", 0.3)],
];

/// Fixed corpus-wide maps drawn from the seed.
struct Oracle {
    /// `2×LATENT`: latent to (height, width) articulation drives.
    mouth: Array2<f64>,
    /// `CARRIERS×LATENT` log-amplitude loadings.
    audio: Array2<f64>,
    /// `CARRIERS×7` emotion colouring of the audio.
    emotion_audio: Array2<f64>,
    /// `LATENT×STYLE_DIM` style to audio offset.
    style: Array2<f64>,
    carriers: Vec<f64>,
    identities: Vec<Vec<f64>>,
}

pub fn signature_matrix(model: &FaceModel) -> Result<Array2<f64>> {
    let mut sig = Array2::zeros((N_EMOTIONS, model.n_params()));
    for (c, entries) in SIGNATURES.iter().enumerate() {
        for &(name, w) in entries.iter() {
            let j = model.expression_index(name).ok_or_else(|| {
                Error::Config(format!("face model lacks expression mode `{name}`"))
            })?;
            sig[[c, j]] = w;
        }
    }
    Ok(sig)
}

/// Parameter dimensions the signatures live on, in index order.
pub fn emotional_dims(model: &FaceModel) -> Vec<usize> {
    let mut dims: Vec<usize> = SIGNATURES
        .iter()
        .flat_map(|entries| entries.iter())
        .filter_map(|&(name, _)| model.expression_index(name))
        .collect();
    dims.sort_unstable();
    dims.dedup();
    dims
}

fn check_signatures(sig: &Array2<f64>) -> Result<()> {
    for a in 0..sig.nrows() {
        for b in a + 1..sig.nrows() {
            let (x, y) = (sig.row(a), sig.row(b));
            let cos = x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt());
            if !(cos < 0.9) {
                return Err(Error::Config(format!(
                    "signatures of {} and {} collide (cosine {cos:.3})",
                    EMOTIONS[a], EMOTIONS[b]
                )));
            }
        }
    }
    Ok(())
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

impl Oracle {
    fn new(config: &SyntheticCorpusConfig, model: &FaceModel, rng: &mut ChaCha8Rng) -> Self {
        let mut mouth = gaussian(rng, 2, LATENT, 1.0);
        for mut row in mouth.rows_mut() {
            // Latent coordinates have std ≈ 0.55; aim for unit-variance drives.
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|x| x / n / 0.55);
        }
        let audio = gaussian(rng, CARRIERS, LATENT, 0.6);
        let emotion_audio = gaussian(rng, CARRIERS, N_EMOTIONS, config.emotion_audio_strength);
        let style = gaussian(rng, LATENT, STYLE_DIM, config.style_strength / (STYLE_DIM as f64).sqrt());
        let mel = |hz: f64| 1127.0 * (1.0 + hz / 700.0).ln();
        let hz = |m: f64| 700.0 * ((m / 1127.0).exp() - 1.0);
        let (lo, hi) = (mel(220.0), mel(5200.0));
        let carriers = (0..CARRIERS)
            .map(|k| hz(lo + (hi - lo) * k as f64 / (CARRIERS - 1) as f64))
            .collect();
        let identities = (0..config.n_identities.max(1))
            .map(|_| {
                (0..model.n_shape())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        config.identity_std * z
                    })
                    .collect()
            })
            .collect();
        Self {
            mouth,
            audio,
            emotion_audio,
            style,
            carriers,
            identities,
        }
    }
}

/// A smooth latent trajectory: a few slow sinusoids per coordinate.
struct Trajectory {
    tones: Vec<[(f64, f64, f64); TONES_PER_LATENT]>,
}

impl Trajectory {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let tones = (0..LATENT)
            .map(|_| {
                std::array::from_fn(|_| {
                    (
                        rng.random_range(0.3..0.6),
                        rng.random_range(0.8..4.0),
                        rng.random_range(0.0..TAU),
                    )
                })
            })
            .collect();
        Self { tones }
    }

    fn at(&self, t: f64) -> [f64; LATENT] {
        std::array::from_fn(|d| {
            self.tones[d]
                .iter()
                .map(|&(a, f, p)| a * (TAU * f * t + p).sin())
                .sum()
        })
    }
}

pub(super) struct GeneratedClip {
    pub waveform: Vec<f64>,
    pub content: Array2<f64>,
    pub style: Array2<f64>,
    pub params: Array2<f64>,
    pub logits: Array2<f64>,
    pub meta: ClipMeta,
}

fn generate_clip(
    index: usize,
    config: &SyntheticCorpusConfig,
    model: &FaceModel,
    oracle: &Oracle,
    signatures: &Array2<f64>,
    windowing: &WindowingConfig,
    extractor: &FilterbankExtractor,
) -> Result<GeneratedClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)));
    let duration = rng.random_range(config.duration_range[0]..=config.duration_range[1]);
    let n_samples = (duration * SAMPLE_RATE as f64).round() as usize;
    let label = rng.random_range(0..N_EMOTIONS);
    let intensity = if rng.random_bool(config.zero_intensity_fraction) {
        0.0
    } else {
        rng.random_range(config.intensity_range[0]..=config.intensity_range[1])
    };
    let identity = rng.random_range(0..oracle.identities.len());
    let style = gaussian(&mut rng, 1, STYLE_DIM, 1.0);
    let offset = oracle.style.dot(&style.row(0));
    let trajectory = Trajectory::sample(&mut rng);
    let env_freq = rng.random_range(0.2..0.5);
    let env_phase = rng.random_range(0.0..TAU);
    let envelope = |t: f64| 0.75 + 0.25 * (TAU * env_freq * t + env_phase).sin();
    let phases: Vec<f64> = (0..CARRIERS).map(|_| rng.random_range(0.0..TAU)).collect();
    let colour = oracle.emotion_audio.column(label).to_owned() * intensity;

    let noise = Normal::new(0.0, config.audio_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut waveform = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let t = n as f64 / SAMPLE_RATE as f64;
        let z = trajectory.at(t);
        let env = envelope(t);
        let mut x = 0.0;
        for k in 0..CARRIERS {
            let mut ell = colour[k] * env;
            for d in 0..LATENT {
                ell += oracle.audio[[k, d]] * (z[d] + offset[d]);
            }
            x += config.carrier_amplitude * ell.exp() * (TAU * oracle.carriers[k] * t + phases[k]).sin();
        }
        waveform.push((x + noise.sample(&mut rng)).clamp(-1.0, 1.0));
    }

    let segments = window_audio(&waveform, windowing)?;
    let content = content_matrix(&content_features(&segments, extractor, CONTENT_DIM)?);
    let frames = segments.len();
    let half_window = windowing.window_len() as f64 / 2.0;
    let jaw = model.expression_index("jaw_open").expect("checked by signatures");
    let stretch = model.expression_index("mouth_stretch").expect("checked by signatures");
    let jaw_pitch = model.parts().pose_names.iter().position(|n| n == "jaw_pitch");
    let mut params = Array2::zeros((frames, model.n_params()));
    let logit_noise = Normal::new(0.0, config.logit_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut logits = Array2::zeros((frames, N_EMOTIONS));
    for (f, seg) in segments.iter().enumerate() {
        let t = (seg.start as f64 + half_window) / SAMPLE_RATE as f64;
        let z = trajectory.at(t);
        let drive = |row: usize| (0..LATENT).map(|d| oracle.mouth[[row, d]] * z[d]).sum::<f64>();
        let (height, width) = (drive(0), drive(1));
        params[[f, jaw]] = 0.5 + 0.5 * height;
        params[[f, stretch]] = 0.6 * width;
        if let Some(p) = jaw_pitch {
            params[[f, model.n_expression() + p]] = 0.05 * height;
        }
        let env = envelope(t);
        for j in 0..model.n_params() {
            params[[f, j]] += intensity * env * signatures[[label, j]];
        }
        for c in 0..N_EMOTIONS {
            let mean = if c == label { config.logit_scale * intensity } else { 0.0 };
            logits[[f, c]] = mean + logit_noise.sample(&mut rng);
        }
    }
    Ok(GeneratedClip {
        waveform,
        content,
        style,
        params,
        logits,
        meta: ClipMeta {
            label: EMOTIONS[label].to_string(),
            intensity,
            beta: oracle.identities[identity].clone(),
            identity,
            frames,
            fps: 30.0,
            duration: n_samples as f64 / SAMPLE_RATE as f64,
        },
    })
}

fn write_wav_f32(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(err) => Error::io(path, err),
        other => Error::InvalidInput(other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(io)?;
    }
    w.finalize().map_err(io)
}

pub fn generate_corpus(config: &SyntheticCorpusConfig, out: &Path) -> Result<CorpusManifest> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let model = build_synthetic_model(&config.model, config.seed)?;
    let signatures = signature_matrix(&model)?;
    check_signatures(&signatures)?;
    let model_path = out.join("face_model.efm");
    model.save(&model_path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let oracle = Oracle::new(config, &model, &mut rng);
    let windowing = WindowingConfig::default();
    let extractor = FilterbankExtractor::default();

    let mut clips = Vec::with_capacity(config.n_clips);
    let mut all_logits = Vec::with_capacity(config.n_clips);
    for i in 0..config.n_clips {
        let clip = generate_clip(i, config, &model, &oracle, &signatures, &windowing, &extractor)?;
        let id = format!("clip_{i:04}");
        let dir = out.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav_f32(&dir.join("audio.wav"), &clip.waveform)?;
        write_array(&dir.join("content.npy"), &clip.content)?;
        write_array(&dir.join("style.npy"), &clip.style)?;
        write_array(&dir.join("params.npy"), &clip.params)?;
        write_array(&dir.join("logits.npy"), &clip.logits)?;
        let meta_path = dir.join("meta.json");
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&clip.meta)?)
            .map_err(|e| Error::io(&meta_path, e))?;
        let mut files = std::collections::BTreeMap::new();
        for name in super::CLIP_FILES {
            files.insert(name.to_string(), hash_file(&dir.join(name))?);
        }
        clips.push(ClipEntry {
            id,
            label: clip.meta.label.clone(),
            intensity: clip.meta.intensity,
            frames: clip.meta.frames,
            files,
        });
        all_logits.push(clip.logits);
    }
    let manifest = CorpusManifest {
        format: FORMAT.into(),
        version: VERSION,
        seed: config.seed,
        config: config.clone(),
        face_model: hash_file(&model_path)?,
        labels: EMOTIONS.iter().map(|s| s.to_string()).collect(),
        signatures: signatures.rows().into_iter().map(|r| r.to_vec()).collect(),
        emotional_dims: emotional_dims(&model),
        logit_stats: LogitStats::from_logits(&all_logits)?,
        clips,
    };
    let path = out.join(super::MANIFEST);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
