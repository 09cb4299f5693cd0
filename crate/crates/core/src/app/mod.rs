//! End-to-end animation from audio and an emotion schedule, plus the HTTP service.

mod service;

pub use service::{router, serve, AnimateRequest, AppState, AudioInput, EvaluateRequest, ServeConfig};

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{
    content_features, content_matrix, decode_wav, window_audio, FilterbankExtractor, WindowingConfig,
    CONTENT_DIM,
};
use crate::dataset::hash_bytes;
use crate::emotion::EmotionSchedule;
use crate::error::{Error, Result, StageExt};
use crate::face_model::{export_obj, unflatten, FaceModel};
use crate::trainer::ModelBundle;

/// Nominal output rate recorded on every sequence; frames themselves follow the audio stride.
pub const NOMINAL_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint: String,
    pub schedule: String,
    pub audio: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationSequence {
    pub fps: f64,
    /// Start of each driving audio window, in seconds.
    pub frame_times: Vec<f64>,
    /// `T × (E+P)` enhanced parameters.
    pub frames: Vec<Vec<f64>>,
    pub identity: Vec<f64>,
    pub provenance: Provenance,
}

impl AnimationSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn params(&self) -> Array2<f64> {
        let cols = self.frames.first().map_or(0, Vec::len);
        Array2::from_shape_fn((self.frames.len(), cols), |(t, j)| self.frames[t][j])
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// One `V×3` mesh per frame.
    pub fn meshes(&self, face: &FaceModel) -> Result<Vec<Array2<f64>>> {
        let flat = face.evaluate_flat(&self.identity, self.params().view())?;
        Ok(flat.rows().into_iter().map(|r| unflatten(r.to_vec())).collect())
    }

    /// Write `frame_00000.obj`, ... into `dir`.
    pub fn dump_obj(&self, face: &FaceModel, dir: &Path) -> Result<usize> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meshes = self.meshes(face)?;
        for (t, mesh) in meshes.iter().enumerate() {
            export_obj(mesh.view(), face.faces(), &dir.join(format!("frame_{t:05}.obj")))?;
        }
        Ok(meshes.len())
    }
}

/// A loaded checkpoint with its hash, ready to animate; read-only and shareable across threads.
pub struct Animator {
    bundle: ModelBundle,
    checkpoint: String,
    windowing: WindowingConfig,
    extractor: FilterbankExtractor,
}

impl Animator {
    pub fn new(bundle: ModelBundle) -> Result<Self> {
        let checkpoint = bundle.hash()?;
        let windowing = WindowingConfig::default();
        let extractor = FilterbankExtractor::new(24, 8, windowing.window_len());
        Ok(Self {
            bundle,
            checkpoint,
            windowing,
            extractor,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ModelBundle::load(path).stage("load_checkpoint")?)
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn checkpoint_hash(&self) -> &str {
        &self.checkpoint
    }

    /// Content frames (`T×C`, unnormalized) and window start times for a decoded waveform.
    pub fn content(&self, waveform: &[f64]) -> Result<(Array2<f64>, Vec<f64>)> {
        let segments = window_audio(waveform, &self.windowing).stage("window")?;
        let frames = content_features(&segments, &self.extractor, CONTENT_DIM).stage("content")?;
        let times = frames.iter().map(|f| f.frame_time).collect();
        Ok((content_matrix(&frames), times))
    }

    pub fn animate_file(
        &self,
        audio: &Path,
        schedule: &EmotionSchedule,
        identity: Option<&[f64]>,
    ) -> Result<AnimationSequence> {
        let bytes = fs::read(audio).map_err(|e| Error::io(audio, e)).stage("load_audio")?;
        self.animate_wav(&bytes, schedule, identity)
    }

    /// Animate an in-memory WAV document; the audio hash covers exactly these bytes.
    pub fn animate_wav(
        &self,
        wav: &[u8],
        schedule: &EmotionSchedule,
        identity: Option<&[f64]>,
    ) -> Result<AnimationSequence> {
        let identity = self.identity(identity)?;
        schedule.validate().stage("schedule")?;
        let waveform = decode_wav(wav).stage("load_audio")?;
        let (content, frame_times) = self.content(&waveform)?;
        let user = schedule
            .conditions(content.nrows(), self.windowing.frame_rate())
            .stage("schedule")?;
        let out = self.bundle.run(&content, &user)?;
        Ok(AnimationSequence {
            fps: NOMINAL_FPS,
            frame_times,
            frames: out.params.rows().into_iter().map(|r| r.to_vec()).collect(),
            identity,
            provenance: Provenance {
                checkpoint: self.checkpoint.clone(),
                schedule: schedule.hash(),
                audio: hash_bytes(wav),
            },
        })
    }

    fn identity(&self, identity: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.bundle.face.n_shape();
        match identity {
            None => Ok(vec![0.0; n]),
            Some(beta) if beta.len() != n => Err(Error::Dimension {
                axis: "identity",
                expected: n,
                got: beta.len(),
            }),
            Some(beta) if beta.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("identity has non-finite entries".into()))
            }
            Some(beta) => Ok(beta.to_vec()),
        }
    }
}
