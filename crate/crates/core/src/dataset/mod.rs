//! Synthetic oracle corpus and its on-disk format.
//!
//! Layout: `corpus.json` at the root, the face model as `face_model.efm`, and one
//! directory per clip holding `audio.wav`, `content.npy`, `style.npy`, `params.npy`,
//! `logits.npy` and a `meta.json` sidecar.

mod generate;

pub use generate::{emotional_dims, generate_corpus, signature_matrix};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emotion::{label_index, LogitStats};
use crate::error::{Error, Result};
use crate::face_model::{FaceModel, SyntheticModelConfig};
use crate::metrics::OracleClassifier;

pub const MANIFEST: &str = "corpus.json";
const FORMAT: &str = "emoface-corpus";
const VERSION: u32 = 1;
const CLIP_FILES: [&str; 6] = [
    "audio.wav",
    "content.npy",
    "style.npy",
    "params.npy",
    "logits.npy",
    "meta.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusConfig {
    pub n_clips: usize,
    /// Clip duration bounds in seconds.
    pub duration_range: [f64; 2],
    pub intensity_range: [f64; 2],
    pub zero_intensity_fraction: f64,
    /// Logit scale κ and per-frame noise σ_n of the video-oracle priors.
    pub logit_scale: f64,
    pub logit_noise: f64,
    pub carrier_amplitude: f64,
    /// Additive white noise std on the waveform; raise it for a noisy-audio variant.
    pub audio_noise: f64,
    pub style_strength: f64,
    pub emotion_audio_strength: f64,
    pub n_identities: usize,
    pub identity_std: f64,
    pub model: SyntheticModelConfig,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            n_clips: 200,
            duration_range: [2.0, 4.0],
            intensity_range: [0.0, 1.0],
            zero_intensity_fraction: 0.1,
            logit_scale: 4.0,
            logit_noise: 0.3,
            carrier_amplitude: 0.03,
            audio_noise: 0.002,
            style_strength: 0.35,
            emotion_audio_strength: 0.4,
            n_identities: 8,
            identity_std: 0.5,
            model: SyntheticModelConfig::default(),
            seed: 1000,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_clips == 0 {
            return bad("corpus needs at least one clip".into());
        }
        if !(self.duration_range[0] >= 0.1 && self.duration_range[0] <= self.duration_range[1]) {
            return bad(format!("bad duration range {:?}", self.duration_range));
        }
        let [lo, hi] = self.intensity_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("bad intensity range {:?}", self.intensity_range));
        }
        if !(self.logit_scale > 0.0) {
            return bad(format!("logit scale must be positive, got {}", self.logit_scale));
        }
        if !(0.0..=1.0).contains(&self.zero_intensity_fraction) {
            return bad("zero_intensity_fraction must lie in [0, 1]".into());
        }
        if self.logit_noise < 0.0 || self.audio_noise < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub label: String,
    pub intensity: f64,
    pub beta: Vec<f64>,
    pub identity: usize,
    pub frames: usize,
    pub fps: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub label: String,
    pub intensity: f64,
    pub frames: usize,
    /// File name to SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: SyntheticCorpusConfig,
    /// SHA-256 of `face_model.efm`.
    pub face_model: String,
    pub labels: Vec<String>,
    /// `7×56` per-category expression signatures.
    pub signatures: Vec<Vec<f64>>,
    pub emotional_dims: Vec<usize>,
    pub logit_stats: LogitStats,
    pub clips: Vec<ClipEntry>,
}

impl CorpusManifest {
    pub fn signature_matrix(&self) -> Array2<f64> {
        let cols = self.signatures.first().map_or(0, |r| r.len());
        Array2::from_shape_fn((self.signatures.len(), cols), |(i, j)| self.signatures[i][j])
    }

    /// Oracle classifier for the corpus signatures.
    pub fn classifier(&self) -> Result<OracleClassifier> {
        let sig = self.signature_matrix();
        let min_norm = self
            .signatures
            .iter()
            .map(|s| self.emotional_dims.iter().map(|&d| s[d] * s[d]).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        OracleClassifier::new(sig, self.emotional_dims.clone(), 0.25 * min_norm)
    }
}

/// One loaded clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Raw (unnormalized) content frames, `T×192`.
    pub content: Array2<f64>,
    /// Ground-truth style latent, `1×64`.
    pub style: Array2<f64>,
    /// Ground-truth face parameters, `T×56`.
    pub params: Array2<f64>,
    /// Video-oracle logits, `T×7`.
    pub logits: Array2<f64>,
    pub label: usize,
    pub meta: ClipMeta,
    pub audio_path: PathBuf,
}

pub(crate) fn write_array(path: &Path, a: &Array2<f64>) -> Result<()> {
    ndarray_npy::write_npy(path, a).map_err(|e| match e {
        ndarray_npy::WriteNpyError::Io(err) => Error::io(path, err),
        other => Error::format(path, other.to_string()),
    })
}

pub(crate) fn read_array(path: &Path) -> Result<Array2<f64>> {
    ndarray_npy::read_npy(path).map_err(|e| match e {
        ndarray_npy::ReadNpyError::Io(err) => Error::io(path, err),
        other => Error::format(path, other.to_string()),
    })
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

/// A corpus opened from disk. Loading validates hashes.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let path = root.join(MANIFEST);
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_slice(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &path,
            format!("expected {FORMAT} v{VERSION}, found {} v{}", manifest.format, manifest.version),
        ));
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        manifest,
    })
}

impl Corpus {
    pub fn face_model(&self) -> Result<FaceModel> {
        let path = self.root.join("face_model.efm");
        if hash_file(&path)? != self.manifest.face_model {
            return Err(Error::Corrupt { file: path });
        }
        FaceModel::load(&path)
    }

    pub fn entry(&self, id: &str) -> Result<&ClipEntry> {
        self.manifest
            .clips
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("clip `{id}` is not in the manifest")))
    }

    fn checked(&self, entry: &ClipEntry, name: &str) -> Result<PathBuf> {
        let path = self.root.join(&entry.id).join(name);
        let expected = entry
            .files
            .get(name)
            .ok_or_else(|| Error::format(&path, "file not listed in manifest"))?;
        if &hash_file(&path)? != expected {
            return Err(Error::Corrupt { file: path });
        }
        Ok(path)
    }

    pub fn load_sample(&self, id: &str) -> Result<Sample> {
        let entry = self.entry(id)?;
        let meta_path = self.checked(entry, "meta.json")?;
        let meta: ClipMeta = serde_json::from_slice(
            &std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
        )
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
        let sample = Sample {
            id: entry.id.clone(),
            content: read_array(&self.checked(entry, "content.npy")?)?,
            style: read_array(&self.checked(entry, "style.npy")?)?,
            params: read_array(&self.checked(entry, "params.npy")?)?,
            logits: read_array(&self.checked(entry, "logits.npy")?)?,
            label: label_index(&meta.label)?,
            audio_path: self.checked(entry, "audio.wav")?,
            meta,
        };
        let t = sample.meta.frames;
        for (name, a) in [("content", &sample.content), ("params", &sample.params), ("logits", &sample.logits)] {
            if a.nrows() != t {
                return Err(Error::format(
                    self.root.join(id),
                    format!("{name} has {} frames, meta says {t}", a.nrows()),
                ));
            }
        }
        Ok(sample)
    }

    pub fn load_all(&self, ids: &[String]) -> Result<Vec<Sample>> {
        ids.iter().map(|id| self.load_sample(id)).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.clips.iter().map(|c| c.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle, then cut by `ratios` (train, val; test takes the rest).
pub fn split(manifest: &CorpusManifest, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| r < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut ids: Vec<String> = manifest.clips.iter().map(|c| c.id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(Splits {
        train: ids,
        val,
        test,
    })
}
