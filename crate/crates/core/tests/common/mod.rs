#![allow(dead_code)]

use std::path::Path;

use emoface::dataset::{generate_corpus, load_corpus, Corpus, SyntheticCorpusConfig};
use emoface::face_model::{build_synthetic_model, FaceModel, SyntheticModelConfig};
use emoface::trainer::TrainConfig;

pub fn small_corpus_config(n_clips: usize, seed: u64) -> SyntheticCorpusConfig {
    SyntheticCorpusConfig {
        n_clips,
        duration_range: [1.0, 2.0],
        seed,
        ..SyntheticCorpusConfig::default()
    }
}

pub fn small_corpus(root: &Path, n_clips: usize, seed: u64) -> Corpus {
    generate_corpus(&small_corpus_config(n_clips, seed), root).expect("corpus generation");
    load_corpus(root).expect("corpus loads")
}

/// A few seconds of single-threaded training.
pub fn quick_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        predictor_epochs: 3,
        augment_epochs: 6,
        threads: 1,
        ..TrainConfig::default()
    }
}

pub fn default_face() -> FaceModel {
    build_synthetic_model(&SyntheticModelConfig::default(), 1000).expect("default face model")
}

/// Index of `name` in the emotion label list.
pub fn label(name: &str) -> usize {
    emoface::emotion::label_index(name).expect("known label")
}

/// Projection of the mean parameter row onto a signature direction.
pub fn projection(params: &ndarray::Array2<f64>, signature: ndarray::ArrayView1<f64>) -> f64 {
    let mean = params.mean_axis(ndarray::Axis(0)).expect("non-empty sequence");
    mean.dot(&signature) / signature.dot(&signature).sqrt()
}
