pub mod app;
pub mod archive;
pub mod audio;
pub mod audio2flame;
pub mod autograd;
pub mod dataset;
pub mod emotion;
pub mod error;
pub mod face_model;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod trainer;

pub use error::{Error, Result};
