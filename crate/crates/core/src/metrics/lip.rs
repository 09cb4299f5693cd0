use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::align::{align_similarity, Similarity};
use crate::error::{Error, Result};
use crate::face_model::FaceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// One similarity fitted on all vertices of all frames.
    Similarity,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipErrorReport {
    pub frames: usize,
    pub mean_mm: f64,
    pub max_mm: f64,
    pub alignment: Similarity,
    /// `frames × 24` keypoint distances in millimetres.
    #[serde(skip)]
    pub distances_mm: Array2<f64>,
}

/// Stack a `T×3V` sequence into `(T·V)×3` points.
fn as_points(flat: ArrayView2<f64>) -> Array2<f64> {
    let (t, w) = flat.dim();
    flat.to_owned()
        .into_shape_with_order((t * w / 3, 3))
        .expect("contiguous flattened meshes")
}

pub fn lip_error(pred: ArrayView2<f64>, gt: ArrayView2<f64>, model: &FaceModel) -> Result<LipErrorReport> {
    lip_error_with(pred, gt, model, AlignMode::Similarity)
}

/// Keypoint distances between two flattened mesh sequences (`T×3V`, meters).
pub fn lip_error_with(
    pred: ArrayView2<f64>,
    gt: ArrayView2<f64>,
    model: &FaceModel,
    mode: AlignMode,
) -> Result<LipErrorReport> {
    if pred.nrows() != gt.nrows() {
        return Err(Error::InvalidInput(format!(
            "prediction has {} frames, ground truth {}",
            pred.nrows(),
            gt.nrows()
        )));
    }
    let width = 3 * model.n_vertices();
    if pred.ncols() != width || gt.ncols() != width {
        return Err(Error::Dimension {
            axis: "mesh coordinates",
            expected: width,
            got: if pred.ncols() != width { pred.ncols() } else { gt.ncols() },
        });
    }
    if pred.nrows() == 0 {
        return Err(Error::InvalidInput("empty sequences".into()));
    }
    let p = as_points(pred);
    let q = as_points(gt);
    let alignment = match mode {
        AlignMode::Similarity => align_similarity(p.view(), q.view())?,
        AlignMode::Identity => Similarity::identity(),
    };
    let aligned = alignment.apply(p.view());
    let v = model.n_vertices();
    let keys = model.lip_keypoints();
    let distances_mm = Array2::from_shape_fn((pred.nrows(), keys.len()), |(t, k)| {
        let row = t * v + keys[k];
        let d: f64 = (0..3)
            .map(|a| (aligned[[row, a]] - q[[row, a]]).powi(2))
            .sum();
        1000.0 * d.sqrt()
    });
    let mean_mm = distances_mm.mean().expect("non-empty");
    let max_mm = distances_mm.iter().fold(0.0f64, |m, &x| m.max(x));
    Ok(LipErrorReport {
        frames: pred.nrows(),
        mean_mm,
        max_mm,
        alignment,
        distances_mm,
    })
}
