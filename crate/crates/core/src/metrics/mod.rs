//! Training losses and evaluation metrics.

mod align;
mod confusion;
mod lip;

pub use align::{align_similarity, Similarity};
pub use confusion::{
    emotion_confusion, ConfusionMatrix, ConfusionReport, EmotionClassifier, LabeledClip,
    OracleClassifier,
};
pub use lip::{lip_error, lip_error_with, AlignMode, LipErrorReport};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::face_model::FaceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub w1: f64,
    pub w2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            d1: 1.0 / 0.0476,
            d2: 1.0 / 0.017,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("d1", self.d1), ("d2", self.d2)] {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

fn masked_vertices(mask: &[bool]) -> Result<Vec<usize>> {
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if idx.is_empty() {
        return Err(Error::InvalidInput("vertex mask selects no vertices".into()));
    }
    Ok(idx)
}

/// Mean absolute coordinate difference over masked vertices and the three axes.
pub fn vertex_loss(pred: ArrayView2<f64>, gt: ArrayView2<f64>, mask: &[bool]) -> Result<f64> {
    if pred.dim() != gt.dim() || pred.nrows() != mask.len() {
        return Err(Error::InvalidInput(format!(
            "vertex arrays {:?} / {:?} and mask of {} disagree",
            pred.dim(),
            gt.dim(),
            mask.len()
        )));
    }
    let idx = masked_vertices(mask)?;
    let total: f64 = idx
        .iter()
        .map(|&v| (0..3).map(|a| (pred[[v, a]] - gt[[v, a]]).abs()).sum::<f64>())
        .sum();
    Ok(total / (3 * idx.len()) as f64)
}

/// `d1·|H_p − H_g| + d2·|V_p − V_g|` for one frame.
pub fn mouth_loss(pred: ArrayView2<f64>, gt: ArrayView2<f64>, model: &FaceModel, config: &LossConfig) -> f64 {
    let p = model.mouth_shape(pred);
    let g = model.mouth_shape(gt);
    config.d1 * (p.width - g.width).abs() + config.d2 * (p.height - g.height).abs()
}

pub fn total_loss(l_vx: f64, l_lm: f64, config: &LossConfig) -> f64 {
    config.w1 * l_vx + config.w2 * l_lm
}

/// Sequence form of [`vertex_loss`] on flattened meshes (`T×3V`), averaged over frames.
pub fn vertex_loss_graph(g: &mut Graph, pred: Var, gt: Var, mask: &[bool]) -> Result<Var> {
    let idx = masked_vertices(mask)?;
    let cols: Vec<usize> = idx.iter().flat_map(|&v| [3 * v, 3 * v + 1, 3 * v + 2]).collect();
    let diff = g.sub(pred, gt);
    let picked = g.gather_cols(diff, cols);
    let abs = g.abs(picked);
    Ok(g.mean(abs))
}

fn edge_lengths(g: &mut Graph, flat: Var, a: usize, b: usize) -> Var {
    let pa = g.gather_cols(flat, vec![3 * a, 3 * a + 1, 3 * a + 2]);
    let pb = g.gather_cols(flat, vec![3 * b, 3 * b + 1, 3 * b + 2]);
    let d = g.sub(pa, pb);
    let sq = g.square(d);
    let ones = g.constant(Array2::ones((3, 1)));
    let s = g.matmul(sq, ones);
    g.sqrt(s)
}

/// Sequence form of [`mouth_loss`], averaged over frames.
pub fn mouth_loss_graph(g: &mut Graph, pred: Var, gt: Var, model: &FaceModel, config: &LossConfig) -> Var {
    let m = model.mouth();
    let hp = edge_lengths(g, pred, m.left, m.right);
    let hg = edge_lengths(g, gt, m.left, m.right);
    let vp = edge_lengths(g, pred, m.top, m.bottom);
    let vg = edge_lengths(g, gt, m.top, m.bottom);
    let dh = g.sub(hp, hg);
    let dh = g.abs(dh);
    let dv = g.sub(vp, vg);
    let dv = g.abs(dv);
    let dh = g.mean(dh);
    let dv = g.mean(dv);
    let dh = g.scale(dh, config.d1);
    let dv = g.scale(dv, config.d2);
    g.add(dh, dv)
}
