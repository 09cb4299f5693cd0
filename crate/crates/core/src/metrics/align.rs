use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `q ≈ scale · R · p + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    /// Apply to every row of an `N×3` array.
    pub fn apply(&self, points: ArrayView2<f64>) -> Array2<f64> {
        let r = self.rotation_matrix();
        let t = Vector3::from(self.translation);
        let mut out = Array2::zeros(points.dim());
        for (i, p) in points.rows().into_iter().enumerate() {
            let q = r * Vector3::new(p[0], p[1], p[2]) * self.scale + t;
            for a in 0..3 {
                out[[i, a]] = q[a];
            }
        }
        out
    }
}

/// Closed-form least-squares similarity (Umeyama) with a proper rotation.
pub fn align_similarity(source: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Similarity> {
    if source.dim() != target.dim() || source.ncols() != 3 {
        return Err(Error::InvalidInput(format!(
            "point sets must both be N×3, got {:?} and {:?}",
            source.dim(),
            target.dim()
        )));
    }
    let n = source.nrows();
    if n < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {n}")));
    }
    let to_vec = |row: ndarray::ArrayView1<f64>| Vector3::new(row[0], row[1], row[2]);
    let mu_s = source.rows().into_iter().map(to_vec).sum::<Vector3<f64>>() / n as f64;
    let mu_t = target.rows().into_iter().map(to_vec).sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (p, q) in source.rows().into_iter().zip(target.rows()) {
        let ps = to_vec(p) - mu_s;
        let qs = to_vec(q) - mu_t;
        cov += qs * ps.transpose();
        scatter += ps * ps.transpose();
        var_s += ps.norm_squared();
    }
    cov /= n as f64;
    var_s /= n as f64;
    let eig = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate("source points are coincident or collinear".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let mut d = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // nalgebra does not sort singular values; flip the smallest one.
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("three singular values");
        d[(smallest, smallest)] = -1.0;
    }
    let r = u * d * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * d[(i, i)]).sum();
    let scale = trace / var_s;
    let t = mu_t - r * mu_s * scale;
    let mut rotation = [[0.0; 3]; 3];
    for (i, row) in rotation.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = r[(i, j)];
        }
    }
    Ok(Similarity {
        rotation,
        translation: [t[0], t[1], t[2]],
        scale,
    })
}
