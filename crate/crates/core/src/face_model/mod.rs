//! Linear parametric head model: template mesh plus shape, expression and pose bases.
//!
//! Bases are stored with one row per coefficient and `3V` columns laid out as
//! `[x0, y0, z0, x1, y1, z1, ...]`, so a sequence of parameter rows (`T×(E+P)`) maps to a
//! sequence of flattened meshes (`T×3V`) with a single matrix product.

mod io;
mod synthetic;

pub use io::{export_obj, format_sig, parse_obj, write_obj};
pub use synthetic::{build_synthetic_model, PoseJoint, SyntheticModelConfig};

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};

/// Number of lip keypoints used by the lip-sync metric.
pub const LIP_KEYPOINTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouthExtremities {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl MouthExtremities {
    pub fn indices(&self) -> [usize; 4] {
        [self.top, self.bottom, self.left, self.right]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symmetry {
    /// `(left, right)` vertex pairs; left has negative template x.
    pub pairs: Vec<(usize, usize)>,
    pub midline: Vec<usize>,
}

/// Owned parts of a [`FaceModel`] before validation.
#[derive(Debug, Clone)]
pub struct FaceModelParts {
    pub template: Array2<f64>,
    pub faces: Vec<[usize; 3]>,
    pub shape_basis: Array2<f64>,
    pub expression_basis: Array2<f64>,
    pub pose_basis: Array2<f64>,
    pub vertex_mask: Vec<bool>,
    pub lip_keypoints: Vec<usize>,
    pub lip_region: Vec<usize>,
    pub mouth: MouthExtremities,
    pub symmetry: Symmetry,
    pub expression_names: Vec<String>,
    pub pose_names: Vec<String>,
}

/// Immutable head model. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct FaceModel {
    parts: FaceModelParts,
    /// Expression rows stacked over pose rows, `(E+P)×3V`.
    motion_basis: Array2<f64>,
    /// Linear map of parameter rows onto their bilaterally symmetric counterpart.
    param_symmetrizer: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Enhanced,
}

/// Per-frame expression and pose coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlameParams {
    pub expression: Vec<f64>,
    pub pose: Vec<f64>,
    pub stage: Stage,
}

impl FlameParams {
    pub fn zeros(n_expression: usize, n_pose: usize) -> Self {
        Self {
            expression: vec![0.0; n_expression],
            pose: vec![0.0; n_pose],
            stage: Stage::Raw,
        }
    }

    /// Split a concatenated `[expression, pose]` row.
    pub fn from_row(row: &[f64], n_expression: usize, stage: Stage) -> Self {
        Self {
            expression: row[..n_expression].to_vec(),
            pose: row[n_expression..].to_vec(),
            stage,
        }
    }

    pub fn to_row(&self) -> Vec<f64> {
        self.expression.iter().chain(&self.pose).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.expression.iter().chain(&self.pose).all(|x| x.is_finite())
    }
}

/// Euclidean mouth width `H` (left to right) and height `V` (top to bottom), in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MouthShape {
    pub width: f64,
    pub height: f64,
}

impl FaceModel {
    pub fn new(parts: FaceModelParts) -> Result<Self> {
        validate(&parts)?;
        let motion_basis = ndarray::concatenate(
            Axis(0),
            &[parts.expression_basis.view(), parts.pose_basis.view()],
        )
        .expect("bases share their column count after validation");
        let param_symmetrizer = symmetrizer(&motion_basis, &parts.symmetry);
        Ok(Self {
            parts,
            motion_basis,
            param_symmetrizer,
        })
    }

    pub fn parts(&self) -> &FaceModelParts {
        &self.parts
    }

    pub fn n_vertices(&self) -> usize {
        self.parts.template.nrows()
    }

    pub fn n_shape(&self) -> usize {
        self.parts.shape_basis.nrows()
    }

    pub fn n_expression(&self) -> usize {
        self.parts.expression_basis.nrows()
    }

    pub fn n_pose(&self) -> usize {
        self.parts.pose_basis.nrows()
    }

    /// `E + P`.
    pub fn n_params(&self) -> usize {
        self.n_expression() + self.n_pose()
    }

    pub fn template(&self) -> &Array2<f64> {
        &self.parts.template
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn vertex_mask(&self) -> &[bool] {
        &self.parts.vertex_mask
    }

    pub fn lip_keypoints(&self) -> &[usize] {
        &self.parts.lip_keypoints
    }

    pub fn mouth(&self) -> MouthExtremities {
        self.parts.mouth
    }

    pub fn symmetry(&self) -> &Symmetry {
        &self.parts.symmetry
    }

    pub fn expression_names(&self) -> &[String] {
        &self.parts.expression_names
    }

    pub fn expression_index(&self, name: &str) -> Option<usize> {
        self.parts.expression_names.iter().position(|n| n == name)
    }

    pub fn motion_basis(&self) -> &Array2<f64> {
        &self.motion_basis
    }

    /// Flattened mesh of the identity at rest: `template + shape_basis·β`, as `1×3V`.
    pub fn rest_row(&self, shape: &[f64]) -> Result<Array2<f64>> {
        check_len("shape", self.n_shape(), shape.len())?;
        let beta = Array1::from(shape.to_vec());
        let flat = self
            .parts
            .template
            .view()
            .into_shape_with_order((1, 3 * self.n_vertices()))
            .expect("template is contiguous");
        Ok(&flat + &beta.dot(&self.parts.shape_basis).insert_axis(Axis(0)))
    }

    /// Mesh vertices (`V×3`) for one frame.
    pub fn evaluate_mesh(&self, shape: &[f64], params: &FlameParams) -> Result<Array2<f64>> {
        check_len("expression", self.n_expression(), params.expression.len())?;
        check_len("pose", self.n_pose(), params.pose.len())?;
        let row = Array2::from_shape_vec((1, self.n_params()), params.to_row())
            .expect("row length checked");
        let flat = self.evaluate_flat(shape, row.view())?;
        Ok(unflatten(flat.row(0).to_owned().into_raw_vec_and_offset().0))
    }

    /// Flattened meshes (`T×3V`) for a parameter sequence (`T×(E+P)`).
    pub fn evaluate_flat(&self, shape: &[f64], params: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("params", self.n_params(), params.ncols())?;
        let rest = self.rest_row(shape)?;
        Ok(params.dot(&self.motion_basis) + &rest)
    }

    /// Differentiable counterpart of [`FaceModel::evaluate_flat`] on a tape.
    pub fn evaluate_graph(&self, g: &mut Graph, shape: &[f64], params: Var) -> Result<Var> {
        check_len("params", self.n_params(), g.shape(params).1)?;
        let rest = g.constant(self.rest_row(shape)?);
        let basis = g.constant(self.motion_basis.clone());
        let motion = g.matmul(params, basis);
        Ok(g.add_row(motion, rest))
    }

    pub fn mouth_shape(&self, vertices: ArrayView2<f64>) -> MouthShape {
        let m = self.parts.mouth;
        MouthShape {
            width: distance(vertices, m.left, m.right),
            height: distance(vertices, m.top, m.bottom),
        }
    }

    /// Average each symmetric pair with its partner's mirror image; snap midline x to 0.
    pub fn apply_bilateral_symmetry(&self, vertices: ArrayView2<f64>) -> Array2<f64> {
        symmetrize_vertices(vertices, &self.parts.symmetry)
    }

    /// Least-squares projection of parameter rows onto the mirror-symmetric subspace.
    pub fn symmetrize_params(&self, params: ArrayView2<f64>) -> Array2<f64> {
        params.dot(&self.param_symmetrizer)
    }
}

pub fn symmetrize_vertices(vertices: ArrayView2<f64>, symmetry: &Symmetry) -> Array2<f64> {
    let mut out = vertices.to_owned();
    for &(l, r) in &symmetry.pairs {
        let left = vertices.row(l);
        let right = vertices.row(r);
        let x = 0.5 * (left[0] - right[0]);
        let y = 0.5 * (left[1] + right[1]);
        let z = 0.5 * (left[2] + right[2]);
        out.row_mut(l).assign(&Array1::from(vec![x, y, z]));
        out.row_mut(r).assign(&Array1::from(vec![-x, y, z]));
    }
    for &m in &symmetry.midline {
        out[[m, 0]] = 0.0;
    }
    out
}

/// `V×3` view of a flattened `3V` mesh row.
pub fn unflatten(flat: Vec<f64>) -> Array2<f64> {
    let v = flat.len() / 3;
    Array2::from_shape_vec((v, 3), flat).expect("flattened mesh length is a multiple of 3")
}

fn distance(vertices: ArrayView2<f64>, a: usize, b: usize) -> f64 {
    let d = &vertices.row(a) - &vertices.row(b);
    d.dot(&d).sqrt()
}

fn check_len(axis: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            axis,
            expected,
            got,
        });
    }
    Ok(())
}

fn symmetrizer(basis: &Array2<f64>, symmetry: &Symmetry) -> Array2<f64> {
    let k = basis.nrows();
    let mut mirrored = Array2::zeros(basis.dim());
    for (i, row) in basis.rows().into_iter().enumerate() {
        let mesh = unflatten(row.to_vec());
        let sym = symmetrize_vertices(mesh.view(), symmetry);
        mirrored
            .row_mut(i)
            .assign(&sym.into_shape_with_order(basis.ncols()).unwrap());
    }
    // P = Sym(B)·Bᵀ·(B·Bᵀ)⁻¹ so that row-vector coefficients p map to p·P.
    let gram = basis.dot(&basis.t());
    let scale = gram.diag().iter().fold(0.0f64, |m, &x| m.max(x)).max(1e-300);
    let mut g = DMatrix::from_fn(k, k, |r, c| gram[[r, c]]);
    for i in 0..k {
        g[(i, i)] += 1e-12 * scale;
    }
    let inv = g
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(k, k));
    let inv = Array2::from_shape_fn((k, k), |(r, c)| inv[(r, c)]);
    mirrored.dot(&basis.t()).dot(&inv)
}

fn validate(p: &FaceModelParts) -> Result<()> {
    let v = p.template.nrows();
    if p.template.ncols() != 3 {
        return Err(Error::Dimension {
            axis: "template columns",
            expected: 3,
            got: p.template.ncols(),
        });
    }
    for (axis, basis) in [
        ("shape basis columns", &p.shape_basis),
        ("expression basis columns", &p.expression_basis),
        ("pose basis columns", &p.pose_basis),
    ] {
        check_len(axis, 3 * v, basis.ncols())?;
    }
    check_len("vertex mask", v, p.vertex_mask.len())?;
    check_len("expression names", p.expression_basis.nrows(), p.expression_names.len())?;
    check_len("pose names", p.pose_basis.nrows(), p.pose_names.len())?;

    let in_range = |i: usize| i < v;
    let mouth_indices = p.mouth.indices();
    let all_indices = p
        .faces
        .iter()
        .flatten()
        .chain(&p.lip_keypoints)
        .chain(&p.lip_region)
        .chain(mouth_indices.iter())
        .chain(&p.symmetry.midline)
        .chain(p.symmetry.pairs.iter().flat_map(|(a, b)| [a, b]));
    if let Some(bad) = all_indices.copied().find(|&i| !in_range(i)) {
        return Err(Error::Config(format!("vertex index {bad} out of range [0, {v})")));
    }

    let mut seen = vec![false; v];
    for &k in &p.lip_keypoints {
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::Config(format!("duplicate lip keypoint {k}")));
        }
    }
    check_len("lip keypoints", LIP_KEYPOINTS, p.lip_keypoints.len())?;
    if let Some(i) = p.mouth.indices().into_iter().find(|i| !p.lip_region.contains(i)) {
        return Err(Error::Config(format!("mouth extremity {i} is outside the lip region")));
    }

    let mut partner = vec![None; v];
    for &(l, r) in &p.symmetry.pairs {
        if l == r || partner[l].is_some() || partner[r].is_some() {
            return Err(Error::Config(format!("symmetry pair ({l}, {r}) is not an involution")));
        }
        partner[l] = Some(r);
        partner[r] = Some(l);
    }
    for &m in &p.symmetry.midline {
        if partner[m].is_some() {
            return Err(Error::Config(format!("midline vertex {m} also appears in a pair")));
        }
        if p.template[[m, 0]].abs() > 1e-9 {
            return Err(Error::Config(format!(
                "midline vertex {m} has x = {} (must be 0)",
                p.template[[m, 0]]
            )));
        }
    }
    if !p.template.iter().all(|x| x.is_finite()) {
        return Err(Error::Config("template contains non-finite coordinates".into()));
    }
    Ok(())
}

/// Lip keypoints of a flattened mesh row as `24×3`.
pub fn keypoints_of(flat_row: ndarray::ArrayView1<f64>, keypoints: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((keypoints.len(), 3));
    for (i, &k) in keypoints.iter().enumerate() {
        out.row_mut(i).assign(&flat_row.slice(s![3 * k..3 * k + 3]));
    }
    out
}
