//! Procedural desk-scale head model with smooth, mirror-symmetric blendshape bases.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FaceModel, FaceModelParts, MouthExtremities, Symmetry, LIP_KEYPOINTS};
use crate::error::{Error, Result};

/// Articulated joint contributing three linearized rotation components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseJoint {
    Jaw,
    Neck,
    Global,
}

impl PoseJoint {
    fn name(self) -> &'static str {
        match self {
            PoseJoint::Jaw => "jaw",
            PoseJoint::Neck => "neck",
            PoseJoint::Global => "global",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticModelConfig {
    /// Grid columns across the face; must be odd so a column sits on the midline.
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub face_width: f64,
    pub face_height: f64,
    pub n_shape: usize,
    pub n_expression: usize,
    pub pose_joints: Vec<PoseJoint>,
    pub mouth_center_y: f64,
    pub lip_half_width: f64,
    pub lip_half_height: f64,
    pub inner_lip_half_width: f64,
    pub inner_lip_half_height: f64,
    /// Eye ellipse centre `(|x|, y)` and radii, excluded from the vertex mask.
    pub eye_center: [f64; 2],
    pub eye_radius: [f64; 2],
    /// Lateral band next to the face border (ears) excluded from the vertex mask.
    pub ear_margin: f64,
}

impl Default for SyntheticModelConfig {
    fn default() -> Self {
        Self {
            grid_cols: 25,
            grid_rows: 21,
            face_width: 0.16,
            face_height: 0.22,
            n_shape: 10,
            n_expression: 50,
            pose_joints: vec![PoseJoint::Jaw, PoseJoint::Neck],
            mouth_center_y: -0.05,
            lip_half_width: 0.0238,
            lip_half_height: 0.0085,
            inner_lip_half_width: 0.017,
            inner_lip_half_height: 0.0025,
            eye_center: [0.035, 0.035],
            eye_radius: [0.016, 0.009],
            ear_margin: 0.008,
        }
    }
}

impl SyntheticModelConfig {
    /// A reduced model for fast tests (87 vertices, 12 expression modes).
    pub fn small() -> Self {
        Self {
            grid_cols: 9,
            grid_rows: 7,
            n_shape: 4,
            n_expression: 12,
            ..Self::default()
        }
    }

    pub fn n_pose(&self) -> usize {
        3 * self.pose_joints.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.grid_cols * self.grid_rows + LIP_KEYPOINTS
    }
}

const SEMANTIC_MODES: [&str; 12] = [
    "jaw_open",
    "mouth_stretch",
    "smile",
    "frown",
    "brow_raise",
    "brow_lower",
    "cheek_raise",
    "lip_pucker",
    "lip_press",
    "nose_wrinkle",
    "eye_squint",
    "upper_lip_raise",
];

/// Generated vertices per lip ring; outer and inner rings together give the 24 keypoints.
const RING: usize = LIP_KEYPOINTS / 2;

type Field = Box<dyn Fn([f64; 3]) -> [f64; 3]>;

pub fn build_synthetic_model(config: &SyntheticModelConfig, seed: u64) -> Result<FaceModel> {
    check_config(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config;
    let (cols, rows) = (c.grid_cols, c.grid_rows);
    let half_w = c.face_width / 2.0;
    let half_h = c.face_height / 2.0;
    let depth = |x: f64, y: f64| surface_depth(c, x, y);

    let mut template = Vec::with_capacity(c.n_vertices());
    let mut mask = Vec::with_capacity(c.n_vertices());
    let mut pairs = Vec::new();
    let mut midline = Vec::new();
    let mid = cols / 2;
    let dx = c.face_width / (cols - 1) as f64;
    let dy = c.face_height / (rows - 1) as f64;
    for r in 0..rows {
        let y = -half_h + r as f64 * dy;
        for i in 0..cols {
            let x = (i as f64 - mid as f64) * dx;
            let idx = template.len();
            template.push([x, y, depth(x, y)]);
            let ex = (x.abs() - c.eye_center[0]) / c.eye_radius[0];
            let ey = (y - c.eye_center[1]) / c.eye_radius[1];
            let eye = ex * ex + ey * ey <= 1.0;
            let ear = x.abs() > half_w - c.ear_margin;
            mask.push(!(eye || ear));
            if i < mid {
                pairs.push((idx, idx + 2 * (mid - i)));
            } else if i == mid {
                midline.push(idx);
            }
        }
    }

    // Lip rings: vertex k sits at angle k·30°, k = 0 is the right corner, k = 3 the top.
    let ring_start = template.len();
    let mut keypoints = Vec::with_capacity(LIP_KEYPOINTS);
    for (half_x, half_y) in [
        (c.lip_half_width, c.lip_half_height),
        (c.inner_lip_half_width, c.inner_lip_half_height),
    ] {
        let base = template.len();
        let partner = |k: usize| (RING / 2 + RING - k) % RING;
        // Right half (and the two midline vertices) computed directly; the left half mirrors it.
        let right_half = |k: usize| {
            let theta = k as f64 * std::f64::consts::TAU / RING as f64;
            let x = if k == 3 || k == 9 { 0.0 } else { half_x * theta.cos() };
            let y = if k == 0 { 0.0 } else { half_y * theta.sin() };
            (x, y)
        };
        for k in 0..RING {
            let (x, y) = if (4..=8).contains(&k) {
                let (x, y) = right_half(partner(k));
                (-x, y)
            } else {
                right_half(k)
            };
            let y = c.mouth_center_y + y;
            template.push([x, y, depth(x, y) + 0.003]);
            mask.push(true);
            keypoints.push(base + k);
        }
        for k in 0..RING {
            if k == 3 || k == 9 {
                midline.push(base + k);
            } else if template[base + k][0] < 0.0 {
                pairs.push((base + k, base + partner(k)));
            }
        }
    }

    let mut faces = Vec::new();
    for r in 0..rows - 1 {
        for i in 0..cols - 1 {
            let a = r * cols + i;
            let b = a + 1;
            let d = a + cols;
            let e = d + 1;
            faces.push([a, b, e]);
            faces.push([a, e, d]);
        }
    }
    for k in 0..RING {
        let o0 = ring_start + k;
        let o1 = ring_start + (k + 1) % RING;
        let i0 = o0 + RING;
        let i1 = o1 + RING;
        faces.push([o0, o1, i1]);
        faces.push([o0, i1, i0]);
    }

    let mouth = MouthExtremities {
        top: ring_start + 3,
        bottom: ring_start + 9,
        left: ring_start + 6,
        right: ring_start,
    };

    let mut expression_fields = semantic_fields(c);
    expression_fields.truncate(c.n_expression);
    let mut expression_names: Vec<String> = SEMANTIC_MODES
        .iter()
        .take(c.n_expression)
        .map(|s| s.to_string())
        .collect();
    while expression_fields.len() < c.n_expression {
        expression_names.push(format!("mode_{:02}", expression_fields.len()));
        expression_fields.push(random_bumps(&mut rng, 3, 0.003, (0.015, 0.035)));
    }

    let mut shape_fields: Vec<Field> = vec![
        Box::new(|p: [f64; 3]| [0.08 * p[0], 0.0, 0.0]),
        Box::new(|p: [f64; 3]| [0.0, 0.08 * p[1], 0.0]),
    ];
    shape_fields.truncate(c.n_shape);
    while shape_fields.len() < c.n_shape {
        shape_fields.push(random_bumps(&mut rng, 2, 0.004, (0.025, 0.05)));
    }

    let mut pose_fields: Vec<Field> = Vec::new();
    let mut pose_names = Vec::new();
    for &joint in &c.pose_joints {
        for (axis, axis_name) in ["pitch", "yaw", "roll"].iter().enumerate() {
            pose_fields.push(rotation_field(c, joint, axis));
            pose_names.push(format!("{}_{}", joint.name(), axis_name));
        }
    }

    let n_v = template.len();
    let sample = |fields: &[Field]| {
        let mut basis = Array2::zeros((fields.len(), 3 * n_v));
        for (m, f) in fields.iter().enumerate() {
            for (v, &p) in template.iter().enumerate() {
                let d = f(p);
                for a in 0..3 {
                    basis[[m, 3 * v + a]] = d[a];
                }
            }
        }
        basis
    };

    let parts = FaceModelParts {
        template: Array2::from_shape_fn((n_v, 3), |(v, a)| template[v][a]),
        faces,
        shape_basis: sample(&shape_fields),
        expression_basis: sample(&expression_fields),
        pose_basis: sample(&pose_fields),
        vertex_mask: mask,
        lip_keypoints: keypoints.clone(),
        lip_region: keypoints,
        mouth,
        symmetry: Symmetry { pairs, midline },
        expression_names,
        pose_names,
    };
    FaceModel::new(parts)
}

fn check_config(c: &SyntheticModelConfig) -> Result<()> {
    if c.grid_cols < 3 || c.grid_cols % 2 == 0 || c.grid_rows < 3 {
        return Err(Error::Config(format!(
            "grid must have an odd number of columns ≥ 3 and ≥ 3 rows, got {}×{}",
            c.grid_cols, c.grid_rows
        )));
    }
    if c.n_vertices() < 64 {
        return Err(Error::Config(format!(
            "model with {} vertices is too small to place {LIP_KEYPOINTS} lip keypoints (need V ≥ 64)",
            c.n_vertices()
        )));
    }
    if c.lip_half_width >= 0.4 * c.face_width
        || c.inner_lip_half_width >= c.lip_half_width
        || c.inner_lip_half_height >= c.lip_half_height
        || c.lip_half_height <= 0.0
        || c.inner_lip_half_height <= 0.0
    {
        return Err(Error::Config("lip region does not fit inside the face".into()));
    }
    if c.n_expression < 4 {
        return Err(Error::Config(format!(
            "need at least 4 expression modes (jaw, stretch, smile, frown), got {}",
            c.n_expression
        )));
    }
    if c.pose_joints.is_empty() {
        return Err(Error::Config("at least one pose joint is required".into()));
    }
    Ok(())
}

fn surface_depth(c: &SyntheticModelConfig, x: f64, y: f64) -> f64 {
    let u = x / (0.55 * c.face_width);
    let v = y / (0.6 * c.face_height);
    let bulge = 0.06 * (1.0 - u * u - v * v).max(0.05).sqrt();
    let nose = 0.015 * gauss2(x, y - 0.005, 0.008, 0.02);
    bulge + nose
}

fn gauss2(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy))).exp()
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn semantic_fields(c: &SyntheticModelConfig) -> Vec<Field> {
    let ym = c.mouth_center_y;
    let jaw_w = move |y: f64| smoothstep((ym + 0.003 - y) / 0.013);
    let mouth = move |x: f64, y: f64| gauss2(x, y - ym, 0.035, 0.018);
    let brow = |x: f64, y: f64| gauss2(x.abs() - 0.035, y - 0.055, 0.018, 0.01);
    let cheek = |x: f64, y: f64| gauss2(x.abs() - 0.045, y + 0.015, 0.015, 0.015);
    let nose = |x: f64, y: f64| gauss2(x.abs() - 0.012, y - 0.015, 0.008, 0.008);
    let eye = |x: f64, y: f64| gauss2(x.abs() - 0.035, y - 0.035, 0.015, 0.008);
    vec![
        Box::new(move |p: [f64; 3]| {
            let w = jaw_w(p[1]) * (-p[0] * p[0] / (2.0 * 0.05 * 0.05)).exp();
            [0.0, -0.008 * w, -0.002 * w]
        }),
        Box::new(move |p: [f64; 3]| [0.2 * p[0] * mouth(p[0], p[1]), 0.0, 0.0]),
        Box::new(move |p: [f64; 3]| {
            let g = mouth(p[0], p[1]);
            [0.06 * p[0] * g, 7.0 * p[0] * p[0] * g, -2.0 * p[0] * p[0] * g]
        }),
        Box::new(move |p: [f64; 3]| {
            let g = mouth(p[0], p[1]);
            let chin = 0.0015 * g * smoothstep((ym - 0.004 - p[1]) / 0.012);
            [-0.03 * p[0] * g, -6.0 * p[0] * p[0] * g + chin, 0.0]
        }),
        Box::new(move |p: [f64; 3]| [0.0, 0.005 * brow(p[0], p[1]), 0.0]),
        Box::new(move |p: [f64; 3]| {
            let b = brow(p[0], p[1]);
            [-0.06 * p[0] * b, -0.004 * b, 0.0]
        }),
        Box::new(move |p: [f64; 3]| {
            let b = cheek(p[0], p[1]);
            [0.0, 0.003 * b, 0.002 * b]
        }),
        Box::new(move |p: [f64; 3]| {
            let g = mouth(p[0], p[1]);
            [-0.12 * p[0] * g, 0.0, 0.005 * g]
        }),
        Box::new(move |p: [f64; 3]| {
            let g = mouth(p[0], p[1]);
            [0.0, -0.003 * g * ((p[1] - ym) / 0.004).tanh(), 0.0]
        }),
        Box::new(move |p: [f64; 3]| {
            let b = nose(p[0], p[1]);
            [0.0, 0.002 * b, 0.001 * b]
        }),
        Box::new(move |p: [f64; 3]| [0.0, -0.002 * eye(p[0], p[1]), 0.0]),
        Box::new(move |p: [f64; 3]| {
            let g = mouth(p[0], p[1]) * smoothstep((p[1] - ym) / 0.01);
            [0.0, 0.003 * g, 0.0]
        }),
    ]
}

/// Mirror-paired Gaussian bumps: dx is odd in x, dy and dz are even.
fn random_bumps(rng: &mut ChaCha8Rng, count: usize, amplitude: f64, sigma: (f64, f64)) -> Field {
    let bumps: Vec<([f64; 2], f64, [f64; 3])> = (0..count)
        .map(|_| {
            let center = [rng.random_range(0.0..0.06), rng.random_range(-0.09..0.08)];
            let s = rng.random_range(sigma.0..sigma.1);
            let amp = [
                rng.random_range(-amplitude..amplitude),
                rng.random_range(-amplitude..amplitude),
                rng.random_range(-amplitude..amplitude),
            ];
            (center, s, amp)
        })
        .collect();
    Box::new(move |p: [f64; 3]| {
        let mut d = [0.0; 3];
        for &([cx, cy], s, [ax, ay, az]) in &bumps {
            let right = gauss2(p[0] - cx, p[1] - cy, s, s);
            let left = gauss2(p[0] + cx, p[1] - cy, s, s);
            d[0] += ax * (right - left);
            d[1] += ay * (right + left);
            d[2] += az * (right + left);
        }
        d
    })
}

/// Small-angle rotation about one axis through the joint pivot, scaled by a region weight.
fn rotation_field(c: &SyntheticModelConfig, joint: PoseJoint, axis: usize) -> Field {
    let ym = c.mouth_center_y;
    let (pivot, jaw) = match joint {
        PoseJoint::Jaw => ([0.0, ym + 0.02, -0.06], true),
        PoseJoint::Neck => ([0.0, -0.14, -0.04], false),
        PoseJoint::Global => ([0.0, 0.0, 0.0], false),
    };
    Box::new(move |p: [f64; 3]| {
        let w = if jaw {
            smoothstep((ym + 0.005 - p[1]) / 0.02)
        } else {
            1.0
        };
        let r = [p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]];
        let mut omega = [0.0; 3];
        omega[axis] = 1.0;
        [
            w * (omega[1] * r[2] - omega[2] * r[1]),
            w * (omega[2] * r[0] - omega[0] * r[2]),
            w * (omega[0] * r[1] - omega[1] * r[0]),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face_model::{FlameParams, Stage};

    #[test]
    fn default_model_satisfies_invariants() {
        let m = build_synthetic_model(&SyntheticModelConfig::default(), 1000).unwrap();
        assert_eq!(m.n_vertices(), 25 * 21 + 24);
        assert_eq!(m.n_params(), 56);
        assert_eq!(m.n_expression(), 50);
        assert_eq!(m.lip_keypoints().len(), 24);
        let sym = m.symmetry();
        let covered = 2 * sym.pairs.len() + sym.midline.len();
        assert_eq!(covered, m.n_vertices());
        for &(l, r) in &sym.pairs {
            assert!(m.template()[[l, 0]] < 0.0);
            assert_eq!(m.template()[[l, 0]], -m.template()[[r, 0]]);
            assert_eq!(m.template()[[l, 1]], m.template()[[r, 1]]);
        }
        assert!(m.vertex_mask().iter().any(|&b| !b));
    }

    #[test]
    fn rest_mouth_matches_hand_computed_extent() {
        // Extremities: corners (±0.0238, -0.05, z_c) and top/bottom (0, -0.05 ± 0.0085, z_t/z_b),
        // with z from the surface bulge plus nose bump, lifted by 3 mm.
        let cfg = SyntheticModelConfig::default();
        let m = build_synthetic_model(&cfg, 1000).unwrap();
        let mouth = m.mouth_shape(m.template().view());
        let z = |y: f64| {
            let v = y / (0.6 * 0.22);
            0.06 * (1.0 - v * v).sqrt() + 0.015 * (-(y - 0.005).powi(2) / (2.0 * 0.02f64.powi(2))).exp()
        };
        let dz = z(-0.05 + 0.0085) - z(-0.05 - 0.0085);
        let expected_height = (0.017f64.powi(2) + dz * dz).sqrt();
        assert!((mouth.width - 0.0476).abs() < 1e-12, "{}", mouth.width);
        assert!((mouth.height - expected_height).abs() < 1e-12, "{}", mouth.height);
        assert!((mouth.height - 0.017482705430824783).abs() < 1e-15);
    }

    #[test]
    fn jaw_open_widens_mouth_height() {
        let m = build_synthetic_model(&SyntheticModelConfig::default(), 1000).unwrap();
        let rest = m.mouth_shape(m.template().view());
        let mut p = FlameParams::zeros(m.n_expression(), m.n_pose());
        p.expression[m.expression_index("jaw_open").unwrap()] = 1.0;
        let mesh = m.evaluate_mesh(&vec![0.0; m.n_shape()], &p).unwrap();
        assert!(m.mouth_shape(mesh.view()).height > rest.height);
        let mut p = FlameParams::zeros(m.n_expression(), m.n_pose());
        p.expression[m.expression_index("mouth_stretch").unwrap()] = 1.0;
        p.stage = Stage::Raw;
        let mesh = m.evaluate_mesh(&vec![0.0; m.n_shape()], &p).unwrap();
        assert!(m.mouth_shape(mesh.view()).width > rest.width);
    }

    #[test]
    fn expression_modes_are_mirror_symmetric() {
        let m = build_synthetic_model(&SyntheticModelConfig::default(), 3).unwrap();
        for j in 0..m.n_expression() {
            let mut p = FlameParams::zeros(m.n_expression(), m.n_pose());
            p.expression[j] = 1.0;
            let mesh = m.evaluate_mesh(&vec![0.0; m.n_shape()], &p).unwrap();
            let sym = m.apply_bilateral_symmetry(mesh.view());
            let err = (&mesh - &sym).iter().fold(0.0f64, |a, x| a.max(x.abs()));
            assert!(err < 1e-15, "mode {j} asymmetric by {err}");
        }
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let cfg = SyntheticModelConfig {
            grid_cols: 5,
            grid_rows: 5,
            ..SyntheticModelConfig::default()
        };
        let err = build_synthetic_model(&cfg, 1).unwrap_err();
        assert!(err.to_string().contains("too small"), "{err}");
    }

    #[test]
    fn same_seed_same_bases() {
        let a = build_synthetic_model(&SyntheticModelConfig::small(), 42).unwrap();
        let b = build_synthetic_model(&SyntheticModelConfig::small(), 42).unwrap();
        let c = build_synthetic_model(&SyntheticModelConfig::small(), 43).unwrap();
        assert_eq!(a.parts().shape_basis, b.parts().shape_basis);
        assert_ne!(a.parts().shape_basis, c.parts().shape_basis);
    }

    #[test]
    fn expression_modes_are_symmetric_and_identifiable() {
        let m = build_synthetic_model(&SyntheticModelConfig::default(), 1000).unwrap();
        let n = m.n_params();
        for j in 0..n {
            let mut e = ndarray::Array2::zeros((1, n));
            e[[0, j]] = 1.0;
            let p = m.symmetrize_params(e.view());
            let name = m.parts().pose_names.get(j.wrapping_sub(m.n_expression())).cloned();
            let kept = match name.as_deref() {
                Some(n) => n.ends_with("pitch"),
                None => true,
            };
            let err = (&p - &e).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            if kept {
                assert!(err < 1e-4, "mode {j} changed by {err}");
            } else {
                assert!(p[[0, j]].abs() < 1e-4, "asymmetric pose {j} survived");
            }
        }
    }
}
