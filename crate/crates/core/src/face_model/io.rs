use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{FaceModel, FaceModelParts, MouthExtremities, Symmetry};
use crate::archive::Archive;
use crate::error::{Error, Result};

const FORMAT: &str = "emoface-face-model";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    n_vertices: usize,
    n_faces: usize,
    n_shape: usize,
    n_expression: usize,
    n_pose: usize,
    faces: Vec<[usize; 3]>,
    vertex_mask: Vec<bool>,
    lip_keypoints: Vec<usize>,
    lip_region: Vec<usize>,
    mouth_extremities: MouthExtremities,
    symmetry: Symmetry,
    expression_names: Vec<String>,
    pose_names: Vec<String>,
}

impl FaceModel {
    pub fn to_archive(&self) -> Result<Archive> {
        let p = &self.parts;
        let header = ModelHeader {
            format: FORMAT.into(),
            version: VERSION,
            n_vertices: self.n_vertices(),
            n_faces: p.faces.len(),
            n_shape: self.n_shape(),
            n_expression: self.n_expression(),
            n_pose: self.n_pose(),
            faces: p.faces.clone(),
            vertex_mask: p.vertex_mask.clone(),
            lip_keypoints: p.lip_keypoints.clone(),
            lip_region: p.lip_region.clone(),
            mouth_extremities: p.mouth,
            symmetry: p.symmetry.clone(),
            expression_names: p.expression_names.clone(),
            pose_names: p.pose_names.clone(),
        };
        let mut a = Archive::new(serde_json::to_value(header)?);
        a.put("template", p.template.clone());
        a.put("shape_basis", p.shape_basis.clone());
        a.put("expression_basis", p.expression_basis.clone());
        a.put("pose_basis", p.pose_basis.clone());
        Ok(a)
    }

    pub fn from_archive(mut a: Archive, file: &Path) -> Result<Self> {
        let header: ModelHeader = serde_json::from_value(a.meta.clone())
            .map_err(|e| Error::format(file, format!("bad model header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::format(
                file,
                format!("expected {FORMAT} v{VERSION}, found {} v{}", header.format, header.version),
            ));
        }
        let parts = FaceModelParts {
            template: a.take("template", file)?,
            faces: header.faces,
            shape_basis: a.take("shape_basis", file)?,
            expression_basis: a.take("expression_basis", file)?,
            pose_basis: a.take("pose_basis", file)?,
            vertex_mask: header.vertex_mask,
            lip_keypoints: header.lip_keypoints,
            lip_region: header.lip_region,
            mouth: header.mouth_extremities,
            symmetry: header.symmetry,
            expression_names: header.expression_names,
            pose_names: header.pose_names,
        };
        FaceModel::new(parts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(Archive::load(path)?, path)
    }
}

/// Format with 9 significant digits, `%g`-style (no trailing zeros).
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_fraction(&s).to_string()
    } else {
        let s = format!("{:.*e}", (DIGITS - 1) as usize, x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim_fraction(mantissa), e)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Wavefront OBJ text: `v x y z` lines, then 1-based `f i j k` lines.
pub fn write_obj(vertices: ArrayView2<f64>, faces: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(vertices.nrows() * 40 + faces.len() * 20);
    for v in vertices.rows() {
        let _ = writeln!(out, "v {} {} {}", format_sig(v[0]), format_sig(v[1]), format_sig(v[2]));
    }
    for f in faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn export_obj(vertices: ArrayView2<f64>, faces: &[[usize; 3]], path: &Path) -> Result<()> {
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.nrows()) {
        return Err(Error::InvalidInput(format!("face references missing vertex {bad}")));
    }
    fs::write(path, write_obj(vertices, faces)).map_err(|e| Error::io(path, e))
}

/// Parse `v`/`f` records of an OBJ document; other records are ignored.
pub fn parse_obj(text: &str) -> Result<(Array2<f64>, Vec<[usize; 3]>)> {
    let bad = |line: &str| Error::InvalidInput(format!("malformed OBJ line `{line}`"));
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xyz: Vec<f64> = it
                    .map(|t| t.parse::<f64>().map_err(|_| bad(line)))
                    .collect::<Result<_>>()?;
                if xyz.len() < 3 {
                    return Err(bad(line));
                }
                verts.extend_from_slice(&xyz[..3]);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| bad(line))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad(line));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    let n = verts.len() / 3;
    let vertices = Array2::from_shape_vec((n, 3), verts).expect("three coordinates per vertex");
    if let Some(i) = faces.iter().flatten().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!("face references missing vertex {}", i + 1)));
    }
    Ok((vertices, faces))
}
