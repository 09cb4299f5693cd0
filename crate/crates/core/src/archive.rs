//! Single-file array archive: a JSON header followed by little-endian `f64` payloads.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes   b"EMFARCH1"
//! header_len u64 LE
//! header     UTF-8 JSON {"meta": <any>, "arrays": [{"name", "rows", "cols", "offset"}]}
//! payload    f64 LE values, row-major, `offset` counted in values from payload start
//! ```
//!
//! Used for face models and network checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EMFARCH1";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    arrays: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub meta: Value,
    pub arrays: BTreeMap<String, Array2<f64>>,
}

impl Archive {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            arrays: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.arrays.insert(name.into(), value);
    }

    pub fn take(&mut self, name: &str, file: &Path) -> Result<Array2<f64>> {
        self.arrays
            .remove(name)
            .ok_or_else(|| Error::format(file, format!("missing array `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let arrays = self
            .arrays
            .iter()
            .map(|(name, a)| {
                let e = Entry {
                    name: name.clone(),
                    rows: a.nrows(),
                    cols: a.ncols(),
                    offset,
                };
                offset += a.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            arrays,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for a in self.arrays.values() {
            for x in a.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], file: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::format(file, "not an emoface archive (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::format(file, "truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body])
            .map_err(|e| Error::format(file, format!("bad header: {e}")))?;
        let payload = &bytes[body..];
        let mut arrays = BTreeMap::new();
        for e in header.arrays {
            let start = e.offset * 8;
            let end = start + e.rows * e.cols * 8;
            if end > payload.len() {
                return Err(Error::format(file, format!("array `{}` out of bounds", e.name)));
            }
            let values: Vec<f64> = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let a = Array2::from_shape_vec((e.rows, e.cols), values)
                .map_err(|err| Error::format(file, err.to_string()))?;
            arrays.insert(e.name, a);
        }
        Ok(Self {
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
