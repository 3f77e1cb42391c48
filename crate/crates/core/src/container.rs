//! Tensor checkpoint container shared by the encoder (`LMCAE1`), codebook
//! (`LMCCB1`) and predictor (`LMCPD1`) checkpoints.
//!
//! Layout: 6-byte magic, `u64` LE manifest length, UTF-8 JSON manifest listing
//! tensor names and shapes (plus free-form metadata), then every tensor as
//! row-major little-endian `f64` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

pub const ENCODER_MAGIC: &[u8; 6] = b"LMCAE1";
pub const CODEBOOK_MAGIC: &[u8; 6] = b"LMCCB1";
pub const PREDICTOR_MAGIC: &[u8; 6] = b"LMCPD1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// In-memory form of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Matrix) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::invalid(format!("checkpoint has no tensor `{name}`")))
    }

    pub fn to_bytes(&self, magic: &[u8; 6]) -> Vec<u8> {
        let manifest = Manifest {
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: [t.rows(), t.cols()],
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serialises");
        let n_floats: usize = self.tensors.iter().map(|(_, t)| t.data().len()).sum();
        let mut out = Vec::with_capacity(6 + 8 + json.len() + 8 * n_floats);
        out.extend_from_slice(magic);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], magic: &[u8; 6], origin: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, m);
        if bytes.len() < 14 || &bytes[..6] != magic {
            return Err(bad(&format!(
                "expected magic {}",
                String::from_utf8_lossy(magic)
            )));
        }
        let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
        let json_end = 14usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[14..json_end])
            .map_err(|e| bad(&format!("manifest: {e}")))?;
        let mut offset = json_end;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in manifest.tensors {
            let [rows, cols] = entry.shape;
            let n = rows * cols;
            let end = offset + 8 * n;
            if end > bytes.len() {
                return Err(bad(&format!("tensor `{}` is truncated", entry.name)));
            }
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            tensors.push((entry.name, Matrix::from_vec(rows, cols, data)?));
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path, magic: &[u8; 6]) -> Result<()> {
        fs::write(path, self.to_bytes(magic)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, magic: &[u8; 6]) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, magic, path)
    }
}
