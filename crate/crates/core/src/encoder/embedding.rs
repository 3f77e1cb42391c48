use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::AutoencoderModel;
use crate::ingest::TokenSequence;
use crate::linalg::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LMCR";
const VERSION: u32 = 1;

/// One embedding row per review, in corpus order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub review_ids: Vec<String>,
    pub values: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(review_ids: Vec<String>, values: Matrix) -> Result<Self> {
        if review_ids.len() != values.rows() {
            return Err(Error::invalid(format!(
                "{} review ids for {} embedding rows",
                review_ids.len(),
                values.rows()
            )));
        }
        Ok(Self { review_ids, values })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Rounds every entry to single precision, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for x in self.values.data_mut() {
            *x = *x as f32 as f64;
        }
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut values = Matrix::zeros(rows.len(), self.dim());
        for (dst, &src) in rows.iter().enumerate() {
            values.row_mut(dst).copy_from_slice(self.values.row(src));
        }
        Self {
            review_ids: rows.iter().map(|&r| self.review_ids[r].clone()).collect(),
            values,
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut os = path.as_os_str().to_owned();
        os.push(".ids");
        PathBuf::from(os)
    }

    /// Writes `LMCR`, version, rows, cols and row-major `f32` values (all
    /// little-endian), plus a `<path>.ids` sidecar with `row<TAB>review_id` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(24 + 4 * self.values.data().len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for &x in self.values.data() {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

        let side = Self::sidecar_path(path);
        let mut f = fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
        let mut text = String::new();
        for (i, id) in self.review_ids.iter().enumerate() {
            text.push_str(&format!("{i}\t{id}\n"));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "missing LMCR header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        if bytes.len() != 24 + 4 * rows * cols {
            return Err(Error::format(path, "payload size does not match header"));
        }
        let data = bytes[24..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();

        let side = Self::sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut review_ids = Vec::with_capacity(rows);
        for (i, line) in text.lines().enumerate() {
            let (idx, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(&side, format!("line {}: expected row<TAB>id", i + 1)))?;
            if idx.parse::<usize>().ok() != Some(i) {
                return Err(Error::format(&side, format!("line {}: row index out of order", i + 1)));
            }
            review_ids.push(id.to_string());
        }
        Self::new(review_ids, Matrix::from_vec(rows, cols, data)?)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Encodes every sequence; row `i` is the embedding of `corpus[i]`.
pub fn embed_corpus(model: &AutoencoderModel, corpus: &[TokenSequence]) -> Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|s| model.encode_review(s))
        .collect::<Result<_>>()?;
    let mut values = Matrix::zeros(rows.len(), model.dims.embedding_dim());
    for (i, r) in rows.iter().enumerate() {
        values.row_mut(i).copy_from_slice(r);
    }
    EmbeddingMatrix::new(corpus.iter().map(|s| s.review_id.clone()).collect(), values)
}
