use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{forward_step, GruParams, GRU_TENSOR_NAMES};
use crate::container::{Checkpoint, ENCODER_MAGIC};
use crate::ingest::{TokenSequence, Vocabulary, BOS, EOS};
use crate::linalg::{argmax, Matrix};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderDims {
    pub vocab_size: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl AutoencoderDims {
    /// Width of a review embedding (forward and backward states concatenated).
    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// All trainable tensors of the autoencoder. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct AeParams {
    pub embedding: Matrix,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    /// Affine map from the review embedding to the decoder's initial state.
    pub bridge_w: Matrix,
    pub bridge_b: Matrix,
    pub dec: GruParams,
    pub out_w: Matrix,
    pub out_b: Matrix,
}

impl AeParams {
    pub fn zeros(d: &AutoencoderDims) -> Self {
        Self {
            embedding: Matrix::zeros(d.vocab_size, d.input_dim),
            enc_fwd: GruParams::zeros(d.input_dim, d.hidden_dim),
            enc_bwd: GruParams::zeros(d.input_dim, d.hidden_dim),
            bridge_w: Matrix::zeros(d.hidden_dim, d.embedding_dim()),
            bridge_b: Matrix::zeros(d.hidden_dim, 1),
            dec: GruParams::zeros(d.input_dim, d.hidden_dim),
            out_w: Matrix::zeros(d.vocab_size, d.hidden_dim),
            out_b: Matrix::zeros(d.vocab_size, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(d: &AutoencoderDims, rng: &mut R) -> Self {
        Self {
            embedding: Matrix::uniform_fan_in(d.vocab_size, d.input_dim, rng),
            enc_fwd: GruParams::init(d.input_dim, d.hidden_dim, rng),
            enc_bwd: GruParams::init(d.input_dim, d.hidden_dim, rng),
            bridge_w: Matrix::uniform_fan_in(d.hidden_dim, d.embedding_dim(), rng),
            bridge_b: Matrix::zeros(d.hidden_dim, 1),
            dec: GruParams::init(d.input_dim, d.hidden_dim, rng),
            out_w: Matrix::uniform_fan_in(d.vocab_size, d.hidden_dim, rng),
            out_b: Matrix::zeros(d.vocab_size, 1),
        }
    }

    pub fn tensor_names() -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for prefix in ["enc_fwd", "enc_bwd"] {
            names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("{prefix}.{n}")));
        }
        names.push("bridge_w".into());
        names.push("bridge_b".into());
        names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("dec.{n}")));
        names.push("out_w".into());
        names.push("out_b".into());
        names
    }

    /// Tensors in [`AeParams::tensor_names`] order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.embedding];
        v.extend(self.enc_fwd.tensors());
        v.extend(self.enc_bwd.tensors());
        v.push(&self.bridge_w);
        v.push(&self.bridge_b);
        v.extend(self.dec.tensors());
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.enc_fwd.tensors_mut());
        v.extend(self.enc_bwd.tensors_mut());
        v.push(&mut self.bridge_w);
        v.push(&mut self.bridge_b);
        v.extend(self.dec.tensors_mut());
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }

    pub fn add_assign(&mut self, other: &AeParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }
}

/// Bidirectional GRU encoder with a GRU decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    pub dims: AutoencoderDims,
    pub params: AeParams,
}

/// Runs a GRU over embedded tokens from a zero state; returns every state.
pub(crate) fn run_gru<'a, I>(p: &GruParams, embedding: &Matrix, tokens: I) -> Vec<Vec<f64>>
where
    I: Iterator<Item = &'a u32>,
{
    let mut states = vec![vec![0.0; p.hidden_dim()]];
    for &tok in tokens {
        let h = forward_step(p, embedding.row(tok as usize), states.last().unwrap()).h;
        states.push(h);
    }
    states
}

impl AutoencoderModel {
    pub fn new(dims: AutoencoderDims, params: AeParams) -> Result<Self> {
        let model = Self { dims, params };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(dims: AutoencoderDims) -> Self {
        Self {
            dims,
            params: AeParams::zeros(&dims),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let p = &self.params;
        for g in [&p.enc_fwd, &p.enc_bwd, &p.dec] {
            g.validate()?;
            if g.input_dim() != d.input_dim || g.hidden_dim() != d.hidden_dim {
                return Err(Error::invalid("GRU dimensions disagree with the model"));
            }
        }
        let shapes_ok = p.embedding.shape() == (d.vocab_size, d.input_dim)
            && p.bridge_w.shape() == (d.hidden_dim, d.embedding_dim())
            && p.bridge_b.shape() == (d.hidden_dim, 1)
            && p.out_w.shape() == (d.vocab_size, d.hidden_dim)
            && p.out_b.shape() == (d.vocab_size, 1);
        if !shapes_ok {
            return Err(Error::invalid("autoencoder tensor shapes are inconsistent"));
        }
        if !p.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::Numerical("non-finite autoencoder parameter".into()));
        }
        Ok(())
    }

    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.dims.vocab_size) {
            Some(t) => Err(Error::invalid(format!(
                "token index {t} outside vocabulary of size {}",
                self.dims.vocab_size
            ))),
            None => Ok(()),
        }
    }

    /// Review embedding: final forward state followed by final backward state.
    pub fn encode_review(&self, tokens: &TokenSequence) -> Result<Vec<f64>> {
        self.encode_indices(&tokens.indices)
    }

    pub fn encode_indices(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let fwd = run_gru(&p.enc_fwd, &p.embedding, tokens.iter());
        let bwd = run_gru(&p.enc_bwd, &p.embedding, tokens.iter().rev());
        let mut out = fwd.last().unwrap().clone();
        out.extend_from_slice(bwd.last().unwrap());
        Ok(out)
    }

    fn initial_decoder_state(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.dims.embedding_dim() {
            return Err(Error::invalid(format!(
                "embedding has length {}, expected {}",
                embedding.len(),
                self.dims.embedding_dim()
            )));
        }
        let mut h0 = self.params.bridge_b.data().to_vec();
        self.params.bridge_w.add_matvec(embedding, &mut h0);
        Ok(h0)
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = self.params.out_b.data().to_vec();
        self.params.out_w.add_matvec(h, &mut logits);
        logits
    }

    /// Teacher-forced decoding: row `t - 1` holds the logits for `target[t]`
    /// given the gold prefix `target[..t]`. Shape `(len - 1) x |V|`.
    pub fn decode_teacher_forced(&self, embedding: &[f64], target: &TokenSequence) -> Result<Matrix> {
        self.check_tokens(&target.indices)?;
        let mut h = self.initial_decoder_state(embedding)?;
        let steps = target.indices.len().saturating_sub(1);
        let mut out = Matrix::zeros(steps, self.dims.vocab_size);
        for t in 0..steps {
            let x = self.params.embedding.row(target.indices[t] as usize);
            h = forward_step(&self.params.dec, x, &h).h;
            out.row_mut(t).copy_from_slice(&self.logits(&h));
        }
        Ok(out)
    }

    /// Greedy argmax decoding from BOS until EOS or `max_len` tokens.
    pub fn greedy_decode(&self, embedding: &[f64], max_len: usize) -> Result<Vec<u32>> {
        let mut h = self.initial_decoder_state(embedding)?;
        let mut seq = vec![BOS];
        while seq.len() < max_len.max(2) {
            let x = self.params.embedding.row(*seq.last().unwrap() as usize);
            h = forward_step(&self.params.dec, x, &h).h;
            let next = argmax(&self.logits(&h)) as u32;
            seq.push(next);
            if next == EOS {
                break;
            }
        }
        Ok(seq)
    }

    pub fn to_checkpoint(&self, vocab: Option<&Vocabulary>) -> Checkpoint {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "autoencoder",
            "dims": self.dims,
            "vocabulary": vocab.map(|v| v.words().to_vec()),
        }));
        for (name, t) in AeParams::tensor_names().into_iter().zip(self.params.tensors()) {
            ck.push(name, t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<Vocabulary>)> {
        let dims: AutoencoderDims = serde_json::from_value(ck.meta["dims"].clone())
            .map_err(|e| Error::invalid(format!("checkpoint dims: {e}")))?;
        let mut params = AeParams::zeros(&dims);
        for (name, slot) in AeParams::tensor_names().into_iter().zip(params.tensors_mut()) {
            let t = ck.tensor(&name)?;
            if t.shape() != slot.shape() {
                return Err(Error::invalid(format!("tensor `{name}` has wrong shape")));
            }
            *slot = t.clone();
        }
        let vocab = match &ck.meta["vocabulary"] {
            serde_json::Value::Null => None,
            v => {
                let words: Vec<String> = serde_json::from_value(v.clone())
                    .map_err(|e| Error::invalid(format!("checkpoint vocabulary: {e}")))?;
                Some(Vocabulary::from_full_list(words)?)
            }
        };
        Ok((Self::new(dims, params)?, vocab))
    }

    pub fn save(&self, path: &Path, vocab: Option<&Vocabulary>) -> Result<()> {
        self.to_checkpoint(vocab).write(path, ENCODER_MAGIC)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<Vocabulary>)> {
        Self::from_checkpoint(&Checkpoint::read(path, ENCODER_MAGIC)?)
    }
}
