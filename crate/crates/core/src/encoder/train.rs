//! Reconstruction training by backpropagation through time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gru::{backward_step, forward_step, StepCache};
use super::model::{AeParams, AutoencoderDims, AutoencoderModel};
use crate::ingest::TokenSequence;
use crate::linalg::{axpy, softmax_in_place};
use crate::optim::{clip_global_norm, Adam};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            hidden_dim: 32,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "encoder dimensions and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config(
                "encoder learning rate and clip norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub model: AutoencoderModel,
    /// Mean token cross-entropy per epoch.
    pub loss_history: Vec<f64>,
}

struct GruTrace {
    inputs: Vec<u32>,
    states: Vec<Vec<f64>>,
    caches: Vec<StepCache>,
}

fn trace_gru(p: &super::gru::GruParams, emb: &crate::linalg::Matrix, tokens: &[u32], h0: Vec<f64>) -> GruTrace {
    let mut states = vec![h0];
    let mut caches = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        let c = forward_step(p, emb.row(tok as usize), states.last().unwrap());
        states.push(c.h.clone());
        caches.push(c);
    }
    GruTrace {
        inputs: tokens.to_vec(),
        states,
        caches,
    }
}

/// Backpropagates through a traced GRU run, accumulating into `g` and the
/// embedding gradient. `dh` is the gradient on the final state; `extra[t]`, if
/// given, is added to the gradient of the state produced by input `t`.
/// Returns the gradient w.r.t. the initial state.
fn backprop_gru(
    p: &super::gru::GruParams,
    g: &mut super::gru::GruParams,
    emb: &crate::linalg::Matrix,
    d_emb: &mut crate::linalg::Matrix,
    trace: &GruTrace,
    mut dh: Vec<f64>,
    extra: Option<&[Vec<f64>]>,
) -> Vec<f64> {
    let hd = p.hidden_dim();
    let mut dx = vec![0.0; p.input_dim()];
    for t in (0..trace.inputs.len()).rev() {
        if let Some(extra) = extra {
            axpy(1.0, &extra[t], &mut dh);
        }
        let tok = trace.inputs[t] as usize;
        let mut dh_prev = vec![0.0; hd];
        dx.iter_mut().for_each(|v| *v = 0.0);
        backward_step(
            p,
            g,
            emb.row(tok),
            &trace.states[t],
            &trace.caches[t],
            &dh,
            &mut dx,
            &mut dh_prev,
        );
        axpy(1.0, &dx, d_emb.row_mut(tok));
        dh = dh_prev;
    }
    dh
}

/// Summed token cross-entropy of reconstructing `tokens`; when `grads` is
/// given, accumulates the gradient of that sum. Returns `(loss_sum, n_predictions)`.
pub fn sequence_loss(
    params: &AeParams,
    dims: &AutoencoderDims,
    tokens: &[u32],
    grads: Option<&mut AeParams>,
) -> (f64, usize) {
    let hd = dims.hidden_dim;
    let rev: Vec<u32> = tokens.iter().rev().copied().collect();
    let fwd = trace_gru(&params.enc_fwd, &params.embedding, tokens, vec![0.0; hd]);
    let bwd = trace_gru(&params.enc_bwd, &params.embedding, &rev, vec![0.0; hd]);
    let mut code = fwd.states.last().unwrap().clone();
    code.extend_from_slice(bwd.states.last().unwrap());

    let mut h0 = params.bridge_b.data().to_vec();
    params.bridge_w.add_matvec(&code, &mut h0);
    let steps = tokens.len().saturating_sub(1);
    let dec = trace_gru(&params.dec, &params.embedding, &tokens[..steps], h0);

    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut p = params.out_b.data().to_vec();
        params.out_w.add_matvec(&dec.states[t + 1], &mut p);
        softmax_in_place(&mut p);
        loss -= p[tokens[t + 1] as usize].max(f64::MIN_POSITIVE).ln();
        probs.push(p);
    }

    let Some(g) = grads else {
        return (loss, steps);
    };

    // dL/dh for each decoder state from the output layer
    let mut dh_out = Vec::with_capacity(steps);
    for (t, mut dlogits) in probs.into_iter().enumerate() {
        dlogits[tokens[t + 1] as usize] -= 1.0;
        g.out_w.add_outer(&dlogits, &dec.states[t + 1]);
        axpy(1.0, &dlogits, g.out_b.data_mut());
        let mut dh = vec![0.0; hd];
        params.out_w.add_matvec_t(&dlogits, &mut dh);
        dh_out.push(dh);
    }

    let dh0 = backprop_gru(
        &params.dec,
        &mut g.dec,
        &params.embedding,
        &mut g.embedding,
        &dec,
        vec![0.0; hd],
        Some(&dh_out),
    );

    g.bridge_w.add_outer(&dh0, &code);
    axpy(1.0, &dh0, g.bridge_b.data_mut());
    let mut dcode = vec![0.0; 2 * hd];
    params.bridge_w.add_matvec_t(&dh0, &mut dcode);

    backprop_gru(
        &params.enc_fwd,
        &mut g.enc_fwd,
        &params.embedding,
        &mut g.embedding,
        &fwd,
        dcode[..hd].to_vec(),
        None,
    );
    backprop_gru(
        &params.enc_bwd,
        &mut g.enc_bwd,
        &params.embedding,
        &mut g.embedding,
        &bwd,
        dcode[hd..].to_vec(),
        None,
    );
    (loss, steps)
}

/// Sequences per gradient chunk; chunk results are reduced in index order so
/// the sum does not depend on thread scheduling.
const CHUNK: usize = 8;

/// Mean cross-entropy over a batch and its gradient.
pub fn batch_loss_grad(
    params: &AeParams,
    dims: &AutoencoderDims,
    batch: &[&[u32]],
) -> (f64, usize, AeParams) {
    let partials: Vec<(f64, usize, AeParams)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = AeParams::zeros(dims);
            let mut loss = 0.0;
            let mut n = 0;
            for seq in chunk {
                let (l, c) = sequence_loss(params, dims, seq, Some(&mut g));
                loss += l;
                n += c;
            }
            (loss, n, g)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut loss, mut n, mut grads) = iter.next().unwrap_or((0.0, 0, AeParams::zeros(dims)));
    for (l, c, g) in iter {
        loss += l;
        n += c;
        grads.add_assign(&g);
    }
    if n > 0 {
        grads.scale(1.0 / n as f64);
    }
    (loss, n, grads)
}

/// Trains the autoencoder to reconstruct its own input sequences.
pub fn train_autoencoder(
    corpus: &[TokenSequence],
    vocab_size: usize,
    max_len: usize,
    config: &EncoderConfig,
    seed: u64,
) -> Result<TrainedAutoencoder> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot train the autoencoder on an empty corpus"));
    }
    let dims = AutoencoderDims {
        vocab_size,
        input_dim: config.input_dim,
        hidden_dim: config.hidden_dim,
        max_len,
    };
    let mut rng = rng::seeded(seed);
    let mut params = AeParams::init(&dims, &mut rng);
    let model = AutoencoderModel::new(dims, params.clone())?;
    for s in corpus {
        model.check_tokens(&s.indices)?;
    }

    let mut opt = Adam::new(config.learning_rate);
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = rng::permutation(&mut rng, corpus.len());
        let mut epoch_loss = 0.0;
        let mut epoch_n = 0usize;
        for (b, batch_idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[u32]> = batch_idx
                .iter()
                .map(|&i| corpus[i].indices.as_slice())
                .collect();
            let diverged = |what: &str| {
                let ids: Vec<&str> = batch_idx
                    .iter()
                    .map(|&i| corpus[i].review_id.as_str())
                    .collect();
                Error::Numerical(format!(
                    "non-finite {what} in epoch {epoch}, batch {b} (reviews {})",
                    ids.join(",")
                ))
            };
            let (loss, n, mut grads) = batch_loss_grad(&params, &dims, &batch);
            if !loss.is_finite() {
                return Err(diverged("reconstruction loss"));
            }
            epoch_loss += loss;
            epoch_n += n;
            clip_global_norm(grads.tensors_mut(), config.clip_norm);
            opt.step(params.tensors_mut(), grads.tensors());
            if !params.tensors().iter().all(|t| t.is_finite()) {
                return Err(diverged("parameters"));
            }
        }
        let mean = epoch_loss / epoch_n.max(1) as f64;
        log::debug!("encoder epoch {epoch}: loss {mean:.5}");
        loss_history.push(mean);
    }
    Ok(TrainedAutoencoder {
        model: AutoencoderModel::new(dims, params)?,
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BOS, EOS};

    #[test]
    fn zero_epochs_keeps_initialisation() {
        let corpus = vec![TokenSequence {
            review_id: "a".into(),
            indices: vec![BOS, 4, 5, EOS],
        }];
        let cfg = EncoderConfig {
            epochs: 0,
            input_dim: 3,
            hidden_dim: 2,
            ..Default::default()
        };
        let trained = train_autoencoder(&corpus, 6, 8, &cfg, 17).unwrap();
        let mut rng = rng::seeded(17);
        let init = AeParams::init(&trained.model.dims, &mut rng);
        assert_eq!(trained.model.params, init);
        assert!(trained.loss_history.is_empty());
    }

    #[test]
    fn teacher_forced_logits_match_loss() {
        let dims = AutoencoderDims {
            vocab_size: 7,
            input_dim: 3,
            hidden_dim: 2,
            max_len: 8,
        };
        let mut rng = rng::seeded(4);
        let model = AutoencoderModel::new(dims, AeParams::init(&dims, &mut rng)).unwrap();
        let seq = TokenSequence {
            review_id: "x".into(),
            indices: vec![BOS, 5, 6, 4, EOS],
        };
        let emb = model.encode_review(&seq).unwrap();
        let logits = model.decode_teacher_forced(&emb, &seq).unwrap();
        let mut expect = 0.0;
        for t in 0..logits.rows() {
            let mut p = logits.row(t).to_vec();
            softmax_in_place(&mut p);
            expect -= p[seq.indices[t + 1] as usize].ln();
        }
        let (loss, n) = sequence_loss(&model.params, &dims, &seq.indices, None);
        assert_eq!(n, 4);
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let corpus = vec![TokenSequence {
            review_id: "bad".into(),
            indices: vec![BOS, 4, EOS],
        }];
        let cfg = EncoderConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(
            train_autoencoder(&corpus, 5, 8, &cfg, 0),
            Err(Error::Config(_))
        ));
        assert!(train_autoencoder(&[], 5, 8, &EncoderConfig::default(), 0).is_err());
        assert!(train_autoencoder(&corpus, 4, 8, &EncoderConfig::default(), 0).is_err());
    }

    #[test]
    fn divergence_names_the_batch() {
        let corpus: Vec<TokenSequence> = (0..4)
            .map(|i| TokenSequence {
                review_id: format!("rev{i}"),
                indices: vec![BOS, 4 + (i % 2) as u32, EOS],
            })
            .collect();
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden_dim: 2,
            epochs: 5,
            batch_size: 2,
            learning_rate: 1e300,
            clip_norm: 1e300,
        };
        match train_autoencoder(&corpus, 6, 8, &cfg, 0) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("batch") && msg.contains("rev")),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    /// Central finite differences on the summed loss over a few sequences.
    pub(crate) fn max_relative_gradient_error(seed: u64) -> f64 {
        let dims = AutoencoderDims {
            vocab_size: 9,
            input_dim: 3,
            hidden_dim: 4,
            max_len: 5,
        };
        let mut rng = rng::seeded(seed);
        let mut params = AeParams::init(&dims, &mut rng);
        // non-zero biases so every bias gradient path is exercised
        for t in params.tensors_mut() {
            if t.cols() == 1 {
                for (i, x) in t.data_mut().iter_mut().enumerate() {
                    *x = 0.1 * ((i % 5) as f64 - 2.0);
                }
            }
        }
        let seqs: Vec<Vec<u32>> = vec![vec![BOS, 4, 7, 5, EOS], vec![BOS, 8, EOS], vec![BOS, 6, 6, EOS]];
        let total = |p: &AeParams| -> f64 {
            seqs.iter().map(|s| sequence_loss(p, &dims, s, None).0).sum()
        };
        let mut grads = AeParams::zeros(&dims);
        for s in &seqs {
            sequence_loss(&params, &dims, s, Some(&mut grads));
        }
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            let len = params.tensors()[ti].data().len();
            for j in 0..len {
                let orig = params.tensors()[ti].data()[j];
                params.tensors_mut()[ti].data_mut()[j] = orig + eps;
                let up = total(&params);
                params.tensors_mut()[ti].data_mut()[j] = orig - eps;
                let down = total(&params);
                params.tensors_mut()[ti].data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.tensors()[ti].data()[j];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in [1, 2] {
            let err = max_relative_gradient_error(seed);
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }
}
