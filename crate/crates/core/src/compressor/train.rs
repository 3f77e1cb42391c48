use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codebook::{init_codebooks, Codebooks};
use super::codes::{discretize, hard_loss, CodeLogits, LatentRatingTable};
use crate::container::{Checkpoint, CODEBOOK_MAGIC};
use crate::encoder::EmbeddingMatrix;
use crate::linalg::{euclidean, softmax_in_place, Matrix};
use crate::optim::Adam;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionConfig {
    /// Number of code dimensions.
    pub k: usize,
    /// Values per code dimension.
    pub m: usize,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// When false only the score network is optimised.
    pub train_codebooks: bool,
    /// Hidden width of the score network; `None` uses `max(1, K*M/2)`.
    pub score_hidden: Option<usize>,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            k: 4,
            m: 5,
            gamma_start: 1.0,
            gamma_end: 0.1,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            train_codebooks: true,
            score_hidden: None,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("compression: {msg}")));
        if self.k == 0 || self.m == 0 {
            return bad(format!("K = {} and M = {} must be positive", self.k, self.m));
        }
        if !(self.gamma_end > 0.0) || !(self.gamma_start >= self.gamma_end) || !self.gamma_start.is_finite() {
            return bad(format!(
                "temperatures need gamma_start >= gamma_end > 0, got {} and {}",
                self.gamma_start, self.gamma_end
            ));
        }
        if self.score_hidden == Some(0) {
            return bad("score_hidden must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Exponential decay from `gamma_start` at the first epoch to `gamma_end`
    /// at the last.
    pub fn temperature(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.gamma_start;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.gamma_start * (self.gamma_end / self.gamma_start).powf(t)
    }
}

/// One tanh hidden layer mapping an embedding to `K * M` code logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetwork {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl ScoreNetwork {
    pub fn hidden_width(k: usize, m: usize) -> usize {
        (k * m / 2).max(1)
    }

    pub fn zeros(h: usize, k: usize, m: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, h),
            b1: Matrix::zeros(hidden, 1),
            w2: Matrix::zeros(k * m, hidden),
            b2: Matrix::zeros(k * m, 1),
        }
    }

    pub fn init(h: usize, k: usize, m: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut net = Self::zeros(h, k, m, hidden);
        net.w1 = Matrix::uniform_fan_in(net.w1.rows(), h, &mut rng);
        net.w2 = Matrix::uniform_fan_in(k * m, net.w1.rows(), &mut rng);
        net
    }

    /// Hidden activations and logits for one embedding.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hidden = self.b1.data().to_vec();
        self.w1.add_matvec(x, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = self.b2.data().to_vec();
        self.w2.add_matvec(&hidden, &mut logits);
        (hidden, logits)
    }
}

/// Codebooks together with the score network that assigns codes.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionModel {
    pub codebooks: Codebooks,
    pub network: ScoreNetwork,
}

impl CompressionModel {
    pub fn zeros_like(&self) -> Self {
        Self {
            codebooks: Codebooks::zeros(self.codebooks.k(), self.codebooks.m(), self.codebooks.h()),
            network: ScoreNetwork::zeros(
                self.codebooks.h(),
                self.codebooks.k(),
                self.codebooks.m(),
                self.network.w1.rows(),
            ),
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.codebooks.k()).map(|i| format!("A{i}")).collect();
        names.extend(["score_w1", "score_b1", "score_w2", "score_b2"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let n = &self.network;
        let mut t: Vec<&Matrix> = self.codebooks.books().iter().collect();
        t.extend([&n.w1, &n.b1, &n.w2, &n.b2]);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let n = &mut self.network;
        let mut t: Vec<&mut Matrix> = self.codebooks.books_mut().iter_mut().collect();
        t.extend([&mut n.w1, &mut n.b1, &mut n.w2, &mut n.b2]);
        t
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    /// Noise-free logits for every embedding.
    pub fn logits(&self, r: &EmbeddingMatrix) -> Result<CodeLogits> {
        if r.dim() != self.codebooks.h() {
            return Err(Error::invalid(format!(
                "embeddings have width {}, model expects {}",
                r.dim(),
                self.codebooks.h()
            )));
        }
        let (k, m) = (self.codebooks.k(), self.codebooks.m());
        let rows: Vec<Vec<f64>> = (0..r.rows())
            .into_par_iter()
            .map(|s| self.network.forward(r.values.row(s)).1)
            .collect();
        let mut values = Matrix::zeros(rows.len(), k * m);
        for (s, row) in rows.iter().enumerate() {
            values.row_mut(s).copy_from_slice(row);
        }
        CodeLogits::new(r.review_ids.clone(), k, m, values)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "compression",
            "k": self.codebooks.k(),
            "m": self.codebooks.m(),
            "h": self.codebooks.h(),
            "hidden": self.network.w1.rows(),
        }));
        for (name, t) in self.tensor_names().into_iter().zip(self.tensors()) {
            ck.push(name, t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |key: &str| {
            ck.meta[key]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::invalid(format!("checkpoint meta lacks {key}")))
        };
        let (k, m, h, hidden) = (get("k")?, get("m")?, get("h")?, get("hidden")?);
        let books = (1..=k)
            .map(|i| ck.tensor(&format!("A{i}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        let network = ScoreNetwork {
            w1: ck.tensor("score_w1")?.clone(),
            b1: ck.tensor("score_b1")?.clone(),
            w2: ck.tensor("score_w2")?.clone(),
            b2: ck.tensor("score_b2")?.clone(),
        };
        let model = Self {
            codebooks: Codebooks::new(books)?,
            network,
        };
        let expect = ScoreNetwork::zeros(h, k, m, hidden);
        let shapes_ok = model.codebooks.m() == m
            && model.codebooks.h() == h
            && model.network.w1.shape() == expect.w1.shape()
            && model.network.b1.shape() == expect.b1.shape()
            && model.network.w2.shape() == expect.w2.shape()
            && model.network.b2.shape() == expect.b2.shape();
        if !shapes_ok {
            return Err(Error::invalid("compression checkpoint tensors have inconsistent shapes"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path, CODEBOOK_MAGIC)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path, CODEBOOK_MAGIC)?)
    }
}

/// Summed soft reconstruction loss `sum_s ||R_s - sum_i y_i^T A_i||` where
/// `y_i = softmax((logits_i + g_i) / gamma)`, with gradients accumulated into
/// `grads` when given. `noise` holds one `K * M` row of Gumbel draws per
/// embedding row.
pub fn soft_loss(
    model: &CompressionModel,
    rows: &[&[f64]],
    noise: &[&[f64]],
    gamma: f64,
    mut grads: Option<&mut CompressionModel>,
) -> f64 {
    let (k, m, h) = (model.codebooks.k(), model.codebooks.m(), model.codebooks.h());
    let net = &model.network;
    let mut total = 0.0;
    for (x, g) in rows.iter().zip(noise) {
        let (hidden, logits) = net.forward(x);
        // the log-softmax normaliser of pi cancels inside the second softmax
        let mut y = vec![0.0; k * m];
        for i in 0..k {
            let block = &mut y[i * m..(i + 1) * m];
            for j in 0..m {
                block[j] = (logits[i * m + j] + g[i * m + j]) / gamma;
            }
            softmax_in_place(block);
        }
        let mut rec = vec![0.0; h];
        for i in 0..k {
            model.codebooks.book(i).add_matvec_t(&y[i * m..(i + 1) * m], &mut rec);
        }
        let norm = euclidean(x, &rec);
        total += norm;

        let Some(gr) = grads.as_deref_mut() else { continue };
        if norm == 0.0 {
            continue;
        }
        // d norm / d rec
        let d_rec: Vec<f64> = rec.iter().zip(x.iter()).map(|(a, b)| (a - b) / norm).collect();
        let mut d_logits = vec![0.0; k * m];
        for i in 0..k {
            let yi = &y[i * m..(i + 1) * m];
            gr.codebooks.book_mut(i).add_outer(yi, &d_rec);
            let dy = model.codebooks.book(i).matvec(&d_rec);
            let inner: f64 = yi.iter().zip(&dy).map(|(a, b)| a * b).sum();
            for j in 0..m {
                d_logits[i * m + j] = yi[j] * (dy[j] - inner) / gamma;
            }
        }
        gr.network.w2.add_outer(&d_logits, &hidden);
        crate::linalg::axpy(1.0, &d_logits, gr.network.b2.data_mut());
        let mut d_hidden = vec![0.0; hidden.len()];
        net.w2.add_matvec_t(&d_logits, &mut d_hidden);
        for (d, a) in d_hidden.iter_mut().zip(&hidden) {
            *d *= 1.0 - a * a;
        }
        gr.network.w1.add_outer(&d_hidden, x);
        crate::linalg::axpy(1.0, &d_hidden, gr.network.b1.data_mut());
    }
    total
}

#[derive(Clone, Debug)]
pub struct TrainedCompression {
    pub model: CompressionModel,
    pub logits: CodeLogits,
    pub codes: LatentRatingTable,
    /// Hard-assignment loss at the end of each epoch.
    pub loss_history: Vec<f64>,
    /// Mean relaxed loss over each epoch's batches.
    pub soft_loss_history: Vec<f64>,
}

const CHUNK: usize = 16;

/// Learns codebooks and code assignments for the embeddings, starting from
/// factor-based codebooks.
pub fn train_compression(
    r: &EmbeddingMatrix,
    config: &CompressionConfig,
    seed: u64,
) -> Result<TrainedCompression> {
    config.validate()?;
    let codebooks = init_codebooks(r, config.k, config.m, rng::derive_seed(seed, "codebooks"))?;
    train_compression_from(r, codebooks, config, seed)
}

/// Training from the given codebooks.
pub fn train_compression_from(
    r: &EmbeddingMatrix,
    codebooks: Codebooks,
    config: &CompressionConfig,
    seed: u64,
) -> Result<TrainedCompression> {
    config.validate()?;
    if r.rows() == 0 {
        return Err(Error::invalid("cannot compress an empty embedding matrix"));
    }
    if codebooks.k() != config.k || codebooks.m() != config.m || codebooks.h() != r.dim() {
        return Err(Error::invalid(format!(
            "codebooks are {}x{}x{}, config and embeddings need {}x{}x{}",
            codebooks.k(),
            codebooks.m(),
            codebooks.h(),
            config.k,
            config.m,
            r.dim()
        )));
    }
    let (k, m, h) = (config.k, config.m, r.dim());
    let mut model = CompressionModel {
        codebooks,
        network: ScoreNetwork::init(
            h,
            k,
            m,
            config.score_hidden.unwrap_or_else(|| ScoreNetwork::hidden_width(k, m)),
            rng::derive_seed(seed, "score-network"),
        ),
    };
    let mut rng = rng::seeded(rng::derive_seed(seed, "gumbel"));
    let mut opt = Adam::new(config.learning_rate);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut soft_loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let gamma = config.temperature(epoch);
        let order = rng::permutation(&mut rng, r.rows());
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let noise: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| (0..k * m).map(|_| rng::gumbel(&mut rng)).collect())
                .collect();
            let rows: Vec<&[f64]> = batch.iter().map(|&s| r.values.row(s)).collect();
            let noise_rows: Vec<&[f64]> = noise.iter().map(Vec::as_slice).collect();
            let partials: Vec<(f64, CompressionModel)> = rows
                .par_chunks(CHUNK)
                .zip(noise_rows.par_chunks(CHUNK))
                .map(|(xs, gs)| {
                    let mut g = model.zeros_like();
                    let l = soft_loss(&model, xs, gs, gamma, Some(&mut g));
                    (l, g)
                })
                .collect();
            let mut iter = partials.into_iter();
            let (mut loss, mut grads) = iter.next().expect("batches are non-empty");
            for (l, g) in iter {
                loss += l;
                grads.add_assign(&g);
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite compression loss in epoch {epoch}, batch {b} (first review {})",
                    r.review_ids[batch[0]]
                )));
            }
            epoch_loss += loss;
            let scale = 1.0 / rows.len() as f64;
            for t in grads.tensors_mut() {
                t.scale(scale);
            }
            let skip = if config.train_codebooks { 0 } else { k };
            let params: Vec<&mut Matrix> = model.tensors_mut().into_iter().skip(skip).collect();
            opt.step(params, grads.tensors().into_iter().skip(skip).collect());
        }
        if !model.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::Numerical(format!("non-finite compression parameters after epoch {epoch}")));
        }
        let logits = model.logits(r)?;
        let hard = hard_loss(&r.values, &model.codebooks, &discretize(&logits).codes())?;
        log::debug!(
            "compression epoch {epoch}: gamma {gamma:.4}, soft {:.5}, hard {hard:.5}",
            epoch_loss / r.rows() as f64
        );
        soft_loss_history.push(epoch_loss / r.rows() as f64);
        loss_history.push(hard);

    }

    let logits = model.logits(r)?;
    let codes = discretize(&logits);
    Ok(TrainedCompression {
        model,
        logits,
        codes,
        loss_history,
        soft_loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::brute_force_best_codes;

    fn emb(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_emb(n: usize, h: usize, seed: u64) -> EmbeddingMatrix {
        use rand::Rng;
        let mut rng = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        emb(&rows)
    }

    #[test]
    fn schedule_runs_from_start_to_end() {
        let cfg = CompressionConfig {
            epochs: 5,
            ..Default::default()
        };
        assert_eq!(cfg.temperature(0), 1.0);
        assert!((cfg.temperature(4) - 0.1).abs() < 1e-15);
        assert!(cfg.temperature(2) < cfg.temperature(1));
        let bad = CompressionConfig {
            gamma_start: 0.05,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn soft_gradients_match_finite_differences() {
        let (k, m, h) = (2, 3, 4);
        let r = random_emb(5, h, 1);
        let books: Vec<Matrix> = {
            let mut rng = rng::seeded(2);
            (0..k).map(|_| Matrix::uniform_fan_in(m, h, &mut rng)).collect()
        };
        let mut model = CompressionModel {
            codebooks: Codebooks::new(books).unwrap(),
            network: ScoreNetwork::init(h, k, m, 3, 3),
        };
        model.network.b1.fill(0.1);
        model.network.b2.fill(-0.2);
        let mut nrng = rng::seeded(4);
        let noise: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..k * m).map(|_| rng::gumbel(&mut nrng)).collect())
            .collect();
        let rows: Vec<&[f64]> = r.values.iter_rows().collect();
        let nrows: Vec<&[f64]> = noise.iter().map(Vec::as_slice).collect();
        let gamma = 0.7;
        let mut grads = model.zeros_like();
        soft_loss(&model, &rows, &nrows, gamma, Some(&mut grads));
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for ti in 0..model.tensors().len() {
            for j in 0..model.tensors()[ti].data().len() {
                let orig = model.tensors()[ti].data()[j];
                model.tensors_mut()[ti].data_mut()[j] = orig + eps;
                let up = soft_loss(&model, &rows, &nrows, gamma, None);
                model.tensors_mut()[ti].data_mut()[j] = orig - eps;
                let down = soft_loss(&model, &rows, &nrows, gamma, None);
                model.tensors_mut()[ti].data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.tensors()[ti].data()[j];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn frozen_realisable_codebooks_reach_zero_loss() {
        let book = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let rows: Vec<Vec<f64>> = [0, 1, 2, 0, 2, 1].iter().map(|&i| book.row(i).to_vec()).collect();
        let r = emb(&rows);
        let cfg = CompressionConfig {
            k: 1,
            m: 3,
            epochs: 1000,
            batch_size: 6,
            learning_rate: 0.01,
            train_codebooks: false,
            ..Default::default()
        };
        let out = train_compression_from(&r, Codebooks::new(vec![book]).unwrap(), &cfg, 5).unwrap();
        assert_eq!(*out.loss_history.last().unwrap(), 0.0);
        assert_eq!(out.codes.codes(), vec![vec![1], vec![2], vec![3], vec![1], vec![3], vec![2]]);
    }

    #[test]
    fn training_is_reproducible_and_near_optimal() {
        let r = random_emb(8, 4, 9);
        let cfg = CompressionConfig {
            k: 2,
            m: 3,
            epochs: 300,
            batch_size: 8,
            learning_rate: 0.01,
            score_hidden: Some(32),
            ..Default::default()
        };
        let a = train_compression(&r, &cfg, 1).unwrap();
        let b = train_compression(&r, &cfg, 1).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model, b.model);
        let (_, best) = brute_force_best_codes(&r, &a.model.codebooks, 10_000).unwrap();
        let opt = best.iter().sum::<f64>() / best.len() as f64;
        let last = *a.loss_history.last().unwrap();
        assert!(last <= 1.10 * opt + 1e-12, "{last} vs {opt}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let r = random_emb(6, 5, 2);
        let cfg = CompressionConfig {
            k: 2,
            m: 3,
            epochs: 2,
            ..Default::default()
        };
        let out = train_compression(&r, &cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.bin");
        out.model.save(&p).unwrap();
        let back = CompressionModel::load(&p).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(&std::fs::read(&p).unwrap()[..6], b"LMCCB1");
        assert_eq!(back.logits(&r).unwrap(), out.logits);
    }
}
