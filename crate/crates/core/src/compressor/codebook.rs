use rand::Rng;

use crate::encoder::EmbeddingMatrix;
use crate::linalg::{truncated_svd, Matrix};
use crate::rng;
use crate::{Error, Result};

/// `K` codebooks of `M` codewords each; a code vector selects one codeword
/// per codebook and the reconstruction is their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebooks {
    books: Vec<Matrix>,
}

impl Codebooks {
    pub fn new(books: Vec<Matrix>) -> Result<Self> {
        let first = books
            .first()
            .ok_or_else(|| Error::invalid("at least one codebook is required"))?;
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::invalid("codebooks need at least one codeword and one column"));
        }
        if books.iter().any(|b| b.shape() != shape) {
            return Err(Error::invalid("codebooks must share one M x H shape"));
        }
        if !books.iter().all(Matrix::is_finite) {
            return Err(Error::Numerical("non-finite codeword".into()));
        }
        Ok(Self { books })
    }

    pub fn zeros(k: usize, m: usize, h: usize) -> Self {
        Self {
            books: vec![Matrix::zeros(m, h); k],
        }
    }

    pub fn k(&self) -> usize {
        self.books.len()
    }

    pub fn m(&self) -> usize {
        self.books[0].rows()
    }

    pub fn h(&self) -> usize {
        self.books[0].cols()
    }

    pub fn book(&self, i: usize) -> &Matrix {
        &self.books[i]
    }

    pub fn book_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.books[i]
    }

    pub fn books(&self) -> &[Matrix] {
        &self.books
    }

    pub(crate) fn books_mut(&mut self) -> &mut [Matrix] {
        &mut self.books
    }
}

/// Sum of the selected codewords; `code` is 1-based.
pub fn reconstruct_embedding(codebooks: &Codebooks, code: &[u32]) -> Result<Vec<f64>> {
    if code.len() != codebooks.k() {
        return Err(Error::invalid(format!(
            "code has {} components for {} codebooks",
            code.len(),
            codebooks.k()
        )));
    }
    let mut out = vec![0.0; codebooks.h()];
    for (i, &c) in code.iter().enumerate() {
        if c == 0 || c as usize > codebooks.m() {
            return Err(Error::invalid(format!(
                "code component {c} outside 1..={}",
                codebooks.m()
            )));
        }
        crate::linalg::axpy(1.0, codebooks.book(i).row(c as usize - 1), &mut out);
    }
    Ok(out)
}

/// Linear-interpolated quantile of sorted data at level `p`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Codebooks from the top-`k` factors of the column-centred embeddings.
///
/// Codeword `m` of book `i` is `sigma_i * q_m * v_i`, where `q_m` is the
/// `(m - 0.5) / M` quantile of the left-factor scores; the column mean is
/// folded into the first book so that code sums land near the data. A small
/// seeded jitter keeps codewords distinct when scores are degenerate.
pub fn init_codebooks(r: &EmbeddingMatrix, k: usize, m: usize, seed: u64) -> Result<Codebooks> {
    let (n, h) = (r.rows(), r.dim());
    if n == 0 {
        return Err(Error::invalid("cannot initialise codebooks from an empty embedding matrix"));
    }
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    if k == 0 || k > n.min(h) {
        return Err(Error::invalid(format!(
            "K = {k} outside 1..={} for {n} embeddings of width {h}",
            n.min(h)
        )));
    }
    if k >= h {
        log::warn!("K = {k} is not smaller than the embedding width {h}");
    }
    let mean = r.values.column_means();
    let mut centred = r.values.clone();
    for row in 0..n {
        for (x, mu) in centred.row_mut(row).iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
    let svd = truncated_svd(&centred, k)?;
    let rms = (r.values.squared_norm() / (n * h) as f64).sqrt();
    let jitter = 1e-3 * if rms > 0.0 { rms } else { 1.0 };
    let mut rng = rng::seeded(seed);

    let mut books = Vec::with_capacity(k);
    for i in 0..k {
        let sigma = svd.singular_values[i];
        let mut scores: Vec<f64> = (0..n).map(|s| svd.left.get(s, i)).collect();
        scores.sort_by(f64::total_cmp);
        let v = svd.right.row(i);
        let mut book = Matrix::zeros(m, h);
        for cw in 0..m {
            let q = quantile(&scores, (cw as f64 + 0.5) / m as f64);
            let row = book.row_mut(cw);
            for c in 0..h {
                let base = if i == 0 { mean[c] } else { 0.0 };
                row[c] = base + sigma * q * v[c] + jitter * rng.gen_range(-1.0..1.0);
            }
        }
        books.push(book);
    }
    Codebooks::new(books)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn reconstruction_fixtures() {
        let a1 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let a2 = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 0.0]]).unwrap();
        let cb = Codebooks::new(vec![a1.clone(), a2]).unwrap();
        assert_eq!(reconstruct_embedding(&cb, &[1, 1]).unwrap(), vec![1.5, 0.5]);
        assert_eq!(reconstruct_embedding(&cb, &[2, 2]).unwrap(), vec![0.0, 1.0]);

        let single = Codebooks::new(vec![a1.clone()]).unwrap();
        assert_eq!(reconstruct_embedding(&single, &[2]).unwrap(), a1.row(1));

        let with_zero = Codebooks::new(vec![a1.clone(), Matrix::zeros(2, 2)]).unwrap();
        assert_eq!(reconstruct_embedding(&with_zero, &[1, 2]).unwrap(), a1.row(0));

        assert!(reconstruct_embedding(&cb, &[0, 1]).is_err());
        assert!(reconstruct_embedding(&cb, &[3, 1]).is_err());
        assert!(reconstruct_embedding(&cb, &[1]).is_err());
    }

    #[test]
    fn scaling_a_book_scales_its_contribution() {
        let mut rng = rng::seeded(3);
        let books: Vec<Matrix> = (0..3).map(|_| Matrix::uniform_fan_in(4, 5, &mut rng)).collect();
        let cb = Codebooks::new(books).unwrap();
        let code = [2, 4, 1];
        let base = reconstruct_embedding(&cb, &code).unwrap();
        let mut scaled = cb.clone();
        scaled.book_mut(1).scale(2.5);
        let out = reconstruct_embedding(&scaled, &code).unwrap();
        let contrib = cb.book(1).row(3);
        for c in 0..5 {
            assert!((out[c] - (base[c] + 1.5 * contrib[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn two_clusters_land_on_their_means() {
        let r = emb(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]]);
        let cb = init_codebooks(&r, 1, 2, 7).unwrap();
        let means = [[0.95, 0.05], [0.05, 0.95]];
        let book = cb.book(0);
        // the two codewords match the two means in some order
        let d = |row: usize, mu: &[f64; 2]| crate::linalg::euclidean(book.row(row), mu);
        let straight = d(0, &means[0]).max(d(1, &means[1]));
        let crossed = d(0, &means[1]).max(d(1, &means[0]));
        assert!(straight.min(crossed) < 0.2, "{book:?}");
    }

    #[test]
    fn identical_rows_give_parallel_codewords() {
        let row = vec![0.3, -1.2, 0.8];
        let r = emb(&vec![row.clone(); 5]);
        let cb = init_codebooks(&r, 1, 3, 1).unwrap();
        let norm = crate::linalg::dot(&row, &row).sqrt();
        for w in cb.book(0).iter_rows() {
            let cos = crate::linalg::dot(w, &row) / (norm * crate::linalg::dot(w, w).sqrt());
            assert!(cos > 1.0 - 1e-5, "{cos}");
        }
    }

    #[test]
    fn initialisation_is_seeded_and_checked() {
        let r = emb(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0], vec![2.0, 2.0, 2.0]]);
        assert_eq!(init_codebooks(&r, 2, 3, 4).unwrap(), init_codebooks(&r, 2, 3, 4).unwrap());
        assert_ne!(init_codebooks(&r, 2, 3, 4).unwrap(), init_codebooks(&r, 2, 3, 5).unwrap());
        assert!(init_codebooks(&r, 4, 3, 4).is_err());
        assert!(init_codebooks(&r, 0, 3, 4).is_err());
    }
}
