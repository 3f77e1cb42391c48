//! Dense row-major matrices and the few decompositions the pipeline needs.
//!
//! Recurrent and score-network layers use [`Matrix`] directly with hand-written
//! kernels; singular value and symmetric eigen decompositions are delegated to
//! `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector (`n x 1`).
    pub fn column(values: Vec<f64>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    /// Uniform initialisation in `[-1/sqrt(cols), 1/sqrt(cols)]`.
    pub fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += self * x`.
    pub fn add_matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, x);
        }
    }

    /// `out += self^T * y`.
    pub fn add_matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += a * b^T`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(cols.max(1))) {
            if ai != 0.0 {
                axpy(ai, b, row);
            }
        }
    }

    /// `self * x` as a new vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.add_matvec(x, &mut out);
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for row in self.iter_rows() {
            axpy(1.0, row, &mut means);
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            means.iter_mut().for_each(|m| *m /= n);
        }
        means
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Flips the sign of a direction so its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) -> bool {
    let lead = argmax(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
    if v.get(lead).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Rank-`k` truncated singular value decomposition.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Left singular vectors, one column per component (`rows x k`).
    pub left: Matrix,
    /// Right singular vectors, one row per component (`k x cols`).
    pub right: Matrix,
}

/// Computes the top-`k` singular triplets of `m`.
///
/// Each right singular vector is sign-normalised so that its largest-magnitude
/// loading is positive; the matching left vector is flipped with it.
pub fn truncated_svd(m: &Matrix, k: usize) -> Result<TruncatedSvd> {
    let limit = m.rows().min(m.cols());
    if k == 0 || k > limit {
        return Err(Error::invalid(format!(
            "rank {k} outside 1..={limit} for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let svd = m.to_nalgebra().svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut singular_values = Vec::with_capacity(k);
    let mut left = Matrix::zeros(m.rows(), k);
    let mut right = Matrix::zeros(k, m.cols());
    for (slot, &idx) in order.iter().take(k).enumerate() {
        singular_values.push(svd.singular_values[idx]);
        let mut v: Vec<f64> = (0..m.cols()).map(|c| vt[(idx, c)]).collect();
        let flip = canonical_sign(&mut v);
        right.row_mut(slot).copy_from_slice(&v);
        for r in 0..m.rows() {
            let x = u[(r, idx)];
            left.set(r, slot, if flip { -x } else { x });
        }
    }
    Ok(TruncatedSvd {
        singular_values,
        left,
        right,
    })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending, each
/// eigenvector (row of the returned matrix) sign-normalised.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if m.rows() != m.cols() {
        return Err(Error::invalid("eigen-decomposition needs a square matrix"));
    }
    let eig = SymmetricEigen::new(m.to_nalgebra());
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (slot, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let mut v: Vec<f64> = (0..n).map(|r| eig.eigenvectors[(r, idx)]).collect();
        canonical_sign(&mut v);
        vectors.row_mut(slot).copy_from_slice(&v);
    }
    Ok((values, vectors))
}

/// Solves `(A^T A + ridge I) x = A^T y` by Cholesky factorisation.
pub fn ridge_least_squares(a: &Matrix, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if a.rows() != y.len() {
        return Err(Error::invalid("design matrix and target length differ"));
    }
    let an = a.to_nalgebra();
    let mut gram = an.transpose() * &an;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = an.transpose() * DVector::from_column_slice(y);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    let x = chol.solve(&rhs);
    Ok(x.iter().copied().collect())
}
