use crate::encoder::EmbeddingMatrix;
use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::{Error, Result};

/// Principal directions of a fitted row set.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit direction per row, eigenvalues descending; the
    /// largest-magnitude loading of each is positive.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Eigen-decomposes the (population) covariance of `rows`.
    pub fn fit(rows: &Matrix, k: usize) -> Result<Self> {
        let (n, h) = rows.shape();
        if k == 0 || k > h {
            return Err(Error::invalid(format!("PCA rank {k} outside 1..={h}")));
        }
        if n == 0 {
            return Err(Error::invalid("PCA needs at least one row"));
        }
        let mean = rows.column_means();
        let mut cov = Matrix::zeros(h, h);
        let mut centred = vec![0.0; h];
        for r in rows.iter_rows() {
            for c in 0..h {
                centred[c] = r[c] - mean[c];
            }
            cov.add_outer(&centred, &centred);
        }
        cov.scale(1.0 / n as f64);
        let (values, vectors) = symmetric_eigen(&cov)?;
        let mut components = Matrix::zeros(k, h);
        for c in 0..k {
            components.row_mut(c).copy_from_slice(vectors.row(c));
        }
        Ok(Self {
            mean,
            components,
            eigenvalues: values[..k].to_vec(),
        })
    }

    /// Scores of `rows` on the fitted directions (`rows x k`).
    pub fn project(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "PCA fitted on {} columns, got {}",
                self.mean.len(),
                rows.cols()
            )));
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(rows.rows(), k);
        let mut centred = vec![0.0; self.mean.len()];
        for (i, r) in rows.iter_rows().enumerate() {
            for (c, x) in centred.iter_mut().enumerate() {
                *x = r[c] - self.mean[c];
            }
            for j in 0..k {
                out.set(i, j, dot(self.components.row(j), &centred));
            }
        }
        Ok(out)
    }
}

/// Projects every row of `r` onto its own top-`k` principal directions.
pub fn pca_project(r: &EmbeddingMatrix, k: usize) -> Result<EmbeddingMatrix> {
    let pca = Pca::fit(&r.values, k)?;
    EmbeddingMatrix::new(r.review_ids.clone(), pca.project(&r.values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn emb(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn covariance_fixture() {
        // ±sqrt(6) along (1,1)/√2 and ±sqrt(2) along (1,-1)/√2:
        // population covariance [[2,1],[1,2]]
        let (a, b) = (3f64.sqrt(), 1.0);
        let rows = vec![vec![a, a], vec![-a, -a], vec![b, -b], vec![-b, b]];
        let pca = Pca::fit(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((pca.eigenvalues[0] - 3.0).abs() < 1e-12, "{:?}", pca.eigenvalues);
        assert!((pca.eigenvalues[1] - 1.0).abs() < 1e-12);
        let d0 = pca.components.row(0);
        let d1 = pca.components.row(1);
        assert!((d0[0] - h).abs() < 1e-12 && (d0[1] - h).abs() < 1e-12, "{d0:?}");
        assert!((d1[0].abs() - h).abs() < 1e-12 && (d1[0] + d1[1]).abs() < 1e-12, "{d1:?}");
    }

    #[test]
    fn points_on_a_line_recover_its_direction() {
        let dir = [0.6, -0.8];
        let rows: Vec<Vec<f64>> = [-2.0, -0.5, 0.3, 1.0, 4.0]
            .iter()
            .map(|t| vec![1.0 + t * dir[0], 2.0 + t * dir[1]])
            .collect();
        let p = pca_project(&emb(&rows), 1).unwrap();
        let pca = Pca::fit(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        let c = pca.components.row(0);
        assert!((c[0].abs() - 0.6).abs() < 1e-12 && (c[1].abs() - 0.8).abs() < 1e-12);
        assert!(c[1] > 0.0, "largest loading positive: {c:?}");
        assert_eq!(p.values.shape(), (5, 1));
    }

    #[test]
    fn full_rank_preserves_distances() {
        let mut rng = crate::rng::seeded(4);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let p = pca_project(&emb(&rows), 3).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let a = crate::linalg::euclidean(&rows[i], &rows[j]);
                let b = crate::linalg::euclidean(p.values.row(i), p.values.row(j));
                assert!((a - b).abs() < 1e-10);
            }
        }
        let pca = Pca::fit(&Matrix::from_rows(&rows).unwrap(), 3).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for c in 0..3 {
                let back: f64 = pca.mean[c] + (0..3).map(|j| p.values.get(i, j) * pca.components.get(j, c)).sum::<f64>();
                assert!((back - r[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_above_width_is_rejected() {
        assert!(pca_project(&emb(&[vec![1.0, 2.0]]), 3).is_err());
        assert!(pca_project(&emb(&[vec![1.0, 2.0]]), 0).is_err());
    }
}
