use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::codebook::{reconstruct_embedding, Codebooks};
use crate::encoder::EmbeddingMatrix;
use crate::ingest::Review;
use crate::linalg::{argmax, euclidean, Matrix};
use crate::{Error, Result};

/// Default limit on `M^K` for exhaustive code search.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// Unnormalised code scores, one `K x M` block per review stored as a row of
/// width `K * M` (block `i` occupies columns `i*M .. (i+1)*M`).
#[derive(Clone, Debug, PartialEq)]
pub struct CodeLogits {
    pub review_ids: Vec<String>,
    pub k: usize,
    pub m: usize,
    pub values: Matrix,
}

impl CodeLogits {
    pub fn new(review_ids: Vec<String>, k: usize, m: usize, values: Matrix) -> Result<Self> {
        if values.cols() != k * m || values.rows() != review_ids.len() {
            return Err(Error::invalid(format!(
                "logits of shape {:?} do not fit {} reviews with K = {k}, M = {m}",
                values.shape(),
                review_ids.len()
            )));
        }
        Ok(Self {
            review_ids,
            k,
            m,
            values,
        })
    }

    pub fn block(&self, review: usize, i: usize) -> &[f64] {
        &self.values.row(review)[i * self.m..(i + 1) * self.m]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentEntry {
    pub review_id: String,
    pub user_id: String,
    pub item_id: String,
    /// 1-based code per dimension.
    pub code: Vec<u32>,
}

/// Discrete latent ratings keyed by review.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentRatingTable {
    pub k: usize,
    pub m: usize,
    pub entries: Vec<LatentEntry>,
}

impl LatentRatingTable {
    pub fn from_codes(review_ids: &[String], codes: Vec<Vec<u32>>, k: usize, m: usize) -> Result<Self> {
        if review_ids.len() != codes.len() {
            return Err(Error::invalid("one code vector per review is required"));
        }
        let entries = review_ids
            .iter()
            .zip(codes)
            .map(|(id, code)| LatentEntry {
                review_id: id.clone(),
                user_id: String::new(),
                item_id: String::new(),
                code,
            })
            .collect();
        let table = Self { k, m, entries };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.code.len() != self.k {
                return Err(Error::invalid(format!(
                    "review {} has {} code components, expected {}",
                    e.review_id,
                    e.code.len(),
                    self.k
                )));
            }
            if let Some(c) = e.code.iter().find(|&&c| c == 0 || c as usize > self.m) {
                return Err(Error::invalid(format!(
                    "review {} has code {c} outside 1..={}",
                    e.review_id, self.m
                )));
            }
        }
        Ok(())
    }

    pub fn codes(&self) -> Vec<Vec<u32>> {
        self.entries.iter().map(|e| e.code.clone()).collect()
    }

    /// Fills user and item ids from the reviews, matched by review id.
    pub fn attach_reviews(&mut self, reviews: &[Review]) -> Result<()> {
        let by_id: HashMap<&str, &Review> = reviews.iter().map(|r| (r.review_id.as_str(), r)).collect();
        for e in &mut self.entries {
            let r = by_id
                .get(e.review_id.as_str())
                .ok_or_else(|| Error::invalid(format!("no review with id {}", e.review_id)))?;
            e.user_id = r.user_id.clone();
            e.item_id = r.item_id.clone();
        }
        Ok(())
    }

    /// Code vectors keyed by review id.
    pub fn by_review(&self) -> HashMap<&str, &[u32]> {
        self.entries
            .iter()
            .map(|e| (e.review_id.as_str(), e.code.as_slice()))
            .collect()
    }

    /// CSV `review_id,user_id,item_id,c1,...,cK`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let mut header = vec!["review_id".to_string(), "user_id".into(), "item_id".into()];
        header.extend((1..=self.k).map(|i| format!("c{i}")));
        w.write_record(&header).map_err(|e| Error::format(path, e.to_string()))?;
        for e in &self.entries {
            let mut rec = vec![e.review_id.clone(), e.user_id.clone(), e.item_id.clone()];
            rec.extend(e.code.iter().map(u32::to_string));
            w.write_record(&rec).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, m: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
        let fixed = ["review_id", "user_id", "item_id"];
        if header.len() < 4 || header.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::format(path, "expected header review_id,user_id,item_id,c1,..."));
        }
        let k = header.len() - 3;
        let mut entries = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            let code = rec
                .iter()
                .skip(3)
                .map(|c| c.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", line + 2)))?;
            entries.push(LatentEntry {
                review_id: rec[0].to_string(),
                user_id: rec[1].to_string(),
                item_id: rec[2].to_string(),
                code,
            });
        }
        let table = Self { k, m, entries };
        table.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(table)
    }
}

/// Per-review, per-dimension argmax of the logits (1-based, ties to the
/// lowest index).
pub fn discretize(logits: &CodeLogits) -> LatentRatingTable {
    let codes = (0..logits.values.rows())
        .map(|s| {
            (0..logits.k)
                .map(|i| argmax(logits.block(s, i)) as u32 + 1)
                .collect()
        })
        .collect();
    LatentRatingTable::from_codes(&logits.review_ids, codes, logits.k, logits.m)
        .expect("argmax codes are always in range")
}

/// Mean Euclidean norm of the residual between each embedding and the sum of
/// its selected codewords.
pub fn hard_loss(r: &Matrix, codebooks: &Codebooks, codes: &[Vec<u32>]) -> Result<f64> {
    if r.rows() != codes.len() || r.cols() != codebooks.h() {
        return Err(Error::invalid("embedding and code shapes disagree"));
    }
    if codes.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (s, code) in codes.iter().enumerate() {
        total += euclidean(r.row(s), &reconstruct_embedding(codebooks, code)?);
    }
    Ok(total / codes.len() as f64)
}

/// Mean residual norm with soft codes: `weights[s]` is a `K x M` matrix of
/// mixture weights over the codewords of each book.
pub fn compression_loss(r: &Matrix, codebooks: &Codebooks, weights: &[Matrix]) -> Result<f64> {
    if r.rows() != weights.len() || r.cols() != codebooks.h() {
        return Err(Error::invalid("embedding and code shapes disagree"));
    }
    if weights.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (s, w) in weights.iter().enumerate() {
        if w.shape() != (codebooks.k(), codebooks.m()) {
            return Err(Error::invalid(format!(
                "soft code {s} has shape {:?}, expected {}x{}",
                w.shape(),
                codebooks.k(),
                codebooks.m()
            )));
        }
        let mut rec = vec![0.0; codebooks.h()];
        for i in 0..codebooks.k() {
            codebooks.book(i).add_matvec_t(w.row(i), &mut rec);
        }
        total += euclidean(r.row(s), &rec);
    }
    Ok(total / weights.len() as f64)
}

/// Exhaustive search over all `M^K` code vectors for each review. Ties go to
/// the lexicographically smallest code.
pub fn brute_force_best_codes(
    r: &EmbeddingMatrix,
    codebooks: &Codebooks,
    cap: usize,
) -> Result<(LatentRatingTable, Vec<f64>)> {
    let (k, m) = (codebooks.k(), codebooks.m());
    let total = m
        .checked_pow(k as u32)
        .filter(|&t| t <= cap)
        .ok_or_else(|| {
            Error::invalid(format!("M^K = {m}^{k} exceeds the enumeration cap of {cap}"))
        })?;
    if r.dim() != codebooks.h() {
        return Err(Error::invalid("embedding width differs from codeword width"));
    }
    let results: Vec<(Vec<u32>, f64)> = (0..r.rows())
        .into_par_iter()
        .map(|s| {
            let row = r.values.row(s);
            let mut code = vec![1u32; k];
            let mut best = (code.clone(), f64::INFINITY);
            for _ in 0..total {
                let loss = euclidean(row, &reconstruct_embedding(codebooks, &code).unwrap());
                if loss < best.1 {
                    best = (code.clone(), loss);
                }
                // odometer increment, last dimension fastest
                for d in (0..k).rev() {
                    if (code[d] as usize) < m {
                        code[d] += 1;
                        break;
                    }
                    code[d] = 1;
                }
            }
            best
        })
        .collect();
    let (codes, losses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((LatentRatingTable::from_codes(&r.review_ids, codes, k, m)?, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn discretize_fixtures() {
        let values = Matrix::from_rows(&[
            vec![0.2, 0.9, 0.5, 1.0, 1.0, 1.0, 0.0, 0.0, 3.0],
        ])
        .unwrap();
        let logits = CodeLogits::new(vec!["a".into()], 3, 3, values).unwrap();
        assert_eq!(discretize(&logits).entries[0].code, vec![2, 1, 3]);
    }

    #[test]
    fn loss_fixtures() {
        let cb = Codebooks::zeros(1, 2, 2);
        let r = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(hard_loss(&r, &cb, &[vec![1]]).unwrap(), 5.0);

        let cb = Codebooks::new(vec![Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap()]).unwrap();
        let r = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(hard_loss(&r, &cb, &[vec![1], vec![2]]).unwrap(), 1.5);
        let r = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(hard_loss(&r, &cb, &[vec![1], vec![1]]).unwrap(), 2.0);

        let exact = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(hard_loss(&exact, &cb, &[vec![2]]).unwrap(), 0.0);
        let half = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(compression_loss(&half, &cb, &[w]).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_fixtures() {
        let r = emb(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]]);
        let cb = Codebooks::new(vec![Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()]).unwrap();
        let (table, losses) = brute_force_best_codes(&r, &cb, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(table.codes(), vec![vec![1], vec![1], vec![2], vec![2]]);
        assert_eq!(losses[0], 0.0);

        let single = Codebooks::new(vec![Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(); 2]).unwrap();
        let (table, _) = brute_force_best_codes(&r, &single, 10).unwrap();
        assert!(table.codes().iter().all(|c| c == &vec![1, 1]));

        let big = Codebooks::zeros(5, 7, 2);
        assert!(brute_force_best_codes(&r, &big, DEFAULT_ENUMERATION_CAP).is_err());
    }

    #[test]
    fn brute_force_finds_reachable_sums_and_breaks_ties_low() {
        let mut rng = crate::rng::seeded(4);
        let books: Vec<Matrix> = (0..2).map(|_| Matrix::uniform_fan_in(3, 4, &mut rng)).collect();
        let cb = Codebooks::new(books).unwrap();
        let target = reconstruct_embedding(&cb, &[3, 2]).unwrap();
        let (table, losses) = brute_force_best_codes(&emb(&[target]), &cb, 100).unwrap();
        assert_eq!(table.codes()[0], vec![3, 2]);
        assert_eq!(losses[0], 0.0);

        let tied = Codebooks::zeros(2, 3, 4);
        let (table, _) = brute_force_best_codes(&emb(&[vec![1.0; 4]]), &tied, 100).unwrap();
        assert_eq!(table.codes()[0], vec![1, 1]);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = LatentRatingTable::from_codes(
            &["a".to_string(), "b".to_string()],
            vec![vec![1, 5], vec![3, 2]],
            2,
            5,
        )
        .unwrap();
        let reviews: Vec<Review> = ["a", "b"]
            .iter()
            .map(|id| Review {
                review_id: id.to_string(),
                user_id: format!("u_{id}"),
                item_id: format!("i_{id}"),
                overall: 3.0,
                criteria: Default::default(),
                text: String::new(),
                timestamp: None,
            })
            .collect();
        t.attach_reviews(&reviews).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("codes.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "review_id,user_id,item_id,c1,c2\na,u_a,i_a,1,5\nb,u_b,i_b,3,2\n"
        );
        assert_eq!(LatentRatingTable::read_csv(&p, 5).unwrap(), t);
        assert!(LatentRatingTable::read_csv(&p, 4).is_err());
    }
}
