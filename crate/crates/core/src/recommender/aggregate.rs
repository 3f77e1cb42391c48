use super::svr::estimate_criteria;
use super::table::RatingTable;
use crate::linalg::{ridge_least_squares, Matrix};
use crate::{Error, Result};

pub const AGGREGATE_RIDGE: f64 = 1e-6;

/// Linear aggregation function from criteria to overall rating, applied to
/// criteria predicted by single-channel KNN.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatePredictor {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub n_neighbors: usize,
}

impl AggregatePredictor {
    pub fn fit(table: &RatingTable, n_neighbors: usize) -> Result<Self> {
        let k = table.k_c();
        if k == 0 {
            return Err(Error::invalid("the aggregation function needs criteria ratings"));
        }
        let mut a = Matrix::zeros(table.records().len(), k + 1);
        let mut y = Vec::with_capacity(table.records().len());
        for (row, r) in table.records().iter().enumerate() {
            a.row_mut(row)[..k].copy_from_slice(&r.criteria);
            a.row_mut(row)[k] = 1.0;
            y.push(r.overall);
        }
        let coef = ridge_least_squares(&a, &y, AGGREGATE_RIDGE)?;
        Ok(Self {
            weights: coef[..k].to_vec(),
            bias: coef[k],
            n_neighbors,
        })
    }

    pub fn score(&self, criteria: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, criteria) + self.bias
    }

    pub fn predict(&self, table: &RatingTable, views: &[RatingTable], user_id: &str, item_id: &str) -> Result<f64> {
        let criteria = estimate_criteria(views, user_id, item_id, self.n_neighbors)?;
        Ok(table.clamp(self.score(&criteria)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::table::{CriteriaSource, RatingRecord};

    fn table(rows: &[(f64, Vec<f64>)]) -> RatingTable {
        let records = rows
            .iter()
            .enumerate()
            .map(|(n, (o, c))| RatingRecord {
                user_id: format!("u{}", n % 4),
                item_id: format!("i{n}"),
                overall: *o,
                criteria: c.clone(),
            })
            .collect();
        RatingTable::new(records, 5, CriteriaSource::Explicit).unwrap()
    }

    #[test]
    fn single_criterion_identity() {
        let t = table(&[(1.0, vec![1.0]), (2.0, vec![2.0]), (4.0, vec![4.0]), (5.0, vec![5.0])]);
        let a = AggregatePredictor::fit(&t, 20).unwrap();
        assert!((a.weights[0] - 1.0).abs() < 1e-6 && a.bias.abs() < 1e-6, "{a:?}");
    }

    #[test]
    fn mean_of_criteria_is_recovered() {
        let rows: Vec<(f64, Vec<f64>)> = [[1.0, 3.0], [2.0, 4.0], [5.0, 5.0], [3.0, 1.0], [4.0, 2.0]]
            .iter()
            .map(|c| ((c[0] + c[1]) / 2.0, c.to_vec()))
            .collect();
        let a = AggregatePredictor::fit(&table(&rows), 20).unwrap();
        for c in [[2.0, 3.0], [4.5, 1.5]] {
            assert!((a.score(&c) - (c[0] + c[1]) / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_criterion_stays_finite() {
        let t = table(&[(1.0, vec![1.0, 3.0]), (3.0, vec![3.0, 3.0]), (5.0, vec![5.0, 3.0])]);
        let a = AggregatePredictor::fit(&t, 20).unwrap();
        assert!(a.weights.iter().all(|w| w.is_finite()) && a.bias.is_finite());
        assert!((a.score(&[2.0, 3.0]) - 2.0).abs() < 1e-4);
    }
}
