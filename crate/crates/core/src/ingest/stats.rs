use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Review;

/// Descriptive statistics of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_reviews: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// `n_reviews / (n_users * n_items)`; 0 for an empty corpus.
    pub sparsity: f64,
}

impl CorpusStats {
    pub fn from_counts(n_reviews: usize, n_users: usize, n_items: usize) -> Self {
        let cells = n_users as f64 * n_items as f64;
        let sparsity = if cells > 0.0 {
            n_reviews as f64 / cells
        } else {
            0.0
        };
        Self {
            n_reviews,
            n_users,
            n_items,
            sparsity,
        }
    }

    /// Sparsity as a percentage rounded to two significant figures, e.g. `0.25%`.
    pub fn sparsity_percent(&self) -> String {
        let pct = round_significant(self.sparsity * 100.0, 2);
        format!("{pct}%")
    }
}

pub fn corpus_stats(reviews: &[Review]) -> CorpusStats {
    let users: HashSet<&str> = reviews.iter().map(|r| r.user_id.as_str()).collect();
    let items: HashSet<&str> = reviews.iter().map(|r| r.item_id.as_str()).collect();
    CorpusStats::from_counts(reviews.len(), users.len(), items.len())
}

/// Rounds `x` to `digits` significant figures.
pub fn round_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - magnitude;
    let factor = 10f64.powi(decimals);
    let rounded = (x * factor).round() / factor;
    // re-render through a fixed-precision string to drop representation noise
    if decimals > 0 {
        format!("{:.*}", decimals as usize, rounded).parse().unwrap()
    } else {
        rounded
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_review_is_fully_dense() {
        let r = Review {
            review_id: "r".into(),
            user_id: "u".into(),
            item_id: "i".into(),
            overall: 1.0,
            criteria: Default::default(),
            text: String::new(),
            timestamp: None,
        };
        let s = corpus_stats(&[r]);
        assert_eq!(s.sparsity, 1.0);
        assert_eq!(s.sparsity_percent(), "100%");
    }

    #[test]
    fn empty_corpus_reports_zero() {
        let s = corpus_stats(&[]);
        assert_eq!((s.n_reviews, s.n_users, s.n_items, s.sparsity), (0, 0, 0, 0.0));
    }

    #[test]
    fn significant_figures() {
        assert_eq!(round_significant(0.2468, 2), 0.25);
        assert_eq!(round_significant(5.929, 2), 5.9);
        assert_eq!(round_significant(123.0, 2), 120.0);
        assert_eq!(round_significant(-0.0314, 1), -0.03);
    }
}
