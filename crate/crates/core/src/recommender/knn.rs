use super::similarity::similarity;
use super::table::RatingTable;
use crate::{Error, Result};

/// Mean-centred weighted average `mean + sum(s * d) / sum(s)` over
/// `(similarity, deviation)` pairs; the mean itself when there are none.
pub fn weighted_prediction(mean: f64, neighbors: &[(f64, f64)]) -> f64 {
    let den: f64 = neighbors.iter().map(|n| n.0).sum();
    if neighbors.is_empty() || den <= 0.0 {
        return mean;
    }
    let num: f64 = neighbors.iter().map(|n| n.0 * n.1).sum();
    mean + num / den
}

/// Multi-criteria user-based nearest-neighbour prediction.
///
/// Neighbours are the other raters of the item with positive similarity,
/// best `n_neighbors` first (ties broken by user id).
pub fn knn_predict(table: &RatingTable, user_id: &str, item_id: &str, n_neighbors: usize) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::invalid("cannot predict from an empty rating table"));
    }
    if n_neighbors == 0 {
        return Err(Error::invalid("n_neighbors must be at least 1"));
    }
    let (Some(u), Some(i)) = (table.user_idx(user_id), table.item_idx(item_id)) else {
        return Ok(table.clamp(table.fallback(user_id, item_id)));
    };
    Ok(table.clamp(predict_indexed(table, u, i, n_neighbors)))
}

pub(crate) fn predict_indexed(table: &RatingTable, u: usize, i: usize, n_neighbors: usize) -> f64 {
    let mut candidates: Vec<(f64, usize, f64)> = table
        .item_ratings(i)
        .iter()
        .filter(|&&(v, _)| v != u)
        .filter_map(|&(v, rec)| {
            let s = similarity(table, u, v);
            (s > 0.0).then(|| (s, v, table.records()[rec].overall - table.user_mean(v)))
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.truncate(n_neighbors);
    let pairs: Vec<(f64, f64)> = candidates.iter().map(|c| (c.0, c.2)).collect();
    weighted_prediction(table.user_mean(u), &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::table::tests::table;

    #[test]
    fn weighted_form_fixtures() {
        assert_eq!(weighted_prediction(3.0, &[(1.0, 1.0)]), 4.0);
        let p = weighted_prediction(3.0, &[(1.0, 1.0), (0.5, -1.0)]);
        assert!((p - (3.0 + 0.5 / 1.5)).abs() < 1e-15);
        assert!((p - 3.3333).abs() < 1e-4);
        assert_eq!(weighted_prediction(2.5, &[]), 2.5);
    }

    #[test]
    fn own_record_as_sole_neighbour_changes_nothing() {
        // the user's own record: similarity 1 with itself, deviation 0 from its mean
        for mean in [1.0, 2.75, 4.5] {
            assert_eq!(weighted_prediction(mean, &[(1.0, 0.0)]), weighted_prediction(mean, &[]));
        }
    }

    #[test]
    fn table_fixtures() {
        // u and v agree on i1 (sim 1); v rates i2 one above its mean
        let t = table(
            &[
                ("u", "i1", 3.0),
                ("u", "i3", 3.0),
                ("v", "i1", 3.0),
                ("v", "i2", 5.0),
                ("v", "i3", 4.0),
            ],
            5,
        );
        // u's mean 3, v's mean 4, v's deviation on i2 = +1
        assert_eq!(knn_predict(&t, "u", "i2", 20).unwrap(), 4.0);
        // nobody else rated i1's neighbour item i4 -> unknown item -> user mean
        assert_eq!(knn_predict(&t, "u", "i4", 20).unwrap(), 3.0);
        // unknown user -> item mean
        assert_eq!(knn_predict(&t, "w", "i2", 20).unwrap(), 5.0);
        assert_eq!(knn_predict(&t, "w", "zz", 20).unwrap(), t.global_mean());
    }

    #[test]
    fn item_without_similar_raters_falls_back_to_user_mean() {
        let t = table(&[("u", "i1", 2.0), ("v", "i2", 5.0)], 5);
        assert_eq!(knn_predict(&t, "u", "i2", 5).unwrap(), 2.0);
        assert!(knn_predict(&table(&[], 5), "u", "i", 5).is_err());
    }

    #[test]
    fn only_top_neighbours_count() {
        // u agrees with a on i1 and disagrees with b; both rated i2
        let t = table(
            &[
                ("u", "i1", 5.0),
                ("u", "i3", 3.0),
                ("a", "i1", 5.0),
                ("a", "i2", 5.0),
                ("a", "i3", 2.0),
                ("b", "i1", 1.0),
                ("b", "i2", 1.0),
                ("b", "i3", 4.0),
            ],
            5,
        );
        let one = knn_predict(&t, "u", "i2", 1).unwrap();
        let mean_a = 4.0;
        assert!((one - (4.0 + (5.0 - mean_a))).abs() < 1e-12);
        let two = knn_predict(&t, "u", "i2", 2).unwrap();
        assert!(two < one);
    }
}
