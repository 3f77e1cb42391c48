use std::collections::BTreeMap;

use super::table::RatingTable;
use crate::{Error, Result};

/// Accumulated deviation statistics for an item pair `(j, i)` with `j < i`,
/// oriented as `r_j - r_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairStats {
    pub weighted_dev: f64,
    pub weight: f64,
    pub count: usize,
}

/// Similarity-weighted SlopeOne.
///
/// Each co-rater contributes with weight `1 / (1 + d)`, where `d` is the
/// normalised distance between its criteria on the two items (weight 1 when
/// the table has no criteria). Identical criteria everywhere give weight 1 and
/// the classic algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeOne {
    pub pairs: BTreeMap<(usize, usize), PairStats>,
}

fn criteria_weight(table: &RatingTable, a: usize, b: usize) -> f64 {
    let k = table.k_c();
    if k == 0 {
        return 1.0;
    }
    let (ra, rb) = (&table.records()[a].criteria, &table.records()[b].criteria);
    let d = super::similarity::distance_unchecked(
        ra.iter().copied(),
        rb.iter().copied(),
        k,
        table.m_rating(),
    );
    1.0 / (1.0 + d)
}

impl SlopeOne {
    pub fn fit(table: &RatingTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid("cannot fit SlopeOne on an empty rating table"));
        }
        let mut pairs: BTreeMap<(usize, usize), PairStats> = BTreeMap::new();
        for u in 0..table.users().len() {
            let list = table.user_ratings(u);
            for (x, &(j, rj)) in list.iter().enumerate() {
                for &(i, ri) in &list[x + 1..] {
                    let w = criteria_weight(table, rj, ri);
                    let dev = table.records()[rj].overall - table.records()[ri].overall;
                    let s = pairs.entry((j, i)).or_default();
                    s.weighted_dev += w * dev;
                    s.weight += w;
                    s.count += 1;
                }
            }
        }
        Ok(Self { pairs })
    }

    /// Weighted mean of `r_a - r_b` over co-raters, with the co-rater count.
    pub fn deviation(&self, a: usize, b: usize) -> Option<(f64, usize)> {
        let (key, sign) = if a < b { ((a, b), 1.0) } else { ((b, a), -1.0) };
        self.pairs
            .get(&key)
            .filter(|s| s.count > 0 && s.weight > 0.0)
            .map(|s| (sign * s.weighted_dev / s.weight, s.count))
    }

    pub fn predict(&self, table: &RatingTable, user_id: &str, item_id: &str) -> f64 {
        let (Some(u), Some(i)) = (table.user_idx(user_id), table.item_idx(item_id)) else {
            return table.clamp(table.fallback(user_id, item_id));
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for &(j, rec) in table.user_ratings(u) {
            if j == i {
                continue;
            }
            if let Some((dev, n)) = self.deviation(i, j) {
                num += n as f64 * (dev + table.records()[rec].overall);
                den += n as f64;
            }
        }
        let raw = if den > 0.0 { num / den } else { table.user_mean(u) };
        table.clamp(raw)
    }
}
