use super::table::RatingTable;
use crate::rng;
use crate::{Error, Result};

/// Block-mean co-clustering over the overall channel and all criteria.
///
/// Users and items are reassigned alternately to the cluster minimising their
/// summed squared error against the current block means; block means are
/// refit after each half-step, so the objective never increases.
#[derive(Clone, Debug, PartialEq)]
pub struct CoCluster {
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
    /// Overall-channel mean per `(user cluster, item cluster)` block.
    pub block_means: Vec<Vec<f64>>,
    pub user_cluster_means: Vec<f64>,
    pub item_cluster_means: Vec<f64>,
    /// Objective after initialisation and after every iteration.
    pub objective_history: Vec<f64>,
}

/// Block means for every channel, `[g][h][c]`; empty blocks take the
/// channel's global mean.
fn block_means(table: &RatingTable, uc: &[usize], ic: &[usize], ku: usize, ki: usize) -> Vec<Vec<Vec<f64>>> {
    let width = table.k_c() + 1;
    let mut sums = vec![vec![vec![0.0; width]; ki]; ku];
    let mut counts = vec![vec![0usize; ki]; ku];
    let mut global = vec![0.0; width];
    for (rec, r) in table.records().iter().enumerate() {
        let (g, h) = (uc[table.user_idx(&r.user_id).unwrap()], ic[table.item_idx(&r.item_id).unwrap()]);
        counts[g][h] += 1;
        for (c, v) in table.channels(rec).enumerate() {
            sums[g][h][c] += v;
            global[c] += v;
        }
    }
    let n = table.records().len() as f64;
    global.iter_mut().for_each(|x| *x /= n);
    for g in 0..ku {
        for h in 0..ki {
            for c in 0..width {
                sums[g][h][c] = if counts[g][h] > 0 {
                    sums[g][h][c] / counts[g][h] as f64
                } else {
                    global[c]
                };
            }
        }
    }
    sums
}

fn squared_error(table: &RatingTable, rec: usize, mean: &[f64]) -> f64 {
    table.channels(rec).zip(mean).map(|(v, m)| (v - m) * (v - m)).sum()
}

fn objective(table: &RatingTable, uc: &[usize], ic: &[usize], means: &[Vec<Vec<f64>>]) -> f64 {
    (0..table.records().len())
        .map(|rec| {
            let r = &table.records()[rec];
            let (g, h) = (uc[table.user_idx(&r.user_id).unwrap()], ic[table.item_idx(&r.item_id).unwrap()]);
            squared_error(table, rec, &means[g][h])
        })
        .sum()
}

/// Picks the cheapest cluster; the current one wins ties, then the lowest index.
fn best_cluster(costs: &[f64], current: usize) -> usize {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if costs[current] == min {
        return current;
    }
    costs.iter().position(|&c| c == min).unwrap_or(current)
}

fn seeded_assignment(n: usize, k: usize, rng: &mut rng::StageRng) -> Vec<usize> {
    let perm = rng::permutation(rng, n);
    let mut out = vec![0; n];
    for (pos, &x) in perm.iter().enumerate() {
        out[x] = pos % k;
    }
    out
}

impl CoCluster {
    pub fn fit(table: &RatingTable, k_user: usize, k_item: usize, max_iters: usize, seed: u64) -> Result<Self> {
        let (nu, ni) = (table.users().len(), table.items().len());
        if table.is_empty() {
            return Err(Error::invalid("cannot co-cluster an empty rating table"));
        }
        if k_user == 0 || k_item == 0 || k_user > nu || k_item > ni {
            return Err(Error::invalid(format!(
                "cluster counts {k_user} x {k_item} invalid for {nu} users and {ni} items"
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut uc = seeded_assignment(nu, k_user, &mut rng);
        let mut ic = seeded_assignment(ni, k_item, &mut rng);
        let mut means = block_means(table, &uc, &ic, k_user, k_item);
        let mut history = vec![objective(table, &uc, &ic, &means)];

        for _ in 0..max_iters {
            let mut changed = false;
            for u in 0..nu {
                let costs: Vec<f64> = (0..k_user)
                    .map(|g| {
                        table
                            .user_ratings(u)
                            .iter()
                            .map(|&(i, rec)| squared_error(table, rec, &means[g][ic[i]]))
                            .sum()
                    })
                    .collect();
                let g = best_cluster(&costs, uc[u]);
                changed |= g != uc[u];
                uc[u] = g;
            }
            means = block_means(table, &uc, &ic, k_user, k_item);
            for i in 0..ni {
                let costs: Vec<f64> = (0..k_item)
                    .map(|h| {
                        table
                            .item_ratings(i)
                            .iter()
                            .map(|&(u, rec)| squared_error(table, rec, &means[uc[u]][h]))
                            .sum()
                    })
                    .collect();
                let h = best_cluster(&costs, ic[i]);
                changed |= h != ic[i];
                ic[i] = h;
            }
            means = block_means(table, &uc, &ic, k_user, k_item);
            history.push(objective(table, &uc, &ic, &means));
            if !changed {
                break;
            }
        }

        let cluster_means = |assign: &[usize], k: usize, by_user: bool| {
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for r in table.records() {
                let idx = if by_user {
                    table.user_idx(&r.user_id).unwrap()
                } else {
                    table.item_idx(&r.item_id).unwrap()
                };
                sums[assign[idx]] += r.overall;
                counts[assign[idx]] += 1;
            }
            sums.iter()
                .zip(&counts)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { table.global_mean() })
                .collect::<Vec<f64>>()
        };
        Ok(Self {
            user_cluster_means: cluster_means(&uc, k_user, true),
            item_cluster_means: cluster_means(&ic, k_item, false),
            block_means: means
                .iter()
                .map(|row| row.iter().map(|m| m[0]).collect())
                .collect(),
            user_cluster: uc,
            item_cluster: ic,
            objective_history: history,
        })
    }

    pub fn predict(&self, table: &RatingTable, user_id: &str, item_id: &str) -> f64 {
        let (Some(u), Some(i)) = (table.user_idx(user_id), table.item_idx(item_id)) else {
            return table.clamp(table.fallback(user_id, item_id));
        };
        let (g, h) = (self.user_cluster[u], self.item_cluster[i]);
        let raw = self.block_means[g][h] + (table.user_mean(u) - self.user_cluster_means[g])
            + (table.item_mean(i) - self.item_cluster_means[h]);
        table.clamp(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::table::tests::table;
    use crate::recommender::table::{CriteriaSource, RatingRecord};
    use proptest::prelude::*;

    #[test]
    fn single_cluster_closed_form() {
        let t = table(&[("u1", "i1", 5.0), ("u1", "i2", 3.0), ("u2", "i1", 3.0), ("u2", "i2", 1.0)], 5);
        let c = CoCluster::fit(&t, 1, 1, 10, 0).unwrap();
        assert_eq!(c.predict(&t, "u1", "i1"), 5.0);
        for (u, i) in [("u1", "i2"), ("u2", "i1"), ("u2", "i2")] {
            let (ui, ii) = (t.user_idx(u).unwrap(), t.item_idx(i).unwrap());
            let expect = t.user_mean(ui) + t.item_mean(ii) - t.global_mean();
            assert!((c.predict(&t, u, i) - t.clamp(expect)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_table_predicts_the_constant() {
        let t = table(&[("a", "x", 4.0), ("a", "y", 4.0), ("b", "x", 4.0), ("c", "z", 4.0)], 5);
        let c = CoCluster::fit(&t, 2, 2, 10, 3).unwrap();
        for u in ["a", "b", "c", "d"] {
            for i in ["x", "y", "z", "w"] {
                assert_eq!(c.predict(&t, u, i), 4.0);
            }
        }
    }

    #[test]
    fn invalid_cluster_counts() {
        let t = table(&[("a", "x", 4.0), ("b", "y", 2.0)], 5);
        assert!(CoCluster::fit(&t, 3, 1, 5, 0).is_err());
        assert!(CoCluster::fit(&t, 1, 0, 5, 0).is_err());
    }

    fn random_records(cells: &[(usize, usize, u32, u32)], with_criteria: Option<f64>) -> Vec<RatingRecord> {
        let mut seen = std::collections::HashSet::new();
        cells
            .iter()
            .filter(|c| seen.insert((c.0, c.1)))
            .map(|&(u, i, a, b)| RatingRecord {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                overall: a as f64,
                criteria: match with_criteria {
                    Some(c) => vec![c, c],
                    None => vec![b as f64],
                },
            })
            .collect()
    }

    proptest! {
        #[test]
        fn objective_never_increases(
            cells in proptest::collection::vec((0usize..8, 0usize..8, 1u32..=5, 1u32..=5), 12..60),
            seed: u64,
        ) {
            let t = RatingTable::new(random_records(&cells, None), 5, CriteriaSource::Latent).unwrap();
            let ku = t.users().len().min(3);
            let ki = t.items().len().min(3);
            let c = CoCluster::fit(&t, ku, ki, 30, seed).unwrap();
            for w in c.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", c.objective_history);
            }
            for u in t.users() {
                for i in t.items() {
                    let p = c.predict(&t, u, i);
                    prop_assert!((1.0..=5.0).contains(&p));
                }
            }
        }

        #[test]
        fn constant_criteria_reduce_to_single_channel(
            cells in proptest::collection::vec((0usize..8, 0usize..8, 1u32..=5, 1u32..=5), 12..60),
            seed: u64,
            level in 1u32..=5,
        ) {
            let multi = RatingTable::new(random_records(&cells, Some(level as f64)), 5, CriteriaSource::Latent).unwrap();
            let single = RatingTable::new(
                random_records(&cells, None).into_iter().map(|mut r| { r.criteria.clear(); r }).collect(),
                5,
                CriteriaSource::Overall,
            ).unwrap();
            let ku = single.users().len().min(3);
            let ki = single.items().len().min(2);
            let a = CoCluster::fit(&multi, ku, ki, 30, seed).unwrap();
            let b = CoCluster::fit(&single, ku, ki, 30, seed).unwrap();
            prop_assert_eq!(&a.user_cluster, &b.user_cluster);
            prop_assert_eq!(&a.item_cluster, &b.item_cluster);
            for u in single.users() {
                for i in single.items() {
                    prop_assert!((a.predict(&multi, u, i) - b.predict(&single, u, i)).abs() <= 1e-12);
                }
            }
        }
    }
}
