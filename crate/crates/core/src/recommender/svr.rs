use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::knn::knn_predict;
use super::table::RatingTable;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// L2 penalty on the weights (not the bias).
    pub reg: f64,
    pub epochs: usize,
    /// Initial subgradient step; step `t` uses `learning_rate / sqrt(t)`.
    pub learning_rate: f64,
    /// Users with at least this many records get their own model.
    pub min_user_records: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            reg: 1e-3,
            epochs: 200,
            learning_rate: 0.5,
            min_user_records: 5,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon >= 0.0
            && self.reg >= 0.0
            && self.learning_rate > 0.0
            && self.epsilon.is_finite()
            && self.reg.is_finite()
            && self.learning_rate.is_finite()
            && self.min_user_records >= 1;
        if !ok {
            return Err(Error::Config(format!("invalid SVR settings {self:?}")));
        }
        Ok(())
    }
}

/// Linear model `w . x + b` in the original feature units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvr {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularised epsilon-insensitive objective after each epoch.
    pub objective_history: Vec<f64>,
}

impl LinearSvr {
    pub fn score(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, x) + self.bias
    }

    /// Stochastic subgradient descent on standardised features with iterate
    /// averaging.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &SvrConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::invalid("SVR needs one target per non-empty feature row"));
        }
        let d = x[0].len();
        let mean: Vec<f64> = (0..d).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|c| {
                let var = x.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..d).map(|c| (r[c] - mean[c]) / scale[c]).collect())
            .collect();

        let objective = |w: &[f64], b: f64| {
            let loss: f64 = z
                .iter()
                .zip(y)
                .map(|(zi, &yi)| ((yi - crate::linalg::dot(w, zi) - b).abs() - config.epsilon).max(0.0))
                .sum::<f64>()
                / n as f64;
            loss + 0.5 * config.reg * crate::linalg::dot(w, w)
        };

        let mut rng = rng::seeded(seed);
        let mut w = vec![0.0; d];
        let mut b = y.iter().sum::<f64>() / n as f64;
        let mut avg_w = w.clone();
        let mut avg_b = b;
        let mut t = 0usize;
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &s in &order {
                t += 1;
                let eta = config.learning_rate / (t as f64).sqrt();
                let r = y[s] - crate::linalg::dot(&w, &z[s]) - b;
                let g = if r.abs() > config.epsilon { -r.signum() } else { 0.0 };
                for c in 0..d {
                    w[c] -= eta * (g * z[s][c] + config.reg * w[c]);
                }
                b -= eta * g;
                let k = 1.0 / t as f64;
                for c in 0..d {
                    avg_w[c] += k * (w[c] - avg_w[c]);
                }
                avg_b += k * (b - avg_b);
            }
            history.push(objective(&avg_w, avg_b));
        }
        if !avg_b.is_finite() || !avg_w.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("SVR diverged".into()));
        }
        let weights: Vec<f64> = (0..d).map(|c| avg_w[c] / scale[c]).collect();
        let bias = avg_b - (0..d).map(|c| weights[c] * mean[c]).sum::<f64>();
        Ok(Self {
            weights,
            bias,
            objective_history: history,
        })
    }
}

/// Criteria-to-overall regression: one global model plus per-user models,
/// scored on criteria estimated by single-channel KNN.
#[derive(Clone, Debug, PartialEq)]
pub struct SvrPredictor {
    pub global: LinearSvr,
    pub per_user: BTreeMap<String, LinearSvr>,
    pub n_neighbors: usize,
}

/// Criteria for `(user, item)` predicted channel by channel.
pub fn estimate_criteria(
    views: &[RatingTable],
    user_id: &str,
    item_id: &str,
    n_neighbors: usize,
) -> Result<Vec<f64>> {
    views
        .iter()
        .map(|v| knn_predict(v, user_id, item_id, n_neighbors))
        .collect()
}

impl SvrPredictor {
    pub fn fit(table: &RatingTable, config: &SvrConfig, n_neighbors: usize, seed: u64) -> Result<Self> {
        if table.k_c() == 0 {
            return Err(Error::invalid("SVR needs criteria ratings"));
        }
        let x: Vec<Vec<f64>> = table.records().iter().map(|r| r.criteria.clone()).collect();
        let y: Vec<f64> = table.records().iter().map(|r| r.overall).collect();
        let global = LinearSvr::fit(&x, &y, config, rng::derive_seed(seed, "global"))?;
        let mut per_user = BTreeMap::new();
        for (u, id) in table.users().iter().enumerate() {
            let list = table.user_ratings(u);
            if list.len() < config.min_user_records {
                continue;
            }
            let xu: Vec<Vec<f64>> = list.iter().map(|&(_, r)| x[r].clone()).collect();
            let yu: Vec<f64> = list.iter().map(|&(_, r)| y[r]).collect();
            let model = LinearSvr::fit(&xu, &yu, config, rng::derive_seed(seed, &format!("user/{id}")))?;
            per_user.insert(id.clone(), model);
        }
        Ok(Self {
            global,
            per_user,
            n_neighbors,
        })
    }

    pub fn predict(&self, table: &RatingTable, views: &[RatingTable], user_id: &str, item_id: &str) -> Result<f64> {
        let criteria = estimate_criteria(views, user_id, item_id, self.n_neighbors)?;
        let g = self.global.score(&criteria);
        let raw = match self.per_user.get(user_id) {
            Some(m) => 0.5 * g + 0.5 * m.score(&criteria),
            None => g,
        };
        Ok(table.clamp(raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(epsilon: f64, reg: f64) -> SvrConfig {
        SvrConfig {
            epsilon,
            reg,
            epochs: 400,
            ..Default::default()
        }
    }

    #[test]
    fn recovers_identity_on_first_criterion() {
        let mut rng = rng::seeded(1);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(1..=5) as f64).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let m = LinearSvr::fit(&x, &y, &cfg(0.0, 0.0), 2).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-2, "{m:?}");
        assert!(m.weights[1].abs() < 1e-2 && m.weights[2].abs() < 1e-2, "{m:?}");
        assert!(m.bias.abs() < 1e-2, "{m:?}");
        assert!(m.objective_history.last().unwrap() < &m.objective_history[0]);
    }

    #[test]
    fn recovers_an_affine_blend() {
        let mut rng = rng::seeded(5);
        let x: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..2).map(|_| rng.gen_range(1.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 * r[0] + 0.5 * r[1] + 1.0).collect();
        let m = LinearSvr::fit(&x, &y, &cfg(0.0, 0.0), 3).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-2, "{m:?}");
        assert!((m.weights[1] - 0.5).abs() < 1e-2, "{m:?}");
        assert!((m.bias - 1.0).abs() < 1e-2, "{m:?}");
    }

    #[test]
    fn constant_target_gives_intercept_only() {
        let mut rng = rng::seeded(7);
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.gen_range(1..=5) as f64).collect())
            .collect();
        let y = vec![3.5; 20];
        let m = LinearSvr::fit(&x, &y, &cfg(0.0, 1.0), 1).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-2), "{m:?}");
        assert!((m.bias - 3.5).abs() < 1e-2, "{m:?}");
    }
}
