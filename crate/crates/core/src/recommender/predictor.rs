use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::AggregatePredictor;
use super::cocluster::CoCluster;
use super::knn::knn_predict;
use super::slopeone::{PairStats, SlopeOne};
use super::svr::{LinearSvr, SvrConfig, SvrPredictor};
use super::table::{CriteriaSource, RatingTable};
use crate::container::{Checkpoint, PREDICTOR_MAGIC};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    SlopeOne,
    CoCluster,
    Svr,
    Aggregate,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Knn,
        Algorithm::SlopeOne,
        Algorithm::CoCluster,
        Algorithm::Svr,
        Algorithm::Aggregate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::SlopeOne => "slopeone",
            Algorithm::CoCluster => "cocluster",
            Algorithm::Svr => "svr",
            Algorithm::Aggregate => "aggregate",
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Knn => "KNN",
            Algorithm::SlopeOne => "SlopeOne",
            Algorithm::CoCluster => "CoCluster",
            Algorithm::Svr => "SVR",
            Algorithm::Aggregate => "Aggregate",
        }
    }

    /// Whether the algorithm needs at least one criteria channel.
    pub fn needs_criteria(self) -> bool {
        matches!(self, Algorithm::Svr | Algorithm::Aggregate)
    }

    /// False for criteria-based algorithms on the overall-only source, a
    /// combination that has nothing to fit.
    pub fn supports(self, source: CriteriaSource) -> bool {
        !(self.needs_criteria() && source == CriteriaSource::Overall)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    pub n_neighbors: usize,
    pub cocluster_users: usize,
    pub cocluster_items: usize,
    pub cocluster_iters: usize,
    pub svr: SvrConfig,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 20,
            cocluster_users: 3,
            cocluster_items: 3,
            cocluster_iters: 30,
            svr: SvrConfig::default(),
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 || self.cocluster_users == 0 || self.cocluster_items == 0 {
            return Err(Error::Config(
                "recommender: n_neighbors and cluster counts must be positive".into(),
            ));
        }
        self.svr.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Knn,
    SlopeOne(SlopeOne),
    CoCluster(CoCluster),
    Svr(SvrPredictor),
    Aggregate(AggregatePredictor),
}

/// A fitted recommender bound to its training table. Every `(user, item)`
/// pair gets a prediction in `[1, m_rating]`.
#[derive(Clone, Debug)]
pub struct Predictor {
    table: Arc<RatingTable>,
    views: Vec<RatingTable>,
    n_neighbors: usize,
    model: Model,
}

fn channel_views(table: &RatingTable) -> Result<Vec<RatingTable>> {
    (0..table.k_c()).map(|c| table.channel_view(c)).collect()
}

/// Stable digest of a table's contents, used to match checkpoints to tables.
pub fn table_fingerprint(table: &RatingTable) -> String {
    let mut h = Sha256::new();
    h.update(table.m_rating().to_le_bytes());
    h.update(table.source().as_str().as_bytes());
    for r in table.records() {
        h.update(r.user_id.as_bytes());
        h.update([0]);
        h.update(r.item_id.as_bytes());
        h.update([0]);
        h.update(r.overall.to_le_bytes());
        for c in &r.criteria {
            h.update(c.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl Predictor {
    pub fn fit(algorithm: Algorithm, table: Arc<RatingTable>, config: &RecommenderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if table.is_empty() {
            return Err(Error::invalid("cannot fit a recommender on an empty rating table"));
        }
        let model = match algorithm {
            Algorithm::Knn => Model::Knn,
            Algorithm::SlopeOne => Model::SlopeOne(SlopeOne::fit(&table)?),
            Algorithm::CoCluster => Model::CoCluster(CoCluster::fit(
                &table,
                config.cocluster_users.min(table.users().len()),
                config.cocluster_items.min(table.items().len()),
                config.cocluster_iters,
                seed,
            )?),
            Algorithm::Svr => Model::Svr(SvrPredictor::fit(&table, &config.svr, config.n_neighbors, seed)?),
            Algorithm::Aggregate => Model::Aggregate(AggregatePredictor::fit(&table, config.n_neighbors)?),
        };
        Ok(Self {
            views: channel_views(&table)?,
            table,
            n_neighbors: config.n_neighbors,
            model,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.model {
            Model::Knn => Algorithm::Knn,
            Model::SlopeOne(_) => Algorithm::SlopeOne,
            Model::CoCluster(_) => Algorithm::CoCluster,
            Model::Svr(_) => Algorithm::Svr,
            Model::Aggregate(_) => Algorithm::Aggregate,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn table(&self) -> &RatingTable {
        &self.table
    }

    pub fn predict(&self, user_id: &str, item_id: &str) -> Result<f64> {
        let t = &self.table;
        match &self.model {
            Model::Knn => knn_predict(t, user_id, item_id, self.n_neighbors),
            Model::SlopeOne(m) => Ok(m.predict(t, user_id, item_id)),
            Model::CoCluster(m) => Ok(m.predict(t, user_id, item_id)),
            Model::Svr(m) => m.predict(t, &self.views, user_id, item_id),
            Model::Aggregate(m) => m.predict(t, &self.views, user_id, item_id),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let t = &self.table;
        let mut meta = serde_json::json!({
            "kind": "predictor",
            "algorithm": self.algorithm(),
            "source": t.source(),
            "n_neighbors": self.n_neighbors,
            "table": table_fingerprint(t),
        });
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        match &self.model {
            Model::Knn => {}
            Model::SlopeOne(m) => {
                let rows: Vec<Vec<f64>> = m
                    .pairs
                    .iter()
                    .map(|(&(j, i), s)| vec![j as f64, i as f64, s.weighted_dev, s.weight, s.count as f64])
                    .collect();
                let pairs = if rows.is_empty() {
                    Matrix::zeros(0, 5)
                } else {
                    Matrix::from_rows(&rows).expect("rows share width 5")
                };
                ck.push("pairs", pairs);
            }
            Model::CoCluster(m) => {
                meta["user_cluster"] = serde_json::json!(m.user_cluster);
                meta["item_cluster"] = serde_json::json!(m.item_cluster);
                meta["objective_history"] = serde_json::json!(m.objective_history);
                ck.push("block_means", Matrix::from_rows(&m.block_means).expect("rectangular blocks"));
                ck.push("user_cluster_means", Matrix::column(m.user_cluster_means.clone()));
                ck.push("item_cluster_means", Matrix::column(m.item_cluster_means.clone()));
            }
            Model::Svr(m) => {
                meta["global"] = serde_json::to_value(&m.global).expect("plain data");
                meta["per_user"] = serde_json::to_value(&m.per_user).expect("plain data");
            }
            Model::Aggregate(m) => {
                let mut coef = m.weights.clone();
                coef.push(m.bias);
                ck.push("coefficients", Matrix::column(coef));
            }
        }
        ck.meta = meta;
        ck
    }

    /// Restores a predictor fitted on exactly this table.
    pub fn from_checkpoint(ck: &Checkpoint, table: Arc<RatingTable>) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("predictor checkpoint: {msg}"));
        let algorithm: Algorithm = serde_json::from_value(ck.meta["algorithm"].clone())
            .map_err(|e| bad(&e.to_string()))?;
        if ck.meta["table"].as_str() != Some(table_fingerprint(&table).as_str()) {
            return Err(bad("fitted on a different rating table"));
        }
        let n_neighbors = ck.meta["n_neighbors"].as_u64().ok_or_else(|| bad("missing n_neighbors"))? as usize;
        let json = |key: &str| -> Result<serde_json::Value> {
            Ok(ck.meta.get(key).cloned().ok_or_else(|| bad(&format!("missing {key}")))?)
        };
        let model = match algorithm {
            Algorithm::Knn => Model::Knn,
            Algorithm::SlopeOne => {
                let pairs = ck.tensor("pairs")?;
                let mut map = std::collections::BTreeMap::new();
                for row in pairs.iter_rows() {
                    map.insert(
                        (row[0] as usize, row[1] as usize),
                        PairStats {
                            weighted_dev: row[2],
                            weight: row[3],
                            count: row[4] as usize,
                        },
                    );
                }
                Model::SlopeOne(SlopeOne { pairs: map })
            }
            Algorithm::CoCluster => {
                let parse = |key: &str| -> Result<Vec<usize>> {
                    serde_json::from_value(json(key)?).map_err(|e| bad(&e.to_string()))
                };
                Model::CoCluster(CoCluster {
                    user_cluster: parse("user_cluster")?,
                    item_cluster: parse("item_cluster")?,
                    block_means: ck.tensor("block_means")?.iter_rows().map(<[f64]>::to_vec).collect(),
                    user_cluster_means: ck.tensor("user_cluster_means")?.data().to_vec(),
                    item_cluster_means: ck.tensor("item_cluster_means")?.data().to_vec(),
                    objective_history: serde_json::from_value(json("objective_history")?)
                        .map_err(|e| bad(&e.to_string()))?,
                })
            }
            Algorithm::Svr => {
                let global: LinearSvr =
                    serde_json::from_value(json("global")?).map_err(|e| bad(&e.to_string()))?;
                let per_user = serde_json::from_value(json("per_user")?).map_err(|e| bad(&e.to_string()))?;
                Model::Svr(SvrPredictor {
                    global,
                    per_user,
                    n_neighbors,
                })
            }
            Algorithm::Aggregate => {
                let coef = ck.tensor("coefficients")?.data().to_vec();
                let (bias, weights) = coef.split_last().ok_or_else(|| bad("empty coefficients"))?;
                Model::Aggregate(AggregatePredictor {
                    weights: weights.to_vec(),
                    bias: *bias,
                    n_neighbors,
                })
            }
        };
        Ok(Self {
            views: channel_views(&table)?,
            table,
            n_neighbors,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path, PREDICTOR_MAGIC)
    }

    pub fn load(path: &Path, table: Arc<RatingTable>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path, PREDICTOR_MAGIC)?, table)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Orders scored items by descending score, ties by ascending item id.
/// Repeated ids are kept once.
pub fn rank_items(scored: &[(String, f64)]) -> Vec<String> {
    let mut order: Vec<&(String, f64)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    order.dedup_by(|a, b| a.0 == b.0);
    order.into_iter().map(|(id, _)| id.clone()).collect()
}

/// Highest-scoring `k` candidates, ties broken by ascending item id.
pub fn recommend_top_k(predictor: &Predictor, user_id: &str, candidates: &[String], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let scored = candidates
        .iter()
        .map(|i| Ok((i.clone(), predictor.predict(user_id, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked = rank_items(&scored);
    ranked.truncate(k);
    Ok(ranked)
}

/// One held-out prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub user_id: String,
    pub item_id: String,
    pub predicted: f64,
    pub actual: f64,
}

/// CSV `user_id,item_id,predicted,actual`.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["user_id", "item_id", "predicted", "actual"])
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::format(path, format!("cannot open: {e}")),
        _ => Error::format(path, e.to_string()),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::table::{CriteriaSource, RatingRecord};
    use rand::Rng;

    fn latent_table(seed: u64) -> Arc<RatingTable> {
        let mut rng = crate::rng::seeded(seed);
        let mut records = Vec::new();
        for u in 0..8 {
            for i in 0..6 {
                if rng.gen_bool(0.7) {
                    let c: Vec<f64> = (0..2).map(|_| rng.gen_range(1..=5) as f64).collect();
                    let overall = ((c[0] + c[1]) / 2.0).round();
                    records.push(RatingRecord {
                        user_id: format!("u{u}"),
                        item_id: format!("i{i}"),
                        overall,
                        criteria: c,
                    });
                }
            }
        }
        Arc::new(RatingTable::new(records, 5, CriteriaSource::Latent).unwrap())
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn predictions_stay_in_range_for_every_pair() {
        let t = latent_table(3);
        for a in Algorithm::ALL {
            let p = Predictor::fit(a, t.clone(), &RecommenderConfig::default(), 1).unwrap();
            for u in 0..9 {
                for i in 0..7 {
                    let r = p.predict(&format!("u{u}"), &format!("i{i}")).unwrap();
                    assert!((1.0..=5.0).contains(&r), "{a}: {r}");
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let t = latent_table(4);
        let dir = tempfile::tempdir().unwrap();
        for a in Algorithm::ALL {
            let p = Predictor::fit(a, t.clone(), &RecommenderConfig::default(), 9).unwrap();
            let path = dir.path().join(format!("{a}.bin"));
            p.save(&path).unwrap();
            let back = Predictor::load(&path, t.clone()).unwrap();
            assert_eq!(back.model(), p.model(), "{a}");
            for u in ["u0", "u5", "nobody"] {
                for i in ["i1", "i4", "new"] {
                    assert_eq!(p.predict(u, i).unwrap().to_bits(), back.predict(u, i).unwrap().to_bits());
                }
            }
            assert!(Predictor::load(&path, latent_table(5)).is_err());
        }
    }

    #[test]
    fn criteria_algorithms_need_criteria() {
        let t = Arc::new(crate::recommender::table::tests::table(&[("a", "x", 3.0), ("b", "x", 4.0)], 5));
        for a in Algorithm::ALL {
            let fitted = Predictor::fit(a, t.clone(), &RecommenderConfig::default(), 0);
            assert_eq!(fitted.is_err(), a.needs_criteria(), "{a}");
        }
    }

    #[test]
    fn top_k_breaks_ties_by_item_id() {
        let t = Arc::new(crate::recommender::table::tests::table(
            &[("a", "x", 2.0), ("b", "x", 2.0), ("b", "y", 4.0), ("b", "z", 4.0)],
            5,
        ));
        let p = Predictor::fit(Algorithm::Knn, t, &RecommenderConfig::default(), 0).unwrap();
        let cands: Vec<String> = ["z", "y", "w"].iter().map(|s| s.to_string()).collect();
        // y and z both predict 4 for `a`; w falls back to a's mean, 2.
        assert_eq!(recommend_top_k(&p, "a", &cands, 2).unwrap(), vec!["y", "z"]);
        assert_eq!(recommend_top_k(&p, "a", &cands, 10).unwrap().len(), 3);
        assert!(recommend_top_k(&p, "a", &cands, 0).is_err());
        let one = vec!["x".to_string()];
        assert_eq!(recommend_top_k(&p, "b", &one, 3).unwrap(), one);
    }

    #[test]
    fn ranking_examples() {
        let s = |v: &[(&str, f64)]| v.iter().map(|(i, x)| (i.to_string(), *x)).collect::<Vec<_>>();
        assert_eq!(rank_items(&s(&[("i1", 4.2), ("i2", 4.9), ("i3", 3.0)]))[..2], ["i2", "i1"]);
        assert_eq!(rank_items(&s(&[("i2", 4.0), ("i1", 4.0)])), ["i1", "i2"]);
    }

    proptest::proptest! {
        #[test]
        fn ranking_ignores_candidate_order(
            scores in proptest::collection::vec(0u8..4, 1..12),
            perm_seed: u64,
        ) {
            let scored: Vec<(String, f64)> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("i{i:02}"), s as f64))
                .collect();
            let mut rng = crate::rng::seeded(perm_seed);
            let shuffled: Vec<(String, f64)> = crate::rng::permutation(&mut rng, scored.len())
                .into_iter()
                .map(|j| scored[j].clone())
                .collect();
            proptest::prop_assert_eq!(rank_items(&scored), rank_items(&shuffled));
        }
    }

    #[test]
    fn prediction_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = vec![
            PredictionRow {
                user_id: "u,1".into(),
                item_id: "i".into(),
                predicted: 0.1 + 0.2,
                actual: 4.0,
            },
            PredictionRow {
                user_id: "u2".into(),
                item_id: "j".into(),
                predicted: 1.0 / 3.0,
                actual: 1.0,
            },
        ];
        write_predictions(&path, &rows).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("user_id,item_id,predicted,actual\n"));
        assert_eq!(read_predictions(&path).unwrap(), rows);
        write_predictions(&path, &[]).unwrap();
        assert!(read_predictions(&path).unwrap().is_empty());
    }
}
