//! Multi-criteria recommenders over a [`RatingTable`].
//!
//! The table holds one overall rating plus `K_c` criteria ratings per
//! `(user, item)` pair. Criteria come from the latent codes, from explicit
//! criteria in the corpus, or from a continuous baseline rescaled to the
//! rating range. All predictions are clamped to `[1, m_rating]`.

mod aggregate;
mod cocluster;
mod knn;
mod predictor;
mod similarity;
mod slopeone;
mod svr;
mod table;

pub use aggregate::{AggregatePredictor, AGGREGATE_RIDGE};
pub use cocluster::CoCluster;
pub use knn::{knn_predict, weighted_prediction};
pub use predictor::{
    rank_items, read_predictions, recommend_top_k, table_fingerprint, write_predictions, Algorithm, Model,
    PredictionRow, Predictor, RecommenderConfig,
};
pub use similarity::{mc_distance, mc_user_similarity};
pub use slopeone::{PairStats, SlopeOne};
pub use svr::{estimate_criteria, LinearSvr, SvrConfig, SvrPredictor};
pub use table::{build_rating_table, CriteriaSource, RatingRecord, RatingTable};
