use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{precision_at_k, recall_at_k};
use super::pca::Pca;
use super::report::EvalReport;
use crate::compressor::{discretize, train_compression, LatentRatingTable, TrainedCompression};
use crate::encoder::{embed_corpus, train_autoencoder, EmbeddingMatrix, TrainedAutoencoder};
use crate::ingest::{build_vocabulary, split_folds, tokenize, Review, Vocabulary};
use crate::pipeline::PipelineConfig;
use crate::recommender::{
    build_rating_table, rank_items, Algorithm, CriteriaSource, PredictionRow, Predictor,
};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    /// Minimum held-out overall rating counted as relevant; defaults to
    /// `1 + 0.75 * (m_rating - 1)` (4 on a 1-5 scale).
    pub relevance_threshold: Option<f64>,
    pub folds: usize,
    pub algorithms: Vec<Algorithm>,
    pub sources: Vec<CriteriaSource>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 5],
            relevance_threshold: None,
            folds: 5,
            algorithms: Algorithm::ALL.to_vec(),
            sources: CriteriaSource::ALL.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, m_rating: u32) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("evaluation: {msg}")));
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k values must be non-empty and at least 1");
        }
        if self.folds < 2 {
            return bad("at least two folds are needed");
        }
        if self.algorithms.is_empty() || self.sources.is_empty() {
            return bad("algorithm and source lists must be non-empty");
        }
        let t = self.threshold(m_rating);
        if !(1.0..=m_rating as f64).contains(&t) {
            return bad("relevance threshold lies outside the rating scale");
        }
        Ok(())
    }

    pub fn threshold(&self, m_rating: u32) -> f64 {
        self.relevance_threshold
            .unwrap_or(1.0 + 0.75 * (m_rating as f64 - 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Precision, Metric::Recall];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Precision => "Pre",
            Metric::Recall => "Rec",
        }
    }
}

/// Models trained on one fold's training reviews, applied to every review.
#[derive(Clone, Debug)]
pub struct FoldModels {
    pub vocab: Vocabulary,
    pub encoder: TrainedAutoencoder,
    pub embeddings: EmbeddingMatrix,
    pub compression: TrainedCompression,
    pub codes: LatentRatingTable,
    pub pca_scores: EmbeddingMatrix,
}

/// Trains encoder, compressor and PCA on `reviews[train]` and applies them
/// to all of `reviews`.
pub fn train_fold_models(reviews: &[Review], train: &[usize], config: &PipelineConfig, seed: u64) -> Result<FoldModels> {
    let stage = |name: &str, e: Error| e.in_stage(name);
    let train_reviews: Vec<Review> = train.iter().map(|&i| reviews[i].clone()).collect();
    let vocab = build_vocabulary(&train_reviews, config.ingest.vocab_size, config.ingest.min_freq)
        .map_err(|e| stage("ingest", e))?;
    let tokens: Vec<_> = reviews
        .iter()
        .map(|r| tokenize(r, &vocab, config.ingest.max_len))
        .collect();
    let train_tokens: Vec<_> = train.iter().map(|&i| tokens[i].clone()).collect();
    let encoder = train_autoencoder(
        &train_tokens,
        vocab.len(),
        config.ingest.max_len,
        &config.encoder,
        derive_seed(seed, "encoder"),
    )
    .map_err(|e| stage("train-encoder", e))?;
    let embeddings = embed_corpus(&encoder.model, &tokens).map_err(|e| stage("embed", e))?;
    let train_emb = embeddings.select(train);
    let compression = train_compression(&train_emb, &config.compression, derive_seed(seed, "compress"))
        .map_err(|e| stage("compress", e))?;
    let mut codes = discretize(&compression.model.logits(&embeddings).map_err(|e| stage("compress", e))?);
    codes.attach_reviews(reviews).map_err(|e| stage("compress", e))?;
    let pca = Pca::fit(&train_emb.values, config.compression.k).map_err(|e| stage("evaluate", e))?;
    let pca_scores = EmbeddingMatrix::new(embeddings.review_ids.clone(), pca.project(&embeddings.values)?)?;
    Ok(FoldModels {
        vocab,
        encoder,
        embeddings,
        compression,
        codes,
        pca_scores,
    })
}

pub type CellPredictions = std::result::Result<Vec<PredictionRow>, String>;

/// Fits every configured (algorithm, source) pair on the training reviews
/// and predicts each held-out review. Failures are kept per cell.
pub fn predict_fold(
    reviews: &[Review],
    train: &[usize],
    test: &[usize],
    models: &FoldModels,
    config: &PipelineConfig,
    seed: u64,
) -> BTreeMap<(Algorithm, CriteriaSource), CellPredictions> {
    let m = config.ingest.m_rating;
    let train_reviews: Vec<Review> = train.iter().map(|&i| reviews[i].clone()).collect();
    let mut out = BTreeMap::new();
    for &source in &config.evaluation.sources {
        let continuous = match source {
            CriteriaSource::Embedding => Some(&models.embeddings),
            CriteriaSource::Pca => Some(&models.pca_scores),
            _ => None,
        };
        let table = build_rating_table(&train_reviews, source, Some(&models.codes), continuous, m).map(Arc::new);
        for &algorithm in config.evaluation.algorithms.iter().filter(|a| a.supports(source)) {
            let cell = table.as_ref().map_err(|e| e.to_string()).and_then(|t| {
                let label = format!("recommend/{algorithm}/{source}");
                let p = Predictor::fit(algorithm, t.clone(), &config.recommender, derive_seed(seed, &label))
                    .map_err(|e| e.to_string())?;
                test.iter()
                    .map(|&i| {
                        let r = &reviews[i];
                        Ok(PredictionRow {
                            user_id: r.user_id.clone(),
                            item_id: r.item_id.clone(),
                            predicted: p.predict(&r.user_id, &r.item_id).map_err(|e| e.to_string())?,
                            actual: r.overall,
                        })
                    })
                    .collect()
            });
            if let Err(msg) = &cell {
                log::warn!("{algorithm} on {source} failed: {msg}");
            }
            out.insert((algorithm, source), cell);
        }
    }
    out
}

/// Per-fold mean Pre@k / Rec@k over users with at least one relevant
/// held-out item. Each user's candidates are their own held-out items.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldScores {
    pub values: BTreeMap<(Metric, usize), Option<f64>>,
    pub users: usize,
    pub skipped_users: usize,
}

pub fn fold_metrics(predictions: &[PredictionRow], k_values: &[usize], threshold: f64) -> FoldScores {
    let mut by_user: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
    for p in predictions {
        by_user.entry(p.user_id.as_str()).or_default().push(p);
    }
    let mut sums: BTreeMap<(Metric, usize), f64> = BTreeMap::new();
    let mut users = 0;
    let mut skipped = 0;
    for rows in by_user.values() {
        let relevant: HashSet<String> = rows
            .iter()
            .filter(|p| p.actual >= threshold)
            .map(|p| p.item_id.clone())
            .collect();
        if relevant.is_empty() {
            skipped += 1;
            continue;
        }
        users += 1;
        let scored: Vec<(String, f64)> = rows.iter().map(|p| (p.item_id.clone(), p.predicted)).collect();
        let ranked = rank_items(&scored);
        for &k in k_values {
            *sums.entry((Metric::Precision, k)).or_default() += precision_at_k(&ranked, &relevant, k);
            *sums.entry((Metric::Recall, k)).or_default() += recall_at_k(&ranked, &relevant, k);
        }
    }
    let values = Metric::ALL
        .iter()
        .flat_map(|&m| k_values.iter().map(move |&k| (m, k)))
        .map(|key| {
            let v = (users > 0).then(|| sums[&key] / users as f64);
            (key, v)
        })
        .collect();
    FoldScores {
        values,
        users,
        skipped_users: skipped,
    }
}

/// Outcome of one fold: predictions per cell, or the stage error that
/// prevented training.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_users: usize,
    pub cells: std::result::Result<BTreeMap<(Algorithm, CriteriaSource), CellPredictions>, String>,
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub folds: Vec<FoldOutcome>,
}

/// k-fold cross-validation of every algorithm on every rating source, with
/// per-fold retraining of encoder and compressor. Deterministic in `seed`.
pub fn cross_validate(reviews: &[Review], config: &PipelineConfig, seed: u64) -> Result<CrossValidation> {
    config.validate()?;
    let eval = &config.evaluation;
    let ids: BTreeSet<&str> = reviews.iter().map(|r| r.review_id.as_str()).collect();
    if ids.len() != reviews.len() {
        return Err(Error::invalid("review ids must be unique"));
    }
    let assignment = split_folds(reviews.len(), eval.folds, derive_seed(seed, "folds"))?;
    let threshold = eval.threshold(config.ingest.m_rating);
    let mut outcomes = Vec::with_capacity(eval.folds);
    for fold in 0..eval.folds {
        let train = assignment.train_indices(fold);
        let test = assignment.test_indices(fold);
        let fold_seed = derive_seed(seed, &format!("fold{fold}"));
        log::info!("fold {fold}: {} train / {} test reviews", train.len(), test.len());
        let test_users = test
            .iter()
            .map(|&i| reviews[i].user_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let cells = train_fold_models(reviews, &train, config, fold_seed)
            .map(|models| predict_fold(reviews, &train, &test, &models, config, fold_seed))
            .map_err(|e| {
                log::warn!("fold {fold} failed: {e}");
                e.to_string()
            });
        outcomes.push(FoldOutcome {
            fold,
            test_users,
            cells,
        });
    }
    if let Some(Err(first)) = outcomes.iter().map(|o| o.cells.as_ref()).find(|c| c.is_err()) {
        if outcomes.iter().all(|o| o.cells.is_err()) {
            return Err(Error::Numerical(format!("every fold failed; first: {first}")));
        }
    }
    let report = EvalReport::assemble(eval, threshold, &outcomes);
    Ok(CrossValidation {
        report,
        folds: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(u: &str, i: &str, predicted: f64, actual: f64) -> PredictionRow {
        PredictionRow {
            user_id: u.into(),
            item_id: i.into(),
            predicted,
            actual,
        }
    }

    #[test]
    fn oracle_predictions_score_perfect_precision_at_one() {
        let rows = vec![
            row("a", "x", 5.0, 5.0),
            row("a", "y", 2.0, 2.0),
            row("a", "z", 4.0, 4.0),
            row("b", "x", 1.0, 1.0),
            row("b", "y", 4.5, 4.5),
            row("c", "x", 2.0, 2.0),
        ];
        let s = fold_metrics(&rows, &[1, 5], 4.0);
        assert_eq!(s.values[&(Metric::Precision, 1)], Some(1.0));
        assert_eq!(s.values[&(Metric::Recall, 5)], Some(1.0));
        // a: 2 relevant of 3 shown, b: 1 of 2
        assert_eq!(s.values[&(Metric::Precision, 5)], Some((2.0 / 3.0 + 0.5) / 2.0));
        assert_eq!((s.users, s.skipped_users), (2, 1));
    }

    #[test]
    fn no_relevant_items_leaves_the_fold_empty() {
        let s = fold_metrics(&[row("a", "x", 5.0, 1.0)], &[1], 4.0);
        assert_eq!(s.values[&(Metric::Precision, 1)], None);
        assert_eq!(s.skipped_users, 1);
    }

    #[test]
    fn default_threshold_scales_with_the_rating_range() {
        let c = EvalConfig::default();
        assert_eq!(c.threshold(5), 4.0);
        assert_eq!(c.threshold(9), 7.0);
        assert!(c.validate(5).is_ok());
        let bad = EvalConfig {
            relevance_threshold: Some(6.0),
            ..EvalConfig::default()
        };
        assert!(bad.validate(5).is_err());
    }
}
