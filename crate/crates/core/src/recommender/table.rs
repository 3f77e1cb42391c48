use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compressor::LatentRatingTable;
use crate::encoder::EmbeddingMatrix;
use crate::ingest::Review;
use crate::{Error, Result};

/// Where the criteria channels of a rating table come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriteriaSource {
    /// Discrete codes from the compressor.
    Latent,
    /// Criteria ratings supplied with the reviews.
    Explicit,
    /// No criteria; overall rating only.
    Overall,
    /// Raw review embeddings, rescaled per column.
    Embedding,
    /// Principal-component scores of the embeddings, rescaled per column.
    Pca,
}

impl CriteriaSource {
    pub const ALL: [CriteriaSource; 5] = [
        CriteriaSource::Latent,
        CriteriaSource::Explicit,
        CriteriaSource::Overall,
        CriteriaSource::Embedding,
        CriteriaSource::Pca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CriteriaSource::Latent => "latent",
            CriteriaSource::Explicit => "explicit",
            CriteriaSource::Overall => "overall",
            CriteriaSource::Embedding => "embedding",
            CriteriaSource::Pca => "pca",
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            CriteriaSource::Latent => "Latent",
            CriteriaSource::Explicit => "MC",
            CriteriaSource::Overall => "Overall",
            CriteriaSource::Embedding => "Embedding",
            CriteriaSource::Pca => "PCA",
        }
    }

    /// Sources the latent ratings are compared against, in report order.
    pub const BASELINES: [CriteriaSource; 4] = [
        CriteriaSource::Explicit,
        CriteriaSource::Overall,
        CriteriaSource::Embedding,
        CriteriaSource::Pca,
    ];
}

impl fmt::Display for CriteriaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriteriaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown criteria source `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatingRecord {
    pub user_id: String,
    pub item_id: String,
    pub overall: f64,
    pub criteria: Vec<f64>,
}

/// Indexed user-item ratings with an optional criteria vector per record.
///
/// Users and items get dense indices in ascending id order. Per-user and
/// per-item lists are sorted by the other index so co-rated sets can be found
/// by merging.
#[derive(Clone, Debug)]
pub struct RatingTable {
    m_rating: u32,
    source: CriteriaSource,
    k_c: usize,
    records: Vec<RatingRecord>,
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    /// `(item, record)` per user.
    by_user: Vec<Vec<(usize, usize)>>,
    /// `(user, record)` per item.
    by_item: Vec<Vec<(usize, usize)>>,
    user_means: Vec<f64>,
    item_means: Vec<f64>,
    global_mean: f64,
}

impl RatingTable {
    pub fn new(records: Vec<RatingRecord>, m_rating: u32, source: CriteriaSource) -> Result<Self> {
        if m_rating < 2 {
            return Err(Error::invalid(format!("rating scale 1..={m_rating} is too small")));
        }
        let k_c = records.first().map_or(0, |r| r.criteria.len());
        if source == CriteriaSource::Overall && k_c != 0 {
            return Err(Error::invalid("overall-only tables carry no criteria"));
        }
        let hi = m_rating as f64;
        for r in &records {
            if r.criteria.len() != k_c {
                return Err(Error::invalid(format!(
                    "record ({}, {}) has {} criteria, expected {k_c}",
                    r.user_id,
                    r.item_id,
                    r.criteria.len()
                )));
            }
            let ok = |v: f64| v.is_finite() && (1.0..=hi).contains(&v);
            if !ok(r.overall) || !r.criteria.iter().all(|&c| ok(c)) {
                return Err(Error::invalid(format!(
                    "record ({}, {}) has a rating outside [1, {m_rating}]",
                    r.user_id, r.item_id
                )));
            }
        }

        let mut users: Vec<String> = records.iter().map(|r| r.user_id.clone()).collect();
        users.sort();
        users.dedup();
        let mut items: Vec<String> = records.iter().map(|r| r.item_id.clone()).collect();
        items.sort();
        items.dedup();
        let user_index: HashMap<String, usize> =
            users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_index: HashMap<String, usize> =
            items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();

        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        for (ri, r) in records.iter().enumerate() {
            let (u, i) = (user_index[&r.user_id], item_index[&r.item_id]);
            by_user[u].push((i, ri));
            by_item[i].push((u, ri));
        }
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_unstable();
        }
        for (u, list) in by_user.iter().enumerate() {
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!(
                    "duplicate rating for user {} and item {}",
                    users[u], items[w[0].0]
                )));
            }
        }

        let mean_of = |list: &[(usize, usize)]| {
            list.iter().map(|&(_, ri)| records[ri].overall).sum::<f64>() / list.len() as f64
        };
        let user_means = by_user.iter().map(|l| mean_of(l)).collect();
        let item_means = by_item.iter().map(|l| mean_of(l)).collect();
        let global_mean = if records.is_empty() {
            (1.0 + hi) / 2.0
        } else {
            records.iter().map(|r| r.overall).sum::<f64>() / records.len() as f64
        };
        Ok(Self {
            m_rating,
            source,
            k_c,
            records,
            users,
            items,
            user_index,
            item_index,
            by_user,
            by_item,
            user_means,
            item_means,
            global_mean,
        })
    }

    pub fn m_rating(&self) -> u32 {
        self.m_rating
    }

    pub fn source(&self) -> CriteriaSource {
        self.source
    }

    /// Number of criteria channels.
    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_idx(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn item_idx(&self, item_id: &str) -> Option<usize> {
        self.item_index.get(item_id).copied()
    }

    pub fn user_ratings(&self, u: usize) -> &[(usize, usize)] {
        &self.by_user[u]
    }

    pub fn item_ratings(&self, i: usize) -> &[(usize, usize)] {
        &self.by_item[i]
    }

    pub fn user_mean(&self, u: usize) -> f64 {
        self.user_means[u]
    }

    pub fn item_mean(&self, i: usize) -> f64 {
        self.item_means[i]
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Record index of `u`'s rating of `i`, if any.
    pub fn rating_of(&self, u: usize, i: usize) -> Option<usize> {
        let list = &self.by_user[u];
        list.binary_search_by_key(&i, |&(item, _)| item)
            .ok()
            .map(|p| list[p].1)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(1.0, self.m_rating as f64)
    }

    /// User mean, else item mean, else global mean.
    pub fn fallback(&self, user_id: &str, item_id: &str) -> f64 {
        if let Some(u) = self.user_idx(user_id) {
            self.user_means[u]
        } else if let Some(i) = self.item_idx(item_id) {
            self.item_means[i]
        } else {
            self.global_mean
        }
    }

    /// Overall rating followed by the criteria of one record.
    pub fn channels(&self, record: usize) -> impl Iterator<Item = f64> + '_ {
        let r = &self.records[record];
        std::iter::once(r.overall).chain(r.criteria.iter().copied())
    }

    /// Single-channel table whose overall rating is criterion `c`.
    pub fn channel_view(&self, c: usize) -> Result<RatingTable> {
        if c >= self.k_c {
            return Err(Error::invalid(format!("criterion {c} out of range for K_c = {}", self.k_c)));
        }
        let records = self
            .records
            .iter()
            .map(|r| RatingRecord {
                user_id: r.user_id.clone(),
                item_id: r.item_id.clone(),
                overall: r.criteria[c],
                criteria: Vec::new(),
            })
            .collect();
        RatingTable::new(records, self.m_rating, CriteriaSource::Overall)
    }
}

/// Joins reviews with the requested criteria source.
///
/// Continuous sources are mapped per column onto `[1, m_rating]` using the
/// column's minimum and maximum over the joined reviews; a constant column
/// maps to the scale midpoint.
pub fn build_rating_table(
    reviews: &[Review],
    source: CriteriaSource,
    latent: Option<&LatentRatingTable>,
    continuous: Option<&EmbeddingMatrix>,
    m_rating: u32,
) -> Result<RatingTable> {
    let criteria: Vec<Vec<f64>> = match source {
        CriteriaSource::Overall => vec![Vec::new(); reviews.len()],
        CriteriaSource::Explicit => {
            let names: Vec<&String> = reviews
                .first()
                .map(|r| r.criteria.keys().collect())
                .unwrap_or_default();
            let mut out = Vec::with_capacity(reviews.len());
            for r in reviews {
                if r.criteria.is_empty() || !r.criteria.keys().eq(names.iter().copied()) {
                    return Err(Error::invalid(format!(
                        "review {} lacks the explicit criteria {names:?}",
                        r.review_id
                    )));
                }
                out.push(r.criteria.values().copied().collect());
            }
            out
        }
        CriteriaSource::Latent => {
            let table = latent.ok_or_else(|| Error::invalid("latent source needs a code table"))?;
            let by_review = table.by_review();
            let mut out = Vec::with_capacity(reviews.len());
            for r in reviews {
                let code = by_review.get(r.review_id.as_str()).ok_or_else(|| {
                    Error::invalid(format!("review {} has no latent code", r.review_id))
                })?;
                if table.m > m_rating as usize {
                    return Err(Error::invalid(format!(
                        "codes range over 1..={} but the rating scale ends at {m_rating}",
                        table.m
                    )));
                }
                out.push(code.iter().map(|&c| c as f64).collect());
            }
            out
        }
        CriteriaSource::Embedding | CriteriaSource::Pca => {
            let matrix = continuous
                .ok_or_else(|| Error::invalid(format!("{source} source needs a value matrix")))?;
            let rows: HashMap<&str, usize> = matrix
                .review_ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let mut raw = Vec::with_capacity(reviews.len());
            for r in reviews {
                let row = rows.get(r.review_id.as_str()).ok_or_else(|| {
                    Error::invalid(format!("review {} has no {source} row", r.review_id))
                })?;
                raw.push(matrix.values.row(*row).to_vec());
            }
            rescale_columns(&mut raw, m_rating);
            raw
        }
    };
    let records = reviews
        .iter()
        .zip(criteria)
        .map(|(r, criteria)| RatingRecord {
            user_id: r.user_id.clone(),
            item_id: r.item_id.clone(),
            overall: r.overall,
            criteria,
        })
        .collect();
    RatingTable::new(records, m_rating, source)
}

fn rescale_columns(rows: &mut [Vec<f64>], m_rating: u32) {
    let Some(width) = rows.first().map(Vec::len) else { return };
    let span = m_rating as f64 - 1.0;
    for c in 0..width {
        let lo = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        for r in rows.iter_mut() {
            r[c] = if hi > lo {
                // clamp guards the endpoints against rounding just outside the scale
                (1.0 + span * (r[c] - lo) / (hi - lo)).clamp(1.0, m_rating as f64)
            } else {
                1.0 + span / 2.0
            };
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::Matrix;

    pub(crate) fn table(ratings: &[(&str, &str, f64)], m: u32) -> RatingTable {
        let records = ratings
            .iter()
            .map(|&(u, i, r)| RatingRecord {
                user_id: u.into(),
                item_id: i.into(),
                overall: r,
                criteria: Vec::new(),
            })
            .collect();
        RatingTable::new(records, m, CriteriaSource::Overall).unwrap()
    }

    fn review(id: &str, u: &str, i: &str, stars: f64) -> Review {
        Review {
            review_id: id.into(),
            user_id: u.into(),
            item_id: i.into(),
            overall: stars,
            criteria: Default::default(),
            text: String::new(),
            timestamp: None,
        }
    }

    #[test]
    fn indexes_and_means() {
        let t = table(&[("u2", "i1", 4.0), ("u1", "i1", 2.0), ("u1", "i2", 5.0)], 5);
        assert_eq!(t.users(), ["u1", "u2"]);
        assert_eq!(t.user_mean(0), 3.5);
        assert_eq!(t.item_mean(0), 3.0);
        assert!((t.global_mean() - 11.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.rating_of(0, 1), Some(2));
        assert_eq!(t.rating_of(1, 1), None);
        assert_eq!(t.fallback("u2", "zz"), 4.0);
        assert_eq!(t.fallback("zz", "i2"), 5.0);
        assert_eq!(t.fallback("zz", "zz"), t.global_mean());
    }

    #[test]
    fn duplicates_and_out_of_range_are_rejected() {
        let dup = vec![
            RatingRecord { user_id: "u".into(), item_id: "i".into(), overall: 3.0, criteria: vec![] },
            RatingRecord { user_id: "u".into(), item_id: "i".into(), overall: 4.0, criteria: vec![] },
        ];
        assert!(RatingTable::new(dup, 5, CriteriaSource::Overall).is_err());
        let bad = vec![RatingRecord { user_id: "u".into(), item_id: "i".into(), overall: 6.0, criteria: vec![] }];
        assert!(RatingTable::new(bad, 5, CriteriaSource::Overall).is_err());
    }

    #[test]
    fn sources_join_on_review_id() {
        let reviews = vec![review("a", "u1", "i1", 4.0), review("b", "u2", "i1", 2.0), review("c", "u2", "i2", 3.0)];
        let t = build_rating_table(&reviews, CriteriaSource::Overall, None, None, 5).unwrap();
        assert_eq!(t.k_c(), 0);

        let latent = LatentRatingTable::from_codes(
            &["c".to_string(), "a".to_string(), "b".to_string()],
            vec![vec![5, 1, 2, 3], vec![1, 2, 3, 4], vec![2, 2, 2, 2]],
            4,
            5,
        )
        .unwrap();
        let t = build_rating_table(&reviews, CriteriaSource::Latent, Some(&latent), None, 5).unwrap();
        assert_eq!(t.records()[0].criteria, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.records()[2].criteria, vec![5.0, 1.0, 2.0, 3.0]);

        let partial = LatentRatingTable::from_codes(&["a".to_string()], vec![vec![1, 1, 1, 1]], 4, 5).unwrap();
        let err = build_rating_table(&reviews, CriteriaSource::Latent, Some(&partial), None, 5).unwrap_err();
        assert!(err.to_string().contains("review b"), "{err}");
        assert!(build_rating_table(&reviews, CriteriaSource::Explicit, None, None, 5).is_err());
    }

    #[test]
    fn continuous_columns_are_rescaled() {
        let reviews = vec![review("a", "u1", "i1", 4.0), review("b", "u2", "i1", 2.0), review("c", "u2", "i2", 3.0)];
        let values = Matrix::from_rows(&[vec![-2.0, 7.0], vec![2.0, 7.0], vec![0.0, 7.0]]).unwrap();
        let emb = EmbeddingMatrix::new(vec!["a".into(), "b".into(), "c".into()], values).unwrap();
        let t = build_rating_table(&reviews, CriteriaSource::Embedding, None, Some(&emb), 5).unwrap();
        let col: Vec<f64> = t.records().iter().map(|r| r.criteria[0]).collect();
        assert_eq!(col, vec![1.0, 5.0, 3.0]);
        assert!(t.records().iter().all(|r| r.criteria[1] == 3.0));
    }

    #[test]
    fn explicit_criteria_follow_name_order() {
        let mut a = review("a", "u1", "i1", 4.0);
        a.criteria = [("service".to_string(), 2.0), ("food".to_string(), 5.0)].into();
        let mut b = review("b", "u2", "i1", 3.0);
        b.criteria = [("food".to_string(), 1.0), ("service".to_string(), 4.0)].into();
        let t = build_rating_table(&[a.clone(), b], CriteriaSource::Explicit, None, None, 5).unwrap();
        assert_eq!(t.records()[0].criteria, vec![5.0, 2.0]);
        assert_eq!(t.records()[1].criteria, vec![1.0, 4.0]);
        let mut c = review("c", "u3", "i1", 3.0);
        c.criteria = [("food".to_string(), 1.0)].into();
        let err = build_rating_table(&[a, c], CriteriaSource::Explicit, None, None, 5).unwrap_err();
        assert!(err.to_string().contains("review c"));
    }

    #[test]
    fn channel_view_swaps_in_a_criterion() {
        let records = vec![RatingRecord { user_id: "u".into(), item_id: "i".into(), overall: 3.0, criteria: vec![1.0, 5.0] }];
        let t = RatingTable::new(records, 5, CriteriaSource::Latent).unwrap();
        let v = t.channel_view(1).unwrap();
        assert_eq!(v.records()[0].overall, 5.0);
        assert_eq!(v.k_c(), 0);
        assert!(t.channel_view(2).is_err());
    }
}
