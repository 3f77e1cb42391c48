//! Planted multi-criteria corpus.
//!
//! Every user has a taste sign per criterion and every item a quality per
//! criterion; a criterion rating is `center + sign * quality + jitter`, rounded
//! and clamped to the rating scale. The overall rating is the rounded criteria
//! mean plus optional ±1 noise. Review text carries `m_rating - 1` sentiment
//! slots per criterion: the first `value - 1` slots are positive, the rest
//! negative, and each slot emits a word from its criterion's list with
//! probability `emit_p` (otherwise a filler word).

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{split_words, Review};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of planted criteria.
    pub k_star: usize,
    pub m_rating: u32,
    pub n_users: usize,
    pub n_items: usize,
    pub reviews_per_user: usize,
    /// Probability that the overall rating is shifted by ±1.
    pub noise_p: f64,
    /// Probability that a sentiment slot emits a sentiment word.
    pub emit_p: f64,
    /// Half-width of the uniform item-quality distribution.
    pub item_spread: f64,
    /// Half-width of the uniform per-rating jitter before rounding.
    pub rating_jitter: f64,
    /// Filler words inserted between criterion blocks.
    pub fillers_per_gap: usize,
    /// Shuffle the sentiment slots inside each criterion block.
    pub shuffle_slots: bool,
    /// Generated word-list sizes when `word_lists` is not given.
    pub words_per_polarity: usize,
    pub n_fillers: usize,
    /// Optional TOML file with `positive`, `negative` (one list per criterion)
    /// and `filler` word lists.
    pub word_lists: Option<PathBuf>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            k_star: 3,
            m_rating: 5,
            n_users: 200,
            n_items: 40,
            reviews_per_user: 10,
            noise_p: 0.1,
            emit_p: 0.95,
            item_spread: 2.0,
            rating_jitter: 0.5,
            fillers_per_gap: 0,
            shuffle_slots: false,
            words_per_polarity: 1,
            n_fillers: 50,
            word_lists: None,
        }
    }
}

/// Sentiment and filler vocabularies of the planted corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordLists {
    pub positive: Vec<Vec<String>>,
    pub negative: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

impl WordLists {
    pub fn generated(k_star: usize, per_polarity: usize, n_fillers: usize) -> Self {
        let list = |c: usize, tag: &str| -> Vec<String> {
            (1..=per_polarity).map(|j| format!("c{c}{tag}{j}")).collect()
        };
        Self {
            positive: (1..=k_star).map(|c| list(c, "pos")).collect(),
            negative: (1..=k_star).map(|c| list(c, "neg")).collect(),
            filler: (1..=n_fillers).map(|j| format!("filler{j}")).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn validate(&self, k_star: usize) -> Result<()> {
        if self.positive.len() != k_star || self.negative.len() != k_star {
            return Err(Error::Config(format!(
                "word lists must provide {k_star} positive and negative lists"
            )));
        }
        let mut seen = HashSet::new();
        let all = self
            .positive
            .iter()
            .chain(&self.negative)
            .chain(std::iter::once(&self.filler));
        for list in all {
            if list.is_empty() {
                return Err(Error::Config("word lists must be non-empty".into()));
            }
            for w in list {
                let toks: Vec<String> = split_words(w).collect();
                if toks.len() != 1 || toks[0] != *w {
                    return Err(Error::Config(format!(
                        "`{w}` is not a single lowercase alphanumeric token"
                    )));
                }
                if !seen.insert(w.as_str()) {
                    return Err(Error::Config(format!("word `{w}` appears in two lists")));
                }
            }
        }
        Ok(())
    }
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative word-list paths resolve against the config file
        if let (Some(wl), Some(dir)) = (&cfg.word_lists, path.parent()) {
            if wl.is_relative() {
                cfg.word_lists = Some(dir.join(wl));
            }
        }
        Ok(cfg)
    }

    pub fn word_lists(&self) -> Result<WordLists> {
        let lists = match &self.word_lists {
            Some(p) => WordLists::load(p)?,
            None => WordLists::generated(self.k_star, self.words_per_polarity, self.n_fillers),
        };
        lists.validate(self.k_star)?;
        Ok(lists)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k_star == 0 {
            return bad("k_star must be positive");
        }
        if self.m_rating < 2 {
            return bad("m_rating must be at least 2");
        }
        if self.n_users == 0 || self.n_items == 0 || self.reviews_per_user == 0 {
            return bad("n_users, n_items and reviews_per_user must be positive");
        }
        if self.reviews_per_user > self.n_items {
            return bad("reviews_per_user cannot exceed n_items");
        }
        if !(0.0..=1.0).contains(&self.noise_p) || !(0.0..=1.0).contains(&self.emit_p) {
            return bad("noise_p and emit_p must be probabilities");
        }
        if !(self.item_spread >= 0.0 && self.rating_jitter >= 0.0) {
            return bad("item_spread and rating_jitter must be non-negative");
        }
        Ok(())
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

/// Generates the planted corpus; byte-identical output for equal `(config, seed)`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig, seed: u64) -> Result<Vec<Review>> {
    config.validate()?;
    let lists = config.word_lists()?;
    let k = config.k_star;
    let m = config.m_rating as f64;
    let center = (1.0 + m) / 2.0;
    let mut rng = rng::seeded(seed);

    let quality: Vec<Vec<f64>> = (0..config.n_items)
        .map(|_| {
            (0..k)
                .map(|_| rng.gen_range(-config.item_spread..=config.item_spread))
                .collect()
        })
        .collect();
    let taste: Vec<Vec<f64>> = (0..config.n_users)
        .map(|_| {
            (0..k)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let mut reviews = Vec::with_capacity(config.n_users * config.reviews_per_user);
    for (u, user_taste) in taste.iter().enumerate() {
        let items = &rng::permutation(&mut rng, config.n_items)[..config.reviews_per_user];
        let mut items = items.to_vec();
        items.sort_unstable();
        for &i in &items {
            let criteria: Vec<f64> = (0..k)
                .map(|c| {
                    let jitter = if config.rating_jitter > 0.0 {
                        rng.gen_range(-config.rating_jitter..config.rating_jitter)
                    } else {
                        0.0
                    };
                    (center + user_taste[c] * quality[i][c] + jitter)
                        .round()
                        .clamp(1.0, m)
                })
                .collect();
            let mean = criteria.iter().sum::<f64>() / k as f64;
            let noise = if rng.gen_bool(config.noise_p) {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            };
            let overall = (mean.round() + noise).clamp(1.0, m);

            let mut words: Vec<&str> = Vec::new();
            for (c, &value) in criteria.iter().enumerate() {
                if c > 0 {
                    for _ in 0..config.fillers_per_gap {
                        words.push(pick(&mut rng, &lists.filler));
                    }
                }
                let n_positive = value as usize - 1;
                let mut block: Vec<&str> = (0..config.m_rating as usize - 1)
                    .map(|slot| {
                        if rng.gen_bool(config.emit_p) {
                            if slot < n_positive {
                                pick(&mut rng, &lists.positive[c])
                            } else {
                                pick(&mut rng, &lists.negative[c])
                            }
                        } else {
                            pick(&mut rng, &lists.filler)
                        }
                    })
                    .collect();
                if config.shuffle_slots {
                    let order = rng::permutation(&mut rng, block.len());
                    block = order.into_iter().map(|j| block[j]).collect();
                }
                words.extend(block);
            }

            let idx = reviews.len();
            reviews.push(Review {
                review_id: format!("s{idx:06}"),
                user_id: format!("u{u:04}"),
                item_id: format!("i{i:04}"),
                overall,
                criteria: criteria
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| (format!("c{}", c + 1), v))
                    .collect::<BTreeMap<_, _>>(),
                text: words.join(" "),
                timestamp: Some(idx as i64),
            });
        }
    }
    Ok(reviews)
}
