use super::table::RatingTable;
use crate::{Error, Result};

/// Normalised Euclidean distance between two channel vectors (overall
/// followed by criteria) on the scale `1..=m_rating`; lies in `[0, 1]`.
pub fn mc_distance(a: &[f64], b: &[f64], m_rating: u32) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "channel vectors of lengths {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    Ok(distance_unchecked(a.iter().copied(), b.iter().copied(), a.len(), m_rating))
}

pub(crate) fn distance_unchecked(
    a: impl Iterator<Item = f64>,
    b: impl Iterator<Item = f64>,
    len: usize,
    m_rating: u32,
) -> f64 {
    let span = m_rating as f64 - 1.0;
    let sum: f64 = a.zip(b).map(|(x, y)| ((x - y) / span).powi(2)).sum();
    (sum / len as f64).sqrt()
}

/// `1 / (1 + mean distance over co-rated items)`, or 0 without overlap.
pub fn mc_user_similarity(table: &RatingTable, u: &str, v: &str) -> f64 {
    match (table.user_idx(u), table.user_idx(v)) {
        (Some(a), Some(b)) => similarity(table, a, b),
        _ => 0.0,
    }
}

pub(crate) fn similarity(table: &RatingTable, u: usize, v: usize) -> f64 {
    let (a, b) = (table.user_ratings(u), table.user_ratings(v));
    let width = table.k_c() + 1;
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut n = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                total += distance_unchecked(
                    table.channels(a[i].1),
                    table.channels(b[j].1),
                    width,
                    table.m_rating(),
                );
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        1.0 / (1.0 + total / n as f64)
    }
}
