use std::collections::HashMap;

use super::Review;

/// Collapses duplicate `(user, item)` pairs and drops users/items below the
/// review-count thresholds, repeating until no record is removed.
///
/// A duplicate replaces the kept review when it is at least as recent; when
/// either review lacks a timestamp the later occurrence wins. Survivors keep
/// their relative corpus order.
pub fn filter_corpus(
    reviews: &[Review],
    min_reviews_per_user: usize,
    min_reviews_per_item: usize,
) -> Vec<Review> {
    let mut kept: HashMap<(&str, &str), usize> = HashMap::new();
    for (idx, r) in reviews.iter().enumerate() {
        let key = (r.user_id.as_str(), r.item_id.as_str());
        match kept.get(&key) {
            Some(&prev) => {
                let replace = match (reviews[prev].timestamp, r.timestamp) {
                    (Some(old), Some(new)) => new >= old,
                    _ => true,
                };
                if replace {
                    kept.insert(key, idx);
                }
            }
            None => {
                kept.insert(key, idx);
            }
        }
    }
    let mut alive: Vec<usize> = kept.into_values().collect();
    alive.sort_unstable();

    loop {
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        let mut per_item: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *per_user.entry(reviews[i].user_id.as_str()).or_default() += 1;
            *per_item.entry(reviews[i].item_id.as_str()).or_default() += 1;
        }
        let before = alive.len();
        alive.retain(|&i| {
            per_user[reviews[i].user_id.as_str()] >= min_reviews_per_user
                && per_item[reviews[i].item_id.as_str()] >= min_reviews_per_item
        });
        if alive.len() == before {
            break;
        }
    }
    alive.into_iter().map(|i| reviews[i].clone()).collect()
}
