use std::collections::HashSet;
use std::hash::Hash;

fn hits<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> usize {
    recommended.iter().take(k).filter(|i| relevant.contains(*i)).count()
}

/// `|top-k ∩ relevant| / min(k, |recommended|)`, 0 for an empty list.
///
/// # Panics
/// If `k == 0`.
pub fn precision_at_k<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    assert!(k >= 1, "precision_at_k needs k >= 1");
    let shown = k.min(recommended.len());
    if shown == 0 {
        return 0.0;
    }
    hits(recommended, relevant, k) as f64 / shown as f64
}

/// `|top-k ∩ relevant| / |relevant|`. Returns 0 for an empty relevant set;
/// callers skip such users when averaging.
///
/// # Panics
/// If `k == 0`.
pub fn recall_at_k<T: Eq + Hash>(recommended: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    assert!(k >= 1, "recall_at_k needs k >= 1");
    if relevant.is_empty() {
        return 0.0;
    }
    hits(recommended, relevant, k) as f64 / relevant.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[u32]) -> HashSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn precision_fixtures() {
        assert_eq!(precision_at_k(&[1, 2, 3], &set(&[1, 2, 3, 9]), 3), 1.0);
        assert_eq!(precision_at_k(&[1, 2, 3, 4, 5, 6], &set(&[2, 5, 7]), 5), 0.4);
        assert_eq!(precision_at_k(&[1, 2], &set(&[]), 1), 0.0);
        assert_eq!(precision_at_k::<u32>(&[], &set(&[1]), 5), 0.0);
        // fewer recommendations than k
        assert_eq!(precision_at_k(&[1, 2], &set(&[1]), 5), 0.5);
    }

    #[test]
    fn recall_fixtures() {
        assert_eq!(recall_at_k(&[3, 1, 2], &set(&[1, 2]), 3), 1.0);
        assert_eq!(recall_at_k(&[1, 2, 3, 4, 5, 6], &set(&[2, 5, 6, 7]), 5), 0.5);
        assert_eq!(recall_at_k(&[1, 2, 3], &set(&[2]), 10), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn recall_is_monotone_in_k(
            ranked in Just((0u32..20).collect::<Vec<_>>()).prop_shuffle(),
            len in 0usize..20,
            relevant in proptest::collection::hash_set(0u32..20, 1..10),
        ) {
            let rec = &ranked[..len];
            let mut prev = 0.0;
            for k in 1..=21 {
                let r = recall_at_k(rec, &relevant, k);
                let p = precision_at_k(rec, &relevant, k);
                prop_assert!(r >= prev && r <= 1.0);
                prop_assert!((0.0..=1.0).contains(&p));
                prev = r;
            }
        }
    }
}
