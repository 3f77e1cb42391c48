//! Adjusted mutual information between two labelings, arithmetic-mean
//! normalisation.

use std::collections::BTreeMap;

use super::ttest::ln_gamma;

fn relabel<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn ln_fact(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Expected mutual information under the hypergeometric model of
/// randomness with fixed marginals.
fn expected_mi(a: &[usize], b: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                let ln_p = ln_fact(ai) + ln_fact(bj) + ln_fact(n - ai) + ln_fact(n - bj)
                    - ln_fact(n)
                    - ln_fact(nij)
                    - ln_fact(ai - nij)
                    - ln_fact(bj - nij)
                    - ln_fact(n + nij - ai - bj);
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

/// AMI of two labelings of the same items. Identical single-cluster (or
/// empty) labelings score 1.
///
/// # Panics
/// If the labelings differ in length.
pub fn adjusted_mutual_info<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let (la, ka) = relabel(a);
    let (lb, kb) = relabel(b);
    if (ka == kb && ka <= 1) || n == 0 {
        return 1.0;
    }
    let mut table = vec![vec![0usize; kb]; ka];
    for (&i, &j) in la.iter().zip(&lb) {
        table[i][j] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let x = c as f64;
                mi += x / nf * (nf * x / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mi(&rows, &cols, n);
    let norm = 0.5 * (entropy(&rows, nf) + entropy(&cols, nf));
    let mut denom = norm - emi;
    if denom < 0.0 {
        denom = denom.min(-f64::EPSILON);
    } else {
        denom = denom.max(f64::EPSILON);
    }
    (mi - emi) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    // Expected values from scikit-learn's adjusted_mutual_info_score.
    #[test]
    fn reference_values() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-10;
        assert!(close(adjusted_mutual_info(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0));
        assert!(close(adjusted_mutual_info(&[0, 0, 1, 1], &[0, 1, 0, 1]), -0.5));
        assert!(close(
            adjusted_mutual_info(&[0, 0, 0, 1, 1, 1, 2, 2, 2], &[0, 0, 1, 1, 1, 2, 2, 2, 0]),
            0.1650226091288854
        ));
        assert!(close(
            adjusted_mutual_info(&[0, 1, 2, 0, 1, 2, 0, 1], &[1, 1, 0, 0, 2, 2, 1, 0]),
            -0.17423307073191513
        ));
        assert!(close(adjusted_mutual_info(&[0, 0, 0, 0], &[0, 1, 2, 3]), 0.0));
        assert!(close(adjusted_mutual_info(&[5, 5, 5], &[1, 1, 1]), 1.0));
    }

    #[test]
    fn invariant_to_label_names() {
        let a = [1, 1, 2, 3, 3, 3, 2];
        let b = ["x", "y", "y", "z", "z", "x", "y"];
        let renamed = [7, 7, 9, 4, 4, 4, 9];
        assert_eq!(adjusted_mutual_info(&a, &b), adjusted_mutual_info(&renamed, &b));
        assert!((adjusted_mutual_info(&a, &b) - adjusted_mutual_info(&b, &a)).abs() < 1e-12);
    }
}
