use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// Assignment of every record to one of `k` cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold index of record `i`.
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Record indices held out in `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    /// Record indices used for training when `fold` is held out, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Slices a seeded uniform permutation of `0..n_records` into `k` contiguous,
/// near-equal folds.
pub fn split_folds(n_records: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n_records {
        return Err(Error::invalid(format!(
            "fold count {k} must lie in 2..={n_records}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let perm = rng::permutation(&mut rng, n_records);
    let mut fold_of = vec![0; n_records];
    for (pos, &rec) in perm.iter().enumerate() {
        fold_of[rec] = pos * k / n_records;
    }
    Ok(FoldAssignment { k, seed, fold_of })
}
