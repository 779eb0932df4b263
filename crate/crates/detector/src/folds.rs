use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed for the `index`-th task of a given `stream`, independent of the order
/// tasks are scheduled in.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Splits `indices` into `k` stratified folds.
///
/// Each class is shuffled and dealt round-robin, negatives continuing where
/// positives stopped, so fold sizes and per-fold positive counts each differ
/// by at most one. Every class needs at least two members so that each
/// training partition contains both classes.
pub fn stratified_folds(
    labels: &[u8],
    indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > indices.len() {
        return Err(Error::InfeasibleFolds {
            k,
            reason: format!("need 2 <= k <= {}", indices.len()),
        });
    }
    let mut pos: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == 0).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InfeasibleFolds {
            k,
            reason: format!(
                "each class needs at least 2 samples, have {} positive and {} negative",
                pos.len(),
                neg.len()
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, &i) in pos.iter().chain(&neg).enumerate() {
        folds[j % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of `fold` within `indices`.
pub fn complement(indices: &[usize], fold: &[usize]) -> Vec<usize> {
    let held: BTreeSet<usize> = fold.iter().copied().collect();
    indices.iter().copied().filter(|i| !held.contains(i)).collect()
}

/// Records the held-out test indices of one evaluation step and rejects any
/// training or search partition that contains one of them.
#[derive(Debug, Clone, Default)]
pub struct IsolationGuard {
    held_out: BTreeSet<usize>,
}

impl IsolationGuard {
    pub fn new(test: &[usize]) -> Self {
        Self {
            held_out: test.iter().copied().collect(),
        }
    }

    pub fn held_out(&self) -> impl Iterator<Item = usize> + '_ {
        self.held_out.iter().copied()
    }

    pub fn check(&self, partition: &[usize]) -> Result<()> {
        match partition.iter().find(|i| self.held_out.contains(i)) {
            Some(&index) => Err(Error::Leakage { index }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_stream_and_index() {
        let a = derive_seed(1, 0, 0);
        assert_eq!(a, derive_seed(1, 0, 0));
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
    }

    #[test]
    fn guard_flags_held_out_index() {
        let g = IsolationGuard::new(&[4]);
        assert!(g.check(&[1, 2, 3]).is_ok());
        assert!(matches!(g.check(&[1, 4]), Err(Error::Leakage { index: 4 })));
    }

    #[test]
    fn folds_reject_single_member_class() {
        let labels = [1, 0, 0, 0, 0];
        assert!(stratified_folds(&labels, &[0, 1, 2, 3, 4], 2, 0).is_err());
        assert!(stratified_folds(&[1, 1, 0, 0], &[0, 1, 2, 3], 5, 0).is_err());
    }
}
