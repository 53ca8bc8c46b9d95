//! Best label permutation for a confusion matrix.

use itertools::Itertools;
use pathfinding::prelude::{kuhn_munkres, Matrix};

/// Largest `r` solved by enumerating all `r!` permutations.
pub const EXHAUSTIVE_MAX_R: usize = 8;

/// `confusion[k][l]` counts points with estimated label `k` and true label
/// `l`. Returns `(matched, perm)` where `perm[k]` is the true label matched
/// to estimated label `k` and `matched = sum_k confusion[k][perm[k]]` is
/// maximal.
pub fn best_permutation(confusion: &[Vec<u64>]) -> (u64, Vec<usize>) {
    if confusion.len() <= EXHAUSTIVE_MAX_R {
        exhaustive(confusion)
    } else {
        hungarian(confusion)
    }
}

pub(crate) fn exhaustive(confusion: &[Vec<u64>]) -> (u64, Vec<usize>) {
    let r = confusion.len();
    let mut best = (0u64, (0..r).collect::<Vec<_>>());
    let mut first = true;
    for perm in (0..r).permutations(r) {
        let total: u64 = perm.iter().enumerate().map(|(k, &l)| confusion[k][l]).sum();
        if first || total > best.0 {
            best = (total, perm);
            first = false;
        }
    }
    best
}

pub(crate) fn hungarian(confusion: &[Vec<u64>]) -> (u64, Vec<usize>) {
    let r = confusion.len();
    let weights = Matrix::from_rows(
        confusion
            .iter()
            .map(|row| row.iter().map(|&c| c as i64).collect::<Vec<_>>()),
    )
    .expect("confusion matrix rows have equal length");
    debug_assert_eq!(weights.rows, r);
    let (total, perm) = kuhn_munkres(&weights);
    (total as u64, perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exhaustive_and_hungarian_agree_on_totals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for r in 2..=7 {
            for _ in 0..20 {
                let c: Vec<Vec<u64>> = (0..r)
                    .map(|_| (0..r).map(|_| rng.random_range(0..50)).collect())
                    .collect();
                let (a, pa) = exhaustive(&c);
                let (b, pb) = hungarian(&c);
                assert_eq!(a, b);
                let check = |p: &[usize]| p.iter().enumerate().map(|(k, &l)| c[k][l]).sum::<u64>();
                assert_eq!(check(&pa), a);
                assert_eq!(check(&pb), b);
            }
        }
    }

    #[test]
    fn identity_confusion_gives_identity() {
        let c = vec![vec![5, 0, 0], vec![0, 4, 1], vec![0, 0, 7]];
        assert_eq!(best_permutation(&c), (16, vec![0, 1, 2]));
    }
}
