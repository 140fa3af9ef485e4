use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, DatasetError};
use crate::rng::Xoshiro256StarStar;

/// One cross-validation fold as row indices into the source dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

fn shuffled_class_indices(ds: &Dataset, seed: u64) -> BTreeMap<ClassId, Vec<usize>> {
    let mut per_class = ds.class_indices();
    for (class, idx) in per_class.iter_mut() {
        let mut rng = Xoshiro256StarStar::derived(seed, &[class.0 as u64]);
        rng.shuffle(idx);
    }
    per_class
}

/// Row indices `(train, test)` of a stratified hold-out split, each sorted.
///
/// Every class contributes `round(count * test_fraction)` rows to the test
/// side, clamped so both sides keep at least one row of the class.
pub fn stratified_split_indices(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    if ds.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let per_class = shuffled_class_indices(ds, seed);
    for (&class, idx) in &per_class {
        if idx.len() < 2 {
            return Err(DatasetError::ClassTooSmall { class, count: idx.len(), needed: 2 });
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in per_class.values() {
        let n = idx.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified hold-out split; see [`stratified_split_indices`].
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    let (train, test) = stratified_split_indices(ds, test_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

/// Stratified k-fold partition.
///
/// Each class's rows are shuffled with the class's own sub-stream and dealt
/// round-robin to the folds. The dealing position carries over from one
/// class to the next so fold sizes stay balanced overall; per class, fold
/// counts differ by at most one.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidParameter(format!("k = {k}, need k >= 2")));
    }
    if ds.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let per_class = shuffled_class_indices(ds, seed);
    for (&class, idx) in &per_class {
        if idx.len() < k {
            return Err(DatasetError::ClassTooSmall { class, count: idx.len(), needed: k });
        }
    }
    let mut assignment = vec![0usize; ds.n_samples()];
    let mut offset = 0usize;
    for idx in per_class.values() {
        for (pos, &row) in idx.iter().enumerate() {
            assignment[row] = (offset + pos) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..ds.n_samples()).partition(|&i| assignment[i] == f);
            Fold { train, valid }
        })
        .collect())
}

/// Up to `n` rows drawn stratified by class (largest-remainder allocation),
/// returned as sorted indices. Used for Shapley background sets.
pub fn stratified_sample(ds: &Dataset, n: usize, seed: u64) -> Vec<usize> {
    let total = ds.n_samples();
    if n >= total {
        return (0..total).collect();
    }
    let per_class = shuffled_class_indices(ds, seed ^ 0x5A5A_5A5A);
    let quotas: Vec<(ClassId, f64)> =
        per_class.iter().map(|(&c, idx)| (c, idx.len() as f64 * n as f64 / total as f64)).collect();
    let mut take: BTreeMap<ClassId, usize> = quotas.iter().map(|&(c, q)| (c, q.floor() as usize)).collect();
    let mut remaining = n - take.values().sum::<usize>();
    let mut by_remainder: Vec<(ClassId, f64)> = quotas.iter().map(|&(c, q)| (c, q - q.floor())).collect();
    // largest remainder first, ties by class id
    by_remainder.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (c, _) in by_remainder {
        if remaining == 0 {
            break;
        }
        if take[&c] < per_class[&c].len() {
            *take.get_mut(&c).unwrap() += 1;
            remaining -= 1;
        }
    }
    let mut out: Vec<usize> = per_class.iter().flat_map(|(c, idx)| idx[..take[c]].iter().copied()).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy(counts: &[(u8, usize)]) -> Dataset {
        let labels: Vec<ClassId> = counts.iter().flat_map(|&(c, n)| std::iter::repeat_n(ClassId(c), n)).collect();
        let n = labels.len();
        let values = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        Dataset::from_parts(&["x"], values, labels).unwrap()
    }

    fn count(ds: &Dataset, idx: &[usize], c: u8) -> usize {
        idx.iter().filter(|&&i| ds.labels()[i] == ClassId(c)).count()
    }

    #[test]
    fn split_exact_proportions_and_deterministic() {
        let ds = toy(&[(0, 100), (1, 20)]);
        let (train, test) = stratified_split_indices(&ds, 0.2, 7).unwrap();
        assert_eq!(count(&ds, &test, 0), 20);
        assert_eq!(count(&ds, &test, 1), 4);
        assert_eq!(train.len() + test.len(), 120);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..120).collect::<Vec<_>>());
        assert_eq!(stratified_split_indices(&ds, 0.2, 7).unwrap(), (train, test));
    }

    #[test]
    fn split_class_too_small() {
        let ds = toy(&[(0, 10), (3, 1)]);
        assert!(matches!(stratified_split(&ds, 0.2, 1), Err(DatasetError::ClassTooSmall { class: ClassId(3), .. })));
    }

    #[test]
    fn kfold_divisible() {
        let ds = toy(&[(0, 50), (1, 50)]);
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(count(&ds, &f.valid, 0), 10);
            assert_eq!(count(&ds, &f.valid, 1), 10);
            assert_eq!(f.train.len() + f.valid.len(), 100);
        }
    }

    #[test]
    fn kfold_remainder() {
        let ds = toy(&[(0, 52), (1, 50)]);
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        let mut seen = [false; 102];
        for f in &folds {
            let a = count(&ds, &f.valid, 0);
            assert!(a == 10 || a == 11);
            assert_eq!(count(&ds, &f.valid, 1), 10);
            for &i in &f.valid {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn kfold_too_small() {
        let ds = toy(&[(0, 50), (2, 3)]);
        assert!(matches!(
            stratified_kfold(&ds, 5, 1),
            Err(DatasetError::ClassTooSmall { class: ClassId(2), count: 3, needed: 5 })
        ));
    }

    #[test]
    fn stratified_sample_allocates() {
        let ds = toy(&[(0, 90), (1, 10)]);
        let idx = stratified_sample(&ds, 20, 1);
        assert_eq!(idx.len(), 20);
        assert_eq!(count(&ds, &idx, 0), 18);
        assert_eq!(count(&ds, &idx, 1), 2);
    }
}
