use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ci::CiTest;
use super::CausalError;

/// Separating sets keyed by unordered vertex pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SepsetTable {
    sets: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SepsetTable {
    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.sets.get(&Self::key(i, j)).map(Vec::as_slice)
    }

    pub fn insert(&mut self, i: usize, j: usize, s: Vec<usize>) {
        self.sets.insert(Self::key(i, j), s);
    }

    pub fn contains(&self, i: usize, j: usize, v: usize) -> bool {
        self.get(i, j).is_some_and(|s| s.contains(&v))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// All `k`-element subsets of `items`, lexicographic in item order.
pub(crate) fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Undirected adjacency plus the sepsets that removed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub adj: Vec<Vec<bool>>,
    pub sepsets: SepsetTable,
}

impl Skeleton {
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.adj.len()).filter(|&j| self.adj[i][j]).collect()
    }

    pub fn remove(&mut self, i: usize, j: usize, sepset: Vec<usize>) {
        self.adj[i][j] = false;
        self.adj[j][i] = false;
        self.sepsets.insert(i, j, sepset);
    }
}

/// Searches for a separating set of `i` and `j` among `k`-subsets of `from_i`,
/// then of `from_j` (skipping sets already covered by `from_i`).
pub(crate) fn find_sepset<T: CiTest + ?Sized>(
    test: &T,
    i: usize,
    j: usize,
    from_i: &[usize],
    from_j: &[usize],
    k: usize,
) -> Result<Option<Vec<usize>>, CausalError> {
    for s in subsets(from_i, k) {
        if test.test(i, j, &s)?.independent {
            return Ok(Some(s));
        }
    }
    for s in subsets(from_j, k) {
        if s.iter().all(|v| from_i.contains(v)) {
            continue;
        }
        if test.test(i, j, &s)?.independent {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Order-independent skeleton search: adjacency sets used for conditioning
/// are frozen at the start of each level, so pairs within a level can be
/// tested in any order or in parallel.
pub fn stable_skeleton<T: CiTest + ?Sized>(test: &T, max_cond: usize) -> Result<Skeleton, CausalError> {
    let n = test.n_vars();
    let mut sk = Skeleton { adj: vec![vec![true; n]; n], sepsets: SepsetTable::default() };
    for (i, row) in sk.adj.iter_mut().enumerate() {
        row[i] = false;
    }
    for level in 0..=max_cond {
        let frozen: Vec<Vec<usize>> = (0..n).map(|i| sk.neighbors(i)).collect();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| sk.adj[i][j] && (frozen[i].len() > level || frozen[j].len() > level))
            .collect();
        if pairs.is_empty() {
            break;
        }
        let found: Vec<Result<Option<Vec<usize>>, CausalError>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let ai: Vec<usize> = frozen[i].iter().copied().filter(|&v| v != j).collect();
                let aj: Vec<usize> = frozen[j].iter().copied().filter(|&v| v != i).collect();
                find_sepset(test, i, j, &ai, &aj, level)
            })
            .collect();
        for (&(i, j), r) in pairs.iter().zip(found) {
            if let Some(s) = r? {
                sk.remove(i, j, s);
            }
        }
    }
    Ok(sk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::ci::DSepOracle;

    #[test]
    fn subsets_lexicographic() {
        assert_eq!(subsets(&[4, 7, 9], 2), vec![vec![4, 7], vec![4, 9], vec![7, 9]]);
        assert_eq!(subsets(&[1, 2], 0), vec![Vec::<usize>::new()]);
        assert!(subsets(&[1], 2).is_empty());
    }

    #[test]
    fn chain_skeleton_and_sepset() {
        let o = DSepOracle::new(vec![vec![], vec![0], vec![1]]);
        let sk = stable_skeleton(&o, 3).unwrap();
        assert!(sk.adj[0][1] && sk.adj[1][2] && !sk.adj[0][2]);
        assert_eq!(sk.sepsets.get(2, 0), Some(&[1][..]));
    }
}
