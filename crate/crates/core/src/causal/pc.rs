use ndarray::ArrayView2;

use super::ci::{CiTest, FisherZ};
use super::graph::{GraphKind, Mark, MixedGraph};
use super::skeleton::{stable_skeleton, SepsetTable, Skeleton};
use super::{CausalError, ConstraintConfig, ConstraintOutput};

fn undirected(g: &MixedGraph, a: usize, b: usize) -> bool {
    g.mark(a, b) == Some(Mark::Tail) && g.mark(b, a) == Some(Mark::Tail)
}

pub(crate) fn skeleton_graph(names: &[String], sk: &Skeleton, mark: Mark, kind: GraphKind) -> MixedGraph {
    let mut g = MixedGraph::new(names.to_vec(), kind);
    let n = names.len();
    for i in 0..n {
        for j in i + 1..n {
            if sk.adj[i][j] {
                g.add_edge(i, j, mark, mark);
            }
        }
    }
    g
}

/// Unshielded triples `(i, k, j)` with `i < j`, in index order.
pub(crate) fn unshielded_triples(g: &MixedGraph) -> Vec<(usize, usize, usize)> {
    let n = g.n();
    let mut out = Vec::new();
    for k in 0..n {
        let nb = g.neighbors(k);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if !g.adjacent(i, j) {
                    out.push((i, k, j));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Orients `i -> k <- j` for unshielded triples with `k` outside the
/// sepset. An edge already pointing the other way is left alone.
fn orient_colliders(g: &mut MixedGraph, sepsets: &SepsetTable) {
    for (i, k, j) in unshielded_triples(g) {
        if sepsets.contains(i, j, k) {
            continue;
        }
        for a in [i, j] {
            if !g.is_directed(k, a) {
                g.set_mark(a, k, Mark::Arrow);
            }
        }
    }
}

/// Meek rules R1-R3 applied until nothing changes.
fn meek(g: &mut MixedGraph) {
    let n = g.n();
    loop {
        let mut changed = false;
        for b in 0..n {
            for c in 0..n {
                if !undirected(g, b, c) {
                    continue;
                }
                // R1: a -> b - c, a and c not adjacent
                let r1 = (0..n).any(|a| a != c && g.is_directed(a, b) && !g.adjacent(a, c));
                // R2: b -> a -> c
                let r2 = (0..n).any(|a| g.is_directed(b, a) && g.is_directed(a, c));
                // R3: b - x -> c, b - y -> c, x and y not adjacent
                let r3 = {
                    let xs: Vec<usize> = (0..n).filter(|&x| undirected(g, b, x) && g.is_directed(x, c)).collect();
                    xs.iter().enumerate().any(|(p, &x)| xs[p + 1..].iter().any(|&y| !g.adjacent(x, y)))
                };
                if r1 || r2 || r3 {
                    g.set_mark(b, c, Mark::Arrow);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// PC with an arbitrary CI test.
pub fn pc_with_test<T: CiTest + ?Sized>(
    test: &T,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    if names.len() < 2 || names.len() != test.n_vars() {
        return Err(CausalError::TooFewVariables(names.len()));
    }
    let before = test.calls();
    let sk = stable_skeleton(test, cfg.max_cond)?;
    let mut g = skeleton_graph(names, &sk, Mark::Tail, GraphKind::Cpdag);
    orient_colliders(&mut g, &sk.sepsets);
    meek(&mut g);
    debug_assert!(g.validate().is_ok());
    Ok(ConstraintOutput { graph: g, sepsets: sk.sepsets, ci_calls: test.calls() - before })
}

/// PC on data with the Fisher z-test.
pub fn pc(
    data: ArrayView2<'_, f64>,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    pc_with_test(&FisherZ::new(data, cfg.alpha), names, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::ci::DSepOracle;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{i}")).collect()
    }

    #[test]
    fn collider_oriented() {
        let o = DSepOracle::new(vec![vec![], vec![], vec![0, 1]]);
        let g = pc_with_test(&o, &names(3), &ConstraintConfig::default()).unwrap().graph;
        assert!(g.is_directed(0, 2) && g.is_directed(1, 2));
        assert!(!g.adjacent(0, 1));
    }

    #[test]
    fn chain_stays_undirected() {
        let o = DSepOracle::new(vec![vec![], vec![0], vec![1]]);
        let g = pc_with_test(&o, &names(3), &ConstraintConfig::default()).unwrap().graph;
        assert!(undirected(&g, 0, 1) && undirected(&g, 1, 2));
        assert!(!g.adjacent(0, 2));
    }

    #[test]
    fn meek_r1_propagates() {
        // 0 -> 2 <- 1, 2 -> 3
        let o = DSepOracle::new(vec![vec![], vec![], vec![0, 1], vec![2]]);
        let g = pc_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph;
        assert!(g.is_directed(2, 3));
    }
}
