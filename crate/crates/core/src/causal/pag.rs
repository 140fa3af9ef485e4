//! FCI and RFCI: skeleton search followed by PAG orientation.
//!
//! Orientation rules follow Zhang's complete rule set without the
//! selection-bias rules (R5-R7), since the process data is not selected on
//! any variable.

use std::collections::{HashMap, HashSet, VecDeque};

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::ci::{CiTest, FisherZ};
use super::graph::{GraphKind, Mark, MixedGraph};
use super::pc::{skeleton_graph, unshielded_triples};
use super::skeleton::{stable_skeleton, subsets, SepsetTable, Skeleton};
use super::{CausalError, ConstraintConfig, ConstraintOutput};

use Mark::{Arrow, Circle, Tail};

fn orient_colliders(g: &mut MixedGraph, sepsets: &SepsetTable) {
    for (i, k, j) in unshielded_triples(g) {
        if !sepsets.contains(i, j, k) {
            g.set_mark(i, k, Arrow);
            g.set_mark(j, k, Arrow);
        }
    }
}

/// Vertices reachable from `i` along paths on which every inner vertex is a
/// collider or sits in a triangle with its path neighbours.
pub fn possible_dsep(g: &MixedGraph, i: usize) -> Vec<usize> {
    let mut found = vec![false; g.n()];
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for b in g.neighbors(i) {
        found[b] = true;
        seen.insert((i, b));
        queue.push_back((i, b));
    }
    while let Some((a, b)) = queue.pop_front() {
        for c in g.neighbors(b) {
            if c == a || c == i {
                continue;
            }
            let collider = g.mark(a, b) == Some(Arrow) && g.mark(c, b) == Some(Arrow);
            if (collider || g.adjacent(a, c)) && seen.insert((b, c)) {
                found[c] = true;
                queue.push_back((b, c));
            }
        }
    }
    (0..g.n()).filter(|&v| found[v] && v != i).collect()
}

fn is_subset(s: &[usize], of: &[usize]) -> bool {
    s.iter().all(|v| of.contains(v))
}

/// Second edge-removal pass conditioning on subsets of possible-d-sep sets.
fn pds_pass<T: CiTest + ?Sized>(
    g: &MixedGraph,
    sk: &mut Skeleton,
    test: &T,
    max_cond: usize,
) -> Result<(), CausalError> {
    let n = g.n();
    let pds: Vec<Vec<usize>> = (0..n).map(|i| possible_dsep(g, i)).collect();
    let pairs: Vec<(usize, usize)> = g.skeleton().into_iter().collect();
    let found: Vec<Result<Option<Vec<usize>>, CausalError>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let ai: Vec<usize> = g.neighbors(i).into_iter().filter(|&v| v != j).collect();
            let aj: Vec<usize> = g.neighbors(j).into_iter().filter(|&v| v != i).collect();
            let pi: Vec<usize> = pds[i].iter().copied().filter(|&v| v != j).collect();
            let pj: Vec<usize> = pds[j].iter().copied().filter(|&v| v != i).collect();
            for l in 1..=max_cond {
                for s in subsets(&pi, l) {
                    if !is_subset(&s, &ai) && test.test(i, j, &s)?.independent {
                        return Ok(Some(s));
                    }
                }
            }
            for l in 1..=max_cond {
                for s in subsets(&pj, l) {
                    if !is_subset(&s, &aj) && !is_subset(&s, &pi) && test.test(i, j, &s)?.independent {
                        return Ok(Some(s));
                    }
                }
            }
            Ok(None)
        })
        .collect();
    for (&(i, j), r) in pairs.iter().zip(found) {
        if let Some(s) = r? {
            sk.remove(i, j, s);
        }
    }
    Ok(())
}

fn set_directed(g: &mut MixedGraph, from: usize, to: usize) {
    g.set_mark(to, from, Tail);
    g.set_mark(from, to, Arrow);
}

/// Possibly directed edge `a -> b`: no arrowhead at `a`, no tail at `b`.
fn pd_edge(g: &MixedGraph, a: usize, b: usize) -> bool {
    g.adjacent(a, b) && g.mark(b, a) != Some(Arrow) && g.mark(a, b) != Some(Tail)
}

/// Whether an uncovered possibly directed path continues from the edge
/// `prev -> start` to `target` without visiting `forbid`.
fn upd_path(g: &MixedGraph, prev: usize, start: usize, target: usize, forbid: &[usize]) -> bool {
    if start == target {
        return true;
    }
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut queue = VecDeque::from([(prev, start)]);
    seen.insert((prev, start));
    while let Some((a, b)) = queue.pop_front() {
        for c in g.neighbors(b) {
            if c == a || forbid.contains(&c) || !pd_edge(g, b, c) || g.adjacent(a, c) {
                continue;
            }
            if c == target {
                return true;
            }
            if seen.insert((b, c)) {
                queue.push_back((b, c));
            }
        }
    }
    false
}

fn rule1(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for b in 0..n {
        for a in 0..n {
            if g.mark(a, b) != Some(Arrow) {
                continue;
            }
            for c in g.neighbors(b) {
                if c != a && g.mark(c, b) == Some(Circle) && !g.adjacent(a, c) {
                    set_directed(g, b, c);
                    changed = true;
                }
            }
        }
    }
    changed
}

fn rule2(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for a in 0..n {
        for c in g.neighbors(a) {
            if g.mark(a, c) != Some(Circle) {
                continue;
            }
            let hit = g.neighbors(a).into_iter().any(|b| {
                b != c
                    && g.adjacent(b, c)
                    && ((g.is_directed(a, b) && g.mark(b, c) == Some(Arrow))
                        || (g.mark(a, b) == Some(Arrow) && g.is_directed(b, c)))
            });
            if hit {
                g.set_mark(a, c, Arrow);
                changed = true;
            }
        }
    }
    changed
}

fn rule3(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for t in 0..n {
        for b in g.neighbors(t) {
            if g.mark(t, b) != Some(Circle) {
                continue;
            }
            let into_b: Vec<usize> =
                g.neighbors(b).into_iter().filter(|&x| x != t && g.mark(x, b) == Some(Arrow)).collect();
            let hit = into_b.iter().enumerate().any(|(p, &a)| {
                into_b[p + 1..].iter().any(|&c| {
                    !g.adjacent(a, c)
                        && g.adjacent(a, t)
                        && g.adjacent(c, t)
                        && g.mark(a, t) == Some(Circle)
                        && g.mark(c, t) == Some(Circle)
                })
            });
            if hit {
                g.set_mark(t, b, Arrow);
                changed = true;
            }
        }
    }
    changed
}

/// First discriminating path `[theta, .., alpha, beta, gamma]` for some
/// `beta` with a circle at `beta` on the edge `beta - gamma`.
fn discriminating_path(g: &MixedGraph) -> Option<Vec<usize>> {
    let n = g.n();
    for gamma in 0..n {
        for beta in g.neighbors(gamma) {
            if g.mark(gamma, beta) != Some(Circle) {
                continue;
            }
            for alpha in g.neighbors(beta) {
                if alpha == gamma || g.mark(beta, alpha) != Some(Arrow) || !g.is_directed(alpha, gamma) {
                    continue;
                }
                let mut prev: HashMap<usize, usize> = HashMap::new();
                let mut visited: HashSet<usize> = [alpha, beta, gamma].into_iter().collect();
                let mut queue = VecDeque::from([alpha]);
                while let Some(v) = queue.pop_front() {
                    for w in g.neighbors(v) {
                        if visited.contains(&w) || g.mark(w, v) != Some(Arrow) {
                            continue;
                        }
                        if !g.adjacent(w, gamma) {
                            let mut path = vec![w, v];
                            let mut cur = v;
                            while let Some(&p) = prev.get(&cur) {
                                path.push(p);
                                cur = p;
                            }
                            path.push(beta);
                            path.push(gamma);
                            return Some(path);
                        }
                        if g.is_directed(w, gamma) && g.mark(v, w) == Some(Arrow) {
                            visited.insert(w);
                            prev.insert(w, v);
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
    }
    None
}

fn orient_discriminated(g: &mut MixedGraph, path: &[usize], sepsets: &SepsetTable) {
    let k = path.len();
    let (theta, alpha, beta, gamma) = (path[0], path[k - 3], path[k - 2], path[k - 1]);
    if sepsets.contains(theta, gamma, beta) {
        set_directed(g, beta, gamma);
    } else {
        g.set_mark(alpha, beta, Arrow);
        g.set_mark(beta, alpha, Arrow);
        g.set_mark(gamma, beta, Arrow);
        g.set_mark(beta, gamma, Arrow);
    }
}

fn rule8(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for a in 0..n {
        for c in g.neighbors(a) {
            if g.mark(c, a) != Some(Circle) || g.mark(a, c) != Some(Arrow) {
                continue;
            }
            let hit = g.neighbors(a).into_iter().any(|b| {
                b != c
                    && g.mark(b, a) == Some(Tail)
                    && matches!(g.mark(a, b), Some(Arrow) | Some(Circle))
                    && g.is_directed(b, c)
            });
            if hit {
                g.set_mark(c, a, Tail);
                changed = true;
            }
        }
    }
    changed
}

fn rule9(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for a in 0..n {
        for c in g.neighbors(a) {
            if g.mark(c, a) != Some(Circle) || g.mark(a, c) != Some(Arrow) {
                continue;
            }
            let hit = g
                .neighbors(a)
                .into_iter()
                .any(|b| b != c && pd_edge(g, a, b) && !g.adjacent(b, c) && upd_path(g, a, b, c, &[a]));
            if hit {
                g.set_mark(c, a, Tail);
                changed = true;
            }
        }
    }
    changed
}

fn rule10(g: &mut MixedGraph) -> bool {
    let n = g.n();
    let mut changed = false;
    for a in 0..n {
        for c in g.neighbors(a) {
            if g.mark(c, a) != Some(Circle) || g.mark(a, c) != Some(Arrow) {
                continue;
            }
            let into_c: Vec<usize> = g.parents(c).into_iter().filter(|&v| v != a).collect();
            let starts: Vec<usize> = g.neighbors(a).into_iter().filter(|&m| m != c && pd_edge(g, a, m)).collect();
            let mut hit = false;
            'outer: for (p, &b) in into_c.iter().enumerate() {
                for &t in &into_c[p + 1..] {
                    for &mu in &starts {
                        if !upd_path(g, a, mu, b, &[a, c]) {
                            continue;
                        }
                        for &om in &starts {
                            if om != mu && !g.adjacent(mu, om) && upd_path(g, a, om, t, &[a, c]) {
                                hit = true;
                                break 'outer;
                            }
                        }
                    }
                    // the same pair with the roles of the two parents swapped
                    for &mu in &starts {
                        if !upd_path(g, a, mu, t, &[a, c]) {
                            continue;
                        }
                        for &om in &starts {
                            if om != mu && !g.adjacent(mu, om) && upd_path(g, a, om, b, &[a, c]) {
                                hit = true;
                                break 'outer;
                            }
                        }
                    }
                }
            }
            if hit {
                g.set_mark(c, a, Tail);
                changed = true;
            }
        }
    }
    changed
}

enum Outcome {
    Done,
    /// RFCI removed an edge while checking a discriminating path.
    Restart,
}

/// RFCI check of a discriminating path: each pair of successive vertices is
/// tested given `sepset(theta, gamma)`; independent pairs lose their edge.
fn rfci_path_check<T: CiTest + ?Sized>(path: &[usize], sk: &mut Skeleton, test: &T) -> Result<bool, CausalError> {
    let theta = path[0];
    let gamma = *path.last().unwrap();
    let base: Vec<usize> = sk.sepsets.get(theta, gamma).map(<[usize]>::to_vec).unwrap_or_default();
    let mut removed = false;
    for w in path.windows(2) {
        let (u, v) = (w[0], w[1]);
        if !sk.adj[u][v] {
            continue;
        }
        let s: Vec<usize> = base.iter().copied().filter(|&x| x != u && x != v).collect();
        if test.test(u, v, &s)?.independent {
            let min = minimal_sepset(test, u, v, &s)?;
            sk.remove(u, v, min);
            removed = true;
        }
    }
    Ok(removed)
}

fn apply_rules<T: CiTest + ?Sized>(
    g: &mut MixedGraph,
    sk: &mut Skeleton,
    rfci: Option<&T>,
) -> Result<Outcome, CausalError> {
    loop {
        let mut changed = rule1(g) | rule2(g) | rule3(g);
        if let Some(path) = discriminating_path(g) {
            if let Some(test) = rfci {
                if rfci_path_check(&path, sk, test)? {
                    return Ok(Outcome::Restart);
                }
            }
            orient_discriminated(g, &path, &sk.sepsets);
            changed = true;
        }
        changed |= rule8(g) | rule9(g) | rule10(g);
        if !changed {
            return Ok(Outcome::Done);
        }
    }
}

/// FCI with an arbitrary CI test.
pub fn fci_with_test<T: CiTest + ?Sized>(
    test: &T,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    if names.len() < 2 || names.len() != test.n_vars() {
        return Err(CausalError::TooFewVariables(names.len()));
    }
    let before = test.calls();
    let mut sk = stable_skeleton(test, cfg.max_cond)?;
    let mut g = skeleton_graph(names, &sk, Circle, GraphKind::Pag);
    orient_colliders(&mut g, &sk.sepsets);
    pds_pass(&g, &mut sk, test, cfg.max_cond)?;
    let mut g = skeleton_graph(names, &sk, Circle, GraphKind::Pag);
    orient_colliders(&mut g, &sk.sepsets);
    apply_rules::<T>(&mut g, &mut sk, None)?;
    Ok(ConstraintOutput { graph: g, sepsets: sk.sepsets, ci_calls: test.calls() - before })
}

/// Smallest subset of `within` (by size, then lexicographic) separating
/// `u` and `v`; `within` itself is assumed to separate them.
fn minimal_sepset<T: CiTest + ?Sized>(
    test: &T,
    u: usize,
    v: usize,
    within: &[usize],
) -> Result<Vec<usize>, CausalError> {
    for l in 0..within.len() {
        for s in subsets(within, l) {
            if test.test(u, v, &s)?.independent {
                return Ok(s);
            }
        }
    }
    Ok(within.to_vec())
}

/// RFCI collider detection: every candidate collider `i *-> k <-* j` is
/// confirmed by testing `i - k` and `j - k` given `sepset(i, j)`; edges found
/// independent are removed and the triple list updated.
fn rfci_colliders<T: CiTest + ?Sized>(
    names: &[String],
    sk: &mut Skeleton,
    test: &T,
    confirmed: &mut HashSet<(usize, usize, usize)>,
) -> Result<Vec<(usize, usize, usize)>, CausalError> {
    let g = skeleton_graph(names, sk, Circle, GraphKind::Pag);
    let mut queue: VecDeque<(usize, usize, usize)> = unshielded_triples(&g).into();
    let mut colliders = Vec::new();
    while let Some((i, k, j)) = queue.pop_front() {
        if !(sk.adj[i][k] && sk.adj[k][j]) || sk.adj[i][j] || sk.sepsets.contains(i, j, k) {
            continue;
        }
        if confirmed.contains(&(i, k, j)) {
            colliders.push((i, k, j));
            continue;
        }
        let s: Vec<usize> = sk.sepsets.get(i, j).map(<[usize]>::to_vec).unwrap_or_default();
        let ik = test.test(i, k, &s)?.independent;
        let jk = test.test(j, k, &s)?.independent;
        if !ik && !jk {
            confirmed.insert((i, k, j));
            colliders.push((i, k, j));
            continue;
        }
        for (r, indep) in [(i, ik), (j, jk)] {
            if !indep || !sk.adj[r][k] {
                continue;
            }
            let min = minimal_sepset(test, r, k, &s)?;
            sk.remove(r, k, min);
            let (lo, hi) = (r.min(k), r.max(k));
            for v in 0..names.len() {
                if sk.adj[lo][v] && sk.adj[hi][v] {
                    queue.push_back((lo, v, hi));
                }
            }
        }
    }
    colliders.retain(|&(i, k, j)| sk.adj[i][k] && sk.adj[k][j] && !sk.adj[i][j]);
    Ok(colliders)
}

/// RFCI with an arbitrary CI test.
pub fn rfci_with_test<T: CiTest + ?Sized>(
    test: &T,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    if names.len() < 2 || names.len() != test.n_vars() {
        return Err(CausalError::TooFewVariables(names.len()));
    }
    let before = test.calls();
    let mut sk = stable_skeleton(test, cfg.max_cond)?;
    let mut confirmed = HashSet::new();
    loop {
        let colliders = rfci_colliders(names, &mut sk, test, &mut confirmed)?;
        let mut g = skeleton_graph(names, &sk, Circle, GraphKind::Pag);
        for (i, k, j) in colliders {
            g.set_mark(i, k, Arrow);
            g.set_mark(j, k, Arrow);
        }
        match apply_rules(&mut g, &mut sk, Some(test))? {
            Outcome::Done => {
                return Ok(ConstraintOutput { graph: g, sepsets: sk.sepsets, ci_calls: test.calls() - before });
            }
            Outcome::Restart => log::debug!("rfci: edge removed on a discriminating path, re-orienting"),
        }
    }
}

pub fn fci(
    data: ArrayView2<'_, f64>,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    fci_with_test(&FisherZ::new(data, cfg.alpha), names, cfg)
}

pub fn rfci(
    data: ArrayView2<'_, f64>,
    names: &[String],
    cfg: &ConstraintConfig,
) -> Result<ConstraintOutput, CausalError> {
    rfci_with_test(&FisherZ::new(data, cfg.alpha), names, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::ci::DSepOracle;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{i}")).collect()
    }

    #[test]
    fn hidden_common_cause_never_tail_tail() {
        // L(0) -> X(1), L -> Y(2); only X, Y observed
        let o = DSepOracle::with_observed(vec![vec![], vec![0], vec![0]], vec![1, 2]);
        for out in [
            fci_with_test(&o, &names(2), &ConstraintConfig::default()).unwrap(),
            rfci_with_test(&o, &names(2), &ConstraintConfig::default()).unwrap(),
        ] {
            let g = out.graph;
            assert!(g.adjacent(0, 1));
            assert!(!(g.mark(0, 1) == Some(Tail) && g.mark(1, 0) == Some(Tail)));
        }
    }

    #[test]
    fn bidirected_from_latent_confounder() {
        // 0 -> 1 <- L -> 2 <- 3 with L = 4 hidden: PAG 0 o-> 1 <-> 2 <-o 3
        let parents = vec![vec![], vec![0, 4], vec![3, 4], vec![], vec![]];
        let o = DSepOracle::with_observed(parents, vec![0, 1, 2, 3]);
        for g in [
            fci_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph,
            rfci_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph,
        ] {
            assert_eq!(g.n_edges(), 3);
            assert_eq!(g.mark(1, 2), Some(Arrow));
            assert_eq!(g.mark(2, 1), Some(Arrow));
            assert_eq!(g.mark(0, 1), Some(Arrow));
            assert_eq!(g.mark(1, 0), Some(Circle));
        }
    }

    #[test]
    fn rule1_orients_away_from_collider() {
        // 0 -> 2 <- 1, 2 -> 3 fully observed: 2 -> 3 in the PAG
        let o = DSepOracle::new(vec![vec![], vec![], vec![0, 1], vec![2]]);
        let g = fci_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph;
        assert!(g.is_directed(2, 3));
        assert_eq!(g.mark(0, 2), Some(Arrow));
        assert_eq!(g.mark(2, 0), Some(Circle));
    }

    #[test]
    fn possible_dsep_through_collider() {
        let mut g = MixedGraph::new(names(4), GraphKind::Pag);
        g.add_edge(0, 1, Circle, Arrow);
        g.add_edge(1, 2, Arrow, Circle);
        g.add_edge(2, 3, Circle, Circle);
        assert_eq!(possible_dsep(&g, 0), vec![1, 2]);
    }
}
