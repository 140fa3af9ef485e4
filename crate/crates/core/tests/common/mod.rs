//! Oracles shared by the integration tests. Everything here is written
//! from first principles and does not call into the algorithms under test.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use dagfault_core::causal::{GraphKind, MixedGraph};

/// Every DAG on `n` labelled vertices as parent lists.
pub fn all_dags(n: usize) -> Vec<Vec<Vec<usize>>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    let total = 3usize.pow(pairs.len() as u32);
    for code in 0..total {
        let mut c = code;
        let mut parents = vec![Vec::new(); n];
        for &(i, j) in &pairs {
            match c % 3 {
                1 => parents[j].push(i),
                2 => parents[i].push(j),
                _ => {}
            }
            c /= 3;
        }
        if acyclic(&parents) {
            out.push(parents);
        }
    }
    out
}

pub fn acyclic(parents: &[Vec<usize>]) -> bool {
    let n = parents.len();
    let mut done = vec![false; n];
    let mut progress = true;
    while progress {
        progress = false;
        for v in 0..n {
            if !done[v] && parents[v].iter().all(|&p| done[p]) {
                done[v] = true;
                progress = true;
            }
        }
    }
    done.iter().all(|&d| d)
}

type Signature = (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize, usize)>);

/// Skeleton plus v-structures: two DAGs are Markov equivalent exactly when
/// these agree.
fn signature(parents: &[Vec<usize>]) -> Signature {
    let n = parents.len();
    let adj = |a: usize, b: usize| parents[a].contains(&b) || parents[b].contains(&a);
    let mut skel = BTreeSet::new();
    let mut vs = BTreeSet::new();
    for j in 0..n {
        for &i in &parents[j] {
            skel.insert((i.min(j), i.max(j)));
        }
        for &a in &parents[j] {
            for &b in &parents[j] {
                if a < b && !adj(a, b) {
                    vs.insert((a, j, b));
                }
            }
        }
    }
    (skel, vs)
}

/// CPDAG of each DAG in `dags`, built from its full equivalence class: an
/// edge is directed iff every member orients it the same way.
pub fn cpdags_by_class(dags: &[Vec<Vec<usize>>], names: &[String]) -> Vec<MixedGraph> {
    let mut classes: BTreeMap<Signature, Vec<usize>> = BTreeMap::new();
    for (k, d) in dags.iter().enumerate() {
        classes.entry(signature(d)).or_default().push(k);
    }
    let mut out = vec![None; dags.len()];
    for (sig, members) in &classes {
        let mut g = MixedGraph::new(names.to_vec(), GraphKind::Cpdag);
        for &(a, b) in &sig.0 {
            let fwd = members.iter().all(|&m| dags[m][b].contains(&a));
            let bwd = members.iter().all(|&m| dags[m][a].contains(&b));
            match (fwd, bwd) {
                (true, _) => g.add_directed(a, b),
                (_, true) => g.add_directed(b, a),
                _ => g.add_undirected(a, b),
            }
        }
        for &m in members {
            out[m] = Some(g.clone());
        }
    }
    out.into_iter().map(Option::unwrap).collect()
}

/// Whether `order` puts every parent before its child.
pub fn order_consistent(order: &[usize], parents: &[Vec<usize>]) -> bool {
    let mut pos = vec![0; order.len()];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    parents.iter().enumerate().all(|(j, ps)| ps.iter().all(|&p| pos[p] < pos[j]))
}

/// Pairs adjacent in exactly one of two parent-list DAG skeleton and graph.
pub fn skeleton_distance(parents: &[Vec<usize>], g: &MixedGraph) -> usize {
    let n = parents.len();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            let truth = parents[i].contains(&j) || parents[j].contains(&i);
            if truth != g.adjacent(i, j) {
                d += 1;
            }
        }
    }
    d
}

/// Pairs whose directed state differs between a DAG and a graph whose
/// edges are read as `a -> b`, undirected, or other.
pub fn directed_distance(parents: &[Vec<usize>], g: &MixedGraph) -> usize {
    let n = parents.len();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            let truth = if parents[j].contains(&i) {
                1
            } else if parents[i].contains(&j) {
                2
            } else {
                0
            };
            let got = if !g.adjacent(i, j) {
                0
            } else if g.is_directed(i, j) {
                1
            } else if g.is_directed(j, i) {
                2
            } else {
                3
            };
            if truth != got {
                d += 1;
            }
        }
    }
    d
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{}", i + 1)).collect()
}
