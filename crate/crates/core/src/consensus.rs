//! Agreement between causal graphs: edge frequency tables, consensus
//! graphs, structural Hamming distance and degree centrality.
//!
//! Circle marks collapse to tails before any comparison, so a PAG edge
//! `a o-> b` counts as `a -> b` and `a o-o b` as undirected.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{GraphKind, Mark, MixedGraph};

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("graphs have different vertex sets")]
    VertexSetMismatch,
    #[error("no graphs to compare")]
    NoGraphs,
}

/// Orientation of an unordered pair after circle collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairState {
    None,
    Undirected,
    Forward,
    Backward,
    Bidirected,
    Other,
}

fn pair_state(g: &MixedGraph, i: usize, j: usize) -> PairState {
    let collapse = |m: Option<Mark>| m.map(|m| if m == Mark::Circle { Mark::Tail } else { m });
    match (collapse(g.mark(j, i)), collapse(g.mark(i, j))) {
        (None, _) | (_, None) => PairState::None,
        (Some(Mark::Tail), Some(Mark::Tail)) => PairState::Undirected,
        (Some(Mark::Tail), Some(Mark::Arrow)) => PairState::Forward,
        (Some(Mark::Arrow), Some(Mark::Tail)) => PairState::Backward,
        (Some(Mark::Arrow), Some(Mark::Arrow)) => PairState::Bidirected,
        _ => PairState::Other,
    }
}

/// Index map from `g`'s vertices to `reference`'s, if the sets agree.
fn align(reference: &[String], g: &MixedGraph) -> Result<Vec<usize>, ConsensusError> {
    if g.n() != reference.len() {
        return Err(ConsensusError::VertexSetMismatch);
    }
    reference.iter().map(|v| g.index(v).ok_or(ConsensusError::VertexSetMismatch)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFrequency {
    pub a: String,
    pub b: String,
    /// Graphs whose skeleton contains the pair.
    pub count: usize,
    pub algorithms: Vec<String>,
    /// Graphs with `a -> b`.
    pub a_to_b: usize,
    /// Graphs with `b -> a`.
    pub b_to_a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequencyTable {
    pub vertices: Vec<String>,
    pub algorithms: Vec<String>,
    /// Pairs seen at least once, in vertex-index order.
    pub pairs: Vec<PairFrequency>,
}

impl EdgeFrequencyTable {
    pub fn n_graphs(&self) -> usize {
        self.algorithms.len()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&PairFrequency> {
        self.pairs.iter().find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }

    /// Count for a pair, zero if never seen.
    pub fn count(&self, a: &str, b: &str) -> usize {
        self.get(a, b).map_or(0, |p| p.count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Symmetric matrix of counts, one row per vertex.
    pub fn to_text_matrix(&self) -> String {
        let n = self.vertices.len();
        let mut m = vec![vec![0usize; n]; n];
        for p in &self.pairs {
            let i = self.vertices.iter().position(|v| *v == p.a).unwrap();
            let j = self.vertices.iter().position(|v| *v == p.b).unwrap();
            m[i][j] = p.count;
            m[j][i] = p.count;
        }
        let w = self.vertices.iter().map(String::len).max().unwrap_or(1).max(3);
        let mut out = format!("{:w$}", "");
        for v in &self.vertices {
            let _ = write!(out, " {v:>w$}");
        }
        out.push('\n');
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = write!(out, "{v:w$}");
            for c in &m[i] {
                let _ = write!(out, " {c:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Counts, per vertex pair, how many graphs are adjacent there and in which
/// direction. `graphs` pairs an algorithm name with its output.
pub fn skeleton_agreement(graphs: &[(String, MixedGraph)]) -> Result<EdgeFrequencyTable, ConsensusError> {
    let Some((_, first)) = graphs.first() else {
        return Err(ConsensusError::NoGraphs);
    };
    let vertices = first.vertices().to_vec();
    let maps: Vec<Vec<usize>> = graphs.iter().map(|(_, g)| align(&vertices, g)).collect::<Result<_, _>>()?;
    let n = vertices.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut freq = PairFrequency {
                a: vertices[i].clone(),
                b: vertices[j].clone(),
                count: 0,
                algorithms: Vec::new(),
                a_to_b: 0,
                b_to_a: 0,
            };
            for ((name, g), map) in graphs.iter().zip(&maps) {
                match pair_state(g, map[i], map[j]) {
                    PairState::None => continue,
                    PairState::Forward => freq.a_to_b += 1,
                    PairState::Backward => freq.b_to_a += 1,
                    _ => {}
                }
                freq.count += 1;
                freq.algorithms.push(name.clone());
            }
            if freq.count > 0 {
                pairs.push(freq);
            }
        }
    }
    Ok(EdgeFrequencyTable { vertices, algorithms: graphs.iter().map(|(n, _)| n.clone()).collect(), pairs })
}

/// Pairs with `count >= min_count`, directed when every directed occurrence
/// points the same way and undirected otherwise.
pub fn consensus_graph(table: &EdgeFrequencyTable, min_count: usize) -> MixedGraph {
    let mut g = MixedGraph::new(table.vertices.clone(), GraphKind::Cpdag);
    for p in table.pairs.iter().filter(|p| p.count >= min_count) {
        let a = g.index(&p.a).unwrap();
        let b = g.index(&p.b).unwrap();
        match (p.a_to_b > 0, p.b_to_a > 0) {
            (true, false) => g.add_directed(a, b),
            (false, true) => g.add_directed(b, a),
            _ => g.add_undirected(a, b),
        }
    }
    g
}

/// Pairs whose collapsed state (absent, undirected, either direction,
/// bidirected) differs between the two graphs.
pub fn structural_hamming(g1: &MixedGraph, g2: &MixedGraph) -> Result<usize, ConsensusError> {
    let map = align(g1.vertices(), g2)?;
    let n = g1.n();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            if pair_state(g1, i, j) != pair_state(g2, map[i], map[j]) {
                d += 1;
            }
        }
    }
    Ok(d)
}

/// Skeleton-only distance: pairs adjacent in exactly one graph.
pub fn skeleton_hamming(g1: &MixedGraph, g2: &MixedGraph) -> Result<usize, ConsensusError> {
    let map = align(g1.vertices(), g2)?;
    let n = g1.n();
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            if g1.adjacent(i, j) != g2.adjacent(map[i], map[j]) {
                d += 1;
            }
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centrality {
    pub vertex: String,
    /// Neighbours in the union skeleton.
    pub degree: usize,
    /// Sum of pair counts over incident pairs.
    pub weighted_degree: usize,
}

/// Degree of every vertex in the union skeleton, highest first (ties by
/// vertex order).
pub fn degree_centrality(table: &EdgeFrequencyTable) -> Vec<Centrality> {
    let mut out: Vec<Centrality> = table
        .vertices
        .iter()
        .map(|v| {
            let incident = table.pairs.iter().filter(|p| p.a == *v || p.b == *v);
            Centrality {
                vertex: v.clone(),
                degree: incident.clone().count(),
                weighted_degree: incident.map(|p| p.count).sum(),
            }
        })
        .collect();
    out.sort_by(|x, y| y.weighted_degree.cmp(&x.weighted_degree).then(y.degree.cmp(&x.degree)));
    out
}

/// Undirected pairs of a graph's skeleton, by vertex name.
pub fn skeleton_names(g: &MixedGraph) -> BTreeSet<(String, String)> {
    g.skeleton()
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (g.vertices()[i].clone(), g.vertices()[j].clone());
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}
