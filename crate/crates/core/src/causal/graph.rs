use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CausalError;

/// Mark at one end of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Tail,
    Arrow,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Cpdag,
    Pag,
    WeightedDag,
}

/// One edge with the mark at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub mark_a: Mark,
    pub mark_b: Mark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphFile {
    kind: GraphKind,
    vertices: Vec<String>,
    edges: Vec<Edge>,
}

/// Graph with at most one edge per vertex pair and a mark at each end.
///
/// `mark(i, j)` is the mark at `j` on the edge between `i` and `j`, so
/// `i -> j` reads `mark(j, i) == Tail` and `mark(i, j) == Arrow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphFile", try_from = "GraphFile")]
pub struct MixedGraph {
    vertices: Vec<String>,
    kind: GraphKind,
    marks: Vec<Option<Mark>>,
    weights: Vec<Option<f64>>,
}

impl From<MixedGraph> for GraphFile {
    fn from(g: MixedGraph) -> Self {
        GraphFile { kind: g.kind, edges: g.edges(), vertices: g.vertices }
    }
}

impl TryFrom<GraphFile> for MixedGraph {
    type Error = CausalError;

    fn try_from(f: GraphFile) -> Result<Self, Self::Error> {
        let mut g = MixedGraph::new(f.vertices, f.kind);
        for e in f.edges {
            let a = g.index(&e.a).ok_or_else(|| CausalError::UnknownVertex(e.a.clone()))?;
            let b = g.index(&e.b).ok_or_else(|| CausalError::UnknownVertex(e.b.clone()))?;
            g.add_edge(a, b, e.mark_a, e.mark_b);
            if let Some(w) = e.weight {
                g.set_weight(a, b, w);
            }
        }
        g.validate()?;
        Ok(g)
    }
}

impl MixedGraph {
    pub fn new(vertices: Vec<String>, kind: GraphKind) -> Self {
        let n = vertices.len();
        Self { vertices, kind, marks: vec![None; n * n], weights: vec![None; n * n] }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn set_kind(&mut self, kind: GraphKind) {
        self.kind = kind;
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == name)
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.n() + j
    }

    /// Mark at `j` on the edge `i - j`.
    pub fn mark(&self, i: usize, j: usize) -> Option<Mark> {
        self.marks[self.at(i, j)]
    }

    /// Sets the mark at `j` on an existing edge `i - j`.
    pub fn set_mark(&mut self, i: usize, j: usize, m: Mark) {
        debug_assert!(self.adjacent(i, j));
        let k = self.at(i, j);
        self.marks[k] = Some(m);
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.marks[self.at(i, j)].is_some()
    }

    /// Inserts or replaces the edge `a - b`.
    pub fn add_edge(&mut self, a: usize, b: usize, mark_a: Mark, mark_b: Mark) {
        assert_ne!(a, b, "self loops are not allowed");
        let (ab, ba) = (self.at(a, b), self.at(b, a));
        self.marks[ab] = Some(mark_b);
        self.marks[ba] = Some(mark_a);
    }

    pub fn add_directed(&mut self, from: usize, to: usize) {
        self.add_edge(from, to, Mark::Tail, Mark::Arrow);
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.add_edge(a, b, Mark::Tail, Mark::Tail);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        let (ab, ba) = (self.at(a, b), self.at(b, a));
        self.marks[ab] = None;
        self.marks[ba] = None;
        self.weights[ab] = None;
        self.weights[ba] = None;
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.weights[self.at(a, b)]
    }

    pub fn set_weight(&mut self, a: usize, b: usize, w: f64) {
        let (ab, ba) = (self.at(a, b), self.at(b, a));
        self.weights[ab] = Some(w);
        self.weights[ba] = Some(w);
    }

    /// `from -> to`: tail at `from`, arrowhead at `to`.
    pub fn is_directed(&self, from: usize, to: usize) -> bool {
        self.mark(to, from) == Some(Mark::Tail) && self.mark(from, to) == Some(Mark::Arrow)
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.adjacent(i, j)).collect()
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.is_directed(j, i)).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.marks.iter().filter(|m| m.is_some()).count() / 2
    }

    /// Adjacent pairs `(i, j)` with `i < j`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        let n = self.n();
        let mut s = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacent(i, j) {
                    s.insert((i, j));
                }
            }
        }
        s
    }

    /// Edges in vertex-index order, `a` before `b`.
    pub fn edges(&self) -> Vec<Edge> {
        self.skeleton()
            .into_iter()
            .map(|(i, j)| Edge {
                a: self.vertices[i].clone(),
                b: self.vertices[j].clone(),
                mark_a: self.mark(j, i).unwrap(),
                mark_b: self.mark(i, j).unwrap(),
                weight: self.weight(i, j),
            })
            .collect()
    }

    /// Topological order over directed edges, or `None` if they form a cycle.
    /// Ties resolve to the lowest index.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.parents(i).len()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for (w, d) in indeg.iter_mut().enumerate() {
                if self.is_directed(v, w) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(w);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks the mark combinations allowed by the kind and, for weighted
    /// DAGs, acyclicity.
    pub fn validate(&self) -> Result<(), CausalError> {
        for e in self.edges() {
            let ok = match self.kind {
                GraphKind::Pag => true,
                GraphKind::Cpdag => {
                    !matches!(e.mark_a, Mark::Circle)
                        && !matches!(e.mark_b, Mark::Circle)
                        && !(e.mark_a == Mark::Arrow && e.mark_b == Mark::Arrow)
                }
                GraphKind::WeightedDag => {
                    matches!((e.mark_a, e.mark_b), (Mark::Tail, Mark::Arrow) | (Mark::Arrow, Mark::Tail))
                }
            };
            if !ok {
                return Err(CausalError::InvalidMarks { a: e.a, b: e.b, kind: self.kind });
            }
        }
        if self.kind == GraphKind::WeightedDag && self.topological_order().is_none() {
            return Err(CausalError::Cyclic);
        }
        Ok(())
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Graphviz rendering. Arrowheads map to `normal`, tails to `none` and
    /// circles to `odot`; weights become two-decimal labels.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{}\" {{", dot_escape(name));
        let _ = writeln!(s, "  node [shape=ellipse];");
        for v in &self.vertices {
            let _ = writeln!(s, "  \"{}\";", dot_escape(v));
        }
        let head = |m: Mark| match m {
            Mark::Arrow => "normal",
            Mark::Tail => "none",
            Mark::Circle => "odot",
        };
        for e in self.edges() {
            let mut attrs = format!("dir=both, arrowtail={}, arrowhead={}", head(e.mark_a), head(e.mark_b));
            if let Some(w) = e.weight {
                let _ = write!(attrs, ", label=\"{w:.2}\"");
            }
            let _ = writeln!(s, "  \"{}\" -> \"{}\" [{attrs}];", dot_escape(&e.a), dot_escape(&e.b));
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CausalError> {
        serde_json::from_str(text).map_err(|e| CausalError::Parse(e.to_string()))
    }

    /// Same graph with circle marks replaced by tails.
    pub fn collapse_circles(&self) -> MixedGraph {
        let mut g = self.clone();
        for m in g.marks.iter_mut().flatten() {
            if *m == Mark::Circle {
                *m = Mark::Tail;
            }
        }
        g
    }

    /// Subgraph on the given vertex positions, in that order.
    pub fn induced(&self, keep: &[usize]) -> MixedGraph {
        let mut g = MixedGraph::new(keep.iter().map(|&i| self.vertices[i].clone()).collect(), self.kind);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                if let Some(m) = self.mark(i, j) {
                    let k = g.at(a, b);
                    g.marks[k] = Some(m);
                    g.weights[k] = self.weight(i, j);
                }
            }
        }
        g
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
