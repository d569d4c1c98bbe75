//! Simple undirected graphs with distinguished input/output vertices, vertex
//! colourings, and the colouring routines that define test-run types.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vertex = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate vertex {0} in vertex list")]
    DuplicateVertex(Vertex),
    #[error("self-loop on vertex {0}")]
    SelfLoop(Vertex),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(Vertex, Vertex),
    #[error("edge endpoint {0} is not a vertex")]
    UnknownEndpoint(Vertex),
    #[error("input/output vertex {0} is not a vertex")]
    UnknownTerminal(Vertex),
    #[error("duplicate entry {0} in input/output list")]
    DuplicateTerminal(Vertex),
    #[error("colouring does not cover exactly the vertex set (offending vertex {0})")]
    ColouringDomain(Vertex),
    #[error("colour {colour} on vertex {vertex} exceeds colour count {k}")]
    ColourOutOfRange { vertex: Vertex, colour: usize, k: usize },
}

/// An undirected simple graph over `u32` vertex ids, with ordered input and
/// output vertex lists (the orders fix how classical input/output bit vectors
/// line up with vertices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphData", into = "GraphData")]
pub struct Graph {
    vertices: Vec<Vertex>,
    edges: BTreeSet<(Vertex, Vertex)>,
    inputs: Vec<Vertex>,
    outputs: Vec<Vertex>,
    adjacency: BTreeMap<Vertex, BTreeSet<Vertex>>,
}

/// Serialized form of [`Graph`]; construction revalidates the invariants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphData {
    vertices: Vec<Vertex>,
    edges: Vec<(Vertex, Vertex)>,
    inputs: Vec<Vertex>,
    outputs: Vec<Vertex>,
}

impl TryFrom<GraphData> for Graph {
    type Error = GraphError;
    fn try_from(d: GraphData) -> Result<Graph, GraphError> {
        Graph::new(d.vertices, &d.edges, d.inputs, d.outputs)
    }
}

impl From<Graph> for GraphData {
    fn from(g: Graph) -> GraphData {
        GraphData {
            edges: g.edges.iter().copied().collect(),
            vertices: g.vertices,
            inputs: g.inputs,
            outputs: g.outputs,
        }
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges, duplicate
    /// vertices, and input/output entries that are not vertices.
    pub fn new(
        vertices: Vec<Vertex>,
        edges: &[(Vertex, Vertex)],
        inputs: Vec<Vertex>,
        outputs: Vec<Vertex>,
    ) -> Result<Graph, GraphError> {
        let mut seen = BTreeSet::new();
        for &v in &vertices {
            if !seen.insert(v) {
                return Err(GraphError::DuplicateVertex(v));
            }
        }
        let mut adjacency: BTreeMap<Vertex, BTreeSet<Vertex>> =
            vertices.iter().map(|&v| (v, BTreeSet::new())).collect();
        let mut edge_set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            for &end in &[a, b] {
                if !seen.contains(&end) {
                    return Err(GraphError::UnknownEndpoint(end));
                }
            }
            let key = (a.min(b), a.max(b));
            if !edge_set.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adjacency.get_mut(&a).unwrap().insert(b);
            adjacency.get_mut(&b).unwrap().insert(a);
        }
        for list in [&inputs, &outputs] {
            let mut term_seen = BTreeSet::new();
            for &v in list {
                if !seen.contains(&v) {
                    return Err(GraphError::UnknownTerminal(v));
                }
                if !term_seen.insert(v) {
                    return Err(GraphError::DuplicateTerminal(v));
                }
            }
        }
        Ok(Graph { vertices, edges: edge_set, inputs, outputs, adjacency })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn inputs(&self) -> &[Vertex] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vertex] {
        &self.outputs
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.adjacency.contains_key(&v)
    }

    /// Vertex ids in ascending order — the canonical iteration order for
    /// anything that consumes randomness per vertex.
    pub fn sorted_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Neighbours of `v`; empty set for unknown vertices.
    pub fn neighbours(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.adjacency.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency.get(&v).map_or(0, |s| s.len())
    }

    pub fn max_degree(&self) -> usize {
        self.vertices.iter().map(|&v| self.degree(v)).max().unwrap_or(0)
    }

    /// A random simple graph on vertices `0..n` where each possible edge is
    /// present independently with probability `edge_prob`. No inputs/outputs.
    /// Used by property tests and calibration experiments.
    pub fn random<R: rand::Rng + ?Sized>(n: u32, edge_prob: f64, rng: &mut R) -> Graph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(edge_prob.clamp(0.0, 1.0)) {
                    edges.push((a, b));
                }
            }
        }
        Graph::new((0..n).collect(), &edges, vec![], vec![])
            .expect("generated graph is simple by construction")
    }
}

/// A proper vertex colouring with colours `0..k`; every colour class is an
/// independent set, so a test run may place traps on one whole class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Colouring {
    k: usize,
    assignment: BTreeMap<Vertex, usize>,
}

impl Colouring {
    pub fn new(k: usize, assignment: BTreeMap<Vertex, usize>) -> Colouring {
        Colouring { k, assignment }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn colour_of(&self, v: Vertex) -> Option<usize> {
        self.assignment.get(&v).copied()
    }

    /// Vertices of colour `c`, in ascending id order.
    pub fn class(&self, c: usize) -> Vec<Vertex> {
        self.assignment.iter().filter(|&(_, &col)| col == c).map(|(&v, _)| v).collect()
    }

    pub fn assignment(&self) -> &BTreeMap<Vertex, usize> {
        &self.assignment
    }
}

/// Checks that `c` assigns a colour in range to exactly the vertices of `g`
/// and returns whether the colouring is proper (no edge is monochromatic).
///
/// Domain mismatches are errors rather than `false`: a colouring over the
/// wrong vertex set is malformed, not merely improper.
pub fn validate_colouring(g: &Graph, c: &Colouring) -> Result<bool, GraphError> {
    for &v in g.vertices() {
        match c.colour_of(v) {
            None => return Err(GraphError::ColouringDomain(v)),
            Some(col) if col >= c.k() => {
                return Err(GraphError::ColourOutOfRange { vertex: v, colour: col, k: c.k() })
            }
            Some(_) => {}
        }
    }
    for (&v, _) in c.assignment() {
        if !g.contains(v) {
            return Err(GraphError::ColouringDomain(v));
        }
    }
    Ok(g.edges().all(|(a, b)| c.colour_of(a) != c.colour_of(b)))
}

/// Greedy colouring in the graph's stored vertex order: each vertex takes the
/// smallest colour unused by its already-coloured neighbours. Deterministic
/// given the vertex order, and never uses more than `max_degree + 1` colours.
pub fn greedy_colouring(g: &Graph) -> Colouring {
    greedy_colouring_in_order(g, g.vertices())
}

/// Greedy colouring in an explicit vertex order (callers colouring a
/// measurement pattern pass the pattern's measurement order).
pub fn greedy_colouring_in_order(g: &Graph, order: &[Vertex]) -> Colouring {
    let mut assignment: BTreeMap<Vertex, usize> = BTreeMap::new();
    let mut k = 0;
    for &v in order {
        let used: BTreeSet<usize> =
            g.neighbours(v).filter_map(|u| assignment.get(&u).copied()).collect();
        let colour = (0..).find(|c| !used.contains(c)).unwrap();
        k = k.max(colour + 1);
        assignment.insert(v, colour);
    }
    Colouring { k: k.max(1).min(assignment.len().max(1)), assignment }
}

/// Two-colours the graph by breadth-first search if it is bipartite, else
/// returns `None`. Deterministic: components are rooted in vertex order.
pub fn bipartite_colouring(g: &Graph) -> Option<Colouring> {
    let mut assignment: BTreeMap<Vertex, usize> = BTreeMap::new();
    for &root in g.vertices() {
        if assignment.contains_key(&root) {
            continue;
        }
        assignment.insert(root, 0);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let side = assignment[&v];
            for u in g.neighbours(v) {
                match assignment.get(&u) {
                    None => {
                        assignment.insert(u, 1 - side);
                        queue.push_back(u);
                    }
                    Some(&other) if other == side => return None,
                    Some(_) => {}
                }
            }
        }
    }
    Some(Colouring { k: 2.min(g.num_vertices().max(1)), assignment })
}
