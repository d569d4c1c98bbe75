//! Measurement patterns: a graph, per-vertex angles, and a flow. Includes
//! structural validation, a small built-in pattern library, and a strict
//! JSON file format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle8;
use crate::flow::FlowSpec;
use crate::graph::{Colouring, Graph, GraphError, Vertex};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("malformed graph: {0}")]
    Graph(#[from] GraphError),
    #[error("pattern file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("pattern file parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("pattern fails validation: {0:?}")]
    Invalid(Vec<PatternViolation>),
}

/// A single structural defect found by [`validate_pattern`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternViolation {
    /// The measurement order is not a permutation of the vertex set.
    OrderNotPermutation,
    /// Vertex has no angle assigned.
    MissingAngle(Vertex),
    /// Angle assigned to a non-vertex.
    AngleOnUnknownVertex(Vertex),
    /// A dependency of `vertex` does not precede it in the order.
    DependencyNotEarlier { vertex: Vertex, dependency: Vertex },
    /// A dependency set mentions a vertex that does not exist.
    DependencyOnUnknownVertex(Vertex),
    /// `f(v)` is not a neighbour of `v`.
    SuccessorNotNeighbour { vertex: Vertex, successor: Vertex },
    /// `f(v)` does not succeed `v` in the measurement order.
    SuccessorNotLater { vertex: Vertex, successor: Vertex },
    /// `f` is defined on an output vertex.
    SuccessorOnOutput(Vertex),
}

impl fmt::Display for PatternViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternViolation::OrderNotPermutation => {
                write!(f, "measurement order is not a permutation of the vertex set")
            }
            PatternViolation::MissingAngle(v) => write!(f, "vertex {v} has no angle"),
            PatternViolation::AngleOnUnknownVertex(v) => {
                write!(f, "angle assigned to unknown vertex {v}")
            }
            PatternViolation::DependencyNotEarlier { vertex, dependency } => {
                write!(f, "dependency {dependency} of vertex {vertex} is not measured earlier")
            }
            PatternViolation::DependencyOnUnknownVertex(v) => {
                write!(f, "dependency set mentions unknown vertex {v}")
            }
            PatternViolation::SuccessorNotNeighbour { vertex, successor } => {
                write!(f, "flow successor {successor} of {vertex} is not a neighbour")
            }
            PatternViolation::SuccessorNotLater { vertex, successor } => {
                write!(f, "flow successor {successor} of {vertex} is not measured later")
            }
            PatternViolation::SuccessorOnOutput(v) => {
                write!(f, "flow successor defined on output vertex {v}")
            }
        }
    }
}

/// A measurement pattern over a graph: one angle per vertex plus a flow.
///
/// Every vertex is measured, outputs included; outputs are read by measuring
/// at their (corrected) pattern angle, and the decoded outcome bit *is* the
/// classical result. For the result to be deterministic the output vertices
/// must form an independent set and the pattern must map the encoded input
/// onto output-basis eigenstates, which all built-in patterns do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternFile", into = "PatternFile")]
pub struct MeasurementPattern {
    graph: Graph,
    angles: BTreeMap<Vertex, Angle8>,
    flow: FlowSpec,
}

impl MeasurementPattern {
    pub fn new(
        graph: Graph,
        angles: BTreeMap<Vertex, Angle8>,
        flow: FlowSpec,
    ) -> Result<MeasurementPattern, PatternError> {
        let p = MeasurementPattern { graph, angles, flow };
        let violations = validate_pattern(&p);
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(PatternError::Invalid(violations))
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn angle(&self, v: Vertex) -> Option<Angle8> {
        self.angles.get(&v).copied()
    }

    pub fn angles(&self) -> &BTreeMap<Vertex, Angle8> {
        &self.angles
    }

    pub fn flow(&self) -> &FlowSpec {
        &self.flow
    }

    pub fn order(&self) -> &[Vertex] {
        self.flow.order()
    }

    /// Pairs the pattern's input vertices with a bit slice, in input order.
    pub fn input_map(&self, bits: &[bool]) -> BTreeMap<Vertex, bool> {
        assert_eq!(
            bits.len(),
            self.graph.inputs().len(),
            "input bit count must match the pattern's input arity"
        );
        self.graph.inputs().iter().copied().zip(bits.iter().copied()).collect()
    }

    /// Loads a pattern from its JSON file form, rejecting unknown fields and
    /// re-running full validation.
    pub fn from_json(text: &str) -> Result<MeasurementPattern, PatternError> {
        let file: PatternFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn from_file(path: &Path) -> Result<MeasurementPattern, PatternError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PatternFile::from(self.clone()))
            .expect("pattern serialization cannot fail")
    }
}

/// On-disk pattern schema. All fields required except the dependency sets,
/// which are derived from `f` when omitted. Unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    vertices: Vec<Vertex>,
    edges: Vec<(Vertex, Vertex)>,
    inputs: Vec<Vertex>,
    outputs: Vec<Vertex>,
    angles: BTreeMap<Vertex, u8>,
    order: Vec<Vertex>,
    f: BTreeMap<Vertex, Vertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xdeps: Option<BTreeMap<Vertex, BTreeSet<Vertex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zdeps: Option<BTreeMap<Vertex, BTreeSet<Vertex>>>,
}

impl TryFrom<PatternFile> for MeasurementPattern {
    type Error = PatternError;
    fn try_from(file: PatternFile) -> Result<MeasurementPattern, PatternError> {
        let graph = Graph::new(file.vertices, &file.edges, file.inputs, file.outputs)?;
        let angles = file.angles.into_iter().map(|(v, a)| (v, Angle8::new(a))).collect();
        let flow = match (file.xdeps, file.zdeps) {
            (None, None) => FlowSpec::with_derived_deps(&graph, file.order, file.f),
            (x, z) => {
                let derived = FlowSpec::with_derived_deps(&graph, file.order.clone(), file.f.clone());
                FlowSpec::new(
                    file.order,
                    file.f,
                    x.unwrap_or_else(|| derived.xdeps_map().clone()),
                    z.unwrap_or_else(|| derived.zdeps_map().clone()),
                )
            }
        };
        MeasurementPattern::new(graph, angles, flow)
    }
}

impl From<MeasurementPattern> for PatternFile {
    fn from(p: MeasurementPattern) -> PatternFile {
        PatternFile {
            vertices: p.graph.vertices().to_vec(),
            edges: p.graph.edges().collect(),
            inputs: p.graph.inputs().to_vec(),
            outputs: p.graph.outputs().to_vec(),
            angles: p.angles.iter().map(|(&v, &a)| (v, a.value())).collect(),
            order: p.flow.order().to_vec(),
            f: p.flow.f().clone(),
            xdeps: Some(p.flow.xdeps_map().clone()),
            zdeps: Some(p.flow.zdeps_map().clone()),
        }
    }
}

/// Checks every structural invariant and reports all violations rather than
/// stopping at the first, so a malformed pattern file yields a full report.
pub fn validate_pattern(p: &MeasurementPattern) -> Vec<PatternViolation> {
    let mut out = Vec::new();
    let g = &p.graph;
    let vertex_set: BTreeSet<Vertex> = g.vertices().iter().copied().collect();
    let order_set: BTreeSet<Vertex> = p.flow.order().iter().copied().collect();
    if order_set != vertex_set || p.flow.order().len() != vertex_set.len() {
        out.push(PatternViolation::OrderNotPermutation);
    }
    for &v in g.vertices() {
        if !p.angles.contains_key(&v) {
            out.push(PatternViolation::MissingAngle(v));
        }
    }
    for &v in p.angles.keys() {
        if !vertex_set.contains(&v) {
            out.push(PatternViolation::AngleOnUnknownVertex(v));
        }
    }
    let position: BTreeMap<Vertex, usize> =
        p.flow.order().iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let outputs: BTreeSet<Vertex> = g.outputs().iter().copied().collect();
    for (&v, &succ) in p.flow.f() {
        if outputs.contains(&v) {
            out.push(PatternViolation::SuccessorOnOutput(v));
        }
        if !g.has_edge(v, succ) {
            out.push(PatternViolation::SuccessorNotNeighbour { vertex: v, successor: succ });
        }
        match (position.get(&v), position.get(&succ)) {
            (Some(pv), Some(ps)) if ps <= pv => {
                out.push(PatternViolation::SuccessorNotLater { vertex: v, successor: succ });
            }
            _ => {}
        }
    }
    for (deps, _is_x) in [(p.flow.xdeps_map(), true), (p.flow.zdeps_map(), false)] {
        for (&v, set) in deps {
            for &u in set {
                if !vertex_set.contains(&u) || !vertex_set.contains(&v) {
                    out.push(PatternViolation::DependencyOnUnknownVertex(u));
                    continue;
                }
                match (position.get(&u), position.get(&v)) {
                    (Some(pu), Some(pv)) if pu < pv => {}
                    _ => out.push(PatternViolation::DependencyNotEarlier {
                        vertex: v,
                        dependency: u,
                    }),
                }
            }
        }
    }
    out
}

/// Built-in patterns used by the experiments and the acceptance suite.
pub mod builtin {
    use super::*;

    /// Linear cluster on `len` vertices `1..=len`, input vertex 1, output
    /// vertex `len`, flow `f(i) = i+1`. All angles zero except the first,
    /// which is `pi` when `negate` is set. For odd `len` this computes the
    /// identity (`negate = false`) or NOT (`negate = true`) on one bit.
    pub fn linear_cluster(len: u32, negate: bool) -> MeasurementPattern {
        assert!(len >= 2, "linear cluster needs at least two vertices");
        let vertices: Vec<Vertex> = (1..=len).collect();
        let edges: Vec<(Vertex, Vertex)> = (1..len).map(|i| (i, i + 1)).collect();
        let graph = Graph::new(vertices.clone(), &edges, vec![1], vec![len]).unwrap();
        let mut angles: BTreeMap<Vertex, Angle8> =
            vertices.iter().map(|&v| (v, Angle8::ZERO)).collect();
        if negate {
            angles.insert(1, Angle8::PI);
        }
        let f: BTreeMap<Vertex, Vertex> = (1..len).map(|i| (i, i + 1)).collect();
        let flow = FlowSpec::with_derived_deps(&graph, vertices, f);
        MeasurementPattern::new(graph, angles, flow).expect("built-in pattern is valid")
    }

    /// Three-vertex cluster computing NOT on one bit.
    pub fn linear3_not() -> MeasurementPattern {
        linear_cluster(3, true)
    }

    /// Three-vertex cluster computing the identity on one bit.
    pub fn linear3_identity() -> MeasurementPattern {
        linear_cluster(3, false)
    }

    /// Five-vertex example: the 5-vertex linear cluster computing the
    /// identity. Its companion [`five_vertex_colouring3`] covers the graph
    /// with three trap classes, giving a three-type test surface.
    pub fn five_vertex() -> MeasurementPattern {
        linear_cluster(5, false)
    }

    /// Canonical proper 3-colouring {1,4}, {2,5}, {3} of [`five_vertex`].
    pub fn five_vertex_colouring3() -> Colouring {
        Colouring::new(3, [(1, 0), (2, 1), (3, 2), (4, 0), (5, 1)].into_iter().collect())
    }

    /// A 2 x 5 brickwork fragment: two horizontal wires with vertical bridges
    /// at columns 2 and 4, all angles zero. Row 1 is vertices 1..=5, row 2 is
    /// 6..=10; inputs {1, 6}, outputs {5, 10}; computes the identity on two
    /// bits. The graph is bipartite.
    pub fn brickwork_2x5() -> MeasurementPattern {
        let cols = 5u32;
        let a = |c: u32| c; // row 1: 1..=5
        let b = |c: u32| cols + c; // row 2: 6..=10
        let mut vertices = Vec::new();
        let mut order = Vec::new();
        for c in 1..=cols {
            vertices.push(a(c));
            vertices.push(b(c));
            order.push(a(c));
            order.push(b(c));
        }
        vertices.sort_unstable();
        let mut edges = Vec::new();
        for c in 1..cols {
            edges.push((a(c), a(c + 1)));
            edges.push((b(c), b(c + 1)));
        }
        for c in [2, 4] {
            edges.push((a(c), b(c)));
        }
        let graph =
            Graph::new(vertices.clone(), &edges, vec![a(1), b(1)], vec![a(cols), b(cols)]).unwrap();
        let angles = vertices.iter().map(|&v| (v, Angle8::ZERO)).collect();
        let mut f = BTreeMap::new();
        for c in 1..cols {
            f.insert(a(c), a(c + 1));
            f.insert(b(c), b(c + 1));
        }
        let flow = FlowSpec::with_derived_deps(&graph, order, f);
        MeasurementPattern::new(graph, angles, flow).expect("built-in pattern is valid")
    }

    /// All built-in patterns with their registry names. Each entry also
    /// carries the canonical explicit colouring when one is shipped.
    pub fn registry() -> Vec<(&'static str, MeasurementPattern, Option<Colouring>)> {
        vec![
            ("linear3-identity", linear3_identity(), None),
            ("linear3-not", linear3_not(), None),
            ("five-vertex", five_vertex(), Some(five_vertex_colouring3())),
            ("brickwork-2x5", brickwork_2x5(), None),
        ]
    }

    /// Looks a built-in up by registry name.
    pub fn by_name(name: &str) -> Option<(MeasurementPattern, Option<Colouring>)> {
        registry()
            .into_iter()
            .find(|(n, _, _)| *n == name)
            .map(|(_, p, c)| (p, c))
    }
}
