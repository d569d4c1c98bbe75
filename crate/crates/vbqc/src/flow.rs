//! Measurement order and the outcome-dependency structure that steers
//! adaptive measurement angles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Vertex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("vertex {0} has no recorded outcome but appears in a dependency set")]
    MissingOutcome(Vertex),
    #[error("vertex {0} is not in the measurement order")]
    UnknownVertex(Vertex),
}

/// Measurement order plus per-vertex dependency sets.
///
/// `f` maps a measured vertex to its flow successor. From it the standard
/// correction rules give the dependency sets used at angle-computation time:
/// the X-exponent of `w` collects outcomes of `f^{-1}(w)` and the Z-exponent
/// collects outcomes of every `v` with `w` adjacent to `f(v)` (excluding `v`
/// itself). The sets may also be supplied directly, so patterns without a
/// closed-form flow remain expressible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    order: Vec<Vertex>,
    f: BTreeMap<Vertex, Vertex>,
    xdeps: BTreeMap<Vertex, BTreeSet<Vertex>>,
    zdeps: BTreeMap<Vertex, BTreeSet<Vertex>>,
}

impl FlowSpec {
    /// Builds a flow from explicitly given dependency sets.
    pub fn new(
        order: Vec<Vertex>,
        f: BTreeMap<Vertex, Vertex>,
        xdeps: BTreeMap<Vertex, BTreeSet<Vertex>>,
        zdeps: BTreeMap<Vertex, BTreeSet<Vertex>>,
    ) -> FlowSpec {
        FlowSpec { order, f, xdeps, zdeps }
    }

    /// Builds a flow from a successor map alone, deriving both dependency
    /// sets: `xdeps(w) = f^{-1}(w)` and `zdeps(w) = {v : w in N(f(v)), w != v}`.
    pub fn with_derived_deps(
        graph: &Graph,
        order: Vec<Vertex>,
        f: BTreeMap<Vertex, Vertex>,
    ) -> FlowSpec {
        let mut xdeps: BTreeMap<Vertex, BTreeSet<Vertex>> = BTreeMap::new();
        let mut zdeps: BTreeMap<Vertex, BTreeSet<Vertex>> = BTreeMap::new();
        for (&v, &succ) in &f {
            xdeps.entry(succ).or_default().insert(v);
            for w in graph.neighbours(succ) {
                if w != v {
                    zdeps.entry(w).or_default().insert(v);
                }
            }
        }
        FlowSpec { order, f, xdeps, zdeps }
    }

    /// A trivial flow: the given measurement order, no successors, no
    /// dependencies. Sufficient for test runs and structural experiments.
    pub fn unordered(order: Vec<Vertex>) -> FlowSpec {
        FlowSpec { order, f: BTreeMap::new(), xdeps: BTreeMap::new(), zdeps: BTreeMap::new() }
    }

    pub fn order(&self) -> &[Vertex] {
        &self.order
    }

    pub fn successor(&self, v: Vertex) -> Option<Vertex> {
        self.f.get(&v).copied()
    }

    pub fn f(&self) -> &BTreeMap<Vertex, Vertex> {
        &self.f
    }

    /// Position of `v` in the measurement order.
    pub fn position(&self, v: Vertex) -> Option<usize> {
        self.order.iter().position(|&u| u == v)
    }

    pub fn xdeps(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.xdeps.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn zdeps(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.zdeps.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn xdeps_map(&self) -> &BTreeMap<Vertex, BTreeSet<Vertex>> {
        &self.xdeps
    }

    pub fn zdeps_map(&self) -> &BTreeMap<Vertex, BTreeSet<Vertex>> {
        &self.zdeps
    }
}

/// XORs the recorded (decoded) outcomes over the X- and Z-dependency sets of
/// `v`, yielding the exponents `(s_x, s_z)` that enter the corrected angle
/// `(-1)^{s_x} * phi + s_z * pi`. Every dependency must already be measured.
pub fn correction_exponents(
    flow: &FlowSpec,
    outcomes: &BTreeMap<Vertex, bool>,
    v: Vertex,
) -> Result<(bool, bool), FlowError> {
    let mut sx = false;
    for u in flow.xdeps(v) {
        sx ^= *outcomes.get(&u).ok_or(FlowError::MissingOutcome(u))?;
    }
    let mut sz = false;
    for u in flow.zdeps(v) {
        sz ^= *outcomes.get(&u).ok_or(FlowError::MissingOutcome(u))?;
    }
    Ok((sx, sz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use proptest::prelude::*;

    /// Path 1-2-3-4 with the standard flow f(i) = i+1.
    fn path4_flow() -> (Graph, FlowSpec) {
        let g = Graph::new(vec![1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4)], vec![1], vec![4]).unwrap();
        let f = [(1, 2), (2, 3), (3, 4)].into_iter().collect();
        let flow = FlowSpec::with_derived_deps(&g, vec![1, 2, 3, 4], f);
        (g, flow)
    }

    #[test]
    fn derived_deps_on_path() {
        let (_, flow) = path4_flow();
        assert_eq!(flow.xdeps(3).collect::<Vec<_>>(), vec![2]);
        assert_eq!(flow.zdeps(3).collect::<Vec<_>>(), vec![1]);
        assert_eq!(flow.xdeps(2).collect::<Vec<_>>(), vec![1]);
        assert_eq!(flow.zdeps(2).collect::<Vec<_>>(), Vec::<Vertex>::new());
        assert_eq!(flow.xdeps(4).collect::<Vec<_>>(), vec![3]);
        assert_eq!(flow.zdeps(4).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn all_false_dependencies_give_zero_exponents() {
        let (_, flow) = path4_flow();
        let outcomes = [(1, false), (2, false)].into_iter().collect();
        assert_eq!(correction_exponents(&flow, &outcomes, 3).unwrap(), (false, false));
    }

    #[test]
    fn missing_outcome_is_an_error() {
        let (_, flow) = path4_flow();
        let outcomes = BTreeMap::new();
        assert_eq!(
            correction_exponents(&flow, &outcomes, 3),
            Err(FlowError::MissingOutcome(2))
        );
    }

    proptest! {
        /// XOR-linearity: flipping one dependency outcome flips the exponent.
        #[test]
        fn exponents_are_xor_linear(o1 in any::<bool>(), o2 in any::<bool>()) {
            let (_, flow) = path4_flow();
            let outcomes: BTreeMap<_, _> = [(1, o1), (2, o2)].into_iter().collect();
            let (sx, sz) = correction_exponents(&flow, &outcomes, 3).unwrap();
            prop_assert_eq!(sx, o2);
            prop_assert_eq!(sz, o1);

            let flipped: BTreeMap<_, _> = [(1, !o1), (2, o2)].into_iter().collect();
            let (sx2, sz2) = correction_exponents(&flow, &flipped, 3).unwrap();
            prop_assert_eq!(sx2, sx);
            prop_assert_eq!(sz2, !sz);
        }
    }
}
