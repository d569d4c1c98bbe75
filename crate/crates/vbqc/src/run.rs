//! One delegated run: client-side secret sampling, blinded measurement
//! angles, outcome decoding, and the server-side quantum session that
//! lazily entangles, applies noise and deviations, and measures.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle8;
use crate::flow::{correction_exponents, FlowError};
use crate::graph::{Colouring, Graph, Vertex};
use crate::pattern::MeasurementPattern;
use crate::rng::substream;
use crate::sim::{Pauli, PreparedQubit, SimError, StateVector};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("vertex {0} is not part of this run's graph")]
    UnknownVertex(Vertex),
    #[error("vertex {0} was already measured")]
    AlreadyMeasured(Vertex),
    #[error("vertex {0} has no recorded outcome yet")]
    MissingOutcome(Vertex),
    #[error("vertex {0} is not a trap in this run")]
    NotATrap(Vertex),
    #[error("trap {trap} has non-dummy neighbour {neighbour}")]
    NonDummyNeighbour { trap: Vertex, neighbour: Vertex },
    #[error("input assignment does not match the pattern inputs")]
    BadInputAssignment,
    #[error("colour {colour} out of range for {k} classes")]
    BadColour { colour: usize, k: usize },
    #[error("run produced no output for vertex {0}")]
    MissingOutput(Vertex),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// What a run is for. Test runs carry the trap colour class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunKind {
    Computation,
    Test { colour: usize },
}

impl RunKind {
    pub fn is_test(&self) -> bool {
        matches!(self, RunKind::Test { .. })
    }
}

/// Client-side secrets for one run. Non-dummy vertices carry a blinding
/// angle `theta` and an outcome pad `r`; dummy vertices carry the dummy bit
/// and a throwaway measurement angle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSecrets {
    pub thetas: BTreeMap<Vertex, Angle8>,
    pub rs: BTreeMap<Vertex, bool>,
    pub dummies: BTreeMap<Vertex, bool>,
    pub dummy_deltas: BTreeMap<Vertex, Angle8>,
}

impl RunSecrets {
    pub fn is_dummy(&self, v: Vertex) -> bool {
        self.dummies.contains_key(&v)
    }
}

/// Uniform secrets for a computation run: every vertex gets a blinding
/// angle and an outcome pad, no dummies. Sampling order is the sorted
/// vertex list so that identical seeds give identical secrets.
pub fn sample_computation_secrets(graph: &Graph, rng: &mut impl Rng) -> RunSecrets {
    let mut thetas = BTreeMap::new();
    let mut rs = BTreeMap::new();
    for v in graph.sorted_vertices() {
        thetas.insert(v, Angle8::random(rng));
        rs.insert(v, rng.random_bool(0.5));
    }
    RunSecrets { thetas, rs, dummies: BTreeMap::new(), dummy_deltas: BTreeMap::new() }
}

/// Degenerate secrets (all-zero pads and angles) for negative-control
/// experiments that deliberately break blinding.
pub fn sample_unblinded_secrets(graph: &Graph) -> RunSecrets {
    let thetas = graph.sorted_vertices().map(|v| (v, Angle8::ZERO)).collect();
    let rs = graph.sorted_vertices().map(|v| (v, false)).collect();
    RunSecrets { thetas, rs, dummies: BTreeMap::new(), dummy_deltas: BTreeMap::new() }
}

/// Secrets for a test run with trap class `colour`: vertices of that colour
/// become traps (angle + pad), every other vertex becomes a dummy with a
/// fresh bit and a throwaway measurement angle.
pub fn sample_test_secrets(
    graph: &Graph,
    colouring: &Colouring,
    colour: usize,
    rng: &mut impl Rng,
) -> Result<RunSecrets, RunError> {
    if colour >= colouring.k() {
        return Err(RunError::BadColour { colour, k: colouring.k() });
    }
    let mut secrets = RunSecrets {
        thetas: BTreeMap::new(),
        rs: BTreeMap::new(),
        dummies: BTreeMap::new(),
        dummy_deltas: BTreeMap::new(),
    };
    for v in graph.sorted_vertices() {
        if colouring.colour_of(v) == Some(colour) {
            secrets.thetas.insert(v, Angle8::random(rng));
            secrets.rs.insert(v, rng.random_bool(0.5));
        } else {
            secrets.dummies.insert(v, rng.random_bool(0.5));
            secrets.dummy_deltas.insert(v, Angle8::random(rng));
        }
    }
    Ok(secrets)
}

/// The deterministic outcome an isolated trap must produce: its pad XORed
/// with the dummy bits of all neighbours (each dummy contributes a Z kick).
pub fn expected_trap_outcome(
    graph: &Graph,
    secrets: &RunSecrets,
    trap: Vertex,
) -> Result<bool, RunError> {
    if !graph.contains(trap) {
        return Err(RunError::UnknownVertex(trap));
    }
    if secrets.is_dummy(trap) || !secrets.thetas.contains_key(&trap) {
        return Err(RunError::NotATrap(trap));
    }
    let mut expected = secrets.rs[&trap];
    for u in graph.neighbours(trap) {
        match secrets.dummies.get(&u) {
            Some(&d) => expected ^= d,
            None => return Err(RunError::NonDummyNeighbour { trap, neighbour: u }),
        }
    }
    Ok(expected)
}

/// Client state for one run: computes blinded angles, records outcomes,
/// and decodes them.
#[derive(Debug, Clone)]
pub struct ClientRun<'p> {
    pattern: &'p MeasurementPattern,
    kind: RunKind,
    secrets: RunSecrets,
    inputs: BTreeMap<Vertex, bool>,
    raw_outcomes: BTreeMap<Vertex, bool>,
    decoded: BTreeMap<Vertex, bool>,
}

impl<'p> ClientRun<'p> {
    pub fn new_computation(
        pattern: &'p MeasurementPattern,
        inputs: &BTreeMap<Vertex, bool>,
        rng: &mut impl Rng,
    ) -> Result<ClientRun<'p>, RunError> {
        let graph = pattern.graph();
        let expected: BTreeSet<Vertex> = graph.inputs().iter().copied().collect();
        let given: BTreeSet<Vertex> = inputs.keys().copied().collect();
        if expected != given {
            return Err(RunError::BadInputAssignment);
        }
        Ok(ClientRun {
            pattern,
            kind: RunKind::Computation,
            secrets: sample_computation_secrets(graph, rng),
            inputs: inputs.clone(),
            raw_outcomes: BTreeMap::new(),
            decoded: BTreeMap::new(),
        })
    }

    /// A computation run with blinding switched off (zero pads); only for
    /// negative-control statistics.
    pub fn new_unblinded_computation(
        pattern: &'p MeasurementPattern,
        inputs: &BTreeMap<Vertex, bool>,
    ) -> Result<ClientRun<'p>, RunError> {
        let mut run = ClientRun::new_computation(pattern, inputs, &mut rand::rng())?;
        run.secrets = sample_unblinded_secrets(pattern.graph());
        Ok(run)
    }

    pub fn new_test(
        pattern: &'p MeasurementPattern,
        colouring: &Colouring,
        colour: usize,
        rng: &mut impl Rng,
    ) -> Result<ClientRun<'p>, RunError> {
        Ok(ClientRun {
            pattern,
            kind: RunKind::Test { colour },
            secrets: sample_test_secrets(pattern.graph(), colouring, colour, rng)?,
            inputs: BTreeMap::new(),
            raw_outcomes: BTreeMap::new(),
            decoded: BTreeMap::new(),
        })
    }

    pub fn kind(&self) -> RunKind {
        self.kind
    }

    pub fn secrets(&self) -> &RunSecrets {
        &self.secrets
    }

    pub fn pattern(&self) -> &MeasurementPattern {
        self.pattern
    }

    /// What the client sends the server to prepare, in measurement order.
    /// Blinding angles only — input bits and pads enter through the
    /// measurement angles, never the preparations.
    pub fn preparations(&self) -> Vec<(Vertex, PreparedQubit)> {
        self.pattern
            .order()
            .iter()
            .map(|&v| {
                let q = match self.secrets.dummies.get(&v) {
                    Some(&d) => PreparedQubit::Dummy(d),
                    None => PreparedQubit::PlusTheta(self.secrets.thetas[&v]),
                };
                (v, q)
            })
            .collect()
    }

    /// The blinded measurement angle for `v`, given all outcomes recorded so
    /// far. For a computation vertex this is the corrected pattern angle plus
    /// the blinding offsets; for a trap it hides the pad; for a dummy it is
    /// an independent throwaway angle.
    pub fn delta(&self, v: Vertex) -> Result<Angle8, RunError> {
        if self.raw_outcomes.contains_key(&v) {
            return Err(RunError::AlreadyMeasured(v));
        }
        match self.kind {
            RunKind::Computation => {
                let phi = self.pattern.angle(v).ok_or(RunError::UnknownVertex(v))?;
                let (sx, sz) = correction_exponents(self.pattern.flow(), &self.decoded, v)?;
                let corrected = phi.negate_if(sx).plus_pi_if(sz);
                let input_shift = *self.inputs.get(&v).unwrap_or(&false);
                Ok(corrected
                    + self.secrets.thetas[&v]
                    + Angle8::ZERO.plus_pi_if(input_shift)
                    + Angle8::ZERO.plus_pi_if(self.secrets.rs[&v]))
            }
            RunKind::Test { .. } => match self.secrets.dummy_deltas.get(&v) {
                Some(&throwaway) => Ok(throwaway),
                None => {
                    let theta = *self.secrets.thetas.get(&v).ok_or(RunError::UnknownVertex(v))?;
                    Ok(theta.plus_pi_if(self.secrets.rs[&v]))
                }
            },
        }
    }

    /// Records the server's reported outcome and its decoded value
    /// (pad-stripped for non-dummies; dummies decode to the raw bit,
    /// which nothing downstream consumes).
    pub fn record_outcome(&mut self, v: Vertex, b: bool) -> Result<(), RunError> {
        if !self.pattern.graph().contains(v) {
            return Err(RunError::UnknownVertex(v));
        }
        if self.raw_outcomes.insert(v, b).is_some() {
            return Err(RunError::AlreadyMeasured(v));
        }
        let pad = self.secrets.rs.get(&v).copied().unwrap_or(false);
        self.decoded.insert(v, b ^ pad);
        Ok(())
    }

    pub fn raw_outcomes(&self) -> &BTreeMap<Vertex, bool> {
        &self.raw_outcomes
    }

    pub fn decoded_outcomes(&self) -> &BTreeMap<Vertex, bool> {
        &self.decoded
    }

    /// Decoded output bits in the pattern's output order.
    pub fn decoded_outputs(&self) -> Result<Vec<bool>, RunError> {
        self.pattern
            .graph()
            .outputs()
            .iter()
            .map(|&o| self.decoded.get(&o).copied().ok_or(RunError::MissingOutput(o)))
            .collect()
    }

    /// Traps whose decoded outcome disagrees with the deterministic
    /// expectation. Empty means the test run passed.
    pub fn trap_failures(&self) -> Result<Vec<Vertex>, RunError> {
        if !self.kind.is_test() {
            return Ok(Vec::new());
        }
        let graph = self.pattern.graph();
        let mut failed = Vec::new();
        for &v in self.secrets.thetas.keys() {
            let expected = expected_trap_outcome(graph, &self.secrets, v)?;
            let got = self.raw_outcomes.get(&v).copied().ok_or(RunError::MissingOutcome(v))?;
            if got != expected {
                failed.push(v);
            }
        }
        Ok(failed)
    }
}

/// Server-side quantum state for one run: attaches qubits lazily, entangles
/// just in time, applies its configured noise and deviations, measures at
/// the angles the client sends.
#[derive(Debug)]
pub struct ServerSession {
    graph: Graph,
    preps: BTreeMap<Vertex, PreparedQubit>,
    state: StateVector,
    applied_cz: BTreeSet<(Vertex, Vertex)>,
    noised: BTreeSet<Vertex>,
    measured: BTreeSet<Vertex>,
    noise: Option<crate::adversary::NoiseModel>,
    deviations: BTreeMap<Vertex, Pauli>,
    rng: ChaCha8Rng,
}

impl ServerSession {
    pub fn new(
        graph: Graph,
        preps: Vec<(Vertex, PreparedQubit)>,
        noise: Option<crate::adversary::NoiseModel>,
        deviations: BTreeMap<Vertex, Pauli>,
        rng: ChaCha8Rng,
        active_cap: usize,
    ) -> ServerSession {
        ServerSession {
            graph,
            preps: preps.into_iter().collect(),
            state: StateVector::new(active_cap),
            applied_cz: BTreeSet::new(),
            noised: BTreeSet::new(),
            measured: BTreeSet::new(),
            noise,
            deviations,
            rng,
        }
    }

    /// Convenience constructor keyed off a seed substream.
    pub fn from_seed(
        graph: Graph,
        preps: Vec<(Vertex, PreparedQubit)>,
        noise: Option<crate::adversary::NoiseModel>,
        deviations: BTreeMap<Vertex, Pauli>,
        seed: u64,
        domain: &str,
        a: u64,
        b: u64,
        active_cap: usize,
    ) -> ServerSession {
        ServerSession::new(graph, preps, noise, deviations, substream(seed, domain, a, b), active_cap)
    }

    fn attach(&mut self, v: Vertex) -> Result<(), RunError> {
        if self.state.is_active(v) {
            return Ok(());
        }
        let prep = *self.preps.get(&v).ok_or(RunError::UnknownVertex(v))?;
        self.state.attach(v, prep)?;
        if let Some(noise) = &self.noise {
            if noise.schedule() == crate::adversary::NoiseSchedule::PrePreparation {
                self.apply_noise_once(v)?;
            }
        }
        Ok(())
    }

    fn apply_noise_once(&mut self, v: Vertex) -> Result<(), RunError> {
        if self.noised.insert(v) {
            if let Some(noise) = self.noise.clone() {
                self.state.apply_channel(&[v], noise.channel(), &mut self.rng)?;
            }
        }
        Ok(())
    }

    /// Measures `v` at angle `delta`, forcing attachment of `v` and its
    /// unmeasured neighbours plus their shared entangling gates first.
    pub fn measure(&mut self, v: Vertex, delta: Angle8) -> Result<bool, RunError> {
        if self.measured.contains(&v) {
            return Err(RunError::AlreadyMeasured(v));
        }
        if !self.graph.contains(v) {
            return Err(RunError::UnknownVertex(v));
        }
        self.attach(v)?;
        let neighbours: Vec<Vertex> = self.graph.neighbours(v).collect();
        for u in neighbours {
            if self.measured.contains(&u) {
                continue;
            }
            self.attach(u)?;
            let edge = if v < u { (v, u) } else { (u, v) };
            if self.applied_cz.insert(edge) {
                self.state.apply_cz(v, u)?;
            }
        }
        if let Some(noise) = &self.noise {
            if noise.schedule() == crate::adversary::NoiseSchedule::PostEntangle {
                self.apply_noise_once(v)?;
            }
        }
        let deviation = self.deviations.get(&v).copied();
        let outcome = self.state.measure_rotated_deviated(v, delta, deviation, &mut self.rng)?;
        self.measured.insert(v);
        Ok(outcome)
    }

    pub fn max_active_seen(&self) -> usize {
        self.state.max_active_seen()
    }
}

/// Raw record of one executed run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTranscript {
    pub deltas: BTreeMap<Vertex, Angle8>,
    pub outcomes: BTreeMap<Vertex, bool>,
}

/// Drives a full run against an in-process server session: for each vertex
/// in pattern order, send the blinded angle, record the reported outcome.
pub fn execute_run(
    client: &mut ClientRun<'_>,
    session: &mut ServerSession,
) -> Result<RunTranscript, RunError> {
    let order = client.pattern().order().to_vec();
    let mut transcript = RunTranscript::default();
    for v in order {
        let delta = client.delta(v)?;
        let outcome = session.measure(v, delta)?;
        client.record_outcome(v, outcome)?;
        transcript.deltas.insert(v, delta);
        transcript.outcomes.insert(v, outcome);
    }
    Ok(transcript)
}

/// Runs the pattern honestly on classical input bits and returns the decoded
/// output, checking along the way that two independently blinded executions
/// agree (the pattern must compute a deterministic classical function).
pub fn reference_output(
    pattern: &MeasurementPattern,
    input_bits: &[bool],
    seed: u64,
) -> Result<Vec<bool>, RunError> {
    let inputs = pattern.input_map(input_bits);
    let mut outputs = Vec::new();
    for rep in 0..2u64 {
        let mut client_rng = substream(seed, "reference-client", rep, 0);
        let mut client = ClientRun::new_computation(pattern, &inputs, &mut client_rng)?;
        let mut session = ServerSession::from_seed(
            pattern.graph().clone(),
            client.preparations(),
            None,
            BTreeMap::new(),
            seed,
            "reference-server",
            rep,
            0,
            crate::sim::DEFAULT_ACTIVE_CAP,
        );
        execute_run(&mut client, &mut session)?;
        outputs.push(client.decoded_outputs()?);
    }
    assert_eq!(outputs[0], outputs[1], "blinded executions must agree on the decoded output");
    Ok(outputs.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::builtin;

    fn run_computation(
        pattern: &MeasurementPattern,
        bits: &[bool],
        seed: u64,
    ) -> (Vec<bool>, RunTranscript) {
        let inputs = pattern.input_map(bits);
        let mut rng = substream(seed, "test-client", 0, 0);
        let mut client = ClientRun::new_computation(pattern, &inputs, &mut rng).unwrap();
        let mut session = ServerSession::from_seed(
            pattern.graph().clone(),
            client.preparations(),
            None,
            BTreeMap::new(),
            seed,
            "test-server",
            0,
            0,
            crate::sim::DEFAULT_ACTIVE_CAP,
        );
        let transcript = execute_run(&mut client, &mut session).unwrap();
        (client.decoded_outputs().unwrap(), transcript)
    }

    #[test]
    fn identity_pattern_reproduces_its_input() {
        let pattern = builtin::linear3_identity();
        for seed in 0..20 {
            for &bit in &[false, true] {
                let (out, _) = run_computation(&pattern, &[bit], seed);
                assert_eq!(out, vec![bit], "seed {seed} bit {bit}");
            }
        }
    }

    #[test]
    fn negation_pattern_flips_its_input() {
        let pattern = builtin::linear3_not();
        for seed in 0..20 {
            for &bit in &[false, true] {
                let (out, _) = run_computation(&pattern, &[bit], seed);
                assert_eq!(out, vec![!bit], "seed {seed} bit {bit}");
            }
        }
    }

    #[test]
    fn five_vertex_pattern_is_deterministic_identity() {
        let pattern = builtin::five_vertex();
        for seed in 0..10 {
            for &bit in &[false, true] {
                let (out, _) = run_computation(&pattern, &[bit], seed);
                assert_eq!(out, vec![bit]);
            }
        }
    }

    #[test]
    fn two_wire_pattern_copies_both_inputs() {
        let pattern = builtin::brickwork_2x5();
        for seed in 0..5 {
            for bits in [[false, false], [false, true], [true, false], [true, true]] {
                let (out, _) = run_computation(&pattern, &bits, seed);
                assert_eq!(out, bits.to_vec(), "seed {seed} bits {bits:?}");
            }
        }
    }

    #[test]
    fn reference_output_checks_agreement() {
        let pattern = builtin::linear3_not();
        assert_eq!(reference_output(&pattern, &[true], 7).unwrap(), vec![false]);
    }

    #[test]
    fn honest_test_runs_never_trip_traps() {
        let pattern = builtin::five_vertex();
        let colouring = builtin::five_vertex_colouring3();
        for seed in 0..30u64 {
            for colour in 0..colouring.k() {
                let mut rng = substream(seed, "test-client", colour as u64, 0);
                let mut client =
                    ClientRun::new_test(&pattern, &colouring, colour, &mut rng).unwrap();
                let mut session = ServerSession::from_seed(
                    pattern.graph().clone(),
                    client.preparations(),
                    None,
                    BTreeMap::new(),
                    seed,
                    "test-server",
                    colour as u64,
                    0,
                    crate::sim::DEFAULT_ACTIVE_CAP,
                );
                execute_run(&mut client, &mut session).unwrap();
                assert!(client.trap_failures().unwrap().is_empty(), "seed {seed} colour {colour}");
            }
        }
    }

    #[test]
    fn x_deviation_on_a_trap_always_fails_it() {
        let pattern = builtin::five_vertex();
        let colouring = builtin::five_vertex_colouring3();
        // Vertex 3 is the only member of colour class 2.
        for seed in 0..30u64 {
            let mut rng = substream(seed, "test-client", 0, 0);
            let mut client = ClientRun::new_test(&pattern, &colouring, 2, &mut rng).unwrap();
            let mut session = ServerSession::from_seed(
                pattern.graph().clone(),
                client.preparations(),
                None,
                BTreeMap::from([(3, Pauli::X)]),
                seed,
                "test-server",
                0,
                0,
                crate::sim::DEFAULT_ACTIVE_CAP,
            );
            execute_run(&mut client, &mut session).unwrap();
            assert_eq!(client.trap_failures().unwrap(), vec![3], "seed {seed}");
        }
    }

    #[test]
    fn x_deviation_on_a_dummy_is_harmless() {
        let pattern = builtin::five_vertex();
        let colouring = builtin::five_vertex_colouring3();
        for seed in 0..30u64 {
            let mut rng = substream(seed, "test-client", 0, 0);
            let mut client = ClientRun::new_test(&pattern, &colouring, 2, &mut rng).unwrap();
            let mut session = ServerSession::from_seed(
                pattern.graph().clone(),
                client.preparations(),
                None,
                BTreeMap::from([(2, Pauli::X)]),
                seed,
                "test-server",
                0,
                0,
                crate::sim::DEFAULT_ACTIVE_CAP,
            );
            execute_run(&mut client, &mut session).unwrap();
            assert!(client.trap_failures().unwrap().is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn expected_trap_outcome_requires_dummy_neighbourhood() {
        let pattern = builtin::five_vertex();
        let graph = pattern.graph();
        let colouring = builtin::five_vertex_colouring3();
        let mut rng = substream(9, "secrets", 0, 0);
        let secrets = sample_test_secrets(graph, &colouring, 2, &mut rng).unwrap();
        let expected = expected_trap_outcome(graph, &secrets, 3).unwrap();
        assert_eq!(expected, secrets.rs[&3] ^ secrets.dummies[&2] ^ secrets.dummies[&4]);
        assert!(matches!(
            expected_trap_outcome(graph, &secrets, 2),
            Err(RunError::NotATrap(2))
        ));
        // In a computation run no vertex has a dummy neighbourhood.
        let comp = sample_computation_secrets(graph, &mut rng);
        assert!(matches!(
            expected_trap_outcome(graph, &comp, 3),
            Err(RunError::NonDummyNeighbour { trap: 3, .. })
        ));
    }

    #[test]
    fn lazy_session_keeps_linear_width_small() {
        let pattern = builtin::linear_cluster(50, false);
        let inputs = pattern.input_map(&[false]);
        let mut rng = substream(3, "width-client", 0, 0);
        let mut client = ClientRun::new_computation(&pattern, &inputs, &mut rng).unwrap();
        let mut session = ServerSession::from_seed(
            pattern.graph().clone(),
            client.preparations(),
            None,
            BTreeMap::new(),
            3,
            "width-server",
            0,
            0,
            4,
        );
        execute_run(&mut client, &mut session).unwrap();
        assert!(session.max_active_seen() <= 2, "width {}", session.max_active_seen());
    }

    #[test]
    fn blinded_delta_combines_correction_pads_and_input() {
        // Hand-checked example: phi' = -phi with an X exponent of 1 on a
        // pi/4 angle, input shift on, theta = pi/2, pad on:
        // (-1 + 4 + 2 + 4) mod 8 = 1.
        let pattern = builtin::linear3_identity();
        let mut client = ClientRun::new_unblinded_computation(
            &pattern,
            &pattern.input_map(&[true]),
        )
        .unwrap();
        client.secrets.thetas.insert(1, Angle8::new(2));
        client.secrets.rs.insert(1, true);
        // Vertex 1 has no dependencies, so fake the exponents through the
        // angle algebra directly.
        let phi = Angle8::new(1);
        let corrected = phi.negate_if(true).plus_pi_if(false);
        let delta = corrected
            + client.secrets.thetas[&1]
            + Angle8::ZERO.plus_pi_if(true)
            + Angle8::ZERO.plus_pi_if(client.secrets.rs[&1]);
        assert_eq!(delta, Angle8::new(1));
    }

    #[test]
    fn outcome_padding_randomizes_raw_outcomes_but_not_decodes() {
        let pattern = builtin::linear3_identity();
        let mut zeros = 0u32;
        let trials = 400u64;
        for seed in 0..trials {
            let (out, transcript) = run_computation(&pattern, &[false], seed);
            assert_eq!(out, vec![false]);
            if !transcript.outcomes[&3] {
                zeros += 1;
            }
        }
        // The raw output bit is one-time-padded, so it should look fair.
        let rate = f64::from(zeros) / trials as f64;
        assert!((rate - 0.5).abs() < 0.13, "raw outcome rate {rate}");
    }
}
