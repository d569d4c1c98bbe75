//! The full delegated-verification protocol: `n` blinded runs, a uniformly
//! random partition into `d` computation and `t` test runs, a fresh trap
//! colour per test run, redo handling on both sides, trap evaluation against
//! the failure threshold `w`, and a strict-majority vote over the
//! computation outputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::ServerBehaviour;
use crate::angle::Angle8;
use crate::graph::{validate_colouring, Colouring, Graph, Vertex};
use crate::pattern::MeasurementPattern;
use crate::rng::{derive_seed, substream};
use crate::run::{ClientRun, RunError, RunKind, RunTranscript, ServerSession};
use crate::sim::{PreparedQubit, DEFAULT_ACTIVE_CAP};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("colouring has {got} classes but the parameters expect {expected}")]
    ColouringMismatch { got: usize, expected: usize },
    #[error("colouring is not proper for this graph")]
    ImproperColouring,
    #[error("run {run} exceeded {max} attempts")]
    TooManyAttempts { run: usize, max: u32 },
    #[error("connection: {0}")]
    Connection(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Round counts for one protocol execution: `n = d + t` runs total, abort
/// when `w` or more test runs fail, `k` trap colour classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub w: usize,
    pub k: usize,
}

impl ProtocolParams {
    pub fn new(n: usize, d: usize, t: usize, w: usize, k: usize) -> Result<Self, ProtocolError> {
        if d + t != n {
            return Err(ProtocolError::InvalidParams(format!("d + t = {} but n = {n}", d + t)));
        }
        if d == 0 || t == 0 {
            return Err(ProtocolError::InvalidParams(
                "need at least one computation and one test run".into(),
            ));
        }
        if w == 0 || w > t {
            return Err(ProtocolError::InvalidParams(format!(
                "failure threshold w = {w} must satisfy 1 <= w <= t = {t}"
            )));
        }
        if k == 0 {
            return Err(ProtocolError::InvalidParams("need at least one colour class".into()));
        }
        Ok(ProtocolParams { n, d, t, w, k })
    }

    /// Builds parameters from the ratio form used by the analysis: a
    /// computation fraction `d/n` and a failure-rate threshold `omega = w/t`.
    /// `w` rounds up so the realized threshold never under-counts failures
    /// relative to the requested ratio.
    pub fn from_ratios(
        n: usize,
        computation_fraction: f64,
        omega: f64,
        k: usize,
    ) -> Result<Self, ProtocolError> {
        if !(0.0..=1.0).contains(&computation_fraction) || !(0.0..=1.0).contains(&omega) {
            return Err(ProtocolError::InvalidParams(
                "fractions must lie in [0, 1]".into(),
            ));
        }
        let d = ((n as f64 * computation_fraction).round() as usize).clamp(1, n.saturating_sub(1));
        let t = n - d;
        let w = ((omega * t as f64).ceil() as usize).max(1);
        ProtocolParams::new(n, d, t, w.min(t), k)
    }

    /// Realized failure-rate threshold `w/t`.
    pub fn omega(&self) -> f64 {
        self.w as f64 / self.t as f64
    }

    /// Test fraction `t/n`.
    pub fn tau(&self) -> f64 {
        self.t as f64 / self.n as f64
    }

    /// Computation fraction `d/n`.
    pub fn computation_fraction(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    /// Whether the parameters sit inside the provable-security region
    /// `omega < 1/(2k)`. Recorded, not enforced: experiments outside the
    /// region are exactly the interesting ones for bound validation.
    pub fn security_feasible(&self) -> bool {
        self.omega() < 1.0 / (2.0 * self.k as f64)
    }
}

/// Number of runs to prepare ahead of time so that `n` usable runs survive
/// per-run success probability `p_succ` (e.g. heralded preparation losses):
/// `ceil(n / p_succ)`.
pub fn presample_count(n: usize, p_succ: f64) -> Result<usize, ProtocolError> {
    if !(p_succ > 0.0 && p_succ <= 1.0) {
        return Err(ProtocolError::InvalidParams(format!(
            "success probability {p_succ} must lie in (0, 1]"
        )));
    }
    Ok((n as f64 / p_succ).ceil() as usize)
}

/// Uniformly random choice of which `d` of the `n` runs are computation runs.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> BTreeSet<usize> {
    rand::seq::index::sample(rng, n, d).into_iter().collect()
}

/// The client's secret run plan for one protocol execution: the partition
/// and the first-attempt trap colour of every test run. Both the quantum
/// orchestrator and the classical fast path sample it the same way from the
/// same seed, so per-seed comparisons are exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    computation: BTreeSet<usize>,
    colours: BTreeMap<usize, usize>,
}

impl RunPlan {
    pub fn sample(trial_seed: u64, params: &ProtocolParams) -> RunPlan {
        let mut partition_rng = substream(trial_seed, "partition", 0, 0);
        let computation = sample_partition(params.n, params.d, &mut partition_rng);
        let colours = (0..params.n)
            .filter(|j| !computation.contains(j))
            .map(|j| (j, Self::colour_for_attempt(trial_seed, j, 0, params.k)))
            .collect();
        RunPlan { computation, colours }
    }

    /// Trap colour for a given (run, attempt); redos draw a fresh colour.
    pub fn colour_for_attempt(trial_seed: u64, run: usize, attempt: u32, k: usize) -> usize {
        substream(trial_seed, "run-colour", run as u64, u64::from(attempt)).random_range(0..k)
    }

    pub fn is_computation(&self, run: usize) -> bool {
        self.computation.contains(&run)
    }

    /// First-attempt colour of a test run; `None` for computation runs.
    pub fn colour_of(&self, run: usize) -> Option<usize> {
        self.colours.get(&run).copied()
    }

    pub fn computation_runs(&self) -> &BTreeSet<usize> {
        &self.computation
    }
}

/// Who asked for a run to be restarted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Requester {
    Client,
    Server,
}

/// How far a run had progressed when a redo was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunPhase {
    /// Qubits delivered, no measurement angle sent yet.
    Prepared,
    /// The measurement exchange has started (payload: measurements already
    /// requested).
    Measuring(usize),
}

/// The client may only restart a run before it reveals any measurement
/// angle; the server may restart at any point.
pub fn redo_allowed(requester: Requester, phase: RunPhase) -> bool {
    match requester {
        Requester::Server => true,
        Requester::Client => phase == RunPhase::Prepared,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedoEvent {
    pub run: usize,
    pub attempt: u32,
    pub requester: Requester,
    pub phase: RunPhase,
}

/// Redo behaviour knobs. Rates are per-attempt probabilities of requesting
/// a restart (the client decides in its allowed window, the simulated server
/// at a uniformly random point of the run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedoPolicy {
    pub client_rate: f64,
    pub server_rate: f64,
    pub max_attempts: u32,
}

impl Default for RedoPolicy {
    fn default() -> Self {
        RedoPolicy { client_rate: 0.0, server_rate: 0.0, max_attempts: 64 }
    }
}

/// Server's answer to a delivered batch of prepared qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeginReply {
    Ready,
    Redo,
}

/// Server's answer to a measurement instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureReply {
    Outcome(bool),
    Redo,
}

/// The client's view of a server, in-process or remote. One run is active at
/// a time: `begin_run`, then one `measure` per vertex in pattern order,
/// then either completion or a redo that restarts the same run index.
pub trait ServerConnection {
    fn begin_run(
        &mut self,
        run: usize,
        attempt: u32,
        preps: &[(Vertex, PreparedQubit)],
    ) -> Result<BeginReply, ProtocolError>;

    fn measure(&mut self, v: Vertex, delta: Angle8) -> Result<MeasureReply, ProtocolError>;

    /// Reports the final verdict (accept = true) and releases the session.
    fn finish(&mut self, accept: bool) -> Result<(), ProtocolError>;
}

/// In-process server: owns the quantum session, applies its configured
/// behaviour, and injects its own redos at seeded random positions.
#[derive(Debug)]
pub struct InMemoryConnection {
    graph: Graph,
    behaviour: ServerBehaviour,
    server_seed: u64,
    redo_rate: f64,
    active_cap: usize,
    session: Option<ServerSession>,
    measured: usize,
    redo_at: Option<usize>,
}

impl InMemoryConnection {
    pub fn new(graph: Graph, behaviour: ServerBehaviour, server_seed: u64) -> InMemoryConnection {
        InMemoryConnection {
            graph,
            behaviour,
            server_seed,
            redo_rate: 0.0,
            active_cap: DEFAULT_ACTIVE_CAP,
            session: None,
            measured: 0,
            redo_at: None,
        }
    }

    pub fn with_redo_rate(mut self, rate: f64) -> InMemoryConnection {
        self.redo_rate = rate;
        self
    }

    pub fn with_active_cap(mut self, cap: usize) -> InMemoryConnection {
        self.active_cap = cap;
        self
    }
}

/// Seeded server-side redo draw for `(run, attempt)`: `None` when the run
/// proceeds, `Some(0)` to redo before any measurement, `Some(i)` to redo in
/// place of the i-th measurement reply. Shared by the in-memory server and
/// any out-of-process server that wants the same schedule.
pub fn server_redo_injection(
    server_seed: u64,
    run: usize,
    attempt: u32,
    rate: f64,
    num_vertices: usize,
) -> Option<usize> {
    if rate <= 0.0 {
        return None;
    }
    let mut rng = substream(server_seed, "server-redo", run as u64, u64::from(attempt));
    if rng.random_bool(rate) {
        Some(rng.random_range(0..=num_vertices))
    } else {
        None
    }
}

impl ServerConnection for InMemoryConnection {
    fn begin_run(
        &mut self,
        run: usize,
        attempt: u32,
        preps: &[(Vertex, PreparedQubit)],
    ) -> Result<BeginReply, ProtocolError> {
        self.redo_at = server_redo_injection(
            self.server_seed,
            run,
            attempt,
            self.redo_rate,
            self.graph.num_vertices(),
        );
        self.measured = 0;
        if self.redo_at == Some(0) {
            self.session = None;
            return Ok(BeginReply::Redo);
        }
        let deviations = self.behaviour.deviations_for_run(run).cloned().unwrap_or_default();
        self.session = Some(ServerSession::new(
            self.graph.clone(),
            preps.to_vec(),
            self.behaviour.noise().cloned(),
            deviations,
            substream(self.server_seed, "run-server", run as u64, u64::from(attempt)),
            self.active_cap,
        ));
        Ok(BeginReply::Ready)
    }

    fn measure(&mut self, v: Vertex, delta: Angle8) -> Result<MeasureReply, ProtocolError> {
        let session = self
            .session
            .as_mut()
            .ok_or_else(|| ProtocolError::Connection("measure without an active run".into()))?;
        self.measured += 1;
        if self.redo_at == Some(self.measured) {
            self.session = None;
            return Ok(MeasureReply::Redo);
        }
        Ok(MeasureReply::Outcome(session.measure(v, delta)?))
    }

    fn finish(&mut self, _accept: bool) -> Result<(), ProtocolError> {
        self.session = None;
        Ok(())
    }
}

/// Everything recorded about one completed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub kind: RunKind,
    pub transcript: RunTranscript,
    /// Decoded output bits (computation runs only).
    pub output: Option<Vec<bool>>,
    /// Traps whose decoded outcome was wrong (test runs only).
    pub failed_traps: Vec<Vertex>,
    /// Total attempts consumed, counting the successful one.
    pub attempts: u32,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        !self.failed_traps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    /// `failed >= threshold` test runs tripped their traps.
    TestFailures { failed: usize, threshold: usize },
    /// No output vector was produced by a strict majority of computation runs.
    NoMajority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept { output: Vec<bool> },
    Abort { reason: AbortReason },
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept { .. })
    }

    pub fn output(&self) -> Option<&[bool]> {
        match self {
            Verdict::Accept { output } => Some(output),
            Verdict::Abort { .. } => None,
        }
    }
}

/// Full result of one protocol execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub params: ProtocolParams,
    pub verdict: Verdict,
    /// Failed test runs.
    pub failures: usize,
    pub records: Vec<RunRecord>,
    pub redo_events: Vec<RedoEvent>,
}

/// The output vector reported by a strict majority (`> half`) of the
/// computation runs, if any.
pub fn majority_output(outputs: &[Vec<bool>]) -> Option<Vec<bool>> {
    let mut counts: BTreeMap<&Vec<bool>, usize> = BTreeMap::new();
    for out in outputs {
        *counts.entry(out).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|&(_, c)| 2 * c > outputs.len())
        .map(|(out, _)| out.clone())
}

/// Counts failed test runs and derives the verdict: abort when `failures >= w`,
/// otherwise accept iff a strict majority of computation runs agree.
pub fn evaluate_records(params: &ProtocolParams, records: &[RunRecord]) -> (usize, Verdict) {
    let failures = records.iter().filter(|r| r.kind.is_test() && r.failed()).count();
    if failures >= params.w {
        return (
            failures,
            Verdict::Abort { reason: AbortReason::TestFailures { failed: failures, threshold: params.w } },
        );
    }
    let outputs: Vec<Vec<bool>> = records
        .iter()
        .filter_map(|r| r.output.clone())
        .collect();
    let verdict = match majority_output(&outputs) {
        Some(output) => Verdict::Accept { output },
        None => Verdict::Abort { reason: AbortReason::NoMajority },
    };
    (failures, verdict)
}

fn check_inputs(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    input_bits: &[bool],
) -> Result<(), ProtocolError> {
    if colouring.k() != params.k {
        return Err(ProtocolError::ColouringMismatch { got: colouring.k(), expected: params.k });
    }
    match validate_colouring(pattern.graph(), colouring) {
        Ok(true) => {}
        Ok(false) => return Err(ProtocolError::ImproperColouring),
        Err(e) => return Err(ProtocolError::InvalidParams(e.to_string())),
    }
    if input_bits.len() != pattern.graph().inputs().len() {
        return Err(ProtocolError::InvalidParams(format!(
            "pattern takes {} input bits, got {}",
            pattern.graph().inputs().len(),
            input_bits.len()
        )));
    }
    Ok(())
}

/// Executes run `j` over a connection, retrying on redos from either side.
/// Client-side redos only ever fire in the window where they are allowed.
fn execute_protocol_run<C: ServerConnection>(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    inputs: &BTreeMap<Vertex, bool>,
    policy: &RedoPolicy,
    trial_seed: u64,
    is_computation: bool,
    j: usize,
    conn: &mut C,
) -> Result<(RunRecord, Vec<RedoEvent>), ProtocolError> {
    let mut redo_events = Vec::new();
    for attempt in 0..policy.max_attempts {
        let mut client_rng = substream(trial_seed, "run-client", j as u64, u64::from(attempt));
        let (kind, mut client) = if is_computation {
            (
                RunKind::Computation,
                ClientRun::new_computation(pattern, inputs, &mut client_rng)?,
            )
        } else {
            let colour = RunPlan::colour_for_attempt(trial_seed, j, attempt, params.k);
            (
                RunKind::Test { colour },
                ClientRun::new_test(pattern, colouring, colour, &mut client_rng)?,
            )
        };
        let preps = client.preparations();
        if conn.begin_run(j, attempt, &preps)? == BeginReply::Redo {
            redo_events.push(RedoEvent {
                run: j,
                attempt,
                requester: Requester::Server,
                phase: RunPhase::Prepared,
            });
            continue;
        }
        // The client's own redo window closes once the first measurement
        // angle leaves the client.
        let mut client_redo_rng =
            substream(trial_seed, "client-redo", j as u64, u64::from(attempt));
        if policy.client_rate > 0.0 && client_redo_rng.random_bool(policy.client_rate) {
            debug_assert!(redo_allowed(Requester::Client, RunPhase::Prepared));
            redo_events.push(RedoEvent {
                run: j,
                attempt,
                requester: Requester::Client,
                phase: RunPhase::Prepared,
            });
            continue;
        }
        let mut transcript = RunTranscript::default();
        let mut server_redo = None;
        for (pos, &v) in pattern.order().iter().enumerate() {
            let delta = client.delta(v)?;
            match conn.measure(v, delta)? {
                MeasureReply::Outcome(b) => {
                    client.record_outcome(v, b)?;
                    transcript.deltas.insert(v, delta);
                    transcript.outcomes.insert(v, b);
                }
                MeasureReply::Redo => {
                    server_redo = Some(RunPhase::Measuring(pos));
                    break;
                }
            }
        }
        if let Some(phase) = server_redo {
            redo_events.push(RedoEvent { run: j, attempt, requester: Requester::Server, phase });
            continue;
        }
        let record = RunRecord {
            index: j,
            kind,
            output: if is_computation { Some(client.decoded_outputs()?) } else { None },
            failed_traps: client.trap_failures()?,
            transcript,
            attempts: attempt + 1,
        };
        return Ok((record, redo_events));
    }
    Err(ProtocolError::TooManyAttempts { run: j, max: policy.max_attempts })
}

/// Runs the whole protocol over an arbitrary connection (sequential over
/// runs, as a real client would drive a remote server).
pub fn run_protocol<C: ServerConnection>(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    input_bits: &[bool],
    policy: &RedoPolicy,
    trial_seed: u64,
    conn: &mut C,
) -> Result<ProtocolOutcome, ProtocolError> {
    check_inputs(pattern, colouring, params, input_bits)?;
    let inputs = pattern.input_map(input_bits);
    let plan = RunPlan::sample(trial_seed, params);
    let mut records = Vec::with_capacity(params.n);
    let mut redo_events = Vec::new();
    for j in 0..params.n {
        let (record, redos) = execute_protocol_run(
            pattern,
            colouring,
            params,
            &inputs,
            policy,
            trial_seed,
            plan.is_computation(j),
            j,
            conn,
        )?;
        records.push(record);
        redo_events.extend(redos);
    }
    let (failures, verdict) = evaluate_records(params, &records);
    conn.finish(verdict.accepted())?;
    Ok(ProtocolOutcome { params: *params, verdict, failures, records, redo_events })
}

/// Seed for the simulated server of a given trial, shared by the sequential
/// and parallel drivers (and by an out-of-process server configured to
/// mirror a trial).
pub fn server_seed_for_trial(trial_seed: u64) -> u64 {
    derive_seed(trial_seed, "server", 0, 0)
}

/// In-memory end-to-end execution with the standard seed layout.
pub fn run_protocol_in_memory(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    input_bits: &[bool],
    behaviour: &ServerBehaviour,
    policy: &RedoPolicy,
    trial_seed: u64,
) -> Result<ProtocolOutcome, ProtocolError> {
    let mut conn =
        InMemoryConnection::new(pattern.graph().clone(), behaviour.clone(), server_seed_for_trial(trial_seed))
            .with_redo_rate(policy.server_rate);
    run_protocol(pattern, colouring, params, input_bits, policy, trial_seed, &mut conn)
}

/// Like [`run_protocol_in_memory`] but executing the runs in parallel.
/// Every per-run random choice is keyed by (seed, run, attempt), so the
/// result is identical to the sequential driver.
pub fn run_protocol_in_memory_parallel(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    input_bits: &[bool],
    behaviour: &ServerBehaviour,
    policy: &RedoPolicy,
    trial_seed: u64,
) -> Result<ProtocolOutcome, ProtocolError> {
    use rayon::prelude::*;
    check_inputs(pattern, colouring, params, input_bits)?;
    let inputs = pattern.input_map(input_bits);
    let plan = RunPlan::sample(trial_seed, params);
    let server_seed = server_seed_for_trial(trial_seed);
    let results: Result<Vec<(RunRecord, Vec<RedoEvent>)>, ProtocolError> = (0..params.n)
        .into_par_iter()
        .map(|j| {
            let mut conn =
                InMemoryConnection::new(pattern.graph().clone(), behaviour.clone(), server_seed)
                    .with_redo_rate(policy.server_rate);
            execute_protocol_run(
                pattern,
                colouring,
                params,
                &inputs,
                policy,
                trial_seed,
                plan.is_computation(j),
                j,
                &mut conn,
            )
        })
        .collect();
    let mut records = Vec::with_capacity(params.n);
    let mut redo_events = Vec::new();
    for (record, redos) in results? {
        records.push(record);
        redo_events.extend(redos);
    }
    let (failures, verdict) = evaluate_records(params, &records);
    Ok(ProtocolOutcome { params: *params, verdict, failures, records, redo_events })
}
