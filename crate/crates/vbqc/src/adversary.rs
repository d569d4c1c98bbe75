//! Server behaviours: honest, noisy (per-qubit channels), and malicious
//! (per-run Pauli deviations), plus a classical fast path that evaluates
//! bit-flip attacks without touching the simulator, and exact failure
//! probabilities for small instances by configuration enumeration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Colouring, Vertex};
use crate::protocol::{ProtocolParams, RunPlan};
use crate::sim::{KrausChannel, Pauli, SimError};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("attack contains a Z deviation on vertex {0}; Z is invisible in the measurement frame, use the quantum path")]
    ZDeviation(Vertex),
    #[error("attacked vertex {0} is not coloured")]
    UncolouredVertex(Vertex),
    #[error("channel: {0}")]
    Channel(#[from] SimError),
    #[error("invalid noise parameter: {0}")]
    BadNoise(String),
}

/// When a per-qubit channel fires relative to the entangling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NoiseSchedule {
    /// After all of a qubit's entangling gates, before its measurement
    /// (the canonical injection point).
    #[default]
    PostEntangle,
    /// At preparation time, before any entangling gate touches the qubit.
    PrePreparation,
}

/// An i.i.d. per-qubit noise channel applied to every qubit of every run.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    channel: KrausChannel,
    schedule: NoiseSchedule,
}

impl NoiseModel {
    pub fn new(channel: KrausChannel, schedule: NoiseSchedule) -> Result<NoiseModel, AdversaryError> {
        if channel.arity() != 1 {
            return Err(AdversaryError::BadNoise("per-qubit noise must have arity 1".into()));
        }
        Ok(NoiseModel { channel, schedule })
    }

    /// Depolarizing noise in the error-probability convention: each qubit
    /// independently suffers X, Y, or Z, each with probability `p/3`
    /// (total error probability `p`). An isolated trap prepared at a uniform
    /// angle then fails with probability exactly `2p/3`: Z always flips an
    /// equatorial outcome, while X and Y flip with average probability 1/2.
    pub fn depolarizing(p: f64) -> Result<NoiseModel, AdversaryError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(AdversaryError::BadNoise(format!("depolarizing p = {p} out of range")));
        }
        NoiseModel::new(
            KrausChannel::pauli_mixture(p / 3.0, p / 3.0, p / 3.0)?,
            NoiseSchedule::PostEntangle,
        )
    }

    pub fn with_schedule(mut self, schedule: NoiseSchedule) -> NoiseModel {
        self.schedule = schedule;
        self
    }

    pub fn channel(&self) -> &KrausChannel {
        &self.channel
    }

    pub fn schedule(&self) -> NoiseSchedule {
        self.schedule
    }
}

/// Analytic per-test-run failure probability under [`NoiseModel::depolarizing`]
/// for a run whose trap class holds `traps` vertices: each trap fails
/// independently with probability `2p/3`.
pub fn depolarizing_test_failure(p: f64, traps: usize) -> f64 {
    1.0 - (1.0 - 2.0 * p / 3.0).powi(traps as i32)
}

/// Per-run Pauli deviations: for each run index, a set of vertices with the
/// Pauli inserted in the measurement frame just before that vertex's readout.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attack {
    per_run: BTreeMap<usize, BTreeMap<Vertex, Pauli>>,
}

impl Attack {
    pub fn new(per_run: BTreeMap<usize, BTreeMap<Vertex, Pauli>>) -> Attack {
        Attack { per_run }
    }

    /// The one-parameter family used throughout the experiments: an X
    /// deviation on `target` in each of the first `m` runs.
    pub fn sigma_m(m: usize, target: Vertex) -> Attack {
        let per_run = (0..m)
            .map(|j| (j, BTreeMap::from([(target, Pauli::X)])))
            .collect();
        Attack { per_run }
    }

    /// X deviations on every listed vertex in every one of the `n` runs.
    pub fn x_everywhere(n: usize, vertices: &[Vertex]) -> Attack {
        let devs: BTreeMap<Vertex, Pauli> = vertices.iter().map(|&v| (v, Pauli::X)).collect();
        Attack { per_run: (0..n).map(|j| (j, devs.clone())).collect() }
    }

    /// An X deviation on `target` in an explicit set of runs.
    pub fn on_runs(runs: &[usize], target: Vertex, pauli: Pauli) -> Attack {
        Attack {
            per_run: runs.iter().map(|&j| (j, BTreeMap::from([(target, pauli)]))).collect(),
        }
    }

    pub fn deviations_for_run(&self, run: usize) -> Option<&BTreeMap<Vertex, Pauli>> {
        self.per_run.get(&run)
    }

    pub fn per_run(&self) -> &BTreeMap<usize, BTreeMap<Vertex, Pauli>> {
        &self.per_run
    }

    pub fn is_empty(&self) -> bool {
        self.per_run.values().all(|m| m.is_empty())
    }
}

/// How the simulated Server treats each run.
#[derive(Debug, Clone, Default)]
pub enum ServerBehaviour {
    #[default]
    Honest,
    Noisy(NoiseModel),
    Malicious(Attack),
    NoisyMalicious(NoiseModel, Attack),
}

impl ServerBehaviour {
    pub fn noise(&self) -> Option<&NoiseModel> {
        match self {
            ServerBehaviour::Noisy(n) | ServerBehaviour::NoisyMalicious(n, _) => Some(n),
            _ => None,
        }
    }

    pub fn deviations_for_run(&self, run: usize) -> Option<&BTreeMap<Vertex, Pauli>> {
        match self {
            ServerBehaviour::Malicious(a) | ServerBehaviour::NoisyMalicious(_, a) => {
                a.deviations_for_run(run)
            }
            _ => None,
        }
    }
}

/// What the classical fast path reports for one sampled protocol execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalOutcome {
    /// Number of failed test runs (a test run fails iff some deviated vertex
    /// carries that run's trap colour; X/Y flips a deterministic trap).
    pub failed_tests: u64,
    /// Number of computation runs containing at least one deviation (the
    /// conservative corruption criterion used by the analysis).
    pub affected_computations: u64,
    /// Protocol acceptance: `failed_tests < w`.
    pub accept_strict: bool,
    /// Analysis-side acceptance: `failed_tests <= w`.
    pub accept_lenient: bool,
    /// Whether affected computation runs could override the majority vote:
    /// `affected_computations >= d/2`.
    pub corruption_possible: bool,
}

impl ClassicalOutcome {
    pub fn failure_strict(&self) -> bool {
        self.accept_strict && self.corruption_possible
    }

    pub fn failure_lenient(&self) -> bool {
        self.accept_lenient && self.corruption_possible
    }
}

/// Evaluates a bit-flip attack classically against a sampled run plan.
///
/// Exact for X/Y deviations: a deviated trap flips deterministically, a
/// deviated dummy or computation qubit never trips any trap (traps are
/// isolated by dummies), and the computation-side count uses the conservative
/// "any deviation affects the run" criterion. Z deviations are rejected:
/// they are statistically invisible in the measurement frame, so the quantum
/// path is the right tool for them.
pub fn classical_attack_outcome(
    attack: &Attack,
    plan: &RunPlan,
    colouring: &Colouring,
    params: &ProtocolParams,
) -> Result<ClassicalOutcome, AdversaryError> {
    let mut failed_tests = 0u64;
    let mut affected = 0u64;
    for (&run, devs) in attack.per_run() {
        if devs.is_empty() || run >= params.n {
            continue;
        }
        for (&v, &p) in devs {
            if p == Pauli::Z {
                return Err(AdversaryError::ZDeviation(v));
            }
        }
        if plan.is_computation(run) {
            affected += 1;
        } else {
            let trap_colour = plan.colour_of(run).expect("test runs carry a colour");
            let hits_trap = devs.keys().try_fold(false, |acc, &v| {
                colouring
                    .colour_of(v)
                    .map(|c| acc || c == trap_colour)
                    .ok_or(AdversaryError::UncolouredVertex(v))
            })?;
            if hits_trap {
                failed_tests += 1;
            }
        }
    }
    let w = params.w as u64;
    Ok(ClassicalOutcome {
        failed_tests,
        affected_computations: affected,
        accept_strict: failed_tests < w,
        accept_lenient: failed_tests <= w,
        corruption_possible: affected as f64 >= params.d as f64 / 2.0,
    })
}

/// One seeded classical trial: samples the run plan exactly as the quantum
/// orchestrator would, then evaluates the attack classically.
pub fn fast_path_trial(
    attack: &Attack,
    params: &ProtocolParams,
    colouring: &Colouring,
    trial_seed: u64,
) -> Result<ClassicalOutcome, AdversaryError> {
    let plan = RunPlan::sample(trial_seed, params);
    classical_attack_outcome(attack, &plan, colouring, params)
}

/// Outcomes of the whole prefix-attack family over one sampled plan.
///
/// For a prefix attack on a target of colour `c`, a test run in the prefix
/// fails iff its trap colour is `c`, and every computation run in the prefix
/// is affected. Both statistics are prefix counts of the plan, so one plan
/// evaluates every `(m, target)` cell at once; `failed_tests[c][m]` and
/// `affected[m]` reproduce [`classical_attack_outcome`] for the attack with
/// prefix `m` on any target of colour `c` (see the equivalence test).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixOutcomes {
    /// `failed_tests[c][m]`: failed test runs among runs `0..m` when the
    /// target has colour `c`.
    pub failed_tests: Vec<Vec<u32>>,
    /// `affected[m]`: computation runs among runs `0..m`.
    pub affected: Vec<u32>,
}

impl PrefixOutcomes {
    /// The [`ClassicalOutcome`] of the prefix attack of length `m` on a
    /// target with colour `target_colour`.
    pub fn outcome(&self, m: usize, target_colour: usize, params: &ProtocolParams) -> ClassicalOutcome {
        let failed_tests = u64::from(self.failed_tests[target_colour][m]);
        let affected = u64::from(self.affected[m]);
        let w = params.w as u64;
        ClassicalOutcome {
            failed_tests,
            affected_computations: affected,
            accept_strict: failed_tests < w,
            accept_lenient: failed_tests <= w,
            corruption_possible: affected as f64 >= params.d as f64 / 2.0,
        }
    }
}

/// Tabulates prefix counts of `plan` for all prefix lengths `0..=n` and all
/// `k` target colours.
pub fn prefix_attack_outcomes(plan: &RunPlan, params: &ProtocolParams) -> PrefixOutcomes {
    let n = params.n;
    let mut failed_tests = vec![vec![0u32; n + 1]; params.k];
    let mut affected = vec![0u32; n + 1];
    for j in 0..n {
        for c in 0..params.k {
            failed_tests[c][j + 1] = failed_tests[c][j];
        }
        affected[j + 1] = affected[j];
        match plan.colour_of(j) {
            Some(colour) => failed_tests[colour][j + 1] += 1,
            None => affected[j + 1] += 1,
        }
    }
    PrefixOutcomes { failed_tests, affected }
}

/// Both acceptance conventions of the exact failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactFailure {
    /// `Pr[failed tests < w and affected >= d/2]` (protocol threshold).
    pub strict: f64,
    /// `Pr[failed tests <= w and affected >= d/2]` (analysis threshold).
    pub lenient: f64,
}

/// Exact failure probability for the `sigma_m` family (X on one fixed vertex
/// in each of the first `m` runs), by summing over all equiprobable
/// (partition, colour) configurations.
///
/// Partitions are enumerated through the count `a` of test runs among the
/// attacked prefix, with hypergeometric weight; the colour draws enter as the
/// exact Binomial(a, 1/k) law of the number of trap-colour matches, which is
/// identical to enumerating all k^t colour vectors. Feasible for n <= 16.
pub fn exact_failure_probability(
    params: &ProtocolParams,
    m: usize,
) -> Result<ExactFailure, AdversaryError> {
    if params.n > 16 {
        return Err(AdversaryError::BadNoise(format!(
            "exact enumeration supports n <= 16, got {}",
            params.n
        )));
    }
    let (n, d, t, w, k) = (params.n, params.d, params.t, params.w, params.k);
    let m = m.min(n);
    let inv_k = 1.0 / k as f64;
    let mut strict = 0.0;
    let mut lenient = 0.0;
    for a in 0..=m.min(t) {
        if m - a > d {
            continue; // more attacked computation runs than computation runs
        }
        let affected = (m - a) as f64;
        if affected < d as f64 / 2.0 {
            continue;
        }
        let weight = hypergeom_pmf(n, t, m, a);
        // Y ~ Binomial(a, 1/k); accept events are lower tails of Y.
        strict += weight * binomial_cdf(a, inv_k, w as i64 - 1);
        lenient += weight * binomial_cdf(a, inv_k, w as i64);
    }
    Ok(ExactFailure { strict, lenient })
}

/// `C(choose, k)` as f64, exact for the small arguments used here.
fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn hypergeom_pmf(population: usize, successes: usize, draws: usize, k: usize) -> f64 {
    choose(successes, k) * choose(population - successes, draws.saturating_sub(k))
        / choose(population, draws)
}

fn binomial_cdf(n: usize, p: f64, cutoff: i64) -> f64 {
    if cutoff < 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..=(cutoff as usize).min(n) {
        total += choose(n, i) * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    total
}

/// Per-colour test failure statistics from forced-colour noisy runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColourFailureStats {
    pub colour: usize,
    pub traps: usize,
    pub failures: u64,
    pub trials: u64,
    pub rate: f64,
    /// Wilson score interval at the given confidence.
    pub interval: (f64, f64),
}

/// Empirical bracket on the per-test-run failure probability across trap
/// colours: `p_max` upper-bounds the worst colour and `p_min` lower-bounds
/// the best one, each at the Wilson confidence level `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProbabilityBounds {
    pub per_colour: Vec<ColourFailureStats>,
    pub p_max: f64,
    pub p_min: f64,
}

/// Estimates per-colour test-run failure probabilities under a noise model
/// by running forced-colour test runs against an honest-but-noisy server.
pub fn estimate_p_bounds(
    pattern: &crate::pattern::MeasurementPattern,
    colouring: &Colouring,
    noise: &NoiseModel,
    trials_per_colour: u64,
    seed: u64,
    z: f64,
) -> Result<FailureProbabilityBounds, crate::run::RunError> {
    use crate::run::{execute_run, ClientRun, ServerSession};

    let mut per_colour = Vec::with_capacity(colouring.k());
    for colour in 0..colouring.k() {
        let mut failures = 0u64;
        for trial in 0..trials_per_colour {
            let mut client_rng =
                crate::rng::substream(seed, "pbound-client", colour as u64, trial);
            let mut client = ClientRun::new_test(pattern, colouring, colour, &mut client_rng)?;
            let mut session = ServerSession::new(
                pattern.graph().clone(),
                client.preparations(),
                Some(noise.clone()),
                BTreeMap::new(),
                crate::rng::substream(seed, "pbound-server", colour as u64, trial),
                crate::sim::DEFAULT_ACTIVE_CAP,
            );
            execute_run(&mut client, &mut session)?;
            if !client.trap_failures()?.is_empty() {
                failures += 1;
            }
        }
        per_colour.push(ColourFailureStats {
            colour,
            traps: colouring.class(colour).len(),
            failures,
            trials: trials_per_colour,
            rate: failures as f64 / trials_per_colour.max(1) as f64,
            interval: wilson_interval(failures, trials_per_colour, z),
        });
    }
    let p_max = per_colour.iter().map(|c| c.interval.1).fold(0.0, f64::max);
    let p_min = per_colour.iter().map(|c| c.interval.0).fold(1.0, f64::min);
    Ok(FailureProbabilityBounds { per_colour, p_max, p_min })
}

/// Wilson score interval for a binomial proportion at confidence `z` sigmas.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
