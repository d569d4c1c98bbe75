//! Monte Carlo driver: runs a batch of independent protocol executions and
//! aggregates verdicts, correctness against the reference output, trap
//! statistics, and the analytic bounds the empirical rates are compared to.
//!
//! Determinism: trial `i` is seeded with `derive_seed(master, "trial", i, 0)`
//! and aggregation folds integer counters in trial order, so a batch is
//! byte-for-byte reproducible for a given config regardless of `jobs`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vbqc::bounds::optimize_for_counts;
use vbqc::protocol::{presample_count, run_protocol_in_memory, AbortReason, ProtocolOutcome, Requester};
use vbqc::rng::derive_seed;
use vbqc::run::reference_output;

use crate::config::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("trial {trial} failed: {source}")]
    Trial { trial: u64, source: vbqc::protocol::ProtocolError },
    #[error("reference execution failed: {0}")]
    Reference(#[from] vbqc::run::RunError),
    #[error("invalid presample probability: {0}")]
    Presample(vbqc::protocol::ProtocolError),
}

/// Per-colour trap statistics across the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColourCounts {
    /// Trap qubits a test run of this colour places.
    pub traps: usize,
    /// Test runs executed with this trap colour.
    pub test_runs: u64,
    /// Those whose trap check failed.
    pub failed_runs: u64,
}

impl ColourCounts {
    pub fn rate(&self) -> f64 {
        if self.test_runs == 0 {
            0.0
        } else {
            self.failed_runs as f64 / self.test_runs as f64
        }
    }
}

/// Aggregated result of a batch. Counts are integers so aggregation is exact;
/// derived rates are computed on demand. Wall time is measured but excluded
/// from serialization so identical configs produce identical output bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub pattern: String,
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub w: usize,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub accepts: u64,
    pub aborts: u64,
    /// Accepted with output equal to the reference output.
    pub correct_accepts: u64,
    /// Accepted with any other output.
    pub incorrect_accepts: u64,
    /// Aborts that hit the failed-test threshold (the rest lacked a majority).
    pub threshold_aborts: u64,
    /// Total failed test runs across all trials.
    pub total_failed_tests: u64,
    pub client_redos: u64,
    pub server_redos: u64,
    pub per_colour: BTreeMap<usize, ColourCounts>,
    /// The noiseless blinded execution's output for the configured inputs.
    pub reference: Vec<bool>,
    /// Optimized verifiability bound at these thresholds, when feasible.
    pub verifiability_bound: Option<f64>,
    /// Preparations to presample per run, when `p_succ` is configured.
    pub presample: Option<usize>,
    #[serde(skip)]
    pub wall: Duration,
}

impl Summary {
    pub fn accept_rate(&self) -> f64 {
        self.accepts as f64 / self.trials as f64
    }

    pub fn correct_accept_rate(&self) -> f64 {
        self.correct_accepts as f64 / self.trials as f64
    }

    pub fn incorrect_accept_rate(&self) -> f64 {
        self.incorrect_accepts as f64 / self.trials as f64
    }

    pub fn mean_failed_tests(&self) -> f64 {
        self.total_failed_tests as f64 / self.trials as f64
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// Everything counted from a single trial, kept small so parallel execution
/// aggregates cheaply and in a fixed order.
#[derive(Debug, Clone)]
struct TrialCounts {
    accepted: bool,
    correct: bool,
    failures: u64,
    threshold_abort: bool,
    client_redos: u64,
    server_redos: u64,
    per_colour: BTreeMap<usize, (u64, u64)>, // colour -> (test runs, failed runs)
}

fn count_trial(outcome: &ProtocolOutcome, reference: &[bool]) -> TrialCounts {
    let accepted = outcome.verdict.accepted();
    let correct = outcome.verdict.output() == Some(reference);
    let mut per_colour: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for record in &outcome.records {
        if let vbqc::run::RunKind::Test { colour } = record.kind {
            let entry = per_colour.entry(colour).or_default();
            entry.0 += 1;
            entry.1 += u64::from(record.failed());
        }
    }
    let client_redos =
        outcome.redo_events.iter().filter(|e| e.requester == Requester::Client).count() as u64;
    let server_redos =
        outcome.redo_events.iter().filter(|e| e.requester == Requester::Server).count() as u64;
    TrialCounts {
        accepted,
        correct,
        failures: outcome.failures as u64,
        threshold_abort: matches!(
            outcome.verdict,
            vbqc::protocol::Verdict::Abort { reason: AbortReason::TestFailures { .. } }
        ),
        client_redos,
        server_redos,
        per_colour,
    }
}

/// Seed for trial `i` of a batch with the given master seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    derive_seed(master, "trial", trial, 0)
}

/// Runs the whole batch and aggregates. Uses the global rayon pool; pin the
/// pool size beforehand to honour a `jobs` setting.
pub fn run_batch(exp: &Experiment) -> Result<Summary, BatchError> {
    let start = Instant::now();
    let reference = reference_output(&exp.pattern, &exp.inputs, derive_seed(exp.seed, "reference", 0, 0))?;
    let counts: Result<Vec<TrialCounts>, BatchError> = (0..exp.trials)
        .into_par_iter()
        .map(|i| {
            let outcome = run_protocol_in_memory(
                &exp.pattern,
                &exp.colouring,
                &exp.params,
                &exp.inputs,
                &exp.behaviour,
                &exp.policy,
                trial_seed(exp.seed, i),
            )
            .map_err(|source| BatchError::Trial { trial: i, source })?;
            Ok(count_trial(&outcome, &reference))
        })
        .collect();
    let counts = counts?;

    let mut summary = Summary {
        schema: 1,
        pattern: exp.pattern_ref.clone(),
        n: exp.params.n,
        d: exp.params.d,
        t: exp.params.t,
        w: exp.params.w,
        k: exp.params.k,
        trials: exp.trials,
        seed: exp.seed,
        accepts: 0,
        aborts: 0,
        correct_accepts: 0,
        incorrect_accepts: 0,
        threshold_aborts: 0,
        total_failed_tests: 0,
        client_redos: 0,
        server_redos: 0,
        per_colour: BTreeMap::new(),
        reference,
        verifiability_bound: optimize_for_counts(
            exp.params.n,
            exp.params.d,
            exp.params.t,
            exp.params.w,
            exp.params.k,
        )
        .ok()
        .map(|o| o.result.bound.value),
        presample: match exp.p_succ {
            Some(p) => Some(presample_count(exp.params.n, p).map_err(BatchError::Presample)?),
            None => None,
        },
        wall: Duration::ZERO,
    };
    for c in 0..exp.colouring.k() {
        summary.per_colour.insert(
            c,
            ColourCounts { traps: exp.colouring.class(c).len(), test_runs: 0, failed_runs: 0 },
        );
    }
    for tc in counts {
        summary.accepts += u64::from(tc.accepted);
        summary.aborts += u64::from(!tc.accepted);
        summary.correct_accepts += u64::from(tc.accepted && tc.correct);
        summary.incorrect_accepts += u64::from(tc.accepted && !tc.correct);
        summary.threshold_aborts += u64::from(tc.threshold_abort);
        summary.total_failed_tests += tc.failures;
        summary.client_redos += tc.client_redos;
        summary.server_redos += tc.server_redos;
        for (colour, (runs, failed)) in tc.per_colour {
            let entry = summary.per_colour.entry(colour).or_insert(ColourCounts {
                traps: exp.colouring.class(colour).len(),
                test_runs: 0,
                failed_runs: 0,
            });
            entry.test_runs += runs;
            entry.failed_runs += failed;
        }
    }
    summary.wall = start.elapsed();
    debug_assert_eq!(summary.accepts + summary.aborts, summary.trials);
    debug_assert_eq!(summary.correct_accepts + summary.incorrect_accepts, summary.accepts);
    Ok(summary)
}

/// Builds a rayon pool honouring `jobs` and runs the batch inside it.
pub fn run_batch_with_jobs(exp: &Experiment) -> Result<Summary, BatchError> {
    match exp.jobs {
        None => run_batch(exp),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool")
            .install(|| run_batch(exp)),
    }
}
