//! Noise-robustness sweeps: for each depolarizing rate, measure the
//! per-colour trap failure probabilities, then for each failure-rate
//! threshold omega run a batch of noisy-but-honest executions and compare
//! the empirical rates against the analytic accept-and-correct floor and
//! abort ceiling.
//!
//! Three regimes per (noise, omega) cell:
//! - `Robust`  (omega > p_max): accept-and-correct rate must be at least
//!   `1 - eps_cor` where `eps_cor = exp(-2 (omega - p_max)^2 t) +
//!   exp(-2 (1/2 - p_max)^2 d)`;
//! - `Detect`  (omega < p_min): accept rate must be at most
//!   `exp(-2 (p_min - omega)^2 t)`;
//! - `Between` (p_min <= omega <= p_max): no analytic guarantee applies.

use serde::{Deserialize, Serialize};
use vbqc::adversary::{estimate_p_bounds, FailureProbabilityBounds, NoiseModel, ServerBehaviour};
use vbqc::bounds::{abort_probability_bound, accept_and_correct_bound};
use vbqc::graph::Colouring;
use vbqc::pattern::MeasurementPattern;
use vbqc::protocol::{ProtocolParams, RedoPolicy};
use vbqc::rng::derive_seed;

use crate::config::Experiment;
use crate::montecarlo::{run_batch, BatchError, Summary};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("noise model: {0}")]
    Noise(#[from] vbqc::adversary::AdversaryError),
    #[error("failure-probability estimation: {0}")]
    Estimate(#[from] vbqc::run::RunError),
    #[error("parameters: {0}")]
    Params(#[from] vbqc::protocol::ProtocolError),
    #[error("batch: {0}")]
    Batch(#[from] BatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Robust,
    Detect,
    Between,
}

/// One cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub schema: u32,
    pub noise_p: f64,
    pub omega: f64,
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub w: usize,
    pub trials: u64,
    pub accepts: u64,
    pub correct_accepts: u64,
    /// Wilson bracket on the per-test-run failure probability.
    pub p_max: f64,
    pub p_min: f64,
    pub regime: Regime,
    /// `1 - eps_cor`, present in the `Robust` regime.
    pub correctness_floor: Option<f64>,
    /// Abort-regime ceiling on the accept rate, present in `Detect`.
    pub abort_ceiling: Option<f64>,
    /// Whether the empirical rate satisfied the applicable guarantee.
    pub satisfied: Option<bool>,
}

impl RobustnessRow {
    pub fn accept_rate(&self) -> f64 {
        self.accepts as f64 / self.trials as f64
    }

    pub fn correct_accept_rate(&self) -> f64 {
        self.correct_accepts as f64 / self.trials as f64
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("row serializes")
    }
}

/// Measures the per-colour failure bracket for one depolarizing rate.
pub fn measure_p_bounds(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    p: f64,
    trials_per_colour: u64,
    seed: u64,
) -> Result<FailureProbabilityBounds, SweepError> {
    let noise = NoiseModel::depolarizing(p)?;
    Ok(estimate_p_bounds(pattern, colouring, &noise, trials_per_colour, seed, 3.0)?)
}

fn classify(omega: f64, bracket: &FailureProbabilityBounds) -> Regime {
    if omega > bracket.p_max {
        Regime::Robust
    } else if omega < bracket.p_min {
        Regime::Detect
    } else {
        Regime::Between
    }
}

/// Runs one (noise, omega) cell: a batch of noisy honest executions at the
/// thresholds induced by `omega`, compared against the applicable bound.
#[allow(clippy::too_many_arguments)]
pub fn sweep_cell(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    inputs: &[bool],
    n: usize,
    noise_p: f64,
    omega: f64,
    bracket: &FailureProbabilityBounds,
    trials: u64,
    seed: u64,
) -> Result<RobustnessRow, SweepError> {
    let params = ProtocolParams::from_ratios(n, 0.5, omega, colouring.k())?;
    let behaviour = if noise_p > 0.0 {
        ServerBehaviour::Noisy(NoiseModel::depolarizing(noise_p)?)
    } else {
        ServerBehaviour::Honest
    };
    let exp = Experiment {
        pattern_ref: String::new(),
        pattern: pattern.clone(),
        colouring: colouring.clone(),
        params,
        behaviour,
        policy: RedoPolicy::default(),
        inputs: inputs.to_vec(),
        trials,
        seed,
        jobs: None,
        out: None,
        p_succ: None,
    };
    let summary: Summary = run_batch(&exp)?;

    let regime = classify(omega, bracket);
    let (correctness_floor, abort_ceiling, satisfied) = match regime {
        Regime::Robust => {
            // The floor needs p_max < min(omega, 1/2); the regime check
            // guarantees omega > p_max, but p_max >= 1/2 leaves no guarantee.
            match accept_and_correct_bound(params.d, params.t, omega, bracket.p_max) {
                Ok(eps_cor) => {
                    let floor = 1.0 - eps_cor.value;
                    let ok = summary.correct_accept_rate() >= floor;
                    (Some(floor), None, Some(ok))
                }
                Err(_) => (None, None, None),
            }
        }
        Regime::Detect => {
            let ceiling = abort_probability_bound(params.t, omega, bracket.p_min)
                .expect("regime check guarantees p_min > omega")
                .value;
            let ok = summary.accept_rate() <= ceiling;
            (None, Some(ceiling), Some(ok))
        }
        Regime::Between => (None, None, None),
    };

    Ok(RobustnessRow {
        schema: 1,
        noise_p,
        omega,
        n: params.n,
        d: params.d,
        t: params.t,
        w: params.w,
        trials,
        accepts: summary.accepts,
        correct_accepts: summary.correct_accepts,
        p_max: bracket.p_max,
        p_min: bracket.p_min,
        regime,
        correctness_floor,
        abort_ceiling,
        satisfied,
    })
}

/// Full sweep: measures the failure bracket once per noise rate, then runs
/// every omega against it. Row order (and therefore output bytes) is fixed
/// by the grids.
#[allow(clippy::too_many_arguments)]
pub fn robustness_sweep(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    inputs: &[bool],
    n: usize,
    noise_grid: &[f64],
    omega_grid: &[f64],
    trials: u64,
    pbound_trials: u64,
    seed: u64,
) -> Result<Vec<RobustnessRow>, SweepError> {
    let mut rows = Vec::with_capacity(noise_grid.len() * omega_grid.len());
    for (i, &p) in noise_grid.iter().enumerate() {
        let bracket = measure_p_bounds(
            pattern,
            colouring,
            p,
            pbound_trials,
            derive_seed(seed, "pbound", i as u64, 0),
        )?;
        for (j, &omega) in omega_grid.iter().enumerate() {
            rows.push(sweep_cell(
                pattern,
                colouring,
                inputs,
                n,
                p,
                omega,
                &bracket,
                trials,
                derive_seed(seed, "cell", i as u64, j as u64),
            )?);
        }
    }
    Ok(rows)
}
