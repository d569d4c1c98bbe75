//! Blindness validation: everything the server sees during a run is the
//! prepared qubits plus the blinded angle stream and its own outcomes, and
//! none of it should carry information about the computation. This module
//! samples honest transcripts and checks that
//! (1) each vertex's reported angle is uniform over the 8 possibilities,
//! (2) trained distinguishers cannot tell computation from test runs, one
//!     input from another, or a redone run from a first attempt, and
//! (3) a deliberately unblinded client (all blinding secrets zero) is
//!     detected immediately — the negative control for (1).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vbqc::graph::{Colouring, Vertex};
use vbqc::pattern::MeasurementPattern;
use vbqc::rng::substream;
use vbqc::run::{execute_run, ClientRun, RunError, ServerSession};
use vbqc::sim::DEFAULT_ACTIVE_CAP;

use crate::stats::{bonferroni_threshold, chi_square_uniform, held_out_auc};

/// What the server observes in one run, flattened in measurement order:
/// reported angles as integers `0..8`, outcomes as bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSample {
    pub deltas: Vec<u8>,
    pub outcomes: Vec<bool>,
}

impl TranscriptSample {
    /// Categorical feature vector: one 8-ary feature per vertex, then one
    /// binary feature per vertex.
    pub fn features(&self) -> Vec<usize> {
        self.deltas
            .iter()
            .map(|&d| d as usize)
            .chain(self.outcomes.iter().map(|&b| usize::from(b)))
            .collect()
    }

    pub fn feature_arity(num_vertices: usize) -> Vec<usize> {
        std::iter::repeat_n(8, num_vertices).chain(std::iter::repeat_n(2, num_vertices)).collect()
    }
}

fn collect(pattern: &MeasurementPattern, transcript: &vbqc::run::RunTranscript) -> TranscriptSample {
    let deltas = pattern.order().iter().map(|v| transcript.deltas[v].value()).collect();
    let outcomes = pattern.order().iter().map(|v| transcript.outcomes[v]).collect();
    TranscriptSample { deltas, outcomes }
}

/// One honest computation-run transcript, fresh blinding secrets per call.
pub fn computation_transcript(
    pattern: &MeasurementPattern,
    input_bits: &[bool],
    seed: u64,
    sample: u64,
    attempt: u64,
) -> Result<TranscriptSample, RunError> {
    let inputs = pattern.input_map(input_bits);
    let mut client_rng = substream(seed, "blind-client", sample, attempt);
    let mut client = ClientRun::new_computation(pattern, &inputs, &mut client_rng)?;
    let mut session = ServerSession::from_seed(
        pattern.graph().clone(),
        client.preparations(),
        None,
        BTreeMap::new(),
        seed,
        "blind-server",
        sample,
        attempt,
        DEFAULT_ACTIVE_CAP,
    );
    Ok(collect(pattern, &execute_run(&mut client, &mut session)?))
}

/// One honest test-run transcript with the given trap colour.
pub fn test_transcript(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    colour: usize,
    seed: u64,
    sample: u64,
) -> Result<TranscriptSample, RunError> {
    let mut client_rng = substream(seed, "blind-test-client", sample, colour as u64);
    let mut client = ClientRun::new_test(pattern, colouring, colour, &mut client_rng)?;
    let mut session = ServerSession::from_seed(
        pattern.graph().clone(),
        client.preparations(),
        None,
        BTreeMap::new(),
        seed,
        "blind-test-server",
        sample,
        colour as u64,
        DEFAULT_ACTIVE_CAP,
    );
    Ok(collect(pattern, &execute_run(&mut client, &mut session)?))
}

/// Negative control: a computation run with all blinding secrets forced to
/// zero, so the angle stream is the corrected pattern angles in the clear.
pub fn unblinded_transcript(
    pattern: &MeasurementPattern,
    input_bits: &[bool],
    seed: u64,
    sample: u64,
) -> Result<TranscriptSample, RunError> {
    let inputs = pattern.input_map(input_bits);
    let mut client = ClientRun::new_unblinded_computation(pattern, &inputs)?;
    let mut session = ServerSession::from_seed(
        pattern.graph().clone(),
        client.preparations(),
        None,
        BTreeMap::new(),
        seed,
        "unblind-server",
        sample,
        0,
        DEFAULT_ACTIVE_CAP,
    );
    Ok(collect(pattern, &execute_run(&mut client, &mut session)?))
}

/// Chi-square uniformity result for one vertex's reported angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexUniformity {
    pub vertex: Vertex,
    /// Which transcript family the counts come from.
    pub family: String,
    pub counts: [u64; 8],
    pub statistic: f64,
    pub p_value: f64,
}

/// Full blindness report over one pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindnessReport {
    pub schema: u32,
    pub pattern: String,
    pub samples: u64,
    pub seed: u64,
    /// Family-wise significance level for the uniformity family.
    pub alpha: f64,
    /// Per-test Bonferroni threshold `alpha / tests`.
    pub threshold: f64,
    pub per_vertex: Vec<VertexUniformity>,
    /// All per-vertex p-values exceed the Bonferroni threshold.
    pub uniform_ok: bool,
    /// Held-out AUC of a distinguisher between computation and test runs.
    pub run_type_auc: f64,
    /// ... between two different inputs (all-zeros vs all-ones).
    pub input_auc: f64,
    /// ... between first attempts and redone attempts of the same run.
    pub redo_auc: f64,
    /// All AUCs within [0.45, 0.55].
    pub auc_ok: bool,
    /// Largest per-vertex p-value of the unblinded negative control.
    pub negative_control_max_p: f64,
    /// The negative control rejected uniformity at p < 1e-6 on some vertex.
    pub negative_control_ok: bool,
}

impl BlindnessReport {
    pub fn passed(&self) -> bool {
        self.uniform_ok && self.auc_ok && self.negative_control_ok
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub const AUC_LO: f64 = 0.45;
pub const AUC_HI: f64 = 0.55;
pub const NEGATIVE_CONTROL_P: f64 = 1e-6;

/// Samples `samples` transcripts per family from honest executions of
/// `pattern` and assembles the blindness report.
///
/// Families: computation runs on all-zero inputs, computation runs on
/// all-one inputs, test runs (colour cycling through the colouring), redone
/// computation runs, and the unblinded negative control.
pub fn blindness_test(
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    pattern_label: &str,
    samples: u64,
    seed: u64,
    alpha: f64,
) -> Result<BlindnessReport, RunError> {
    assert!(samples >= 100, "too few samples for the statistics to mean anything");
    let num_inputs = pattern.graph().inputs().len();
    let zeros = vec![false; num_inputs];
    let ones = vec![true; num_inputs];

    let mut comp_zero = Vec::with_capacity(samples as usize);
    let mut comp_one = Vec::with_capacity(samples as usize);
    let mut tests = Vec::with_capacity(samples as usize);
    let mut first_attempts = Vec::with_capacity(samples as usize);
    let mut redone = Vec::with_capacity(samples as usize);
    let mut unblinded = Vec::with_capacity(samples as usize);
    for i in 0..samples {
        comp_zero.push(computation_transcript(pattern, &zeros, seed, i, 0)?);
        comp_one.push(computation_transcript(pattern, &ones, seed, i, 1)?);
        tests.push(test_transcript(
            pattern,
            colouring,
            (i as usize) % colouring.k(),
            seed,
            i,
        )?);
        // A redone run is a fresh attempt of the same run index: attempt 2
        // vs attempt 3 of an independent sample stream.
        first_attempts.push(computation_transcript(pattern, &zeros, seed.wrapping_add(1), i, 2)?);
        redone.push(computation_transcript(pattern, &zeros, seed.wrapping_add(1), i, 3)?);
        unblinded.push(unblinded_transcript(pattern, &zeros, seed, i)?);
    }

    // Per-vertex angle uniformity, separately per transcript family.
    let order = pattern.order().to_vec();
    let families: [(&str, &[TranscriptSample]); 3] =
        [("computation", &comp_zero), ("computation", &comp_one), ("test", &tests)];
    let mut per_vertex = Vec::new();
    for (family, samples_of) in families {
        for (slot, &v) in order.iter().enumerate() {
            let mut counts = [0u64; 8];
            for s in samples_of {
                counts[s.deltas[slot] as usize] += 1;
            }
            let (statistic, p_value) = chi_square_uniform(&counts);
            per_vertex.push(VertexUniformity {
                vertex: v,
                family: family.to_string(),
                counts,
                statistic,
                p_value,
            });
        }
    }
    let threshold = bonferroni_threshold(alpha, per_vertex.len());
    let uniform_ok = per_vertex.iter().all(|u| u.p_value > threshold);

    // Distinguishers. Labels are balanced by construction.
    let arity = TranscriptSample::feature_arity(order.len());
    let featurize = |xs: &[TranscriptSample]| -> Vec<Vec<usize>> {
        xs.iter().map(TranscriptSample::features).collect()
    };
    let run_type_auc = held_out_auc(&arity, &featurize(&comp_zero), &featurize(&tests));
    let input_auc = held_out_auc(&arity, &featurize(&comp_zero), &featurize(&comp_one));
    let redo_auc = held_out_auc(&arity, &featurize(&first_attempts), &featurize(&redone));
    let auc_ok = [run_type_auc, input_auc, redo_auc]
        .iter()
        .all(|&a| (AUC_LO..=AUC_HI).contains(&a));

    // Negative control: the unblinded angle stream must fail uniformity
    // decisively on every vertex.
    let mut negative_control_max_p: f64 = 0.0;
    for slot in 0..order.len() {
        let mut counts = [0u64; 8];
        for s in &unblinded {
            counts[s.deltas[slot] as usize] += 1;
        }
        let (_, p) = chi_square_uniform(&counts);
        negative_control_max_p = negative_control_max_p.max(p);
    }
    let negative_control_ok = negative_control_max_p < NEGATIVE_CONTROL_P;

    Ok(BlindnessReport {
        schema: 1,
        pattern: pattern_label.to_string(),
        samples,
        seed,
        alpha,
        threshold,
        per_vertex,
        uniform_ok,
        run_type_auc,
        input_auc,
        redo_auc,
        auc_ok,
        negative_control_max_p,
        negative_control_ok,
    })
}
