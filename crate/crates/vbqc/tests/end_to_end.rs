//! Integration tests driving the crate through its public surface only:
//! pattern construction, protocol execution, adversary analysis, and the
//! security bounds, wired together the way a downstream consumer would.

use std::collections::BTreeMap;

use vbqc::adversary::{exact_failure_probability, NoiseModel, ServerBehaviour};
use vbqc::bounds::{
    hypergeom_cdf, hypergeom_lower_tail_bound, max_feasible_omega, optimize_verifiability_bound,
};
use vbqc::graph::{bipartite_colouring, Graph};
use vbqc::pattern::{builtin, MeasurementPattern};
use vbqc::protocol::{presample_count, run_protocol_in_memory, ProtocolParams, RedoPolicy, Verdict};
use vbqc::rng::derive_seed;
use vbqc::run::reference_output;

fn five_vertex_setup() -> (MeasurementPattern, vbqc::Colouring, ProtocolParams) {
    let pattern = builtin::five_vertex();
    let colouring = bipartite_colouring(pattern.graph()).unwrap();
    let params = ProtocolParams::new(4, 2, 2, 1, colouring.k()).unwrap();
    (pattern, colouring, params)
}

#[test]
fn honest_execution_accepts_with_the_reference_output() {
    let (pattern, colouring, params) = five_vertex_setup();
    for input in [false, true] {
        let reference = reference_output(&pattern, &[input], 7).unwrap();
        for trial in 0..25u64 {
            let outcome = run_protocol_in_memory(
                &pattern,
                &colouring,
                &params,
                &[input],
                &ServerBehaviour::Honest,
                &RedoPolicy::default(),
                derive_seed(0xE2E, "honest", u64::from(input), trial),
            )
            .unwrap();
            assert_eq!(outcome.failures, 0, "trial {trial} input {input}");
            assert_eq!(outcome.verdict, Verdict::Accept { output: reference.clone() });
        }
    }
}

#[test]
fn same_seed_reproduces_the_serialized_outcome() {
    let (pattern, colouring, params) = five_vertex_setup();
    let run = || {
        run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[true],
            &ServerBehaviour::Noisy(NoiseModel::depolarizing(0.1).unwrap()),
            &RedoPolicy { client_rate: 0.1, server_rate: 0.1, max_attempts: 16 },
            20_260_815,
        )
        .unwrap()
    };
    let first = serde_json::to_string(&run()).unwrap();
    let second = serde_json::to_string(&run()).unwrap();
    assert_eq!(first, second);
}

#[test]
fn heavy_noise_gets_rejected_and_zero_noise_does_not() {
    let (pattern, colouring, params) = five_vertex_setup();
    let mut rejections = 0;
    for trial in 0..60u64 {
        let noisy = run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[true],
            &ServerBehaviour::Noisy(NoiseModel::depolarizing(0.75).unwrap()),
            &RedoPolicy::default(),
            derive_seed(0xE2E, "noisy", trial, 0),
        )
        .unwrap();
        rejections += u64::from(!noisy.verdict.accepted());

        let clean = run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[true],
            &ServerBehaviour::Noisy(NoiseModel::depolarizing(0.0).unwrap()),
            &RedoPolicy::default(),
            derive_seed(0xE2E, "clean", trial, 0),
        )
        .unwrap();
        assert!(clean.verdict.accepted(), "zero-strength noise aborted on trial {trial}");
    }
    // Worst-colour failure probability is 1 - (1 - 1/2)^2 = 3/4 per test
    // run at p = 0.75; seeing no aborts in 60 trials would be a miracle.
    assert!(rejections > 20, "only {rejections}/60 heavy-noise trials were rejected");
}

#[test]
fn exact_attack_failure_stays_under_the_optimized_bound() {
    let n = 8;
    let params = ProtocolParams::from_ratios(n, 0.5, 0.2, 2).unwrap();
    let bound = optimize_verifiability_bound(n, params.d, params.t, params.k, 0.2)
        .unwrap()
        .result
        .bound
        .value;
    for m in 0..=n {
        let exact = exact_failure_probability(&params, m).unwrap();
        assert!(
            exact.strict <= bound,
            "m = {m}: exact failure {} above bound {bound}",
            exact.strict
        );
        assert!(exact.strict <= exact.lenient + 1e-15, "strict event must be contained");
    }
}

#[test]
fn tail_bound_helpers_dominate_the_exact_distribution() {
    for (population, marked, draws, lambda) in
        [(20usize, 10usize, 8usize, 2usize), (50, 25, 20, 7), (64, 32, 32, 10)]
    {
        let bound = hypergeom_lower_tail_bound(population, marked, draws, lambda as f64).unwrap();
        let exact = hypergeom_cdf(population, marked, draws, lambda);
        assert!(bound.value >= exact, "bound {} below exact {exact}", bound.value);
    }
    assert_eq!(max_feasible_omega(2), 0.25);
    assert!(presample_count(10, 0.5).unwrap() == 20);
}

#[test]
fn malformed_patterns_are_rejected_at_construction() {
    // Flow successor measured before its source violates causality.
    let graph = Graph::new(vec![1, 2], &[(1, 2)], vec![], vec![]).unwrap();
    let angles: BTreeMap<_, _> =
        [(1, vbqc::Angle8::ZERO), (2, vbqc::Angle8::ZERO)].into_iter().collect();
    let flow = vbqc::flow::FlowSpec::with_derived_deps(
        &graph,
        vec![1, 2],
        [(2, 1)].into_iter().collect(),
    );
    let err = MeasurementPattern::new(graph, angles, flow).unwrap_err();
    assert!(err.to_string().contains("successor"), "unexpected error: {err}");
}

#[test]
fn pattern_json_round_trips_through_the_public_api() {
    for (name, pattern, _) in builtin::registry() {
        let json = pattern.to_json();
        let parsed = MeasurementPattern::from_json(&json)
            .unwrap_or_else(|e| panic!("{name} failed to round-trip: {e}"));
        assert_eq!(parsed.graph().vertices(), pattern.graph().vertices());
        assert_eq!(parsed.angles(), pattern.angles());
        assert_eq!(parsed.flow().f(), pattern.flow().f());
        assert_eq!(parsed.order(), pattern.order());
    }
}
