//! Loopback tests for the socket transport: transparency against the
//! in-memory reference, recovery from dropped connections, and strictness
//! against malformed traffic.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use vbqc::adversary::{NoiseModel, ServerBehaviour};
use vbqc::graph::{bipartite_colouring, Graph};
use vbqc::pattern::{builtin, MeasurementPattern};
use vbqc::protocol::{
    run_protocol, run_protocol_in_memory, server_seed_for_trial, ProtocolError, ProtocolParams,
    RedoPolicy, Requester,
};
use vbqc::rng::derive_seed;
use vbqc_harness::stats::two_proportion_z;
use vbqc_harness::transport::{
    run_protocol_over_socket, serve, ServeOptions, SocketConnection,
};

fn spawn_server(graph: Graph, opts: ServeOptions) -> (String, thread::JoinHandle<u64>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || serve(&listener, &graph, &opts).expect("serve"));
    (addr, handle)
}

fn five_vertex_setup() -> (MeasurementPattern, vbqc::graph::Colouring, ProtocolParams) {
    let pattern = builtin::five_vertex();
    let colouring = bipartite_colouring(pattern.graph()).unwrap();
    let params = ProtocolParams::new(8, 4, 4, 1, colouring.k()).unwrap();
    (pattern, colouring, params)
}

#[test]
fn loopback_execution_equals_in_memory_reference() {
    let (pattern, colouring, params) = five_vertex_setup();
    let policy = RedoPolicy::default();
    let trials = 8u64;
    let (addr, handle) = spawn_server(
        pattern.graph().clone(),
        ServeOptions { sessions: Some(trials), ..Default::default() },
    );
    for i in 0..trials {
        let seed = derive_seed(4242, "trial", i, 0);
        let reference = run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[true],
            &ServerBehaviour::Honest,
            &policy,
            seed,
        )
        .unwrap();
        let over_socket = run_protocol_over_socket(
            &addr, &pattern, &colouring, &params, &[true], &policy, seed,
        )
        .unwrap();
        assert_eq!(over_socket, reference, "trial {i} diverged across the transport");
    }
    assert_eq!(handle.join().unwrap(), trials);
}

#[test]
fn loopback_with_noise_and_server_redos_equals_in_memory() {
    let (pattern, colouring, params) = five_vertex_setup();
    let policy = RedoPolicy { client_rate: 0.0, server_rate: 0.3, max_attempts: 64 };
    let noise = NoiseModel::depolarizing(0.05).unwrap();
    let trials = 6u64;
    let (addr, handle) = spawn_server(
        pattern.graph().clone(),
        ServeOptions {
            behaviour: ServerBehaviour::Noisy(noise.clone()),
            redo_rate: policy.server_rate,
            sessions: Some(trials),
            ..Default::default()
        },
    );
    let mut saw_redo = false;
    for i in 0..trials {
        let seed = derive_seed(99, "trial", i, 0);
        let reference = run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[false],
            &ServerBehaviour::Noisy(noise.clone()),
            &policy,
            seed,
        )
        .unwrap();
        let over_socket = run_protocol_over_socket(
            &addr, &pattern, &colouring, &params, &[false], &policy, seed,
        )
        .unwrap();
        assert_eq!(over_socket, reference, "trial {i} diverged across the transport");
        saw_redo |= !reference.redo_events.is_empty();
    }
    assert!(saw_redo, "a 30% redo rate over 6 trials of 8 runs should fire at least once");
    assert_eq!(handle.join().unwrap(), trials);
}

#[test]
fn dropped_connections_recover_as_server_redos() {
    let (pattern, colouring, params) = five_vertex_setup();
    let policy = RedoPolicy::default();
    let trials = 40u64;
    let noise = NoiseModel::depolarizing(0.06).unwrap();

    // Arm A: the server deliberately drops the TCP connection at seeded
    // random points of ~35% of run attempts.
    let (addr, handle) = spawn_server(
        pattern.graph().clone(),
        ServeOptions {
            behaviour: ServerBehaviour::Noisy(noise.clone()),
            drop_rate: 0.35,
            sessions: Some(trials),
            ..Default::default()
        },
    );
    let mut drop_accepts = 0u64;
    let mut total_reconnects = 0u32;
    let mut server_redo_events = 0usize;
    for i in 0..trials {
        let seed = derive_seed(7, "drop-arm", i, 0);
        let mut conn =
            SocketConnection::dial(&addr, server_seed_for_trial(seed)).expect("dial");
        let outcome =
            run_protocol(&pattern, &colouring, &params, &[true], &policy, seed, &mut conn)
                .unwrap();
        drop_accepts += u64::from(outcome.verdict.accepted());
        total_reconnects += conn.reconnects();
        server_redo_events += outcome
            .redo_events
            .iter()
            .filter(|e| e.requester == Requester::Server)
            .count();
    }
    assert_eq!(handle.join().unwrap(), trials);
    assert!(total_reconnects > 0, "drops must actually occur for this test to mean anything");
    assert!(
        server_redo_events >= total_reconnects as usize,
        "every drop should surface as a server-side redo"
    );

    // Arm B: the in-memory server with ordinary forced redos at a comparable
    // rate. Verdict distributions should agree: both mechanisms just restart
    // runs with fresh randomness.
    let mut redo_accepts = 0u64;
    for i in 0..trials {
        let seed = derive_seed(7, "redo-arm", i, 0);
        let outcome = run_protocol_in_memory(
            &pattern,
            &colouring,
            &params,
            &[true],
            &ServerBehaviour::Noisy(noise.clone()),
            &RedoPolicy { client_rate: 0.0, server_rate: 0.35, max_attempts: 64 },
            seed,
        )
        .unwrap();
        redo_accepts += u64::from(outcome.verdict.accepted());
    }
    let z = two_proportion_z(drop_accepts, trials, redo_accepts, trials);
    assert!(
        z.abs() <= 3.0,
        "accept rates diverged: drops {drop_accepts}/{trials} vs redos {redo_accepts}/{trials} (z = {z:.2})"
    );
}

#[test]
fn malformed_server_reply_is_a_session_error_without_verdict() {
    let (pattern, colouring, params) = five_vertex_setup();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let rogue = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        reader.read_line(&mut line).unwrap(); // consume the prep frame
        let mut w = stream;
        w.write_all(b"this is not a frame\n").unwrap();
    });
    let err = run_protocol_over_socket(
        &addr,
        &pattern,
        &colouring,
        &params,
        &[true],
        &RedoPolicy::default(),
        1,
    )
    .unwrap_err();
    rogue.join().unwrap();
    match err {
        ProtocolError::Connection(msg) => {
            assert!(msg.contains("malformed"), "unexpected diagnostic: {msg}")
        }
        other => panic!("expected a connection error, got {other:?}"),
    }
}

#[test]
fn wrong_vertex_outcome_is_fatal() {
    let (pattern, colouring, params) = five_vertex_setup();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let rogue = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut w = stream;
        let mut line = String::new();
        reader.read_line(&mut line).unwrap(); // prep
        w.write_all(b"{\"type\":\"prep\",\"schema\":1,\"run\":0,\"attempt\":0}\n").unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap(); // first delta
        w.write_all(b"{\"type\":\"outcome\",\"schema\":1,\"vertex\":999,\"bit\":true}\n")
            .unwrap();
    });
    let err = run_protocol_over_socket(
        &addr,
        &pattern,
        &colouring,
        &params,
        &[true],
        &RedoPolicy::default(),
        1,
    )
    .unwrap_err();
    rogue.join().unwrap();
    assert!(matches!(err, ProtocolError::Connection(_)), "got {err:?}");
}

#[test]
fn server_survives_malformed_clients_and_keeps_serving() {
    let (pattern, colouring, params) = five_vertex_setup();
    let (addr, handle) = spawn_server(
        pattern.graph().clone(),
        ServeOptions { sessions: Some(1), ..Default::default() },
    );
    // A malformed client: the server should drop it without counting a
    // verdict and accept the next connection.
    {
        let mut stream = TcpStream::connect(&addr).unwrap();
        stream.write_all(b"garbage that is not json\n").unwrap();
        let mut line = String::new();
        // The server closes without replying.
        assert_eq!(BufReader::new(&mut stream).read_line(&mut line).unwrap(), 0);
    }
    let outcome = run_protocol_over_socket(
        &addr,
        &pattern,
        &colouring,
        &params,
        &[false],
        &RedoPolicy::default(),
        5,
    )
    .unwrap();
    assert!(outcome.verdict.accepted());
    assert_eq!(handle.join().unwrap(), 1);
}
