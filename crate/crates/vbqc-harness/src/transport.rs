//! Socket transport: drives the protocol between a client and a server over
//! TCP with newline-delimited JSON frames.
//!
//! This mode exists to exercise the protocol across a process boundary; it is
//! a simulation vehicle, not a deployment: the client's preparation payload
//! travels in `prep` frames as an `opaque` string that honest server code
//! hands to the quantum backend without inspection (the frame loop never
//! parses it; only the backend constructor does), and the frame also carries
//! the server's RNG seed — derived one-way from the client's trial seed — so
//! that a socket session reproduces the in-memory reference execution
//! byte for byte.
//!
//! Failure semantics, by design:
//! - **Connection loss** (EOF/reset) mid-run is recoverable: the client
//!   reconnects and the interrupted run restarts as a server-side redo with
//!   fresh blinding randomness.
//! - **Protocol violations** (malformed JSON, unknown frame type or schema,
//!   replies for the wrong vertex) are fatal: the session errors out and no
//!   verdict is produced.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};

use serde::{Deserialize, Serialize};
use vbqc::angle::Angle8;
use vbqc::graph::{Colouring, Graph, Vertex};
use vbqc::pattern::MeasurementPattern;
use vbqc::protocol::{
    run_protocol, server_seed_for_trial, BeginReply, InMemoryConnection, MeasureReply,
    ProtocolError, ProtocolOutcome, ProtocolParams, RedoPolicy, ServerConnection,
};
use vbqc::adversary::ServerBehaviour;
use vbqc::rng::substream;
use vbqc::sim::{PreparedQubit, DEFAULT_ACTIVE_CAP};

use rand::Rng;

pub const SCHEMA: u32 = 1;

/// How many times the client re-dials after a lost connection before giving
/// up on the session.
pub const MAX_RECONNECTS: u32 = 16;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame {line:?}: {reason}")]
    Malformed { line: String, reason: String },
    #[error("unsupported schema {0}")]
    UnsupportedSchema(u32),
    #[error("protocol violation: {0}")]
    Violation(String),
}

/// One newline-delimited JSON frame. Every frame carries the schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Frame {
    /// Client -> server: prepared qubits for `(run, attempt)`; the reply is
    /// the same frame type without the payload fields, acknowledging that
    /// the run may start. `opaque` is the client's preparation payload;
    /// `server_seed` keys the simulated server's randomness.
    Prep {
        schema: u32,
        run: usize,
        attempt: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        server_seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        opaque: Option<String>,
    },
    /// Client -> server: measure `vertex` at `angle` (units of pi/4).
    Delta { schema: u32, vertex: Vertex, angle: u8 },
    /// Server -> client: the reported outcome for `vertex`.
    Outcome { schema: u32, vertex: Vertex, bit: bool },
    /// Server -> client: restart the current run with fresh randomness.
    Redo { schema: u32, run: usize, attempt: u32 },
    /// Client -> server: final verdict; the server acknowledges in kind.
    Verdict { schema: u32, accept: bool },
}

impl Frame {
    fn schema(&self) -> u32 {
        match *self {
            Frame::Prep { schema, .. }
            | Frame::Delta { schema, .. }
            | Frame::Outcome { schema, .. }
            | Frame::Redo { schema, .. }
            | Frame::Verdict { schema, .. } => schema,
        }
    }
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &Frame) -> std::io::Result<()> {
    let mut line = serde_json::to_string(frame).expect("frames serialize");
    line.push('\n');
    writer.write_all(line.as_bytes())?;
    writer.flush()
}

/// Reads one frame; `Ok(None)` on clean end of stream. Unparseable lines and
/// unknown schemas are [`TransportError::Malformed`]/[`UnsupportedSchema`],
/// never silently skipped.
pub fn read_frame<R: BufRead>(reader: &mut R) -> Result<Option<Frame>, TransportError> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    let trimmed = line.trim_end();
    let frame: Frame = serde_json::from_str(trimmed).map_err(|e| TransportError::Malformed {
        line: trimmed.to_string(),
        reason: e.to_string(),
    })?;
    if frame.schema() != SCHEMA {
        return Err(TransportError::UnsupportedSchema(frame.schema()));
    }
    Ok(Some(frame))
}

fn encode_preparations(preps: &[(Vertex, PreparedQubit)]) -> String {
    serde_json::to_string(preps).expect("preparations serialize")
}

/// The backend boundary: only this function ever looks inside an `opaque`
/// payload, and only to hand the descriptors to the simulated hardware.
fn decode_preparations(opaque: &str) -> Result<Vec<(Vertex, PreparedQubit)>, TransportError> {
    serde_json::from_str(opaque).map_err(|e| TransportError::Malformed {
        line: opaque.to_string(),
        reason: format!("opaque preparation payload: {e}"),
    })
}

struct Wire {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Wire {
    fn connect(addr: &str) -> std::io::Result<Wire> {
        Wire::from_stream(TcpStream::connect(addr)?)
    }

    fn from_stream(stream: TcpStream) -> std::io::Result<Wire> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Wire { reader, writer: BufWriter::new(stream) })
    }

    fn send(&mut self, frame: &Frame) -> std::io::Result<()> {
        write_frame(&mut self.writer, frame)
    }

    /// Receives one frame, mapping clean EOF to an io error so callers have
    /// a single "connection lost" path.
    fn recv(&mut self) -> Result<Frame, TransportError> {
        match read_frame(&mut self.reader)? {
            Some(frame) => Ok(frame),
            None => Err(TransportError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed",
            ))),
        }
    }
}

/// Client side of the socket transport; implements the same connection
/// interface the in-memory server does, so the protocol driver is unchanged.
pub struct SocketConnection {
    addr: String,
    server_seed: u64,
    wire: Option<Wire>,
    reconnects: u32,
}

impl SocketConnection {
    pub fn dial(addr: &str, server_seed: u64) -> std::io::Result<SocketConnection> {
        Ok(SocketConnection {
            addr: addr.to_string(),
            server_seed,
            wire: Some(Wire::connect(addr)?),
            reconnects: 0,
        })
    }

    /// Lost connections survived so far in this session.
    pub fn reconnects(&self) -> u32 {
        self.reconnects
    }

    fn redial(&mut self) -> Result<(), ProtocolError> {
        self.reconnects += 1;
        if self.reconnects > MAX_RECONNECTS {
            return Err(ProtocolError::Connection(format!(
                "gave up after {MAX_RECONNECTS} reconnects"
            )));
        }
        self.wire = Some(
            Wire::connect(&self.addr)
                .map_err(|e| ProtocolError::Connection(format!("reconnect failed: {e}")))?,
        );
        Ok(())
    }

    /// Sends and awaits a reply. `Err(None)` means the connection dropped
    /// (recoverable); `Err(Some(e))` is a fatal protocol violation.
    fn exchange(&mut self, frame: &Frame) -> Result<Frame, Option<ProtocolError>> {
        if self.wire.is_none() {
            self.redial().map_err(Some)?;
        }
        let result = {
            let wire = self.wire.as_mut().expect("dialed above");
            wire.send(frame).map_err(TransportError::Io).and_then(|()| wire.recv())
        };
        match result {
            Ok(reply) => Ok(reply),
            Err(TransportError::Io(_)) => {
                self.wire = None;
                Err(None)
            }
            Err(fatal) => Err(Some(ProtocolError::Connection(fatal.to_string()))),
        }
    }
}

impl ServerConnection for SocketConnection {
    fn begin_run(
        &mut self,
        run: usize,
        attempt: u32,
        preps: &[(Vertex, PreparedQubit)],
    ) -> Result<BeginReply, ProtocolError> {
        let frame = Frame::Prep {
            schema: SCHEMA,
            run,
            attempt,
            server_seed: Some(self.server_seed),
            opaque: Some(encode_preparations(preps)),
        };
        match self.exchange(&frame) {
            Ok(Frame::Prep { .. }) => Ok(BeginReply::Ready),
            Ok(Frame::Redo { .. }) => Ok(BeginReply::Redo),
            Ok(other) => Err(ProtocolError::Connection(format!(
                "expected prep ack or redo, got {other:?}"
            ))),
            Err(Some(fatal)) => Err(fatal),
            // A drop while starting a run burns the attempt like any other
            // mid-run loss; retrying the same attempt could only re-trigger
            // a deterministic drop scheduled at the same point.
            Err(None) => {
                self.redial()?;
                Ok(BeginReply::Redo)
            }
        }
    }

    fn measure(&mut self, v: Vertex, delta: Angle8) -> Result<MeasureReply, ProtocolError> {
        let frame = Frame::Delta { schema: SCHEMA, vertex: v, angle: delta.value() };
        match self.exchange(&frame) {
            Ok(Frame::Outcome { vertex, bit, .. }) => {
                if vertex != v {
                    return Err(ProtocolError::Connection(format!(
                        "outcome for vertex {vertex}, expected {v}"
                    )));
                }
                Ok(MeasureReply::Outcome(bit))
            }
            Ok(Frame::Redo { .. }) => Ok(MeasureReply::Redo),
            Ok(other) => Err(ProtocolError::Connection(format!(
                "expected outcome or redo, got {other:?}"
            ))),
            Err(Some(fatal)) => Err(fatal),
            // Connection lost mid-run: the run restarts as a server redo.
            Err(None) => {
                self.redial()?;
                Ok(MeasureReply::Redo)
            }
        }
    }

    fn finish(&mut self, accept: bool) -> Result<(), ProtocolError> {
        let frame = Frame::Verdict { schema: SCHEMA, accept };
        loop {
            match self.exchange(&frame) {
                Ok(Frame::Verdict { .. }) => return Ok(()),
                Ok(other) => {
                    return Err(ProtocolError::Connection(format!(
                        "expected verdict ack, got {other:?}"
                    )))
                }
                Err(Some(fatal)) => return Err(fatal),
                Err(None) => self.redial()?,
            }
        }
    }
}

/// Server-side configuration.
#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub behaviour: ServerBehaviour,
    /// Server-side redo injection rate (same schedule as the in-memory
    /// server at equal seeds).
    pub redo_rate: f64,
    /// Rate at which the server deliberately drops the TCP connection at a
    /// seeded random point of a run, to exercise client recovery.
    pub drop_rate: f64,
    pub active_cap: usize,
    /// Stop after this many verdicts (None: serve forever).
    pub sessions: Option<u64>,
}

impl Default for ServeOptions {
    fn default() -> ServeOptions {
        ServeOptions {
            behaviour: ServerBehaviour::Honest,
            redo_rate: 0.0,
            drop_rate: 0.0,
            active_cap: DEFAULT_ACTIVE_CAP,
            sessions: None,
        }
    }
}

/// Seeded drop schedule, separate from the redo schedule: position 0 drops
/// on the prep frame, position i >= 1 drops instead of the i-th outcome.
fn drop_injection(server_seed: u64, run: usize, attempt: u32, rate: f64, n: usize) -> Option<usize> {
    if rate <= 0.0 {
        return None;
    }
    let mut rng = substream(server_seed, "server-drop", run as u64, u64::from(attempt));
    if rng.random_bool(rate) {
        Some(rng.random_range(0..=n))
    } else {
        None
    }
}

/// Handles one TCP connection; returns the number of verdicts seen.
fn handle_connection(
    stream: TcpStream,
    graph: &Graph,
    opts: &ServeOptions,
) -> Result<u64, TransportError> {
    let mut wire = Wire::from_stream(stream)?;
    let mut backend: Option<(u64, InMemoryConnection)> = None;
    let mut current: (usize, u32) = (0, 0);
    let mut drop_at: Option<usize> = None;
    let mut replies_sent = 0usize;
    let mut verdicts = 0u64;
    loop {
        let frame = match read_frame(&mut wire.reader) {
            Ok(Some(frame)) => frame,
            Ok(None) => return Ok(verdicts),
            // Malformed input: close without replying; the error surfaces in
            // the server log, the client sees a lost connection.
            Err(e) => return Err(e),
        };
        match frame {
            Frame::Prep { run, attempt, server_seed, opaque, .. } => {
                let seed = server_seed.ok_or_else(|| TransportError::Violation(
                    "prep frame without server_seed".into(),
                ))?;
                let opaque = opaque.ok_or_else(|| TransportError::Violation(
                    "prep frame without preparation payload".into(),
                ))?;
                let preps = decode_preparations(&opaque)?;
                if backend.as_ref().map(|(s, _)| *s) != Some(seed) {
                    backend = Some((
                        seed,
                        InMemoryConnection::new(graph.clone(), opts.behaviour.clone(), seed)
                            .with_redo_rate(opts.redo_rate)
                            .with_active_cap(opts.active_cap),
                    ));
                }
                current = (run, attempt);
                replies_sent = 0;
                drop_at = drop_injection(seed, run, attempt, opts.drop_rate, graph.num_vertices());
                if drop_at == Some(0) {
                    return Ok(verdicts);
                }
                let (_, conn) = backend.as_mut().expect("just installed");
                match conn
                    .begin_run(run, attempt, &preps)
                    .map_err(|e| TransportError::Violation(e.to_string()))?
                {
                    BeginReply::Ready => {
                        wire.send(&Frame::Prep { schema: SCHEMA, run, attempt, server_seed: None, opaque: None })?
                    }
                    BeginReply::Redo => {
                        wire.send(&Frame::Redo { schema: SCHEMA, run, attempt })?
                    }
                }
            }
            Frame::Delta { vertex, angle, .. } => {
                let (_, conn) = backend.as_mut().ok_or_else(|| {
                    TransportError::Violation("delta frame before any prep".into())
                })?;
                replies_sent += 1;
                if drop_at == Some(replies_sent) {
                    return Ok(verdicts);
                }
                match conn
                    .measure(vertex, Angle8::new(angle))
                    .map_err(|e| TransportError::Violation(e.to_string()))?
                {
                    MeasureReply::Outcome(bit) => {
                        wire.send(&Frame::Outcome { schema: SCHEMA, vertex, bit })?
                    }
                    MeasureReply::Redo => wire.send(&Frame::Redo {
                        schema: SCHEMA,
                        run: current.0,
                        attempt: current.1,
                    })?,
                }
            }
            Frame::Verdict { accept, .. } => {
                if let Some((_, conn)) = backend.as_mut() {
                    conn.finish(accept).map_err(|e| TransportError::Violation(e.to_string()))?;
                }
                verdicts += 1;
                wire.send(&Frame::Verdict { schema: SCHEMA, accept })?;
            }
            Frame::Outcome { .. } | Frame::Redo { .. } => {
                return Err(TransportError::Violation(
                    "client sent a server-only frame".into(),
                ));
            }
        }
    }
}

/// Accept loop. Connections are handled sequentially (the reference server
/// is single-session); per-connection errors are logged and do not stop the
/// server. Returns the number of verdicts served.
pub fn serve(listener: &TcpListener, graph: &Graph, opts: &ServeOptions) -> std::io::Result<u64> {
    let mut verdicts = 0u64;
    for stream in listener.incoming() {
        match handle_connection(stream?, graph, opts) {
            Ok(v) => verdicts += v,
            Err(e) => eprintln!("session error: {e}"),
        }
        if let Some(limit) = opts.sessions {
            if verdicts >= limit {
                break;
            }
        }
    }
    Ok(verdicts)
}

/// Client driver: runs one full protocol execution against a serving
/// address, with the standard per-trial seed layout.
pub fn run_protocol_over_socket(
    addr: &str,
    pattern: &MeasurementPattern,
    colouring: &Colouring,
    params: &ProtocolParams,
    input_bits: &[bool],
    policy: &RedoPolicy,
    trial_seed: u64,
) -> Result<ProtocolOutcome, ProtocolError> {
    let mut conn = SocketConnection::dial(addr, server_seed_for_trial(trial_seed))
        .map_err(|e| ProtocolError::Connection(format!("dial {addr}: {e}")))?;
    run_protocol(pattern, colouring, params, input_bits, policy, trial_seed, &mut conn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let frames = vec![
            Frame::Prep {
                schema: SCHEMA,
                run: 3,
                attempt: 1,
                server_seed: Some(99),
                opaque: Some("[]".into()),
            },
            Frame::Delta { schema: SCHEMA, vertex: 4, angle: 7 },
            Frame::Outcome { schema: SCHEMA, vertex: 4, bit: true },
            Frame::Redo { schema: SCHEMA, run: 3, attempt: 1 },
            Frame::Verdict { schema: SCHEMA, accept: false },
        ];
        let mut buf = Vec::new();
        for f in &frames {
            write_frame(&mut buf, f).unwrap();
        }
        let mut reader = std::io::BufReader::new(buf.as_slice());
        for f in &frames {
            assert_eq!(read_frame(&mut reader).unwrap().unwrap(), *f);
        }
        assert!(read_frame(&mut reader).unwrap().is_none());
    }

    #[test]
    fn wire_format_is_the_documented_json() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::Delta { schema: 1, vertex: 2, angle: 5 }).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"type\":\"delta\",\"schema\":1,\"vertex\":2,\"angle\":5}\n"
        );
    }

    #[test]
    fn malformed_lines_are_errors_not_skips() {
        let mut reader = std::io::BufReader::new("{\"type\":\"nope\"}\n".as_bytes());
        assert!(matches!(
            read_frame(&mut reader),
            Err(TransportError::Malformed { .. })
        ));
        let mut reader = std::io::BufReader::new("not json\n".as_bytes());
        assert!(matches!(read_frame(&mut reader), Err(TransportError::Malformed { .. })));
    }

    #[test]
    fn future_schema_is_rejected() {
        let mut reader = std::io::BufReader::new(
            "{\"type\":\"verdict\",\"schema\":2,\"accept\":true}\n".as_bytes(),
        );
        assert!(matches!(read_frame(&mut reader), Err(TransportError::UnsupportedSchema(2))));
    }

    #[test]
    fn preparation_payload_round_trips() {
        let preps = vec![
            (1u32, PreparedQubit::PlusTheta(Angle8::new(3))),
            (2u32, PreparedQubit::Dummy(true)),
        ];
        let decoded = decode_preparations(&encode_preparations(&preps)).unwrap();
        assert_eq!(decoded, preps);
    }
}
