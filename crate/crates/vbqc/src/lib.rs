//! Desk-scale simulator and bound-validation toolkit for verifiable blind
//! delegated measurement-based computation on noisy servers.
//!
//! A client drives a remote (or in-process) server through `n` blinded runs
//! of one measurement pattern. A secret uniformly random subset of `d` runs
//! carries the real computation; the other `t` runs are tests built from a
//! proper vertex colouring — one colour class becomes isolated trap qubits
//! with deterministic outcomes, the rest become dummies. The client aborts
//! when `w` or more test runs fail, and otherwise takes a strict majority
//! vote over the computation outputs.
//!
//! Crate layout:
//! - [`angle`]: the eighth-of-a-turn angle group used everywhere.
//! - [`graph`], [`flow`], [`pattern`]: measurement patterns and their
//!   validation, colourings, built-in examples.
//! - [`sim`]: a lazy dense-statevector backend with trajectory noise.
//! - [`run`]: one blinded run — client secrets, blinded angles, server
//!   session, trap bookkeeping.
//! - [`protocol`]: the full `n`-run protocol with redo handling and the
//!   accept/abort verdict, over in-process or remote connections.
//! - [`adversary`]: server behaviours (noise models, Pauli attacks), the
//!   classical fast path for bit-flip attacks, and exact small-instance
//!   failure probabilities.
//! - [`bounds`]: tail bounds, the verifiability bound and its optimizer,
//!   and derived correctness/abort/composable quantities.
//! - [`rng`]: deterministic seed-derivation substreams.

pub mod adversary;
pub mod angle;
pub mod bounds;
pub mod flow;
pub mod graph;
pub mod pattern;
pub mod protocol;
pub mod rng;
pub mod run;
pub mod sim;

pub use angle::Angle8;
pub use graph::{Colouring, Graph, Vertex};
pub use pattern::MeasurementPattern;
pub use protocol::{ProtocolOutcome, ProtocolParams, Verdict};
