//! Experiment harness around the `vbqc` core: batch Monte Carlo drivers,
//! blindness and robustness validation, a TCP transport for running the
//! protocol across a process boundary, and the `vbqc` command-line tool.
//!
//! Determinism contract: every entry point takes an explicit seed, every
//! trial derives its randomness from `(seed, trial index)` substreams, and
//! serialized outputs exclude wall-clock data, so identical invocations
//! produce identical bytes.

pub mod blindness;
pub mod cli;
pub mod config;
pub mod montecarlo;
pub mod robustness;
pub mod stats;
pub mod transport;
