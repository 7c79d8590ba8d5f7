//! On-demand DNSSEC defense simulator.
//!
//! A recursive resolver normally runs DNSSEC-oblivious. Counting failure
//! responses (forged answers that match a question but miss the transaction
//! ID, port, or server address) detects poisoning attempts; at a configurable
//! threshold the resolver switches that question to a DNSSEC-aware mode,
//! holds candidate responses, and only accepts the one consistent with a
//! validated response. Validated records live in a priority cache that
//! unsigned answers can neither overwrite nor contradict.
//!
//! The crate bundles the defense state machine, a deterministic discrete-event
//! simulator driving it against a Kaminsky-class attacker, and closed-form /
//! Monte Carlo analytics for query load and poisoning success rate.

pub mod analytics;
pub mod attacker;
pub mod cache;
pub mod detector;
pub mod dns_model;
pub mod exec;
pub mod figures;
pub mod resolver;
pub mod rng;
pub mod sim;

/// Simulation clock time in seconds.
pub type SimTime = f64;
