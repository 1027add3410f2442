//! Discrete-event simulation of iBGP convergence and measurement of the
//! transient reachability violations it causes.
//!
//! The crate is organized as a pipeline:
//!
//! - [`model`]: topology, converged IGP, iBGP sessions and best-path selection.
//! - [`sim`]: event-driven convergence with per-router processing queues,
//!   producing forwarding-state timelines and the BGP message trace.
//! - [`probe`]: hop-by-hop probe walks through the time-varying data plane,
//!   exact violation intervals, and drop-count estimates.
//! - [`trace`]: the line-oriented capture format and hardware mapping.
//! - [`analyzer`]: offline reconstruction of probe journeys, convergence
//!   detection, sample checks and percentile summaries.
//! - [`cli`]: scenarios, presets, reports and the command-line entry points.
//!
//! All timing is integer microseconds ([`Micros`]).

pub mod analyzer;
pub mod cli;
pub mod model;
pub mod probe;
pub mod sim;
pub mod trace;

/// Simulation time in integer microseconds.
pub type Micros = i64;

pub const MS: Micros = 1_000;
pub const SEC: Micros = 1_000_000;

/// Renders microseconds as milliseconds with three decimals.
pub fn fmt_ms(us: Micros) -> String {
    let sign = if us < 0 { "-" } else { "" };
    let abs = us.unsigned_abs();
    format!("{sign}{}.{:03}", abs / 1000, abs % 1000)
}
