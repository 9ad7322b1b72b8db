//! Average Age of Information (AoI) for `N` prioritized status-update
//! streams sharing one preemptive server.
//!
//! Every stream generates packets as a Poisson process of rate `lambda` and
//! the server transmits at exponential rate `mu`. A higher-priority packet
//! always preempts a lower-priority one. Two disciplines are compared:
//!
//! * [`Discipline::Wq`]: each stream owns a single-slot waiting room. A
//!   preempted packet is parked there and resumed later; a fresh arrival
//!   replaces whatever packet of its stream is in the system.
//! * [`Discipline::Nq`]: no waiting room. Preempted or blocked packets are
//!   dropped.
//!
//! Ages are available from three independent engines:
//!
//! * [`shs`]: a generic stochastic hybrid system (SHS) solver,
//! * [`closed_form`]: the explicit recursions for the WQ discipline,
//! * [`simulator`]: an event-driven Monte Carlo simulator.
//!
//! [`analysis`] builds on them to locate the age-minimizing arrival rate and
//! the rate at which buffering stops paying off.

// `!(x <= y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod closed_form;
mod error;
pub mod linalg;
pub mod models;
pub mod shs;
pub mod simulator;

pub use error::{Error, Result};
pub use models::{Discipline, SystemConfig};
