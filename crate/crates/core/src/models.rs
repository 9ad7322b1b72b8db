//! SHS chains seen by one stream of interest with `depth` higher-priority
//! streams above it.
//!
//! Both chains track `x = [x₀, x₁]`: the age at the monitor and the age of
//! the stream's packet in the system. When no packet of the stream is
//! present a "fake" packet carrying the last delivered timestamp stands in
//! for it, so packet presence never has to be tracked as state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::shs::{ShsModel, Transition};
use crate::{Error, Result};

/// Common per-stream arrival rate and server rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub lambda: f64,
    pub mu: f64,
}

impl SystemConfig {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let cfg = Self { lambda, mu };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Same system with both rates multiplied by `c` (a change of time unit).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda: self.lambda * c,
            mu: self.mu * c,
        }
    }
}

/// Validates a whole-system stream count.
pub fn check_streams(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "at least one stream is required".into(),
        ));
    }
    Ok(())
}

/// What happens to a packet that loses the server to a higher priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// Parked in its stream's single-slot waiting room and resumed later.
    Wq,
    /// Dropped; arrivals that find a higher priority in service are dropped
    /// too.
    Nq,
}

impl Discipline {
    pub const ALL: [Discipline; 2] = [Discipline::Wq, Discipline::Nq];

    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Wq => "wq",
            Discipline::Nq => "nq",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Discipline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wq" => Ok(Discipline::Wq),
            "nq" => Ok(Discipline::Nq),
            _ => Err(Error::InvalidConfig(format!(
                "unknown discipline {s:?} (expected wq or nq)"
            ))),
        }
    }
}

/// Per-stream and total average ages of a whole system.
///
/// `per_stream[k]` belongs to the stream with `k` higher-priority streams
/// above it (stream `k + 1`, top priority first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeReport {
    #[serde(rename = "N")]
    pub streams: usize,
    pub lambda: f64,
    pub mu: f64,
    pub discipline: Discipline,
    pub per_stream: Vec<f64>,
    pub total: f64,
}

impl AgeReport {
    pub fn new(cfg: &SystemConfig, discipline: Discipline, per_stream: Vec<f64>) -> Self {
        Self {
            streams: per_stream.len(),
            lambda: cfg.lambda,
            mu: cfg.mu,
            discipline,
            total: per_stream.iter().sum(),
            per_stream,
        }
    }
}

fn identity() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.0, 1.0]]
}

/// `[x₀, x₁] -> [x₀, 0]`: a fresh packet of the stream enters the system.
fn fresh_packet() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.0, 0.0]]
}

/// `[x₀, x₁] -> [x₁, x₁]`: the stream's packet reaches the monitor and a
/// fake packet with the same timestamp replaces it.
fn delivery() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![1.0, 1.0]]
}

/// `[x₀, x₁] -> [x₀, x₀]`: the stream's packet was lost, the fake packet
/// carries the last delivered timestamp.
fn fake_from_monitor() -> Vec<Vec<f64>> {
    vec![vec![1.0, 1.0], vec![0.0, 0.0]]
}

/// Chain for the discipline with per-stream waiting rooms.
///
/// State `q` counts the higher-priority packets that must be served before
/// the stream of interest gets the server back (`0..=depth`). Transitions,
/// in order:
///
/// * own arrival in every state, rate `λ`, `[x₀, x₁] -> [x₀, 0]`;
/// * `q -> q+1` at rate `(depth - q) λ`, identity;
/// * `q -> q-1` at rate `μ` for `q = depth..1`, identity;
/// * delivery `0 -> 0` at rate `μ`, `[x₀, x₁] -> [x₁, x₁]`.
///
/// That is `3 depth + 2` transitions in all.
pub fn build_wq_chain(cfg: &SystemConfig, depth: usize) -> Result<ShsModel> {
    cfg.validate()?;
    let SystemConfig { lambda, mu } = *cfg;
    let mut transitions = Vec::with_capacity(3 * depth + 2);
    for q in 0..=depth {
        transitions.push(Transition::new(q, q, lambda, fresh_packet()));
    }
    for q in 0..depth {
        transitions.push(Transition::new(
            q,
            q + 1,
            (depth - q) as f64 * lambda,
            identity(),
        ));
    }
    for q in (1..=depth).rev() {
        transitions.push(Transition::new(q, q - 1, mu, identity()));
    }
    transitions.push(Transition::new(0, 0, mu, delivery()));
    Ok(ShsModel {
        age_dim: 2,
        num_states: depth + 1,
        drift: vec![vec![1.0, 1.0]; depth + 1],
        transitions,
    })
}

/// Chain for the bufferless discipline.
///
/// State 0: the server holds the stream's packet (real or fake) or a
/// lower-priority one. State 1: a higher-priority packet is in service.
/// An own arrival in state 1 is lost, as is the packet preempted on
/// `0 -> 1`, so on `1 -> 0` the fake packet takes the monitor's age.
/// Higher-priority arrivals in state 1 only replace the packet in service
/// and are not modelled. With `depth = 0` this is the preemptive M/M/1/1
/// chain.
pub fn build_nq_chain(cfg: &SystemConfig, depth: usize) -> Result<ShsModel> {
    cfg.validate()?;
    let SystemConfig { lambda, mu } = *cfg;
    if depth == 0 {
        return Ok(ShsModel {
            age_dim: 2,
            num_states: 1,
            drift: vec![vec![1.0, 1.0]],
            transitions: vec![
                Transition::new(0, 0, lambda, fresh_packet()),
                Transition::new(0, 0, mu, delivery()),
            ],
        });
    }
    Ok(ShsModel {
        age_dim: 2,
        num_states: 2,
        drift: vec![vec![1.0, 1.0]; 2],
        transitions: vec![
            Transition::new(0, 0, lambda, fresh_packet()),
            Transition::new(0, 1, depth as f64 * lambda, identity()),
            Transition::new(1, 0, mu, fake_from_monitor()),
            Transition::new(0, 0, mu, delivery()),
        ],
    })
}

/// Chain for `discipline`.
pub fn build_chain(cfg: &SystemConfig, depth: usize, discipline: Discipline) -> Result<ShsModel> {
    match discipline {
        Discipline::Wq => build_wq_chain(cfg, depth),
        Discipline::Nq => build_nq_chain(cfg, depth),
    }
}
