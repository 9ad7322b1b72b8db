//! Explicit age formulas for the discipline with per-stream waiting rooms.
//!
//! For a stream with `i` higher-priority streams the WQ chain is a
//! birth-death process on `0..=i` (up rate `(i-k)λ`, down rate `μ`) whose
//! stationary law is
//!
//! ```text
//! π̄_k = (λ/μ)^k · i!/(i-k)! · π̄_0
//! ```
//!
//! The correlation system then collapses to two recursions. With the
//! backward sequence
//!
//! ```text
//! a_i = λ + μ                                  (i ≠ 0)
//! a_h = (i-h+1)λ + μ - (i-h)λμ / a_{h+1}       (1 ≤ h ≤ i-1)
//! a_0 = (i+1)λ - iλμ / a_1
//! ```
//!
//! the monitor age in the serving state is
//! `v̄₀₀ = 1/μ + v̄₀₁` with `v̄₀₁ = Σ_j μ^j π̄_j / Π_{h≤j} a_h`, and for
//! `k ≥ 1`
//!
//! ```text
//! v̄_k0 = (i-k+1)λ/μ · v̄_(k-1)0 + Σ_{j≥k} π̄_j / μ
//! ```
//!
//! The stream's average age is `Σ_k v̄_k0`. Factorial ratios and powers are
//! never formed explicitly; everything runs on multiplicative recursions so
//! large `i` does not overflow.

use serde::{Deserialize, Serialize};

use crate::models::{check_streams, AgeReport, Discipline, SystemConfig};
use crate::Result;

/// Intermediate quantities of the WQ age evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormBreakdown {
    pub pi: Vec<f64>,
    pub a_seq: Vec<f64>,
    /// `v̄₀₀ ..= v̄_i0`.
    pub v_row0: Vec<f64>,
    /// Packet-age correlation in the serving state, `v̄₀₁`.
    pub v01: f64,
    pub age: f64,
}

/// Stationary distribution of the WQ chain for priority depth `depth`.
pub fn stationary_distribution(cfg: &SystemConfig, depth: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let ratio = cfg.lambda / cfg.mu;
    let mut pi = Vec::with_capacity(depth + 1);
    let mut term = 1.0;
    pi.push(term);
    for k in 1..=depth {
        term *= ratio * (depth - k + 1) as f64;
        pi.push(term);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// The backward sequence `a₀ ..= a_depth`.
pub fn a_sequence(cfg: &SystemConfig, depth: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let SystemConfig { lambda, mu } = *cfg;
    let i = depth;
    if i == 0 {
        return Ok(vec![lambda]);
    }
    let mut a = vec![0.0; i + 1];
    a[i] = lambda + mu;
    for h in (1..i).rev() {
        a[h] = (i - h + 1) as f64 * lambda + mu - (i - h) as f64 * lambda * mu / a[h + 1];
    }
    a[0] = (i + 1) as f64 * lambda - i as f64 * lambda * mu / a[1];
    Ok(a)
}

/// Average age of the stream with `depth` higher-priority streams.
pub fn wq_age(cfg: &SystemConfig, depth: usize) -> Result<ClosedFormBreakdown> {
    let pi = stationary_distribution(cfg, depth)?;
    let a_seq = a_sequence(cfg, depth)?;
    let SystemConfig { lambda, mu } = *cfg;

    // μ^j / Π_{h=0..j} a_h, updated one factor per j.
    let mut weight = 1.0 / a_seq[0];
    let mut v01 = weight * pi[0];
    for j in 1..=depth {
        weight *= mu / a_seq[j];
        v01 += weight * pi[j];
    }

    let mut v_row0 = Vec::with_capacity(depth + 1);
    v_row0.push(1.0 / mu + v01);
    if depth == 0 {
        debug_assert!(
            ((v_row0[0] - (1.0 / lambda + 1.0 / mu)) * lambda).abs() < 1e-12,
            "top-priority age must reduce to 1/λ + 1/μ"
        );
    }

    // Σ_{j≥k} π̄_j, peeled from the front.
    let mut tail: f64 = pi.iter().sum::<f64>() - pi[0];
    for k in 1..=depth {
        let prev = v_row0[k - 1];
        v_row0.push((depth - k + 1) as f64 * lambda / mu * prev + tail / mu);
        tail -= pi[k];
        // Guard the subtraction against drift below zero on the last step.
        tail = tail.max(0.0);
    }

    let age = v_row0.iter().sum();
    Ok(ClosedFormBreakdown {
        pi,
        a_seq,
        v_row0,
        v01,
        age,
    })
}

/// Per-stream WQ ages for `streams` streams and their sum.
pub fn total_wq_age(cfg: &SystemConfig, streams: usize) -> Result<AgeReport> {
    check_streams(streams)?;
    let per_stream = (0..streams)
        .map(|i| wq_age(cfg, i).map(|b| b.age))
        .collect::<Result<Vec<_>>>()?;
    Ok(AgeReport::new(cfg, Discipline::Wq, per_stream))
}
