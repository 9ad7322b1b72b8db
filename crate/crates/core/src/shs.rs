//! Stochastic hybrid system (SHS) solver for average age.
//!
//! An [`ShsModel`] couples a finite continuous-time Markov chain `q(t)` with
//! a continuous age vector `x(t)`. While in state `q` every component of `x`
//! with drift 1 grows at unit rate; when transition `l` fires the age vector
//! is mapped to `x' = x A_l` (row vector times reset matrix).
//!
//! For an ergodic chain the stationary probabilities `π̄` solve the global
//! balance equations, and the stationary correlations `v̄_q = E[x · 1{q}]`
//! solve
//!
//! ```text
//! v̄_q · Σ_{l out of q} λ_l  =  b_q π̄_q + Σ_{l into q} λ_l v̄_{src(l)} A_l
//! ```
//!
//! The average age of component `k` is `Σ_q v̄_q[k]`.
//!
//! Self-transitions leave `q` unchanged, so they cancel out of the balance
//! equations, but they still reset `x` and therefore appear in the
//! correlation system on both sides.

use serde::{Deserialize, Serialize};

use crate::linalg::{solve_equilibrated, Matrix, Singularity};
use crate::{Error, Result};

const REFINEMENT_STEPS: usize = 3;

/// One edge of the discrete chain together with its reset map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    /// `age_dim × age_dim` matrix, applied as `x' = x · reset`.
    pub reset: Vec<Vec<f64>>,
}

impl Transition {
    pub fn new(from: usize, to: usize, rate: f64, reset: Vec<Vec<f64>>) -> Self {
        Self {
            from,
            to,
            rate,
            reset,
        }
    }
}

/// A finite SHS for age analysis.
///
/// The JSON form is
/// `{"age_dim": n, "num_states": m, "drift": [[...]], "transitions": [{"from": q, "to": q', "rate": r, "reset": [[...]]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShsModel {
    pub age_dim: usize,
    pub num_states: usize,
    /// Per-state drift vector `b_q`, entries 0 or 1.
    pub drift: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
}

impl ShsModel {
    /// Parses and validates a model from its JSON form.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Checks the structural invariants (shapes, indices, positive rates,
    /// binary drifts). Ergodicity is checked separately by
    /// [`ShsModel::check_strongly_connected`].
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.num_states == 0 {
            return bad("model has no states".into());
        }
        if self.age_dim == 0 {
            return bad("age vector has dimension 0".into());
        }
        if self.drift.len() != self.num_states {
            return bad(format!(
                "{} drift vectors for {} states",
                self.drift.len(),
                self.num_states
            ));
        }
        for (q, b) in self.drift.iter().enumerate() {
            if b.len() != self.age_dim {
                return bad(format!("drift of state {q} has length {}", b.len()));
            }
            if b.iter().any(|&x| x != 0.0 && x != 1.0) {
                return bad(format!("drift of state {q} is not binary: {b:?}"));
            }
        }
        for (l, t) in self.transitions.iter().enumerate() {
            if t.from >= self.num_states || t.to >= self.num_states {
                return bad(format!(
                    "transition {l} ({} -> {}) leaves the state space",
                    t.from, t.to
                ));
            }
            if !(t.rate.is_finite() && t.rate > 0.0) {
                return bad(format!("transition {l} has rate {}", t.rate));
            }
            if t.reset.len() != self.age_dim || t.reset.iter().any(|r| r.len() != self.age_dim) {
                return bad(format!(
                    "transition {l} reset map is not {0}x{0}",
                    self.age_dim
                ));
            }
            if t.reset.iter().flatten().any(|x| !x.is_finite()) {
                return bad(format!("transition {l} reset map has non-finite entries"));
            }
        }
        Ok(())
    }

    /// Fails with [`Error::SingularChain`] unless every state can reach every
    /// other state.
    pub fn check_strongly_connected(&self) -> Result<()> {
        let m = self.num_states;
        let mut fwd = vec![Vec::new(); m];
        let mut rev = vec![Vec::new(); m];
        for t in self.transitions.iter().filter(|t| t.from != t.to) {
            fwd[t.from].push(t.to);
            rev[t.to].push(t.from);
        }
        for (adj, dir) in [(&fwd, "reachable from"), (&rev, "able to reach")] {
            let seen = reachable(adj, 0);
            if let Some(q) = seen.iter().position(|s| !s) {
                return Err(Error::SingularChain(format!(
                    "chain is not strongly connected: state {q} is not {dir} state 0"
                )));
            }
        }
        Ok(())
    }

    /// Sum of rates leaving each state, self-transitions included.
    pub fn exit_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for t in &self.transitions {
            out[t.from] += t.rate;
        }
        out
    }

    fn reset_matrices(&self) -> Vec<Matrix> {
        self.transitions
            .iter()
            .map(|t| Matrix::from_rows(&t.reset).expect("validated reset map"))
            .collect()
    }
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(q) = stack.pop() {
        for &r in &adj[q] {
            if !seen[r] {
                seen[r] = true;
                stack.push(r);
            }
        }
    }
    seen
}

/// Stationary probabilities and correlation vectors of an [`ShsModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShsSolution {
    pub pi: Vec<f64>,
    /// `v[q][k]` is `v̄_{qk}`.
    pub v: Vec<Vec<f64>>,
}

impl ShsSolution {
    /// `Σ_q v̄_q[component]`.
    pub fn average_age(&self, component: usize) -> f64 {
        self.v.iter().map(|vq| vq[component]).sum()
    }

    /// Largest relative residual of the balance equations and of the
    /// normalization.
    pub fn balance_residual(&self, model: &ShsModel) -> f64 {
        balance_residual(model, &self.pi)
    }

    /// Largest relative residual of the correlation equations.
    pub fn correlation_residual(&self, model: &ShsModel) -> f64 {
        let n = model.age_dim;
        let exit = model.exit_rates();
        let resets = model.reset_matrices();
        let mut lhs = vec![vec![0.0; n]; model.num_states];
        let mut rhs = vec![vec![0.0; n]; model.num_states];
        let mut scale = vec![vec![0.0; n]; model.num_states];
        for q in 0..model.num_states {
            for k in 0..n {
                lhs[q][k] = self.v[q][k] * exit[q];
                rhs[q][k] = model.drift[q][k] * self.pi[q];
                scale[q][k] = lhs[q][k].abs() + rhs[q][k].abs();
            }
        }
        for (t, a) in model.transitions.iter().zip(&resets) {
            let mapped = a.vec_mul(&self.v[t.from]);
            for k in 0..n {
                let term = t.rate * mapped[k];
                rhs[t.to][k] += term;
                scale[t.to][k] += term.abs();
            }
        }
        let mut worst: f64 = 0.0;
        for q in 0..model.num_states {
            for k in 0..n {
                if scale[q][k] > 0.0 {
                    worst = worst.max((lhs[q][k] - rhs[q][k]).abs() / scale[q][k]);
                }
            }
        }
        worst
    }
}

fn balance_residual(model: &ShsModel, pi: &[f64]) -> f64 {
    let m = model.num_states;
    let mut outflow = vec![0.0; m];
    let mut inflow = vec![0.0; m];
    for t in model.transitions.iter().filter(|t| t.from != t.to) {
        let flow = t.rate * pi[t.from];
        outflow[t.from] += flow;
        inflow[t.to] += flow;
    }
    let mut worst = (pi.iter().sum::<f64>() - 1.0).abs();
    for q in 0..m {
        let scale = outflow[q].abs() + inflow[q].abs();
        if scale > 0.0 {
            worst = worst.max((outflow[q] - inflow[q]).abs() / scale);
        }
    }
    worst
}

/// Stationary distribution of the discrete chain.
///
/// The last balance equation is replaced by the normalization row. Fails
/// with [`Error::SingularChain`] if the chain is not strongly connected or
/// the repaired system is still rank deficient.
pub fn solve_stationary(model: &ShsModel) -> Result<Vec<f64>> {
    model.validate()?;
    model.check_strongly_connected()?;
    let m = model.num_states;
    if m == 1 {
        return Ok(vec![1.0]);
    }

    // Row q: outflow(q) π_q - Σ inflow = 0.
    let mut a = Matrix::zeros(m);
    for t in model.transitions.iter().filter(|t| t.from != t.to) {
        a[(t.from, t.from)] += t.rate;
        a[(t.to, t.from)] -= t.rate;
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = 1.0;

    let mut pi = solve_equilibrated(&a, &rhs, REFINEMENT_STEPS)
        .map_err(|s| Error::SingularChain(describe(s)))?;
    for (q, p) in pi.iter_mut().enumerate() {
        if *p < 0.0 {
            if *p < -1e-12 {
                return Err(Error::SingularChain(format!(
                    "negative stationary probability {p:e} in state {q}"
                )));
            }
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Solves the stacked correlation system for `v̄` given `pi`.
///
/// Unknown `(q, k)` sits at row/column `q * age_dim + k`.
pub fn solve_correlations(model: &ShsModel, pi: &[f64]) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    if pi.len() != model.num_states {
        return Err(Error::InvalidModel(format!(
            "probability vector has length {} for {} states",
            pi.len(),
            model.num_states
        )));
    }
    let n = model.age_dim;
    let dim = model.num_states * n;
    let exit = model.exit_rates();
    let mut a = Matrix::zeros(dim);
    let mut rhs = vec![0.0; dim];
    for q in 0..model.num_states {
        for k in 0..n {
            a[(q * n + k, q * n + k)] += exit[q];
            rhs[q * n + k] = model.drift[q][k] * pi[q];
        }
    }
    // (v̄_src A)_k = Σ_j v̄_src[j] A[j][k]
    for t in &model.transitions {
        for k in 0..n {
            for j in 0..n {
                let c = t.reset[j][k];
                if c != 0.0 {
                    a[(t.to * n + k, t.from * n + j)] -= t.rate * c;
                }
            }
        }
    }
    let flat = solve_equilibrated(&a, &rhs, REFINEMENT_STEPS)
        .map_err(|s| Error::SingularSystem(describe(s)))?;
    Ok(flat.chunks(n).map(<[f64]>::to_vec).collect())
}

/// Full solve: stationary distribution followed by correlations.
pub fn solve(model: &ShsModel) -> Result<ShsSolution> {
    let pi = solve_stationary(model)?;
    let v = solve_correlations(model, &pi)?;
    Ok(ShsSolution { pi, v })
}

/// Average age of `monitor_component`, i.e. `Σ_q v̄_q[monitor_component]`.
pub fn average_age(model: &ShsModel, monitor_component: usize) -> Result<f64> {
    if monitor_component >= model.age_dim {
        return Err(Error::InvalidModel(format!(
            "monitor component {monitor_component} out of range for age dimension {}",
            model.age_dim
        )));
    }
    Ok(solve(model)?.average_age(monitor_component))
}

fn describe(s: Singularity) -> String {
    match s {
        Singularity::ZeroPivot(k) => format!("zero pivot in column {k}"),
        Singularity::IllConditioned { rcond } => {
            format!("reciprocal condition estimate {rcond:e} below threshold")
        }
    }
}
