//! The PIAG iteration and its theory-derived step-size rules.
//!
//! Each iteration refreshes the gradient table, aggregates
//! `g_k = (1/m) Σ_i ∇f_i(x_{τ_i})` and takes a proximal step
//!
//! ```text
//! x_{k+1} = prox(x_k − η·g_k, η),   d_k = (x_{k+1} − x_k)/η,   h_{k+1} = −g_k − d_k
//! ```
//!
//! where `h_{k+1}` is the subgradient of `r` at `x_{k+1}` selected by the prox.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ProblemInstance, ProblemSummary};
use crate::schedule::{GradientTable, OrderPolicy, RefreshSchedule};
use crate::vector;

/// Runs abort once `F_k` exceeds this multiple of `F_0`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// `M = 54e²` from the iteration-complexity bound.
pub fn complexity_constant() -> f64 {
    54.0 * E * E
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub policy: OrderPolicy,
    pub max_iters: usize,
    /// History length `a` used by the rate formulas.
    pub history: usize,
    /// Stop as soon as `F_k` drops to this level.
    pub target_epsilon: Option<f64>,
}

impl SolverConfig {
    pub fn new(eta: f64, policy: OrderPolicy, max_iters: usize) -> Self {
        SolverConfig {
            eta,
            policy,
            max_iters,
            history: 3,
            target_epsilon: None,
        }
    }

    pub fn with_history(mut self, a: usize) -> Self {
        self.history = a;
        self
    }

    pub fn with_target(mut self, epsilon: f64) -> Self {
        self.target_epsilon = Some(epsilon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be finite and > 0, got {}", self.eta)));
        }
        if let Some(eps) = self.target_epsilon {
            if !(eps >= 0.0) {
                return Err(Error::InvalidArgument(format!("target epsilon must be >= 0, got {eps}")));
            }
        }
        Ok(())
    }

    /// `η ≤ 1/(L(K+1))`, the step-size hypothesis of the descent lemmas.
    pub fn satisfies_descent_bound(&self, lipschitz: f64, staleness: usize) -> bool {
        within(self.eta, 1.0 / (lipschitz * (staleness as f64 + 1.0)))
    }
}

/// `value ≤ bound`, allowing for rounding in the bound's evaluation.
pub(crate) fn within(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + 1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    /// `g_k`.
    pub aggregated: Vec<f64>,
    /// `d_k = (x_{k+1} − x_k)/η`.
    pub direction: Vec<f64>,
    /// `h_{k+1} = −g_k − d_k ∈ ∂r(x_{k+1})`.
    pub subgradient: Vec<f64>,
}

/// One PIAG iteration at index `k`: refresh, aggregate, prox step.
pub fn piag_step(
    problem: &ProblemInstance,
    x_k: &[f64],
    table: &mut GradientTable,
    schedule: &RefreshSchedule,
    eta: f64,
    k: usize,
) -> Result<StepOutcome> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {eta}")));
    }
    table.refresh(problem, schedule, k, x_k)?;
    let g = table.aggregated_gradient();
    let y: Vec<f64> = x_k.iter().zip(&g).map(|(x, gi)| x - eta * gi).collect();
    if !vector::all_finite(&y) {
        return Err(Error::NonFinite(format!(
            "gradient step at iteration {k} (step size too large or a bad oracle)"
        )));
    }
    let x_next = problem.regularizer.apply(&y, eta)?;
    let direction: Vec<f64> = x_next.iter().zip(x_k).map(|(xn, x)| (xn - x) / eta).collect();
    let subgradient: Vec<f64> = g.iter().zip(&direction).map(|(gi, di)| -gi - di).collect();
    Ok(StepOutcome {
        x_next,
        aggregated: g,
        direction,
        subgradient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<f64>,
    /// `F(x_k)`.
    pub objective: f64,
    /// `F_k = F(x_k) − F(x*)`.
    pub suboptimality: f64,
    /// `‖x_k − x*‖`.
    pub dist_to_opt: f64,
    /// `d_k`; absent on the final row, where no step was taken.
    pub direction: Option<Vec<f64>>,
    pub direction_norm: Option<f64>,
    /// `‖∇f(x_k) − g_k‖`; absent on the final row.
    pub grad_error: Option<f64>,
}

/// Constants and settings a trace was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config: SolverConfig,
    pub staleness: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub condition: f64,
    pub reference_value: f64,
    pub reference_residual: f64,
    pub problem: ProblemSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl IterateTrace {
    pub fn eta(&self) -> f64 {
        self.meta.config.eta
    }

    pub fn staleness(&self) -> usize {
        self.meta.staleness
    }

    /// Number of steps taken (rows minus one).
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn suboptimality(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.suboptimality).collect()
    }

    /// `‖d_k‖` for every step taken.
    pub fn direction_norms(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.direction_norm).collect()
    }

    /// First `k` with `F_k ≤ epsilon`.
    pub fn first_below(&self, epsilon: f64) -> Option<usize> {
        self.rows.iter().position(|r| r.suboptimality <= epsilon)
    }
}

/// Runs PIAG from `x0` for `config.max_iters` steps, or until `F_k` reaches
/// `config.target_epsilon`, recording every quantity the certificates use.
pub fn run(problem: &ProblemInstance, config: &SolverConfig, x0: &[f64]) -> Result<IterateTrace> {
    config.validate()?;
    let reference = problem.reference.as_ref().ok_or(Error::MissingReference)?;
    let schedule = config.policy.compile(problem.num_components())?;
    let eta = config.eta;
    let f_star = reference.value;

    let mut table = GradientTable::new(problem, x0)?;
    let mut x = x0.to_vec();
    let mut objective = checked_objective(problem, &x, 0)?;
    let f0 = objective - f_star;
    let threshold = DIVERGENCE_FACTOR * f0.max(1e-12 * (1.0 + f_star.abs()));

    let mut rows = Vec::with_capacity(config.max_iters.min(1 << 20) + 1);
    for k in 0..config.max_iters {
        let sub = objective - f_star;
        if config.target_epsilon.is_some_and(|eps| sub <= eps) {
            break;
        }
        let step = piag_step(problem, &x, &mut table, &schedule, eta, k)?;
        let full = problem.smooth.gradient(&x);
        let grad_error = vector::dist(&full, &step.aggregated);
        let next_objective = checked_objective(problem, &step.x_next, k + 1)?;
        rows.push(TraceRow {
            k,
            dist_to_opt: vector::dist(&x, &reference.x),
            x,
            objective,
            suboptimality: sub,
            direction_norm: Some(vector::norm(&step.direction)),
            direction: Some(step.direction),
            grad_error: Some(grad_error),
        });
        x = step.x_next;
        objective = next_objective;
        let next_sub = objective - f_star;
        if next_sub > threshold {
            return Err(Error::Diverged {
                k: k + 1,
                value: next_sub,
                threshold,
            });
        }
    }
    rows.push(TraceRow {
        k: rows.len(),
        dist_to_opt: vector::dist(&x, &reference.x),
        x,
        objective,
        suboptimality: objective - f_star,
        direction: None,
        direction_norm: None,
        grad_error: None,
    });

    let smooth = &problem.smooth;
    Ok(IterateTrace {
        meta: TraceMeta {
            config: config.clone(),
            staleness: schedule.staleness(),
            lipschitz: smooth.lipschitz(),
            mu: smooth.mu(),
            condition: smooth.condition(),
            reference_value: f_star,
            reference_residual: reference.residual,
            problem: problem.summary(),
        },
        rows,
    })
}

fn checked_objective(problem: &ProblemInstance, x: &[f64], k: usize) -> Result<f64> {
    let v = problem.objective(x);
    if v == f64::INFINITY && vector::all_finite(x) {
        return Err(Error::Infeasible { k });
    }
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective at iteration {k} (step size too large or a bad oracle)"
        )));
    }
    Ok(v)
}

fn check_constants(lipschitz: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && lipschitz >= mu && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!("need L >= mu > 0, got L={lipschitz}, mu={mu}")));
    }
    Ok(lipschitz / mu)
}

/// `η̄_a = (1/(144(aK+1)KQ²))^(1/(a−2))` for `K ≥ 1`, `a ≥ 3`.
pub fn theorem2_eta_bar(condition: f64, staleness: usize, a: usize) -> f64 {
    let k = staleness as f64;
    let base = 1.0 / (144.0 * (a as f64 * k + 1.0) * k * condition * condition);
    base.powf(1.0 / (a as f64 - 2.0))
}

/// Largest step size covered by the linear-rate envelope with history `a`:
/// `η̄_a/(3L(K+1))`. For `K = 0` the history term vanishes and `1/(3L)` is returned.
pub fn step_size_theorem2(lipschitz: f64, mu: f64, staleness: usize, a: usize) -> Result<f64> {
    let q = check_constants(lipschitz, mu)?;
    if a < 3 {
        return Err(Error::InvalidArgument(format!("history a must be >= 3, got {a}")));
    }
    if staleness == 0 {
        return Ok(1.0 / (3.0 * lipschitz));
    }
    Ok(theorem2_eta_bar(q, staleness, a) / (3.0 * lipschitz * (staleness as f64 + 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corollary2Step {
    /// `a = ⌈ln(12(K+1)Q)⌉ + 2`.
    pub a: usize,
    /// `η̃_a = (1/a)(1/(12(K+1)Q))^(2/(a−2))`.
    pub eta_tilde: f64,
    /// `η = η̃_a/(3L(K+1))`.
    pub eta: f64,
}

/// The parameter-free step size with its history length.
pub fn step_size_corollary2(lipschitz: f64, mu: f64, staleness: usize) -> Result<Corollary2Step> {
    let q = check_constants(lipschitz, mu)?;
    let kp1 = staleness as f64 + 1.0;
    let x = 12.0 * kp1 * q;
    let a = x.ln().ceil() as usize + 2;
    let eta_tilde = (1.0 / a as f64) * x.powf(-2.0 / (a as f64 - 2.0));
    if eta_tilde * a as f64 * E * E < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "lower bound 1/(a e^2) on the step factor failed: {eta_tilde} with a={a}"
        )));
    }
    if staleness > 0 && !within(eta_tilde, theorem2_eta_bar(q, staleness, a)) {
        return Err(Error::InvalidArgument(format!(
            "step factor {eta_tilde} exceeds the envelope bound for a={a}"
        )));
    }
    Ok(Corollary2Step {
        a,
        eta_tilde,
        eta: eta_tilde / (3.0 * lipschitz * kp1),
    })
}

/// `⌈M a² (K+1)² Q ln(c/ε) + aK⌉` iterations guarantee `F_k ≤ ε` under the
/// parameter-free step size. Returns 0 when `ε > c`.
pub fn iteration_complexity(lipschitz: f64, mu: f64, staleness: usize, c: f64, epsilon: f64) -> Result<u64> {
    let q = check_constants(lipschitz, mu)?;
    if !(c > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("need c > 0 and epsilon > 0, got c={c}, epsilon={epsilon}")));
    }
    if epsilon > c {
        return Ok(0);
    }
    let a = step_size_corollary2(lipschitz, mu, staleness)?.a as f64;
    let kp1 = staleness as f64 + 1.0;
    let bound = complexity_constant() * a * a * kp1 * kp1 * q * (c / epsilon).ln() + a * staleness as f64;
    Ok(bound.ceil() as u64)
}

/// Per-block contraction factor `1 − ημ/18` of the linear-rate envelope.
pub fn envelope_rate(eta: f64, mu: f64) -> f64 {
    1.0 - eta * mu / 18.0
}
