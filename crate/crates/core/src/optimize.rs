//! Projected gradient descent with Armijo backtracking for
//! `min J(u)` over `a ≤ u ≤ b`.

use log::{debug, info};

use crate::error::{ChbError, Result};
use crate::objective::{project_control, stationarity_residual, ControlField, ControlProblem, Evaluation};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub c1: f64,
    pub beta: f64,
    /// Initial trial step; `None` means `1/κ`.
    pub gamma0: Option<f64>,
    /// Target for `‖u - P(u - ∇J/κ)‖ κ`.
    pub tol: f64,
    /// Relative cost decrease below which the iteration stops.
    pub ftol: f64,
    pub max_trials: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            c1: 1e-4,
            beta: 0.5,
            gamma0: None,
            tol: 1e-6,
            ftol: 0.0,
            max_trials: 40,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ChbError::InvalidParameter(m));
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return bad(format!("c1 must lie in (0, 1), got {}", self.c1));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma0 must be > 0, got {g}"));
            }
        }
        if !(self.tol >= 0.0) || !(self.ftol >= 0.0) {
            return bad("tol and ftol must be ≥ 0".into());
        }
        if self.max_trials == 0 {
            return bad("max_trials must be ≥ 1".into());
        }
        Ok(())
    }

    fn gamma0(&self, kappa: f64) -> f64 {
        self.gamma0.unwrap_or(1.0 / kappa)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub residual: f64,
    /// Accepted step; 0 for the initial record.
    pub step: f64,
    pub trials: usize,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub u_opt: ControlField,
    pub history: Vec<IterRecord>,
    pub converged: bool,
    /// Forward, adjoint and gradient at `u_opt`.
    pub eval: Evaluation,
}

/// Stationarity measure used for termination: the projected-gradient
/// residual at `γ = 1/κ`, which equals `κ ‖u - P(ϑ h(φ)/κ)‖`.
pub fn residual(problem: &ControlProblem, u: &ControlField, grad: &ControlField) -> Result<f64> {
    stationarity_residual(u, grad, &problem.bounds, 1.0 / problem.weights.kappa)
}

/// Largest `γ = γ₀ βᵗ` with `J(P(u - γg)) ≤ J(u) - c₁/γ ‖P(u - γg) - u‖²`.
/// Returns the accepted control, its step and cost, and the trial count.
pub fn armijo_line_search(
    problem: &ControlProblem,
    u: &ControlField,
    grad: &ControlField,
    cost_u: f64,
    opts: &OptimOptions,
) -> Result<(ControlField, f64, f64, usize)> {
    let mut gamma = opts.gamma0(problem.weights.kappa);
    for trial in 1..=opts.max_trials {
        let cand = project_control(&u.axpy(-gamma, grad)?, &problem.bounds);
        let d2 = cand.axpy(-1.0, u)?.inner(&cand.axpy(-1.0, u)?);
        if d2 == 0.0 {
            return Ok((cand, gamma, cost_u, trial));
        }
        let cost = problem.cost(&cand)?;
        debug!("  trial {trial}: gamma = {gamma:.3e}, J = {cost:.12e}");
        if cost <= cost_u - opts.c1 / gamma * d2 {
            return Ok((cand, gamma, cost, trial));
        }
        gamma *= opts.beta;
    }
    Err(ChbError::LineSearchFailed {
        trials: opts.max_trials,
    })
}

/// Failure mid-run keeps the iterations completed so far.
#[derive(Debug)]
pub struct OptimFailure {
    pub history: Vec<IterRecord>,
    pub error: ChbError,
}

impl std::fmt::Display for OptimFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "optimization aborted after {} iterations: {}", self.history.len(), self.error)
    }
}

impl std::error::Error for OptimFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn projected_gradient_descent(
    problem: &ControlProblem,
    u0: &ControlField,
    opts: &OptimOptions,
) -> Result<OptimResult, OptimFailure> {
    let fail = |history: &[IterRecord], error: ChbError| OptimFailure {
        history: history.to_vec(),
        error,
    };
    opts.validate().map_err(|e| fail(&[], e))?;
    let mut u = project_control(u0, &problem.bounds);
    let mut eval = problem.evaluate(&u).map_err(|e| fail(&[], e))?;
    let mut res = residual(problem, &u, &eval.gradient).map_err(|e| fail(&[], e))?;
    let mut history = vec![IterRecord {
        iter: 0,
        cost: eval.cost,
        residual: res,
        step: 0.0,
        trials: 0,
    }];
    info!("iter 0: J = {:.12e}, residual = {res:.3e}", eval.cost);
    let mut converged = res <= opts.tol;
    let mut iter = 0;
    while !converged && iter < opts.max_iters {
        iter += 1;
        let (next, step, cost, trials) =
            match armijo_line_search(problem, &u, &eval.gradient, eval.cost, opts) {
                Ok(r) => r,
                Err(ChbError::LineSearchFailed { trials }) => {
                    info!("line search failed after {trials} trials");
                    break;
                }
                Err(e) => return Err(fail(&history, e)),
            };
        let prev_cost = eval.cost;
        u = next;
        eval = problem.evaluate(&u).map_err(|e| fail(&history, e))?;
        debug_assert!((eval.cost - cost).abs() <= 1e-12 * cost.abs().max(1.0));
        res = residual(problem, &u, &eval.gradient).map_err(|e| fail(&history, e))?;
        history.push(IterRecord {
            iter,
            cost: eval.cost,
            residual: res,
            step,
            trials,
        });
        info!(
            "iter {iter}: J = {:.12e}, residual = {res:.3e}, step = {step:.3e}, trials = {trials}",
            eval.cost
        );
        converged = res <= opts.tol;
        if !converged && prev_cost - eval.cost <= opts.ftol * prev_cost.abs() {
            info!("cost stagnated");
            break;
        }
    }
    Ok(OptimResult {
        u_opt: u,
        history,
        converged,
        eval,
    })
}
