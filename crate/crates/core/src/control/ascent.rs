use std::io::Write;

use super::cost::cost_of_state;
use super::problem::ProblemSpec;
use super::projection::{first_order_residual, project_control, threshold_step};
use crate::error::Result;
use crate::parabolic::{solve_adjoint, solve_state, st_inner, SpaceTimeField};

/// Armijo sufficient-increase constant.
pub const ARMIJO: f64 = 1e-4;
pub const MAX_BACKTRACKS: usize = 30;
/// Cap of trial steps in units of `(κ0 + κ1) / |p|_∞`.
const MAX_STEP_RATIO: f64 = 1e6;
/// Relative noise level of `J` tolerated by the line search.
pub const COST_NOISE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AscentMode {
    /// `y <- P(y + s p)` with backtracking on `J`.
    ProjectedGradient,
    /// `y <- P((1 - α) y + α T(p))`, `T` the slice-wise threshold maximizer.
    Thresholding,
}

impl std::str::FromStr for AscentMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "projected_gradient" | "pg" => Ok(Self::ProjectedGradient),
            "thresholding" | "threshold" => Ok(Self::Thresholding),
            other => Err(format!("unknown ascent mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub mode: AscentMode,
    /// First trial step of the projected gradient; `None` scales it to
    /// `(κ0 + κ1) / |p|_∞`. Later trial steps are Barzilai–Borwein steps,
    /// or twice the last accepted step when the curvature estimate is not
    /// negative.
    pub initial_step: Option<f64>,
    /// Averaging weight of the thresholding update.
    pub damping: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-8, mode: AscentMode::ProjectedGradient, initial_step: None, damping: 0.5 }
    }
}

/// History of an ascent run. Entry `k` of each vector refers to iterate `k`;
/// `steps[0]` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub costs: Vec<f64>,
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub control: SpaceTimeField,
    pub gradient: SpaceTimeField,
    pub state: SpaceTimeField,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl OptimizationTrace {
    /// Number of accepted updates.
    pub fn iterations(&self) -> usize {
        self.costs.len().saturating_sub(1)
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("trace has at least one iterate")
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("trace has at least one iterate")
    }

    /// `iter,J,step,residual`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,J,step,residual")?;
        for (k, ((j, s), r)) in self.costs.iter().zip(&self.steps).zip(&self.residuals).enumerate() {
            writeln!(out, "{k},{j},{s},{r}")?;
        }
        Ok(())
    }
}

/// Gradient or thresholding ascent of `J` over the admissible set, stopping
/// once the first-order residual drops to `tol`.
pub fn ascend(problem: &ProblemSpec, initial: &SpaceTimeField, options: &AscentOptions) -> Result<OptimizationTrace> {
    let ProblemSpec { grid, time, constraints: cons, .. } = problem;
    let (mut y, _) = project_control(initial, cons, grid, time)?;
    let mut state = solve_state(problem, &y)?;
    let mut cost = cost_of_state(problem, &state);
    let mut trace = OptimizationTrace {
        costs: Vec::new(),
        steps: Vec::new(),
        residuals: Vec::new(),
        control: y.clone(),
        gradient: y.clone(),
        state: state.clone(),
        warnings: Vec::new(),
        converged: false,
    };
    let mut last_step = 0.0;
    let mut step_guess: Option<f64> = options.initial_step;
    let mut previous: Option<(SpaceTimeField, SpaceTimeField)> = None;

    for iter in 0..=options.max_iters {
        let p = solve_adjoint(problem, &state)?;
        let residual = first_order_residual(&y, &p, cons, grid, time);
        trace.costs.push(cost);
        trace.steps.push(last_step);
        trace.residuals.push(residual);
        if residual <= options.tol {
            trace.converged = true;
        }
        if trace.converged || iter == options.max_iters {
            trace.gradient = p;
            break;
        }

        match options.mode {
            AscentMode::ProjectedGradient => {
                let pmax = p.max_abs().max(f64::MIN_POSITIVE);
                let mut s = step_guess.map_or(cons.width() / pmax, |s| 2.0 * s);
                if let Some((y_old, p_old)) = &previous {
                    let dy = y.add_scaled(-1.0, y_old);
                    let curvature = -st_inner(grid, time, &dy, &p.add_scaled(-1.0, p_old));
                    if curvature > 0.0 {
                        s = (st_inner(grid, time, &dy, &dy) / curvature).min(MAX_STEP_RATIO * cons.width() / pmax);
                    }
                }
                let mut accepted = None;
                // feasible moves keep every slice mean, so centering p
                // leaves the gain unchanged and avoids cancellation
                let mut centered = p.clone();
                for m in 0..centered.nodes() {
                    let mean = grid.mean(centered.row(m))?;
                    centered.row_mut(m).iter_mut().for_each(|v| *v -= mean);
                }
                for _ in 0..=MAX_BACKTRACKS {
                    let (trial, _) = project_control(&y.add_scaled(s, &p), cons, grid, time)?;
                    let gain = st_inner(grid, time, &centered, &trial.add_scaled(-1.0, &y));
                    if gain > 0.0 {
                        let trial_state = solve_state(problem, &trial)?;
                        let trial_cost = cost_of_state(problem, &trial_state);
                        let noise = COST_NOISE * cost.abs().max(1.0);
                        if trial_cost >= cost + ARMIJO * gain - noise {
                            accepted = Some((trial, trial_state, trial_cost));
                            break;
                        }
                    }
                    s *= 0.5;
                }
                match accepted {
                    Some((trial, trial_state, trial_cost)) => {
                        previous = Some((std::mem::replace(&mut y, trial), p));
                        state = trial_state;
                        cost = trial_cost;
                        last_step = s;
                        step_guess = Some(s);
                    }
                    None => {
                        trace
                            .warnings
                            .push(format!("iteration {iter}: line search failed after {MAX_BACKTRACKS} backtracks"));
                        trace.gradient = p;
                        break;
                    }
                }
            }
            AscentMode::Thresholding => {
                let alpha = options.damping;
                let mut mixed = y.clone();
                for m in 0..y.nodes() {
                    let target = threshold_step(p.row(m), cons, grid)?;
                    for (v, t) in mixed.row_mut(m).iter_mut().zip(target) {
                        *v = (1.0 - alpha) * *v + alpha * t;
                    }
                }
                let (next, _) = project_control(&mixed, cons, grid, time)?;
                let next_state = solve_state(problem, &next)?;
                let next_cost = cost_of_state(problem, &next_state);
                if next_cost < cost {
                    trace.warnings.push(format!("iteration {iter}: cost decreased from {cost} to {next_cost}"));
                }
                y = next;
                state = next_state;
                cost = next_cost;
                last_step = alpha;
            }
        }
    }
    trace.control = y;
    trace.state = state;
    Ok(trace)
}
