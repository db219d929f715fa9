use super::problem::ProblemSpec;
use crate::error::Result;
use crate::parabolic::{solve_adjoint, solve_linearized, solve_state, SpaceTimeField};

/// Discrete cost of a computed trajectory: trapezoid in time, grid
/// quadrature in space for `j1`, plus the terminal quadrature of `j2`.
pub fn cost_of_state(problem: &ProblemSpec, state: &SpaceTimeField) -> f64 {
    let ProblemSpec { grid, time, costs, .. } = problem;
    let running: f64 = (0..time.nodes())
        .map(|m| {
            let slice: f64 = grid.weights().iter().zip(state.row(m)).map(|(w, &u)| w * costs.running.value(u)).sum();
            time.weight(m) * slice
        })
        .sum();
    let terminal: f64 =
        grid.weights().iter().zip(state.row(time.steps())).map(|(w, &u)| w * costs.terminal.value(u)).sum();
    running + terminal
}

/// `J(y)`.
pub fn eval_cost(problem: &ProblemSpec, control: &SpaceTimeField) -> Result<f64> {
    let state = solve_state(problem, control)?;
    Ok(cost_of_state(problem, &state))
}

/// Gradient field `p_y`: `⟨p_y, h⟩` is the derivative of `J` along `h`.
pub fn eval_gradient(problem: &ProblemSpec, control: &SpaceTimeField) -> Result<SpaceTimeField> {
    let state = solve_state(problem, control)?;
    solve_adjoint(problem, &state)
}

/// Second variation along `h`:
/// `∫∫ u̇² (p ∂²f + ∂²j1) + ∫ u̇(T)² ∂²j2`, with the same quadratures as the cost.
pub fn second_variation(problem: &ProblemSpec, control: &SpaceTimeField, direction: &SpaceTimeField) -> Result<f64> {
    let state = solve_state(problem, control)?;
    let adjoint = solve_adjoint(problem, &state)?;
    let udot = solve_linearized(problem, &state, direction)?;
    let z = z_from(problem, &state, &adjoint);
    let ProblemSpec { grid, time, costs, .. } = problem;
    let distributed: f64 = (0..time.nodes())
        .map(|m| {
            let s: f64 = (0..grid.dofs()).map(|j| grid.weights()[j] * udot.get(m, j).powi(2) * z.get(m, j)).sum();
            time.weight(m) * s
        })
        .sum();
    let nt = time.steps();
    let terminal: f64 = (0..grid.dofs())
        .map(|j| grid.weights()[j] * udot.get(nt, j).powi(2) * costs.terminal.duu(state.get(nt, j)))
        .sum();
    Ok(distributed + terminal)
}

pub(crate) fn z_from(problem: &ProblemSpec, state: &SpaceTimeField, adjoint: &SpaceTimeField) -> SpaceTimeField {
    let mut z = state.clone();
    for m in 0..z.nodes() {
        for j in 0..z.dofs() {
            let u = state.get(m, j);
            z.row_mut(m)[j] = adjoint.get(m, j) * problem.nonlinearity.duu(m, j, u) + problem.costs.running.duu(u);
        }
    }
    z
}

/// `Z_y = p_y ∂²f(u_y) + ∂²j1(u_y)`.
pub fn compute_z(problem: &ProblemSpec, control: &SpaceTimeField) -> Result<SpaceTimeField> {
    let state = solve_state(problem, control)?;
    let adjoint = solve_adjoint(problem, &state)?;
    Ok(z_from(problem, &state, &adjoint))
}
