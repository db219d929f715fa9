//! State, adjoint and linearized solves for a [`ProblemSpec`].
//!
//! The adjoint is the exact transpose of the linearized Crank–Nicolson
//! stepper, so `⟨p, h⟩` reproduces the derivative of the discrete cost to
//! rounding error.

use super::field::{st_inner, SpaceTimeField};
use super::linear::{solve_linear, CnOperator, LinearParabolicInstance};
use crate::control::ProblemSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::solve_tridiagonal;

pub const NEWTON_TOL: f64 = 1e-11;
pub const NEWTON_MAX_ITERS: usize = 50;
pub const BLOW_UP: f64 = 1e8;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Semilinear state `∂_t u - Δu = f(t, x, u) + y`, Crank–Nicolson in the
/// diffusion and trapezoidal in `f + y`, damped Newton per step.
pub fn solve_state(problem: &ProblemSpec, control: &SpaceTimeField) -> Result<SpaceTimeField> {
    let ProblemSpec { grid, time, nonlinearity: f, .. } = problem;
    control.check_shape(grid, time)?;
    if !control.is_finite() {
        return invalid("non-finite control");
    }
    let dt = time.dt();
    let h = 0.5 * dt;
    let dofs = grid.dofs();
    let (lap_off, lap_diag) = grid.laplacian_bands();
    let jac_off: Vec<f64> = lap_off.iter().map(|v| -h * v).collect();

    let mut u = SpaceTimeField::zeros(grid, time);
    u.row_mut(0).copy_from_slice(&problem.initial);

    for m in 0..time.steps() {
        let prev = u.row(m).to_vec();
        let lap_prev = grid.apply_laplacian(&prev);
        let rhs: Vec<f64> = (0..dofs)
            .map(|j| {
                prev[j] + h * (lap_prev[j] + f.value(m, j, prev[j])) + h * (control.get(m, j) + control.get(m + 1, j))
            })
            .collect();
        let scale = sup(&rhs).max(1.0);
        let residual = |v: &[f64]| -> Vec<f64> {
            let lap = grid.apply_laplacian(v);
            (0..dofs).map(|j| v[j] - h * (lap[j] + f.value(m + 1, j, v[j])) - rhs[j]).collect()
        };

        let mut v = prev;
        let mut res = residual(&v);
        let mut res_norm = sup(&res);
        let mut iters = 0;
        let mut polished = false;
        loop {
            if !res_norm.is_finite() {
                return Err(Error::StepFailure { index: m + 1, reason: "non-finite Newton residual".into() });
            }
            if res_norm <= NEWTON_TOL * scale && (polished || res_norm <= 4.0 * f64::EPSILON * scale) {
                break;
            }
            if iters >= NEWTON_MAX_ITERS {
                if res_norm <= NEWTON_TOL * scale {
                    break;
                }
                return Err(Error::StepFailure {
                    index: m + 1,
                    reason: format!(
                        "Newton did not converge in {NEWTON_MAX_ITERS} iterations (residual {res_norm:.3e})"
                    ),
                });
            }
            if res_norm <= NEWTON_TOL * scale {
                polished = true;
            }
            iters += 1;
            let fprime: Vec<f64> = (0..dofs).map(|j| f.du(m + 1, j, v[j])).collect();
            if dt * sup(&fprime) >= 2.0 {
                return Err(Error::StepFailure {
                    index: m + 1,
                    reason: format!("dt * |f_u| = {:.3e} >= 2, Newton matrix may be singular", dt * sup(&fprime)),
                });
            }
            let diag: Vec<f64> = (0..dofs).map(|j| 1.0 - h * (lap_diag[j] + fprime[j])).collect();
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = solve_tridiagonal(&jac_off, &diag, &jac_off, &neg)
                .ok_or_else(|| Error::StepFailure { index: m + 1, reason: "singular Newton matrix".into() })?;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
                let trial_res = residual(&trial);
                let trial_norm = sup(&trial_res);
                if trial_norm.is_finite() && trial_norm <= res_norm {
                    v = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if polished {
                    break;
                }
                return Err(Error::StepFailure {
                    index: m + 1,
                    reason: format!("damped Newton stalled at residual {res_norm:.3e}"),
                });
            }
        }
        let norm = sup(&v);
        if norm > BLOW_UP {
            return Err(Error::Divergence { index: m + 1, norm });
        }
        u.row_mut(m + 1).copy_from_slice(&v);
    }
    Ok(u)
}

/// `q = ∂_u f(t, x, u)` along a trajectory, with the runtime guard
/// `dt * |q| < 1`.
pub fn linearized_potential(problem: &ProblemSpec, state: &SpaceTimeField) -> Result<SpaceTimeField> {
    state.check_shape(&problem.grid, &problem.time)?;
    let mut q = state.clone();
    for m in 0..q.nodes() {
        for (j, v) in q.row_mut(m).iter_mut().enumerate() {
            *v = problem.nonlinearity.du(m, j, *v);
        }
    }
    if !q.is_finite() {
        return invalid("non-finite state trajectory");
    }
    let dt = problem.time.dt();
    if let Some(m) = (0..q.nodes()).find(|&m| q.row(m).iter().any(|v| dt * v.abs() >= 1.0)) {
        return Err(Error::StepFailure {
            index: m,
            reason: format!("stability guard violated: dt * |f_u| >= 1 (|f_u| up to {:.3e})", q.max_abs()),
        });
    }
    Ok(q)
}

/// Linearized state `∂_t u̇ - Δu̇ = h + ∂_u f(u) u̇`, `u̇(0) = 0`.
pub fn solve_linearized(
    problem: &ProblemSpec,
    state: &SpaceTimeField,
    direction: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    direction.check_shape(&problem.grid, &problem.time)?;
    let q = linearized_potential(problem, state)?;
    let zero = vec![0.0; problem.grid.dofs()];
    let inst = LinearParabolicInstance::forward(&zero).with_potential(&q).with_source(direction);
    solve_linear(&inst, &problem.grid, &problem.time)
}

/// Homogeneous linearized equation with Cauchy datum `h0` at node
/// `start_index`, extended by zero before it.
pub fn solve_cauchy_linearized(
    problem: &ProblemSpec,
    state: &SpaceTimeField,
    start_index: usize,
    datum: &[f64],
) -> Result<SpaceTimeField> {
    if start_index >= problem.time.steps() {
        return invalid(format!("t0 index {start_index} must be below nt = {}", problem.time.steps()));
    }
    let q = linearized_potential(problem, state)?;
    let inst = LinearParabolicInstance::forward(datum).with_potential(&q).starting_at(start_index);
    solve_linear(&inst, &problem.grid, &problem.time)
}

/// Transposed linearized stepper applied to a cost density.
///
/// `distributed` pairs with `u̇` in the space-time inner product, `terminal`
/// pairs with `u̇(T)` in the spatial one. The returned field `p` satisfies
/// `⟨p, h⟩ = ⟨u̇(h), distributed⟩ + ⟨u̇(h)(T), terminal⟩` for every `h`.
pub fn adjoint_propagate(
    problem: &ProblemSpec,
    state: &SpaceTimeField,
    distributed: Option<&SpaceTimeField>,
    terminal: Option<&[f64]>,
) -> Result<SpaceTimeField> {
    let ProblemSpec { grid, time, .. } = problem;
    if let Some(a) = distributed {
        a.check_shape(grid, time)?;
        if !a.is_finite() {
            return invalid("non-finite adjoint density");
        }
    }
    if let Some(b) = terminal {
        grid.check_len(b)?;
    }
    let q = linearized_potential(problem, state)?;
    let nt = time.steps();
    let dt = time.dt();
    let dofs = grid.dofs();

    // lambda_m is the multiplier of the step m-1 -> m
    let mut lambda = vec![vec![0.0; dofs]; nt + 1];
    let load = |m: usize| -> Vec<f64> {
        let mut r = vec![0.0; dofs];
        if let Some(a) = distributed {
            let w = time.weight(m);
            r.iter_mut().zip(a.row(m)).for_each(|(r, v)| *r += w * v);
        }
        r
    };
    let mut rhs = load(nt);
    if let Some(b) = terminal {
        rhs.iter_mut().zip(b).for_each(|(r, v)| *r += v);
    }
    for m in (1..=nt).rev() {
        if m < nt {
            let explicit = CnOperator::new(grid, dt, 1.0, Some(q.row(m)));
            rhs = explicit.apply(&lambda[m + 1]);
            rhs.iter_mut().zip(load(m)).for_each(|(r, v)| *r += v);
        }
        let implicit = CnOperator::new(grid, dt, -1.0, Some(q.row(m)));
        lambda[m] = implicit
            .solve(&rhs)
            .ok_or_else(|| Error::StepFailure { index: m, reason: "singular adjoint step matrix".into() })?;
    }

    let mut p = SpaceTimeField::zeros(grid, time);
    for m in 0..=nt {
        let row = p.row_mut(m);
        if m == 0 {
            row.copy_from_slice(&lambda[1]);
        } else if m == nt {
            row.copy_from_slice(&lambda[nt]);
        } else {
            for j in 0..dofs {
                row[j] = 0.5 * (lambda[m][j] + lambda[m + 1][j]);
            }
        }
    }
    Ok(p)
}

/// Adjoint state: backward solve with `∂_u j1` as distributed density and
/// `∂_u j2(u(T))` as terminal density on all of Ω.
pub fn solve_adjoint(problem: &ProblemSpec, state: &SpaceTimeField) -> Result<SpaceTimeField> {
    state.check_shape(&problem.grid, &problem.time)?;
    let running = problem.costs.running;
    let terminal = problem.costs.terminal;
    let density = state.map(|u| running.du(u));
    let end: Vec<f64> = state.row(problem.time.steps()).iter().map(|&u| terminal.du(u)).collect();
    adjoint_propagate(problem, state, Some(&density), Some(&end))
}

/// `|⟨u̇(h), w⟩ - ⟨h, p_w⟩|` with `p_w` the adjoint propagation of `w`.
pub fn duality_defect(
    problem: &ProblemSpec,
    state: &SpaceTimeField,
    h: &SpaceTimeField,
    w: &SpaceTimeField,
) -> Result<f64> {
    duality_defect_with_terminal(problem, state, h, w, None)
}

/// As [`duality_defect`], with an extra terminal pairing density.
pub fn duality_defect_with_terminal(
    problem: &ProblemSpec,
    state: &SpaceTimeField,
    h: &SpaceTimeField,
    w: &SpaceTimeField,
    terminal: Option<&[f64]>,
) -> Result<f64> {
    let ProblemSpec { grid, time, .. } = problem;
    h.check_shape(grid, time)?;
    w.check_shape(grid, time)?;
    let udot = solve_linearized(problem, state, h)?;
    let p = adjoint_propagate(problem, state, Some(w), terminal)?;
    let mut lhs = st_inner(grid, time, &udot, w);
    if let Some(b) = terminal {
        lhs += grid.inner(udot.row(time.steps()), b);
    }
    Ok((lhs - st_inner(grid, time, h, &p)).abs())
}
