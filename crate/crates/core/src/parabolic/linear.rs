use super::field::{SpaceTimeField, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::linalg::solve_tridiagonal;

/// Direction of integration of a linear parabolic problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `∂_t θ - Δθ - qθ = g`, datum at `start_index`, marching toward `nt`.
    Forward,
    /// `-∂_t θ - Δθ - qθ = g`, datum at `start_index`, marching toward 0.
    Backward,
}

/// `∂_t θ - Δθ - qθ = g` with a Cauchy datum. `None` potentials or sources
/// stand for zero.
#[derive(Debug, Clone, Copy)]
pub struct LinearParabolicInstance<'a> {
    pub potential: Option<&'a SpaceTimeField>,
    pub source: Option<&'a SpaceTimeField>,
    pub initial: &'a [f64],
    pub start_index: usize,
    pub direction: Direction,
}

impl<'a> LinearParabolicInstance<'a> {
    pub fn forward(initial: &'a [f64]) -> Self {
        Self { potential: None, source: None, initial, start_index: 0, direction: Direction::Forward }
    }

    pub fn with_potential(mut self, q: &'a SpaceTimeField) -> Self {
        self.potential = Some(q);
        self
    }

    pub fn with_source(mut self, g: &'a SpaceTimeField) -> Self {
        self.source = Some(g);
        self
    }

    pub fn starting_at(mut self, index: usize) -> Self {
        self.start_index = index;
        self
    }

    pub fn backward(initial: &'a [f64], time: &TimeGrid) -> Self {
        Self { potential: None, source: None, initial, start_index: time.steps(), direction: Direction::Backward }
    }
}

/// Tridiagonal bands of `I + sign * dt/2 (Δ_h + diag(q))`.
pub(crate) struct CnOperator {
    pub off: Vec<f64>,
    pub diag: Vec<f64>,
}

impl CnOperator {
    pub fn new(grid: &Grid, dt: f64, sign: f64, q: Option<&[f64]>) -> Self {
        let (lap_off, lap_diag) = grid.laplacian_bands();
        let h = 0.5 * dt * sign;
        let off = lap_off.iter().map(|v| h * v).collect();
        let diag = lap_diag.iter().enumerate().map(|(j, d)| 1.0 + h * (d + q.map_or(0.0, |q| q[j]))).collect();
        Self { off, diag }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|j| {
                let mut v = self.diag[j] * x[j];
                if j > 0 {
                    v += self.off[j - 1] * x[j - 1];
                }
                if j + 1 < n {
                    v += self.off[j] * x[j + 1];
                }
                v
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        solve_tridiagonal(&self.off, &self.diag, &self.off, rhs)
    }
}

/// Crank–Nicolson solve of a linear parabolic problem on the full time grid.
///
/// Forward step: `(I - dt/2 (Δ_h + Q_{m+1})) θ_{m+1} = (I + dt/2 (Δ_h + Q_m)) θ_m + dt g_{m+1/2}`,
/// with `g_{m+1/2}` the node average. Nodes before the datum are zero.
pub fn solve_linear(instance: &LinearParabolicInstance<'_>, grid: &Grid, time: &TimeGrid) -> Result<SpaceTimeField> {
    grid.check_len(instance.initial)?;
    if instance.initial.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite initial datum");
    }
    if instance.start_index > time.steps() {
        return invalid(format!("start index {} beyond nt = {}", instance.start_index, time.steps()));
    }
    for (name, f) in [("potential", instance.potential), ("source", instance.source)] {
        if let Some(f) = f {
            f.check_shape(grid, time)?;
            if !f.is_finite() {
                return invalid(format!("non-finite {name}"));
            }
        }
    }
    let dt = time.dt();
    if let Some(q) = instance.potential {
        let qmax = q.max_abs();
        if dt * qmax >= 2.0 {
            let index = (0..q.nodes()).find(|&m| q.row(m).iter().any(|v| dt * v.abs() >= 2.0)).unwrap_or(0);
            return Err(Error::StepFailure {
                index,
                reason: format!("dt * |q| = {:.3e} >= 2, step matrix may be singular", dt * qmax),
            });
        }
    }

    let mut out = SpaceTimeField::zeros(grid, time);
    out.row_mut(instance.start_index).copy_from_slice(instance.initial);
    let q_row = |m: usize| instance.potential.map(|q| q.row(m));
    let steps: Vec<(usize, usize)> = match instance.direction {
        Direction::Forward => (instance.start_index..time.steps()).map(|m| (m, m + 1)).collect(),
        Direction::Backward => (0..instance.start_index).rev().map(|m| (m + 1, m)).collect(),
    };
    for (from, to) in steps {
        let explicit = CnOperator::new(grid, dt, 1.0, q_row(from));
        let implicit = CnOperator::new(grid, dt, -1.0, q_row(to));
        let mut rhs = explicit.apply(out.row(from));
        if let Some(g) = instance.source {
            for ((r, a), b) in rhs.iter_mut().zip(g.row(from)).zip(g.row(to)) {
                *r += 0.5 * dt * (a + b);
            }
        }
        let next = implicit
            .solve(&rhs)
            .ok_or_else(|| Error::StepFailure { index: to, reason: "singular Crank-Nicolson step matrix".into() })?;
        out.row_mut(to).copy_from_slice(&next);
    }
    Ok(out)
}
