use std::io::Write;

use crate::error::{invalid, Result};
use crate::grid::Grid;

/// Uniform time grid `t_m = m * dt`, `m = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nt: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, nt: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("time horizon must be positive, got {horizon}"));
        }
        if nt == 0 {
            return invalid("nt must be positive");
        }
        Ok(Self { horizon, nt, dt: horizon / nt as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.nt
    }

    pub fn nodes(&self) -> usize {
        self.nt + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.nt {
            self.horizon
        } else {
            m as f64 * self.dt
        }
    }

    /// Trapezoid weight `τ_m dt` of node `m`.
    pub fn weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.nt {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Index of the node closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.nt)
    }
}

/// Function on the space-time nodes, stored row-major over `(m, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nodes: usize,
    dofs: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid, time: &TimeGrid) -> Self {
        Self::constant(grid, time, 0.0)
    }

    pub fn constant(grid: &Grid, time: &TimeGrid, value: f64) -> Self {
        Self { nodes: time.nodes(), dofs: grid.dofs(), values: vec![value; time.nodes() * grid.dofs()] }
    }

    /// Samples `f(t, x)` at every node.
    pub fn from_fn(grid: &Grid, time: &TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(time.nodes() * grid.dofs());
        for m in 0..time.nodes() {
            let t = time.time(m);
            values.extend(grid.positions().iter().map(|&x| f(t, x)));
        }
        Self { nodes: time.nodes(), dofs: grid.dofs(), values }
    }

    /// Same spatial profile at every time node.
    pub fn from_slice(time: &TimeGrid, slice: &[f64]) -> Self {
        let mut values = Vec::with_capacity(time.nodes() * slice.len());
        for _ in 0..time.nodes() {
            values.extend_from_slice(slice);
        }
        Self { nodes: time.nodes(), dofs: slice.len(), values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = rows.len();
        let dofs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dofs) {
            return invalid("ragged rows");
        }
        Ok(Self { nodes, dofs, values: rows.into_iter().flatten().collect() })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.dofs..(m + 1) * self.dofs]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.values[m * self.dofs..(m + 1) * self.dofs]
    }

    pub fn get(&self, m: usize, j: usize) -> f64 {
        self.values[m * self.dofs + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { nodes: self.nodes, dofs: self.dofs, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect();
        Self { nodes: self.nodes, dofs: self.dofs, values }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.dofs == other.dofs
    }

    pub fn check_shape(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        if self.nodes != time.nodes() || self.dofs != grid.dofs() {
            return invalid(format!(
                "field shape {}x{} does not match grids {}x{}",
                self.nodes,
                self.dofs,
                time.nodes(),
                grid.dofs()
            ));
        }
        Ok(())
    }

    /// Writes `t,x,value` rows, row-major over `(m, j)`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, time: &TimeGrid, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,value")?;
        for m in 0..self.nodes {
            let t = time.time(m);
            for (x, v) in grid.positions().iter().zip(self.row(m)) {
                writeln!(out, "{t},{x},{v}")?;
            }
        }
        Ok(())
    }
}

/// Discrete space-time inner product `sum_m τ_m dt sum_j w_j a b`
/// (trapezoid in time, grid quadrature in space).
pub fn st_inner(grid: &Grid, time: &TimeGrid, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    debug_assert!(a.same_shape(b));
    (0..a.nodes()).map(|m| time.weight(m) * grid.inner(a.row(m), b.row(m))).sum()
}

pub fn st_norm(grid: &Grid, time: &TimeGrid, a: &SpaceTimeField) -> f64 {
    st_inner(grid, time, a, a).sqrt()
}
