use std::io::Write;

use crate::control::{compute_z, ProblemSpec};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, RegionMask};
use crate::parabolic::{
    solve_cauchy_linearized, solve_linearized, solve_state, st_inner, st_norm, SpaceTimeField, TimeGrid,
};

/// Boolean mask on the space-time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMask {
    dofs: usize,
    flags: Vec<bool>,
}

impl SpaceTimeMask {
    pub fn full(grid: &Grid, time: &TimeGrid) -> Self {
        Self { dofs: grid.dofs(), flags: vec![true; grid.dofs() * time.nodes()] }
    }

    pub fn from_fn(grid: &Grid, time: &TimeGrid, f: impl Fn(f64, f64) -> bool) -> Self {
        let mut flags = Vec::with_capacity(grid.dofs() * time.nodes());
        for m in 0..time.nodes() {
            let t = time.time(m);
            flags.extend(grid.positions().iter().map(|&x| f(t, x)));
        }
        Self { dofs: grid.dofs(), flags }
    }

    /// The same spatial region on every time slice.
    pub fn from_region(region: &RegionMask, time: &TimeGrid) -> Self {
        let flags = region.flags();
        Self { dofs: flags.len(), flags: flags.repeat(time.nodes()) }
    }

    pub fn slice(&self, m: usize) -> &[bool] {
        &self.flags[m * self.dofs..(m + 1) * self.dofs]
    }

    fn check_shape(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        if self.dofs != grid.dofs() || self.flags.len() != grid.dofs() * time.nodes() {
            return invalid("space-time mask does not match the grids");
        }
        Ok(())
    }
}

/// `h0` restricted to a slice mask with its slice mean removed.
pub fn slice_centered(h0: &[f64], mask: &[bool], grid: &Grid) -> Option<Vec<f64>> {
    let mass: f64 = mask.iter().zip(grid.weights()).filter(|(f, _)| **f).map(|(_, w)| w).sum();
    if mass <= 0.0 {
        return None;
    }
    let integral: f64 =
        mask.iter().zip(grid.weights()).zip(h0).filter(|((f, _), _)| **f).map(|((_, w), h)| w * h).sum();
    let mean = integral / mass;
    Some(mask.iter().zip(h0).map(|(f, h)| if *f { h - mean } else { 0.0 }).collect())
}

/// Time-localized source `(1/2ε) 1_{|t - t0| < ε} 1_ω (h0 - mean_{ω_t} h0)`.
///
/// Nodes exactly on the window edge get half weight, so the trapezoid time
/// integral of the source is the centered datum whenever `ε` is a multiple of
/// `dt`.
pub fn dirac_perturbation(
    omega_st: &SpaceTimeMask,
    t0: f64,
    h0: &[f64],
    eps: f64,
    grid: &Grid,
    time: &TimeGrid,
) -> Result<SpaceTimeField> {
    grid.check_len(h0)?;
    omega_st.check_shape(grid, time)?;
    if !(eps > 0.0) || !(eps < t0.min(time.horizon() - t0)) {
        return invalid(format!("eps = {eps} must lie in (0, min(t0, T - t0)) for t0 = {t0}"));
    }
    let tol = 1e-9 * time.dt();
    let mut field = SpaceTimeField::zeros(grid, time);
    for m in 0..time.nodes() {
        let d = (time.time(m) - t0).abs();
        let weight = if d < eps - tol {
            1.0
        } else if d <= eps + tol {
            0.5
        } else {
            continue;
        };
        let centered = slice_centered(h0, omega_st.slice(m), grid).ok_or(Error::DegenerateWindow { index: m })?;
        let scale = weight / (2.0 * eps);
        field.row_mut(m).iter_mut().zip(centered).for_each(|(v, c)| *v = scale * c);
    }
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRow {
    pub eps: f64,
    /// `|u̇_ε - v̇|` in `L²(0,T;L²)`.
    pub l2_error: f64,
    /// `∫∫ Z u̇_ε²`.
    pub curvature_witness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub t0: f64,
    pub rows: Vec<PerturbationRow>,
    /// `∫∫ Z v̇²` for the limit profile.
    pub limit_witness: f64,
    pub limit_norm: f64,
    pub strictly_decreasing: bool,
    /// Last error over first error; zero when the first error vanishes.
    pub ratio: f64,
}

impl PerturbationReport {
    /// `eps,l2_error,prop11_witness`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,l2_error,prop11_witness")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.eps, r.l2_error, r.curvature_witness)?;
        }
        Ok(())
    }
}

/// Compares the responses to [`dirac_perturbation`] sources with the
/// linearized Cauchy problem started at `t0` from the centered datum.
///
/// `t0` is moved to the nearest time node.
pub fn perturbation_convergence(
    problem: &ProblemSpec,
    y_star: &SpaceTimeField,
    omega_st: &SpaceTimeMask,
    t0: f64,
    h0: &[f64],
    eps_list: &[f64],
) -> Result<PerturbationReport> {
    let ProblemSpec { grid, time, .. } = problem;
    if eps_list.is_empty() {
        return invalid("eps list is empty");
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eps list must be strictly decreasing");
    }
    y_star.check_shape(grid, time)?;
    omega_st.check_shape(grid, time)?;
    grid.check_len(h0)?;
    let m0 = time.nearest_index(t0);
    let t0 = time.time(m0);

    let state = solve_state(problem, y_star)?;
    let z = compute_z(problem, y_star)?;
    let datum = slice_centered(h0, omega_st.slice(m0), grid).ok_or(Error::DegenerateWindow { index: m0 })?;
    let limit = solve_cauchy_linearized(problem, &state, m0, &datum)?;
    let witness = |v: &SpaceTimeField| st_inner(grid, time, &z, &v.map(|x| x * x));

    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let source = dirac_perturbation(omega_st, t0, h0, eps, grid, time)?;
        let response = solve_linearized(problem, &state, &source)?;
        rows.push(PerturbationRow {
            eps,
            l2_error: st_norm(grid, time, &response.add_scaled(-1.0, &limit)),
            curvature_witness: witness(&response),
        });
    }
    let first = rows[0].l2_error;
    let last = rows[rows.len() - 1].l2_error;
    Ok(PerturbationReport {
        t0,
        strictly_decreasing: rows.windows(2).all(|w| w[1].l2_error < w[0].l2_error),
        ratio: if first > 0.0 { last / first } else { 0.0 },
        limit_witness: witness(&limit),
        limit_norm: st_norm(grid, time, &limit),
        rows,
    })
}
