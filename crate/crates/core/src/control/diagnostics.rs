//! Pointwise checks of the second-order structure at a computed control:
//! the abnormal set, `Z_y` on it, and time-localized bang-bang slices.

use std::fmt::Write as _;
use std::io::Write;

use super::cost::z_from;
use super::problem::{Constraints, ProblemSpec};
use super::projection::{slice_residual, LEVEL_BAND};
use crate::error::Result;
use crate::grid::Grid;
use crate::parabolic::{solve_adjoint, solve_state, SpaceTimeField, TimeGrid};

/// Space-time nodes where `-κ0 + tol < y < κ1 - tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbnormalMask {
    pub flags: Vec<bool>,
    pub dofs: usize,
    pub measure: f64,
}

impl AbnormalMask {
    pub fn contains(&self, m: usize, j: usize) -> bool {
        self.flags[m * self.dofs + j]
    }
}

/// Default band `1e-6 (κ0 + κ1)`.
pub fn default_abnormal_tol(cons: &Constraints) -> f64 {
    1e-6 * cons.width()
}

pub fn abnormal_mask(y: &SpaceTimeField, cons: &Constraints, tol: f64, grid: &Grid, time: &TimeGrid) -> AbnormalMask {
    let mut flags = Vec::with_capacity(y.values().len());
    let mut measure = 0.0;
    for m in 0..y.nodes() {
        for (j, &v) in y.row(m).iter().enumerate() {
            let inside = v > cons.lower() + tol && v < cons.upper() - tol;
            if inside {
                measure += time.weight(m) * grid.weights()[j];
            }
            flags.push(inside);
        }
    }
    AbnormalMask { flags, dofs: y.dofs(), measure }
}

/// Per-node row of the second-order report.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDiagnostics {
    pub time: f64,
    pub threshold: f64,
    pub bang_fraction: f64,
    pub abnormal_mass: f64,
    pub abnormal_cells: usize,
    pub max_z_abnormal: Option<f64>,
    /// Reaction and running cost convex in `u` (one strictly) on this slice.
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderReport {
    pub abnormal_measure: f64,
    pub total_measure: f64,
    pub bang_bang_fraction: f64,
    pub z_sup: f64,
    /// Over the same slices as the percentile.
    pub z_max_abnormal: Option<f64>,
    pub z_p99_abnormal: Option<f64>,
    pub eta: f64,
    /// `Z <= η` on the abnormal set (99th percentile over slices with more
    /// than the fractional cell); vacuous when empty.
    pub sign_condition_pass: bool,
    pub terminal_increasing: bool,
    /// Convex slices that fail to be bang-bang beyond the fractional cell
    /// (only meaningful when the terminal cost is increasing).
    pub convex_violations: Vec<usize>,
    pub first_order_residual: f64,
    pub slices: Vec<SliceDiagnostics>,
}

impl SecondOrderReport {
    pub fn convex_pass(&self) -> bool {
        !self.terminal_increasing || self.convex_violations.is_empty()
    }

    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v}"));
        let mut s = String::new();
        let _ = writeln!(s, "abnormal_measure = {}", self.abnormal_measure);
        let _ = writeln!(s, "total_measure = {}", self.total_measure);
        let _ = writeln!(s, "bang_bang_fraction = {}", self.bang_bang_fraction);
        let _ = writeln!(s, "z_sup = {}", self.z_sup);
        let _ = writeln!(s, "z_max_abnormal = {}", opt(self.z_max_abnormal));
        let _ = writeln!(s, "z_p99_abnormal = {}", opt(self.z_p99_abnormal));
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "sign_condition_pass = {}", self.sign_condition_pass);
        let _ = writeln!(s, "convex_slices = {}", self.slices.iter().filter(|s| s.convex).count());
        let _ = writeln!(s, "convex_violations = {}", self.convex_violations.len());
        let _ = writeln!(s, "convex_pass = {}", self.convex_pass());
        let _ = writeln!(s, "first_order_residual = {}", self.first_order_residual);
        s
    }

    /// `t,c,bang_fraction,abnormal_mass,maxZ_abnormal`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,c,bang_fraction,abnormal_mass,maxZ_abnormal")?;
        for s in &self.slices {
            let z = s.max_z_abnormal.map_or(String::new(), |v| v.to_string());
            writeln!(out, "{},{},{},{},{}", s.time, s.threshold, s.bang_fraction, s.abnormal_mass, z)?;
        }
        Ok(())
    }
}

/// Weighted nearest-rank quantile.
fn weighted_quantile(mut samples: Vec<(f64, f64)>, q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let mut acc = 0.0;
    for (v, w) in &samples {
        acc += w;
        if acc >= q * total {
            return Some(*v);
        }
    }
    samples.last().map(|s| s.0)
}

const CONVEX_TOL: f64 = 1e-10;
/// Abnormal dofs per slice that the mean constraint alone can force: the
/// fractional cell of a discrete bang-bang slice.
pub const FRACTIONAL_CELLS: usize = 1;
const U_SAMPLES: usize = 17;

pub fn second_order_report(problem: &ProblemSpec, y: &SpaceTimeField, tol: f64) -> Result<SecondOrderReport> {
    let ProblemSpec { grid, time, constraints: cons, nonlinearity: f, costs, .. } = problem;
    let state = solve_state(problem, y)?;
    let p = solve_adjoint(problem, &state)?;
    let z = z_from(problem, &state, &p);
    let mask = abnormal_mask(y, cons, tol, grid, time);
    let total_measure = time.horizon() * grid.total_weight();
    let band = LEVEL_BAND * p.max_abs();

    let umin = state.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = state.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let us: Vec<f64> = (0..U_SAMPLES).map(|i| umin + (umax - umin) * i as f64 / (U_SAMPLES - 1) as f64).collect();
    let terminal_increasing = us.iter().all(|&u| costs.terminal.du(u) >= 0.0);
    let running_min = us.iter().map(|&u| costs.running.duu(u)).fold(f64::INFINITY, f64::min);

    let mut samples = Vec::new();
    let mut slices = Vec::with_capacity(y.nodes());
    let mut first_order = 0.0;
    for m in 0..y.nodes() {
        let (c, viol) = slice_residual(y.row(m), p.row(m), cons, grid, band);
        first_order += time.weight(m) * viol;
        let cells: Vec<usize> = (0..grid.dofs()).filter(|&j| mask.contains(m, j)).collect();
        let abnormal_mass: f64 = cells.iter().map(|&j| grid.weights()[j]).sum();
        let max_z = cells.iter().map(|&j| z.get(m, j)).reduce(f64::max);
        if cells.len() > FRACTIONAL_CELLS {
            samples.extend(cells.iter().map(|&j| (z.get(m, j), time.weight(m) * grid.weights()[j])));
        }
        let f_min = (0..grid.dofs())
            .flat_map(|j| us.iter().map(move |&u| (j, u)))
            .map(|(j, u)| f.duu(m, j, u))
            .fold(f64::INFINITY, f64::min);
        let convex =
            f_min >= -CONVEX_TOL && running_min >= -CONVEX_TOL && (f_min > CONVEX_TOL || running_min > CONVEX_TOL);
        slices.push(SliceDiagnostics {
            time: time.time(m),
            threshold: c,
            bang_fraction: 1.0 - abnormal_mass / grid.total_weight(),
            abnormal_mass,
            abnormal_cells: cells.len(),
            max_z_abnormal: max_z,
            convex,
        });
    }

    let z_sup = z.max_abs();
    let eta = 1e-2 * z_sup.max(1.0);
    let z_max_abnormal =
        slices.iter().filter(|s| s.abnormal_cells > FRACTIONAL_CELLS).filter_map(|s| s.max_z_abnormal).reduce(f64::max);
    let z_p99_abnormal = weighted_quantile(samples, 0.99);
    let sign_condition_pass = z_p99_abnormal.is_none_or(|v| v <= eta);
    // the endpoint t = 0 carries no optimality information
    let convex_violations = slices
        .iter()
        .enumerate()
        .filter(|(m, s)| *m > 0 && s.convex && s.abnormal_cells > FRACTIONAL_CELLS)
        .map(|(m, _)| m)
        .collect();

    Ok(SecondOrderReport {
        abnormal_measure: mask.measure,
        total_measure,
        bang_bang_fraction: 1.0 - mask.measure / total_measure,
        z_sup,
        z_max_abnormal,
        z_p99_abnormal,
        eta,
        sign_condition_pass,
        terminal_increasing,
        convex_violations,
        first_order_residual: first_order,
        slices,
    })
}
