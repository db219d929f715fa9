//! Projection onto `{-κ0 <= y <= κ1, mean y = V0}` and the linear
//! maximizer over the same set (discrete bathtub principle).

use super::problem::Constraints;
use crate::error::Result;
use crate::grid::Grid;
use crate::parabolic::{SpaceTimeField, TimeGrid};

pub const BISECTION_MAX_ITERS: usize = 200;
/// Relative width of the band treated as one level set of `p`.
pub const LEVEL_BAND: f64 = 1e-9;

fn clamped_mean(z: &[f64], c: f64, cons: &Constraints, grid: &Grid) -> f64 {
    let total: f64 = grid.weights().iter().zip(z).map(|(w, v)| w * (v - c).clamp(cons.lower(), cons.upper())).sum();
    total / grid.total_weight()
}

/// Euclidean projection of one time slice: `y = clamp(z - c, -κ0, κ1)` with
/// the shift `c` chosen so that `mean y = V0`. Returns `(y, c)`.
pub fn bathtub_project_slice(z: &[f64], cons: &Constraints, grid: &Grid) -> Result<(Vec<f64>, f64)> {
    cons.validate()?;
    grid.check_len(z)?;
    let (zmin, zmax) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // mean(lo) = κ1 >= V0 >= -κ0 = mean(hi); mean is nonincreasing in c
    let mut lo = zmin - cons.upper();
    let mut hi = zmax + cons.kappa0;
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clamped_mean(z, mid, cons, grid) >= cons.mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut c = 0.5 * (lo + hi);

    // the mean is affine in c on the current active set: solve it exactly
    let (mut w_free, mut z_free, mut w_up, mut w_low) = (0.0, 0.0, 0.0, 0.0);
    for (w, &v) in grid.weights().iter().zip(z) {
        let s = v - c;
        if s >= cons.upper() {
            w_up += w;
        } else if s <= cons.lower() {
            w_low += w;
        } else {
            w_free += w;
            z_free += w * v;
        }
    }
    if w_free > 0.0 {
        let exact = (z_free + cons.upper() * w_up + cons.lower() * w_low - cons.mean * grid.total_weight()) / w_free;
        let err = |c: f64| (clamped_mean(z, c, cons, grid) - cons.mean).abs();
        if exact.is_finite() && err(exact) <= err(c) {
            c = exact;
        }
    }
    let y = z.iter().map(|v| (v - c).clamp(cons.lower(), cons.upper())).collect();
    Ok((y, c))
}

/// Per-node thresholds and achieved means of a projected control.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub threshold: Vec<f64>,
    pub achieved_mean: Vec<f64>,
}

/// Slice-wise projection of a space-time field.
pub fn project_control(
    z: &SpaceTimeField,
    cons: &Constraints,
    grid: &Grid,
    time: &TimeGrid,
) -> Result<(SpaceTimeField, ThresholdProfile)> {
    z.check_shape(grid, time)?;
    let mut y = z.clone();
    let mut profile = ThresholdProfile { threshold: Vec::new(), achieved_mean: Vec::new() };
    for m in 0..z.nodes() {
        let (slice, c) = bathtub_project_slice(z.row(m), cons, grid)?;
        profile.achieved_mean.push(grid.mean(&slice)?);
        profile.threshold.push(c);
        y.row_mut(m).copy_from_slice(&slice);
    }
    Ok((y, profile))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Maximizer of `⟨p, y⟩` on one slice, with an explicit level-set band.
/// Returns `(y, c)`; `c` is the `p` value of the dof where the budget runs out.
pub(crate) fn threshold_with_band(p: &[f64], cons: &Constraints, grid: &Grid, band: f64) -> (Vec<f64>, f64) {
    let (pmin, pmax) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if pmax - pmin <= band {
        // the whole slice is one level set: every feasible slice is optimal
        return (vec![cons.mean; p.len()], pmax);
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let weights = grid.weights();
    let mut budget = (cons.mean + cons.kappa0) * grid.total_weight();
    let mut y = vec![cons.lower(); p.len()];
    let mut c = pmin;
    for (rank, &j) in order.iter().enumerate() {
        let full = weights[j] * cons.width();
        if budget >= full && rank + 1 < order.len() {
            y[j] = cons.upper();
            budget -= full;
        } else {
            y[j] = (cons.lower() + budget.max(0.0) / weights[j]).min(cons.upper());
            c = p[j];
            break;
        }
    }
    (y, c)
}

/// Feasible slice maximizing `⟨p, y⟩`: `κ1` above a threshold, `-κ0` below,
/// one fractional dof on the level, ties broken by dof index.
pub fn threshold_step(p: &[f64], cons: &Constraints, grid: &Grid) -> Result<Vec<f64>> {
    cons.validate()?;
    grid.check_len(p)?;
    Ok(threshold_with_band(p, cons, grid, LEVEL_BAND * sup(p)).0)
}

/// Distance of `y` from the threshold structure dictated by `p`: per node,
/// the quadrature mass of `dist(y_j, κ1)` where `p_j > c(t)` and of
/// `dist(y_j, -κ0)` where `p_j < c(t)`, skipping `|p_j - c(t)| <= 1e-9 |p|_∞`,
/// integrated with the trapezoid rule in time.
pub fn first_order_residual(
    y: &SpaceTimeField,
    p: &SpaceTimeField,
    cons: &Constraints,
    grid: &Grid,
    time: &TimeGrid,
) -> f64 {
    let band = LEVEL_BAND * p.max_abs();
    (0..y.nodes()).map(|m| time.weight(m) * slice_residual(y.row(m), p.row(m), cons, grid, band).1).sum()
}

/// `(c, violation mass)` for one slice.
pub(crate) fn slice_residual(y: &[f64], p: &[f64], cons: &Constraints, grid: &Grid, band: f64) -> (f64, f64) {
    let (_, c) = threshold_with_band(p, cons, grid, band);
    let (pmin, pmax) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if pmax - pmin <= band {
        return (c, 0.0);
    }
    let mass = grid
        .weights()
        .iter()
        .zip(y.iter().zip(p))
        .map(|(w, (&yj, &pj))| {
            if pj > c + band {
                w * (cons.upper() - yj).max(0.0)
            } else if pj < c - band {
                w * (yj - cons.lower()).max(0.0)
            } else {
                0.0
            }
        })
        .sum();
    (c, mass)
}
