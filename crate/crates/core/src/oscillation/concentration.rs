use std::f64::consts::PI;
use std::io::Write;

use super::datum::{build_oscillating_datum, free_expansion, OscillatingDatum};
use crate::error::{invalid, Result};
use crate::grid::{discrete_eigenbasis, Grid, RegionMask, SpectralBasis};
use crate::parabolic::{solve_linear, st_norm, LinearParabolicInstance, SpaceTimeField, TimeGrid};

/// Normalized energy density `ν = v² / ∫∫ v²`.
///
/// Besides the nodal density, the measure keeps what is needed to integrate
/// it: a spectral part (`v` contains `sum a_k φ_k e^{-λ_k t}`, integrated
/// exactly in time) and a nodal remainder integrated by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMeasure {
    pub density: SpaceTimeField,
    /// `∫∫ v²` before normalization.
    pub normalization: f64,
    /// `(a_k², λ_k)` of the exactly integrated part, divided by the
    /// normalization.
    spectrum: Vec<(f64, f64)>,
    horizon: f64,
    /// Per node, `∫ ν dx` minus the spectral part.
    remainder_rows: Vec<f64>,
    /// Per dof, `∫_0^T ν dt`.
    space_profile: Vec<f64>,
}

impl ConcentrationMeasure {
    /// Measure of a nodal field, integrated by the trapezoid rule.
    pub fn from_solution(v: &SpaceTimeField, grid: &Grid, time: &TimeGrid) -> Result<Self> {
        v.check_shape(grid, time)?;
        let rows: Vec<f64> = (0..v.nodes()).map(|m| grid.inner(v.row(m), v.row(m))).collect();
        let mut profile = vec![0.0; grid.dofs()];
        for m in 0..v.nodes() {
            profile.iter_mut().zip(v.row(m)).for_each(|(p, x)| *p += time.weight(m) * x * x);
        }
        Self::assemble(v, 0.0, Vec::new(), rows, profile, time)
    }

    /// Measure of `v = w + r`, `w = sum a_k φ_k e^{-λ_k t}` given by its
    /// modes, `r` on the nodes.
    fn from_split(
        basis: &SpectralBasis,
        datum: &OscillatingDatum,
        w: &SpaceTimeField,
        r: &SpaceTimeField,
        closed_norm: f64,
        grid: &Grid,
        time: &TimeGrid,
    ) -> Result<Self> {
        let horizon = time.horizon();
        let modes: Vec<(f64, f64, &[f64])> = datum
            .modes()
            .map(|(k, a)| {
                let mode = basis.mode(k).expect("datum built on this basis");
                (a, mode.lambda_discrete, mode.vector.as_slice())
            })
            .collect();
        let count = modes.len();
        // exact time integrals of products of two decaying modes
        let mut gram = vec![0.0; count * count];
        for (i, (ai, li, _)) in modes.iter().enumerate() {
            for (l, (al, ll, _)) in modes.iter().enumerate() {
                let s = li + ll;
                gram[i * count + l] = ai * al * -(-s * horizon).exp_m1() / s;
            }
        }
        let mut profile = vec![0.0; grid.dofs()];
        let mut b = vec![0.0; count];
        for (j, p) in profile.iter_mut().enumerate() {
            b.iter_mut().zip(&modes).for_each(|(b, m)| *b = m.2[j]);
            let mut e = 0.0;
            for (i, bi) in b.iter().enumerate() {
                let row = &gram[i * count..(i + 1) * count];
                e += bi * row.iter().zip(&b).map(|(g, bl)| g * bl).sum::<f64>();
            }
            *p = e;
        }
        let mut rows = Vec::with_capacity(time.nodes());
        for m in 0..time.nodes() {
            let (wr, rr) = (w.row(m), r.row(m));
            let extra: Vec<f64> = wr.iter().zip(rr).map(|(a, b)| 2.0 * a * b + b * b).collect();
            rows.push(extra.iter().zip(grid.weights()).map(|(e, w)| e * w).sum());
            profile.iter_mut().zip(&extra).for_each(|(p, e)| *p += time.weight(m) * e);
        }
        let spectrum = modes.iter().map(|(a, l, _)| (a * a, *l)).collect();
        let v = w.add_scaled(1.0, r);
        Self::assemble(&v, closed_norm, spectrum, rows, profile, time)
    }

    fn assemble(
        v: &SpaceTimeField,
        closed_norm: f64,
        mut spectrum: Vec<(f64, f64)>,
        mut remainder_rows: Vec<f64>,
        mut space_profile: Vec<f64>,
        time: &TimeGrid,
    ) -> Result<Self> {
        let normalization = closed_norm + (0..time.nodes()).map(|m| time.weight(m) * remainder_rows[m]).sum::<f64>();
        if !(normalization > 0.0) || !normalization.is_finite() {
            return invalid(format!("solution has degenerate energy {normalization}"));
        }
        spectrum.iter_mut().for_each(|s| s.0 /= normalization);
        remainder_rows.iter_mut().for_each(|r| *r /= normalization);
        space_profile.iter_mut().for_each(|p| *p /= normalization);
        Ok(Self {
            density: v.map(|x| x * x / normalization),
            normalization,
            spectrum,
            horizon: time.horizon(),
            remainder_rows,
            space_profile,
        })
    }

    /// `∫_0^T ν(t, x_j) dt` per dof.
    pub fn space_profile(&self) -> &[f64] {
        &self.space_profile
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        self.space_profile.iter().zip(grid.weights()).map(|(p, w)| p * w).sum()
    }

    /// Mass on `t > eps`; the nodal part uses the trapezoid rule on
    /// `[eps, T]` when `eps` is a node.
    pub fn time_tail(&self, eps: f64, time: &TimeGrid) -> f64 {
        let eps = eps.max(0.0);
        let spectral: f64 = self
            .spectrum
            .iter()
            .map(|(a2, l)| a2 * ((-2.0 * l * eps).exp() - (-2.0 * l * self.horizon).exp()) / (2.0 * l))
            .sum();
        let tol = 1e-9 * time.dt();
        let mut nodal = 0.0;
        for (m, row) in self.remainder_rows.iter().enumerate() {
            let t = time.time(m);
            let weight = if t > eps + tol {
                time.weight(m)
            } else if t >= eps - tol && m + 1 < self.remainder_rows.len() {
                0.5 * time.dt()
            } else {
                continue;
            };
            nodal += weight * row;
        }
        spectral + nodal
    }

    /// Mass on dofs farther than `delta` from `omega`.
    pub fn space_tail(&self, omega: &RegionMask, delta: f64, grid: &Grid) -> f64 {
        let Some(dist) = omega.distances(grid) else {
            return 1.0;
        };
        let cut = delta + 1e-9 * grid.dx();
        self.space_profile
            .iter()
            .zip(grid.weights())
            .zip(&dist)
            .filter(|(_, d)| **d > cut)
            .map(|((p, w), _)| p * w)
            .sum()
    }
}

/// One `K` of a concentration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub k: usize,
    /// `sum a_k² / λ_k`.
    pub d_k: f64,
    /// `∫∫ v_K²`.
    pub n_k: f64,
    pub energy_ratio: f64,
    pub time_tail_t8: f64,
    pub time_tail_t4: f64,
    pub space_tail_2dx: f64,
    pub space_tail_4dx: f64,
    /// `|v_K - w_{0,K}| / |w_{0,K}|`.
    pub rel_dev: f64,
    /// Exact `∫∫ w_{0,K}²`.
    pub closed_norm: f64,
}

/// Thresholds on the tails at the last `K` of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailThresholds {
    pub time_tail: f64,
    pub space_tail: f64,
}

impl Default for TailThresholds {
    fn default() -> Self {
        Self { time_tail: 0.1, space_tail: 0.1 }
    }
}

/// Relative growth tolerated between consecutive tails.
pub const MONOTONE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
    pub time_tail_monotone: bool,
    pub space_tail_monotone: bool,
    pub final_time_tail_below: bool,
    pub final_space_tail_below: bool,
}

impl ConcentrationReport {
    pub fn min_energy_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.energy_ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn max_energy_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.energy_ratio).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `K,D_K,N_K,lemma7_ratio,time_tail_T8,time_tail_T4,space_tail_2dx,space_tail_4dx,rel_dev`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "K,D_K,N_K,lemma7_ratio,time_tail_T8,time_tail_T4,space_tail_2dx,space_tail_4dx,rel_dev")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                r.d_k,
                r.n_k,
                r.energy_ratio,
                r.time_tail_t8,
                r.time_tail_t4,
                r.space_tail_2dx,
                r.space_tail_4dx,
                r.rel_dev
            )?;
        }
        Ok(())
    }
}

/// `q(t, x) = 2 + cos(πx/L) cos(2πt/T)`.
pub fn benchmark_potential(grid: &Grid, time: &TimeGrid) -> SpaceTimeField {
    let (l, t_end) = (grid.length(), time.horizon());
    SpaceTimeField::from_fn(grid, time, |t, x| 2.0 + (PI * x / l).cos() * (2.0 * PI * t / t_end).cos())
}

/// Solves `∂_t v - Δv = q v`, `v(0) = h_K`, and measures where its energy sits.
///
/// `v` is split as `w + r` with `w` the potential-free expansion, exact in
/// time, and `r` solving `∂_t r - Δr = q r + q w`, `r(0) = 0`, by
/// Crank–Nicolson. The stiff modes of `h_K` thus never pass through the time
/// stepper.
pub fn run_concentration(
    q: Option<&SpaceTimeField>,
    datum: &OscillatingDatum,
    basis: &SpectralBasis,
    omega: &RegionMask,
    grid: &Grid,
    time: &TimeGrid,
) -> Result<(ConcentrationMeasure, ConcentrationRow)> {
    grid.check_len(&datum.field)?;
    let mut d_k = 0.0;
    for (k, a) in datum.modes() {
        let lambda = basis.mode(k).map_or(0.0, |m| m.lambda_discrete);
        if !(lambda > 0.0) {
            return invalid(format!("mode {k} has zero eigenvalue"));
        }
        d_k += a * a / lambda;
    }
    let (w, closed_norm) = free_expansion(basis, datum, time)?;
    let r = match q {
        Some(q) => {
            q.check_shape(grid, time)?;
            let mut source = q.clone();
            source.values_mut().iter_mut().zip(w.values()).for_each(|(s, x)| *s *= x);
            let zero = vec![0.0; grid.dofs()];
            solve_linear(&LinearParabolicInstance::forward(&zero).with_potential(q).with_source(&source), grid, time)?
        }
        None => SpaceTimeField::zeros(grid, time),
    };
    let measure = ConcentrationMeasure::from_split(basis, datum, &w, &r, closed_norm, grid, time)?;
    let rel_dev = st_norm(grid, time, &r) / closed_norm.sqrt();
    let horizon = time.horizon();
    let dx = grid.dx();
    let row = ConcentrationRow {
        k: datum.lowest_mode,
        d_k,
        n_k: measure.normalization,
        energy_ratio: measure.normalization / d_k,
        time_tail_t8: measure.time_tail(horizon / 8.0, time),
        time_tail_t4: measure.time_tail(horizon / 4.0, time),
        space_tail_2dx: measure.space_tail(omega, 2.0 * dx, grid),
        space_tail_4dx: measure.space_tail(omega, 4.0 * dx, grid),
        rel_dev,
        closed_norm,
    };
    Ok((measure, row))
}

fn weakly_decreasing(values: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + MONOTONE_SLACK) + 1e-15)
}

/// Runs [`run_concentration`] for each `K` in a strictly increasing list.
pub fn concentration_sweep(
    q: Option<&SpaceTimeField>,
    omega: &RegionMask,
    k_list: &[usize],
    grid: &Grid,
    time: &TimeGrid,
    thresholds: TailThresholds,
) -> Result<ConcentrationReport> {
    if k_list.is_empty() {
        return invalid("K list is empty");
    }
    if k_list.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("K list must be strictly increasing");
    }
    let basis = discrete_eigenbasis(grid, grid.dofs())?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let datum = build_oscillating_datum(&basis, omega, grid, k, false)?;
        rows.push(run_concentration(q, &datum, &basis, omega, grid, time)?.1);
    }
    let last = rows.last().expect("nonempty sweep");
    Ok(ConcentrationReport {
        time_tail_monotone: weakly_decreasing(rows.iter().map(|r| r.time_tail_t8)),
        space_tail_monotone: weakly_decreasing(rows.iter().map(|r| r.space_tail_4dx)),
        final_time_tail_below: last.time_tail_t8 < thresholds.time_tail,
        final_space_tail_below: last.space_tail_4dx < thresholds.space_tail,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;

    #[test]
    fn single_mode_time_tail_matches_formula() {
        let g = Grid::new(1.0, 32, BoundaryCondition::Dirichlet).unwrap();
        let t = TimeGrid::new(0.1, 800).unwrap();
        let basis = discrete_eigenbasis(&g, g.dofs()).unwrap();
        let omega = RegionMask::full(&g);
        let datum = build_oscillating_datum(&basis, &omega, &g, 3, false).unwrap();
        let (nu, row) = run_concentration(None, &datum, &basis, &omega, &g, &t).unwrap();
        assert!((nu.total_mass(&g) - 1.0).abs() < 1e-12);
        assert!((nu.time_tail(0.0, &t) - 1.0).abs() < 1e-12);
        assert!(nu.density.values().iter().all(|v| *v >= 0.0));
        let lam = basis.mode(3).unwrap().lambda_discrete;
        let eps = 0.1 / 8.0;
        let exact = ((-2.0 * lam * eps).exp() - (-2.0 * lam * 0.1).exp()) / (1.0 - (-2.0 * lam * 0.1).exp());
        assert!((row.time_tail_t8 - exact).abs() < 1e-3);
        assert_eq!(row.space_tail_2dx, 0.0);
        assert!((row.n_k / row.closed_norm - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_unsorted_k_list() {
        let g = Grid::new(1.0, 16, BoundaryCondition::Dirichlet).unwrap();
        let t = TimeGrid::new(0.1, 10).unwrap();
        let omega = RegionMask::full(&g);
        assert!(concentration_sweep(None, &omega, &[4, 4], &g, &t, TailThresholds::default()).is_err());
    }

    #[test]
    fn slack_rule() {
        assert!(weakly_decreasing([1.0, 1.05, 0.5].into_iter()));
        assert!(!weakly_decreasing([1.0, 1.2].into_iter()));
    }
}
