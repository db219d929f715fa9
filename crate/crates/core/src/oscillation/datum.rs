use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, RegionMask, SpectralBasis};
use crate::linalg::null_space;
use crate::parabolic::{SpaceTimeField, TimeGrid};

/// `h_K = sum_{k >= K} a_k φ_k` with unit coefficient norm, vanishing off ω.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatingDatum {
    /// Requested lowest mode `K`.
    pub lowest_mode: usize,
    /// Index of the first admitted mode (`K`, skipping a zero eigenvalue).
    pub first_mode: usize,
    /// Coefficients of modes `first_mode, first_mode + 1, ...`.
    pub coefficients: Vec<f64>,
    pub field: Vec<f64>,
    /// `max |h_K|` over dofs outside ω.
    pub off_support_residual: f64,
}

impl OscillatingDatum {
    pub fn modes(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coefficients.iter().enumerate().map(move |(i, a)| (self.first_mode + i, *a))
    }
}

/// Builds `h_K` supported in `omega` from the null space of the off-ω
/// evaluation matrix of the admitted modes.
///
/// Admitted modes are all basis modes from `K` on with a positive eigenvalue.
/// The selected null vector is the normalized projection of `e_K` onto the
/// null space (maximal weight on the lowest admitted mode), with the first
/// nonzero coefficient made positive. With `zero_mean`, `∫ h_K = 0` is added
/// as a constraint.
pub fn build_oscillating_datum(
    basis: &SpectralBasis,
    omega: &RegionMask,
    grid: &Grid,
    lowest_mode: usize,
    zero_mean: bool,
) -> Result<OscillatingDatum> {
    if lowest_mode == 0 {
        return invalid("lowest mode K must be at least 1");
    }
    if !(omega.measure() > 0.0) {
        return invalid("support region has zero measure");
    }
    if omega.flags().len() != grid.dofs() {
        return invalid("support mask does not match grid");
    }
    let admitted: Vec<usize> =
        basis.modes().iter().filter(|m| m.index >= lowest_mode && m.lambda_discrete > 0.0).map(|m| m.index).collect();
    let first_mode = match admitted.first() {
        Some(&k) => k,
        None => return Err(Error::InfeasibleConstruction { deficit: 1 }),
    };
    let cols = admitted.len();
    let off: Vec<usize> = (0..grid.dofs()).filter(|&j| !omega.contains(j)).collect();
    let mut entries = Vec::with_capacity((off.len() + 1) * cols);
    for &j in &off {
        entries.extend(admitted.iter().map(|&k| basis.mode(k).expect("admitted mode").vector[j]));
    }
    if zero_mean {
        entries.extend(
            admitted
                .iter()
                .map(|&k| grid.inner(&basis.mode(k).expect("admitted mode").vector, &vec![1.0; grid.dofs()])),
        );
    }
    let rows = off.len() + usize::from(zero_mean);
    if cols <= rows {
        return Err(Error::InfeasibleConstruction { deficit: rows + 1 - cols });
    }
    let null = null_space(rows, cols, &entries);
    if null.is_empty() {
        return Err(Error::InfeasibleConstruction { deficit: 1 });
    }

    let mut coefficients = None;
    for target in 0..cols {
        let mut v = vec![0.0; cols];
        for n in &null {
            let s = n[target];
            v.iter_mut().zip(n).for_each(|(a, b)| *a += s * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            coefficients = Some(v);
            break;
        }
    }
    let mut coefficients = coefficients.expect("nonempty null space has a nonzero projection");
    let big = coefficients.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = coefficients.iter().find(|a| a.abs() > 1e-12 * big) {
        if *first < 0.0 {
            coefficients.iter_mut().for_each(|a| *a = -*a);
        }
    }
    let field = basis.synthesize(first_mode, &coefficients);
    let off_support_residual = off.iter().fold(0.0f64, |a, &j| a.max(field[j].abs()));
    Ok(OscillatingDatum { lowest_mode, first_mode, coefficients, field, off_support_residual })
}

/// Potential-free spectral solution `w = sum a_k φ_k e^{-λ_k t}` on the time
/// nodes, and its exact space-time squared norm
/// `sum a_k² (1 - e^{-2Tλ_k}) / (2λ_k)`.
pub fn free_expansion(
    basis: &SpectralBasis,
    datum: &OscillatingDatum,
    time: &TimeGrid,
) -> Result<(SpaceTimeField, f64)> {
    let mut closed = 0.0;
    let mut modes = Vec::with_capacity(datum.coefficients.len());
    for (k, a) in datum.modes() {
        let mode = basis.mode(k).ok_or_else(|| Error::InvalidArgument(format!("mode {k} missing from basis")))?;
        let lambda = mode.lambda_discrete;
        if !(lambda > 0.0) {
            return invalid(format!("mode {k} has zero eigenvalue"));
        }
        closed += a * a * -(-2.0 * time.horizon() * lambda).exp_m1() / (2.0 * lambda);
        modes.push((a, lambda, &mode.vector));
    }
    let dofs = modes.first().map_or(0, |m| m.2.len());
    let mut rows = Vec::with_capacity(time.nodes());
    for m in 0..time.nodes() {
        let t = time.time(m);
        let mut row = vec![0.0; dofs];
        for (a, lambda, phi) in &modes {
            let c = a * (-lambda * t).exp();
            row.iter_mut().zip(phi.iter()).for_each(|(r, p)| *r += c * p);
        }
        rows.push(row);
    }
    Ok((SpaceTimeField::from_rows(rows)?, closed))
}
