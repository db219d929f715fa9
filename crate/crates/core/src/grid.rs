//! One-dimensional spatial discretization of `(0, L)`: dof layout, midpoint
//! quadrature, the three-point Laplacian and its closed-form eigenbasis.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Boundary condition type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(Self::Dirichlet),
            "neumann" => Ok(Self::Neumann),
            other => Err(format!("unknown boundary condition '{other}'")),
        }
    }
}

/// Uniform grid on `(0, L)`.
///
/// Dirichlet grids carry the `n - 1` interior nodes `j * dx`; Neumann grids
/// carry the `n` cell centers `(j + 1/2) * dx`. Every dof has weight `dx`, so
/// integrating 1 yields `L` (Neumann) or `L - dx` (Dirichlet).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    length: f64,
    n: usize,
    bc: BoundaryCondition,
    dx: f64,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(length: f64, n: usize, bc: BoundaryCondition) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return invalid(format!("domain length must be positive, got {length}"));
        }
        if n < 4 {
            return invalid(format!("resolution n must be at least 4, got {n}"));
        }
        let dx = length / n as f64;
        let positions: Vec<f64> = match bc {
            BoundaryCondition::Dirichlet => (1..n).map(|j| j as f64 * dx).collect(),
            BoundaryCondition::Neumann => (0..n).map(|j| (j as f64 + 0.5) * dx).collect(),
        };
        let weights = vec![dx; positions.len()];
        Ok(Self { length, n, bc, dx, positions, weights })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dofs(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of the quadrature weights.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature integral `sum_j w_j f_j`.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    /// Discrete mean `integrate(f) / total_weight()`.
    pub fn mean(&self, f: &[f64]) -> Result<f64> {
        Ok(self.integrate(f)? / self.total_weight())
    }

    /// Weighted inner product `sum_j w_j f_j g_j`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), g.len());
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub(crate) fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dofs() {
            return invalid(format!("field has {} entries, grid has {} dofs", f.len(), self.dofs()));
        }
        Ok(())
    }

    /// Bands `(off, diag)` of the symmetric three-point Laplacian `Δ_h`.
    ///
    /// Neumann uses mirrored ghost cells, so the end rows have diagonal
    /// `-1/dx²` and every row sums to zero.
    pub fn laplacian_bands(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.dofs();
        let inv = 1.0 / (self.dx * self.dx);
        let off = vec![inv; m - 1];
        let mut diag = vec![-2.0 * inv; m];
        if self.bc == BoundaryCondition::Neumann {
            diag[0] = -inv;
            diag[m - 1] = -inv;
        }
        (off, diag)
    }

    /// Applies `Δ_h` to `f`.
    pub fn apply_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let (off, diag) = self.laplacian_bands();
        let m = f.len();
        (0..m)
            .map(|j| {
                let mut v = diag[j] * f[j];
                if j > 0 {
                    v += off[j - 1] * f[j - 1];
                }
                if j + 1 < m {
                    v += off[j] * f[j + 1];
                }
                v
            })
            .collect()
    }

    /// Largest eigenvalue of `-Δ_h` (upper bound `4/dx²`).
    pub fn lambda_max(&self) -> f64 {
        4.0 / (self.dx * self.dx)
    }
}

/// One eigenpair of `-Δ_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// 1-based mode index.
    pub index: usize,
    pub lambda_discrete: f64,
    pub lambda_continuum: f64,
    /// Unit vector in the weighted discrete L² inner product.
    pub vector: Vec<f64>,
}

/// Leading eigenpairs of `-Δ_h` in nondecreasing eigenvalue order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    modes: Vec<Mode>,
}

impl SpectralBasis {
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Mode with 1-based index `k`.
    pub fn mode(&self, k: usize) -> Option<&Mode> {
        k.checked_sub(1).and_then(|i| self.modes.get(i))
    }

    /// `sum_k coeffs[k] * phi_{first + k}`.
    pub fn synthesize(&self, first: usize, coeffs: &[f64]) -> Vec<f64> {
        let dofs = self.modes.first().map_or(0, |m| m.vector.len());
        let mut out = vec![0.0; dofs];
        for (offset, a) in coeffs.iter().enumerate() {
            let mode = self.mode(first + offset).expect("mode index within basis");
            for (o, v) in out.iter_mut().zip(&mode.vector) {
                *o += a * v;
            }
        }
        out
    }
}

/// Closed-form eigenbasis of the discrete Laplacian.
///
/// Dirichlet: `phi_k(x_j) ∝ sin(k π j / n)`, `λ_k = (4/dx²) sin²(k π / 2n)`.
/// Neumann: `phi_k(x_j) ∝ cos((k-1) π (j+1/2) / n)`, `λ_k = (4/dx²) sin²((k-1) π / 2n)`.
pub fn discrete_eigenbasis(grid: &Grid, count: usize) -> Result<SpectralBasis> {
    if count == 0 || count > grid.dofs() {
        return invalid(format!("requested {count} modes, grid has {} dofs", grid.dofs()));
    }
    let n = grid.resolution() as f64;
    let dx = grid.dx();
    let len = grid.length();
    let modes = (1..=count)
        .map(|k| {
            let (freq, mut vector): (usize, Vec<f64>) = match grid.bc() {
                BoundaryCondition::Dirichlet => {
                    let v = (1..=grid.dofs()).map(|j| (k as f64 * PI * j as f64 / n).sin()).collect();
                    (k, v)
                }
                BoundaryCondition::Neumann => {
                    let f = k - 1;
                    let v = (0..grid.dofs()).map(|j| (f as f64 * PI * (j as f64 + 0.5) / n).cos()).collect();
                    (f, v)
                }
            };
            let s = (freq as f64 * PI / (2.0 * n)).sin();
            let lambda_discrete = 4.0 / (dx * dx) * s * s;
            let lambda_continuum = (freq as f64 * PI / len).powi(2);
            let norm = grid.norm(&vector);
            vector.iter_mut().for_each(|v| *v /= norm);
            Mode { index: k, lambda_discrete, lambda_continuum, vector }
        })
        .collect();
    Ok(SpectralBasis { modes })
}

/// Subset of dofs standing in for a spatial region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    flags: Vec<bool>,
    measure: f64,
}

impl RegionMask {
    pub fn from_flags(grid: &Grid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.dofs() {
            return invalid(format!("mask has {} entries, grid has {} dofs", flags.len(), grid.dofs()));
        }
        let measure = flags.iter().zip(grid.weights()).filter(|(f, _)| **f).map(|(_, w)| w).sum();
        Ok(Self { flags, measure })
    }

    pub fn full(grid: &Grid) -> Self {
        Self { flags: vec![true; grid.dofs()], measure: grid.total_weight() }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn contains(&self, j: usize) -> bool {
        self.flags[j]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// Distance (in cells, times `dx`) from every dof to the nearest flagged
    /// dof. `None` when the mask is empty.
    pub fn distances(&self, grid: &Grid) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.flags.len()).filter(|&j| self.flags[j]).collect();
        if idx.is_empty() {
            return None;
        }
        Some(
            (0..self.flags.len())
                .map(|j| {
                    let cells = idx.iter().map(|&i| i.abs_diff(j)).min().unwrap_or(0);
                    cells as f64 * grid.dx()
                })
                .collect(),
        )
    }
}

/// Flags every dof lying in one of the closed intervals.
pub fn region_mask(grid: &Grid, intervals: &[(f64, f64)]) -> Result<RegionMask> {
    let len = grid.length();
    for &(a, b) in intervals {
        if !(a >= 0.0 && b <= len && a <= b) {
            return invalid(format!("interval [{a}, {b}] not within [0, {len}]"));
        }
    }
    // positions are computed as (j + 1/2) dx; absorb rounding at the endpoints
    let slack = 1e-12 * len;
    let flags =
        grid.positions().iter().map(|&x| intervals.iter().any(|&(a, b)| x >= a - slack && x <= b + slack)).collect();
    RegionMask::from_flags(grid, flags)
}
