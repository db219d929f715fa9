use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::parabolic::{Nonlinearity, TimeGrid};

/// Box and slice-mean constraints `-κ0 <= y <= κ1`, `mean y(t, ·) = V0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraints {
    pub kappa0: f64,
    pub kappa1: f64,
    pub mean: f64,
}

impl Constraints {
    pub fn new(kappa0: f64, kappa1: f64, mean: f64) -> Result<Self> {
        let c = Self { kappa0, kappa1, mean };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { kappa0, kappa1, mean } = *self;
        if !(kappa0 >= 0.0 && kappa1 >= 0.0) || !kappa0.is_finite() || !kappa1.is_finite() {
            return invalid(format!("kappa0 and kappa1 must be nonnegative, got {kappa0}, {kappa1}"));
        }
        if kappa0 + kappa1 <= 0.0 {
            return invalid("kappa0 + kappa1 must be positive");
        }
        if !(mean >= -kappa0 && mean <= kappa1) {
            return invalid(format!("infeasible (Adm) constraints: need -kappa0 <= V0 <= kappa1, got V0 = {mean}"));
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        -self.kappa0
    }

    pub fn upper(&self) -> f64 {
        self.kappa1
    }

    pub fn width(&self) -> f64 {
        self.kappa0 + self.kappa1
    }
}

/// Built-in cost integrands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostFamily {
    Zero,
    /// `j = u`
    Linear,
    /// `j = u²`
    Quadratic,
    /// `j = -(1 - u)²`
    NegSquare,
}

impl CostFamily {
    pub const ALL: [CostFamily; 4] =
        [CostFamily::Zero, CostFamily::Linear, CostFamily::Quadratic, CostFamily::NegSquare];

    pub fn value(self, u: f64) -> f64 {
        match self {
            CostFamily::Zero => 0.0,
            CostFamily::Linear => u,
            CostFamily::Quadratic => u * u,
            CostFamily::NegSquare => -(1.0 - u) * (1.0 - u),
        }
    }

    pub fn du(self, u: f64) -> f64 {
        match self {
            CostFamily::Zero => 0.0,
            CostFamily::Linear => 1.0,
            CostFamily::Quadratic => 2.0 * u,
            CostFamily::NegSquare => 2.0 * (1.0 - u),
        }
    }

    pub fn duu(self, _u: f64) -> f64 {
        match self {
            CostFamily::Zero | CostFamily::Linear => 0.0,
            CostFamily::Quadratic => 2.0,
            CostFamily::NegSquare => -2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CostFamily::Zero => "zero",
            CostFamily::Linear => "linear",
            CostFamily::Quadratic => "quadratic",
            CostFamily::NegSquare => "negsquare",
        }
    }
}

impl std::str::FromStr for CostFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CostFamily::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown cost family '{s}'"))
    }
}

/// Running cost `j1(t, x, u)` and terminal cost `j2(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostSpec {
    pub running: CostFamily,
    pub terminal: CostFamily,
}

/// A full control problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub time: TimeGrid,
    pub nonlinearity: Nonlinearity,
    pub costs: CostSpec,
    pub initial: Vec<f64>,
    pub constraints: Constraints,
}

impl ProblemSpec {
    pub fn new(
        grid: Grid,
        time: TimeGrid,
        nonlinearity: Nonlinearity,
        costs: CostSpec,
        initial: Vec<f64>,
        constraints: Constraints,
    ) -> Result<Self> {
        grid.check_len(&initial)?;
        if initial.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite initial state");
        }
        constraints.validate()?;
        if let Some(f) = nonlinearity.sampled_field() {
            f.check_shape(&grid, &time)?;
        }
        Ok(Self { grid, time, nonlinearity, costs, initial, constraints })
    }
}
