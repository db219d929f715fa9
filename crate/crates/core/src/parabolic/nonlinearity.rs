use std::sync::Arc;

use super::field::SpaceTimeField;

/// Reaction coefficient: a constant or a sampled space-time field.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    Sampled(Arc<SpaceTimeField>),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, m: usize, j: usize) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Sampled(f) => f.get(m, j),
        }
    }
}

/// Reaction term `f(t, x, u)` of the state equation, evaluated at the
/// space-time node `(m, j)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `f = a u`
    Linear(f64),
    /// `f = u (m - u)`
    Monostable(Coefficient),
    /// `f = u (u - θ)(1 - u)`
    Bistable(Coefficient),
}

impl Nonlinearity {
    pub fn value(&self, m: usize, j: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(a) => a * u,
            Nonlinearity::Monostable(c) => u * (c.at(m, j) - u),
            Nonlinearity::Bistable(c) => u * (u - c.at(m, j)) * (1.0 - u),
        }
    }

    /// `∂_u f`
    pub fn du(&self, m: usize, j: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(a) => *a,
            Nonlinearity::Monostable(c) => c.at(m, j) - 2.0 * u,
            Nonlinearity::Bistable(c) => {
                let th = c.at(m, j);
                -3.0 * u * u + 2.0 * (1.0 + th) * u - th
            }
        }
    }

    /// `∂²_uu f`
    pub fn duu(&self, m: usize, j: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero | Nonlinearity::Linear(_) => 0.0,
            Nonlinearity::Monostable(_) => -2.0,
            Nonlinearity::Bistable(c) => -6.0 * u + 2.0 * (1.0 + c.at(m, j)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Zero => "zero",
            Nonlinearity::Linear(_) => "linear",
            Nonlinearity::Monostable(_) => "monostable",
            Nonlinearity::Bistable(_) => "bistable",
        }
    }

    pub(crate) fn sampled_field(&self) -> Option<&SpaceTimeField> {
        match self {
            Nonlinearity::Monostable(Coefficient::Sampled(f)) | Nonlinearity::Bistable(Coefficient::Sampled(f)) => {
                Some(f)
            }
            _ => None,
        }
    }
}
