//! Crank–Nicolson steppers for the semilinear state, its linearization, the
//! discrete adjoint and linear heat equations with a potential.

mod field;
mod linear;
mod nonlinearity;
mod state;

pub use field::{st_inner, st_norm, SpaceTimeField, TimeGrid};
pub use linear::{solve_linear, Direction, LinearParabolicInstance};
pub use nonlinearity::{Coefficient, Nonlinearity};
pub use state::{
    adjoint_propagate, duality_defect, duality_defect_with_terminal, linearized_potential, solve_adjoint,
    solve_cauchy_linearized, solve_linearized, solve_state, BLOW_UP, NEWTON_MAX_ITERS, NEWTON_TOL,
};
