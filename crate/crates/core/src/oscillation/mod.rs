//! Oscillating initial data, energy concentration of the resulting
//! solutions, and time-localized perturbations of the linearized state.

mod concentration;
mod datum;
mod laplace;
mod perturbation;

pub use concentration::{
    benchmark_potential, concentration_sweep, run_concentration, ConcentrationMeasure, ConcentrationReport,
    ConcentrationRow, TailThresholds, MONOTONE_SLACK,
};
pub use datum::{build_oscillating_datum, free_expansion, OscillatingDatum};
pub use laplace::laplace_moment;
pub use perturbation::{
    dirac_perturbation, perturbation_convergence, slice_centered, PerturbationReport, PerturbationRow, SpaceTimeMask,
};
