//! Cost, adjoint gradient, second variation, admissible-set projections,
//! ascent and optimality diagnostics.

mod ascent;
mod cost;
mod diagnostics;
mod problem;
mod projection;

pub use ascent::{ascend, AscentMode, AscentOptions, OptimizationTrace, ARMIJO, COST_NOISE, MAX_BACKTRACKS};
pub use cost::{compute_z, cost_of_state, eval_cost, eval_gradient, second_variation};
pub use diagnostics::{
    abnormal_mask, default_abnormal_tol, second_order_report, AbnormalMask, SecondOrderReport, SliceDiagnostics,
    FRACTIONAL_CELLS,
};
pub use problem::{Constraints, CostFamily, CostSpec, ProblemSpec};
pub use projection::{
    bathtub_project_slice, first_order_residual, project_control, threshold_step, ThresholdProfile,
    BISECTION_MAX_ITERS, LEVEL_BAND,
};
