//! The five computational subcommands.

use std::path::Path;

use super::config::{PotentialSpec, RunConfig};
use super::report::RunReport;
use super::CliError;
use crate::control::{
    ascend, default_abnormal_tol, eval_gradient, first_order_residual, project_control, second_order_report,
    OptimizationTrace, ProblemSpec, COST_NOISE,
};
use crate::grid::{region_mask, Grid, RegionMask};
use crate::oscillation::{
    benchmark_potential, concentration_sweep, perturbation_convergence, SpaceTimeMask, TailThresholds,
};
use crate::parabolic::{solve_state, SpaceTimeField, TimeGrid};

/// Box and mean constraints are met to this tolerance.
const FEASIBILITY_TOL: f64 = 1e-9;

fn csv(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut out = Vec::new();
    write(&mut out).expect("writing to memory cannot fail");
    out
}

fn field_csv(field: &SpaceTimeField, grid: &Grid, time: &TimeGrid) -> Vec<u8> {
    csv(|out| field.write_csv(grid, time, out))
}

fn omega(cfg: &RunConfig, grid: &Grid) -> Result<Option<RegionMask>, CliError> {
    cfg.experiment
        .omega
        .as_ref()
        .map(|iv| {
            region_mask(grid, iv).map_err(|e| CliError::Key { key: "experiment.omega".into(), message: e.to_string() })
        })
        .transpose()
}

/// Projected starting control of the config.
fn start_control(cfg: &RunConfig, problem: &ProblemSpec) -> Result<SpaceTimeField, CliError> {
    let ProblemSpec { grid, time, constraints, .. } = problem;
    let raw = cfg.experiment.y0.build(grid, time, constraints);
    Ok(project_control(&raw, constraints, grid, time)?.0)
}

/// Reads a `t,x,value` control table written by `--dump`.
fn read_control(path: &Path, grid: &Grid, time: &TimeGrid) -> Result<SpaceTimeField, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, msg: String| CliError::Invalid(format!("{}: line {line}: {msg}", path.display()));
    let mut values = Vec::with_capacity(grid.dofs() * time.nodes());
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "t,x,value" => {}
        _ => return Err(bad(1, "expected header 't,x,value'".into())),
    }
    let tol = 1e-9 * grid.length().max(time.horizon());
    for (idx, line) in lines {
        let k = values.len();
        if k >= grid.dofs() * time.nodes() {
            return Err(bad(idx + 1, "more rows than grid nodes".into()));
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(idx + 1, e.to_string()))?;
        if cols.len() != 3 {
            return Err(bad(idx + 1, format!("expected 3 columns, got {}", cols.len())));
        }
        let (m, j) = (k / grid.dofs(), k % grid.dofs());
        if (cols[0] - time.time(m)).abs() > tol || (cols[1] - grid.positions()[j]).abs() > tol {
            return Err(bad(idx + 1, format!("node ({}, {}) does not match the grid", cols[0], cols[1])));
        }
        values.push(cols[2]);
    }
    if values.len() != grid.dofs() * time.nodes() {
        return Err(CliError::Invalid(format!(
            "{}: {} rows, grid has {} nodes",
            path.display(),
            values.len(),
            grid.dofs() * time.nodes()
        )));
    }
    let rows = values.chunks(grid.dofs()).map(<[f64]>::to_vec).collect();
    Ok(SpaceTimeField::from_rows(rows)?)
}

/// The configured control table, or the result of a fresh ascent.
fn target_control(
    cfg: &RunConfig,
    problem: &ProblemSpec,
) -> Result<(SpaceTimeField, Option<OptimizationTrace>), CliError> {
    match &cfg.experiment.control {
        Some(path) => Ok((read_control(path, &problem.grid, &problem.time)?, None)),
        None => {
            let trace = ascend(problem, &start_control(cfg, problem)?, &cfg.experiment.ascent)?;
            Ok((trace.control.clone(), Some(trace)))
        }
    }
}

fn trace_results(report: &mut RunReport, trace: &OptimizationTrace) {
    report.result("iterations", trace.iterations());
    report.result("converged", trace.converged);
    report.result("final_J", trace.final_cost());
    report.result("final_residual", trace.final_residual());
    for w in &trace.warnings {
        report.result("warning", w);
    }
}

/// Largest violation of the box and slice-mean constraints.
fn feasibility_gap(y: &SpaceTimeField, problem: &ProblemSpec) -> Result<f64, CliError> {
    let cons = &problem.constraints;
    let mut gap: f64 = 0.0;
    for m in 0..y.nodes() {
        let row = y.row(m);
        for &v in row {
            gap = gap.max(cons.lower() - v).max(v - cons.upper());
        }
        gap = gap.max((problem.grid.mean(row)? - cons.mean).abs());
    }
    Ok(gap)
}

/// `state`: solve the state equation for the projected starting control.
pub fn run_state(cfg: &RunConfig, dump: bool) -> Result<RunReport, CliError> {
    let problem = cfg.problem()?;
    let ProblemSpec { grid, time, .. } = &problem;
    let y = start_control(cfg, &problem)?;
    let u = solve_state(&problem, &y)?;
    let mut report = RunReport::new("state", &cfg.entries);
    let last = u.row(time.steps());
    report.result("u_T_min", last.iter().copied().fold(f64::INFINITY, f64::min));
    report.result("u_T_max", last.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    report.result("u_T_mean", grid.mean(last)?);
    report.result("u_sup", u.max_abs());
    report.verdict("state_finite", u.is_finite(), format!("sup |u| = {:e}", u.max_abs()));
    report.artifact("field_state.csv", field_csv(&u, grid, time));
    if dump {
        report.artifact("field_control.csv", field_csv(&y, grid, time));
    }
    Ok(report)
}

/// `optimize`: ascent from the starting control.
pub fn run_optimize(cfg: &RunConfig, dump: bool) -> Result<RunReport, CliError> {
    let problem = cfg.problem()?;
    let ProblemSpec { grid, time, .. } = &problem;
    let options = &cfg.experiment.ascent;
    let trace = ascend(&problem, &start_control(cfg, &problem)?, options)?;
    let mut report = RunReport::new("optimize", &cfg.entries);
    trace_results(&mut report, &trace);
    report.verdict(
        "converged",
        trace.converged,
        format!(
            "residual {:e} after {} iterations (tol {:e})",
            trace.final_residual(),
            trace.iterations(),
            options.tol
        ),
    );
    let gap = feasibility_gap(&trace.control, &problem)?;
    report.verdict("feasible", gap <= FEASIBILITY_TOL, format!("max constraint violation {gap:e}"));
    let drops = trace.costs.windows(2).filter(|w| w[1] < w[0] - COST_NOISE * w[0].abs().max(1.0)).count();
    report.verdict("monotone_cost", drops == 0, format!("{drops} decreases beyond rounding"));
    report.artifact("trace.csv", csv(|out| trace.write_csv(out)));
    if dump {
        report.artifact("field_control.csv", field_csv(&trace.control, grid, time));
        report.artifact("field_state.csv", field_csv(&trace.state, grid, time));
        report.artifact("field_adjoint.csv", field_csv(&trace.gradient, grid, time));
    }
    Ok(report)
}

/// `diagnose`: first- and second-order checks on a given or fresh control.
pub fn run_diagnose(cfg: &RunConfig, dump: bool) -> Result<RunReport, CliError> {
    let problem = cfg.problem()?;
    let ProblemSpec { grid, time, constraints, .. } = &problem;
    let (y, trace) = target_control(cfg, &problem)?;
    let mut report = RunReport::new("diagnose", &cfg.entries);
    if let Some(trace) = &trace {
        trace_results(&mut report, trace);
    }
    let p = eval_gradient(&problem, &y)?;
    let residual = first_order_residual(&y, &p, constraints, grid, time);
    let diag = second_order_report(&problem, &y, default_abnormal_tol(constraints))?;
    for line in diag.to_text().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            report.result(k, v);
        }
    }
    let tol = cfg.experiment.ascent.tol;
    report.verdict("first_order", residual <= tol, format!("residual {residual:e} (tol {tol:e})"));
    let p99 = diag.z_p99_abnormal.map_or("empty abnormal set".to_string(), |z| format!("p99 Z = {z:e}"));
    report.verdict("abnormal_sign", diag.sign_condition_pass, format!("{p99}, eta = {:e}", diag.eta));
    let max_bound = 5.0 * diag.eta;
    let max_ok = diag.z_max_abnormal.is_none_or(|z| z <= max_bound);
    let max_detail = diag.z_max_abnormal.map_or("empty abnormal set".to_string(), |z| format!("max Z = {z:e}"));
    report.verdict("abnormal_sign_max", max_ok, format!("{max_detail} (bound {max_bound:e})"));
    report.verdict(
        "convex_bang_bang",
        diag.convex_pass(),
        format!(
            "{} violating convex slices, terminal cost increasing: {}",
            diag.convex_violations.len(),
            diag.terminal_increasing
        ),
    );
    report.artifact("slices.csv", csv(|out| diag.write_csv(out)));
    if dump {
        report.artifact("field_control.csv", field_csv(&y, grid, time));
        report.artifact("field_adjoint.csv", field_csv(&p, grid, time));
    }
    Ok(report)
}

/// `concentrate`: concentration sweep over the configured `K` list.
pub fn run_concentrate(cfg: &RunConfig, _dump: bool) -> Result<RunReport, CliError> {
    let grid = cfg.grid()?;
    let time = cfg.time()?;
    let omega = omega(cfg, &grid)?
        .ok_or_else(|| CliError::Key { key: "experiment.omega".into(), message: "required by concentrate".into() })?;
    let ex = &cfg.experiment;
    let q = match ex.potential {
        PotentialSpec::Zero => None,
        PotentialSpec::Benchmark => Some(benchmark_potential(&grid, &time)),
    };
    let thresholds = TailThresholds { time_tail: ex.time_tail_max, space_tail: ex.space_tail_max };
    let sweep = concentration_sweep(q.as_ref(), &omega, &ex.k_list, &grid, &time, thresholds)?;
    let mut report = RunReport::new("concentrate", &cfg.entries);
    report.result("rows", sweep.rows.len());
    let (lo, hi) = (sweep.min_energy_ratio(), sweep.max_energy_ratio());
    report.result("energy_ratio_min", lo);
    report.result("energy_ratio_max", hi);
    let last = sweep.rows.last().expect("sweep has at least one row");
    report.verdict("time_tail_monotone", sweep.time_tail_monotone, "time_tail_T8 weakly decreasing in K");
    report.verdict("space_tail_monotone", sweep.space_tail_monotone, "space_tail_4dx weakly decreasing in K");
    report.verdict(
        "time_tail_final",
        sweep.final_time_tail_below,
        format!("{:e} at K = {} (max {:e})", last.time_tail_t8, last.k, ex.time_tail_max),
    );
    report.verdict(
        "space_tail_final",
        sweep.final_space_tail_below,
        format!("{:e} at K = {} (max {:e})", last.space_tail_4dx, last.k, ex.space_tail_max),
    );
    report.verdict(
        "energy_ratio_band",
        lo >= ex.energy_ratio_min && hi <= ex.energy_ratio_max,
        format!("ratio in [{lo:.6}, {hi:.6}] (band [{}, {}])", ex.energy_ratio_min, ex.energy_ratio_max),
    );
    report.artifact("sweep.csv", csv(|out| sweep.write_csv(out)));
    Ok(report)
}

/// `perturb`: time-localized sources against the Cauchy limit.
pub fn run_perturb(cfg: &RunConfig, dump: bool) -> Result<RunReport, CliError> {
    let problem = cfg.problem()?;
    let ProblemSpec { grid, time, .. } = &problem;
    let (y, trace) = target_control(cfg, &problem)?;
    let mut report = RunReport::new("perturb", &cfg.entries);
    if let Some(trace) = &trace {
        trace_results(&mut report, trace);
    }
    let mask = match omega(cfg, grid)? {
        Some(region) => SpaceTimeMask::from_region(&region, time),
        None => SpaceTimeMask::full(grid, time),
    };
    let h0 = cfg.experiment.h0.build(grid)?;
    let eps = cfg.eps_list();
    let result = perturbation_convergence(&problem, &y, &mask, cfg.t0(), &h0, &eps)?;
    report.result("t0", result.t0);
    report.result("limit_norm", result.limit_norm);
    report.result("limit_witness", result.limit_witness);
    report.result("ratio", result.ratio);
    let all_zero = result.rows.iter().all(|r| r.l2_error == 0.0);
    report.verdict(
        "strictly_decreasing",
        result.strictly_decreasing || all_zero,
        if all_zero { "all errors exactly zero".to_string() } else { format!("{} values of eps", result.rows.len()) },
    );
    let ratio_max = cfg.experiment.ratio_max;
    report.verdict("ratio", result.ratio <= ratio_max, format!("final/first = {:.6} (max {ratio_max})", result.ratio));
    report.artifact("perturb.csv", csv(|out| result.write_csv(out)));
    if dump {
        report.artifact("field_control.csv", field_csv(&y, grid, time));
    }
    Ok(report)
}
