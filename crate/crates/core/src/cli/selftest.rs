//! Embedded invariant suite: exact identities, adjoint consistency,
//! projection properties and convergence checks on small seeded instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::report::RunReport;
use crate::control::{
    bathtub_project_slice, eval_cost, eval_gradient, project_control, second_variation, threshold_step, Constraints,
    CostFamily, CostSpec, ProblemSpec,
};
use crate::error::Result;
use crate::grid::{discrete_eigenbasis, region_mask, BoundaryCondition, Grid};
use crate::oscillation::{build_oscillating_datum, free_expansion, laplace_moment};
use crate::parabolic::{
    duality_defect_with_terminal, solve_linear, solve_state, st_inner, st_norm, Coefficient, LinearParabolicInstance,
    Nonlinearity, SpaceTimeField, TimeGrid,
};

const SEED: u64 = 0x5eed_2024;

type Outcome = Result<(bool, String)>;

fn random_field(rng: &mut ChaCha8Rng, grid: &Grid, time: &TimeGrid, lo: f64, hi: f64) -> SpaceTimeField {
    let rows = (0..time.nodes()).map(|_| random_vec(rng, grid.dofs(), lo, hi)).collect();
    SpaceTimeField::from_rows(rows).expect("rows share one length")
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

fn problem(
    bc: BoundaryCondition,
    n: usize,
    nt: usize,
    f: Nonlinearity,
    costs: CostSpec,
    u0: Vec<f64>,
) -> Result<ProblemSpec> {
    let grid = Grid::new(1.0, n, bc)?;
    let time = TimeGrid::new(0.5, nt)?;
    ProblemSpec::new(grid, time, f, costs, u0, Constraints::new(0.0, 1.0, 0.4)?)
}

const MAX_DEPTH: u32 = 50;
/// Levels refined unconditionally, so narrow peaks are not missed.
const MIN_DEPTH: u32 = 10;

/// Adaptive Simpson with Richardson correction.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || (depth <= MAX_DEPTH - MIN_DEPTH && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn laplace_vs_quadrature() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 0..=3u32 {
        for k in [1.0, 10.0, 100.0] {
            for horizon in [0.5, 1.0, 2.0] {
                let exact = laplace_moment(m, k, horizon)?;
                let f = move |t: f64| t.powi(m as i32) * (-k * t).exp();
                let quad = simpson(&f, 0.0, horizon, 1e-15 * exact);
                worst = worst.max((exact - quad).abs() / exact);
            }
        }
    }
    Ok((worst <= 1e-9, format!("max relative deviation {worst:.2e} over 36 cases (tol 1e-9)")))
}

fn closed_norm_vs_pairwise() -> Outcome {
    let grid = Grid::new(1.0, 64, BoundaryCondition::Dirichlet)?;
    let time = TimeGrid::new(0.3, 32)?;
    let basis = discrete_eigenbasis(&grid, grid.dofs())?;
    let omega = region_mask(&grid, &[(0.2, 0.5)])?;
    let mut worst: f64 = 0.0;
    for k in [3, 6, 12] {
        let datum = build_oscillating_datum(&basis, &omega, &grid, k, false)?;
        let (_, closed) = free_expansion(&basis, &datum, &time)?;
        let modes: Vec<_> = datum.modes().collect();
        let mut pairwise = 0.0;
        for &(i, ai) in &modes {
            for &(l, al) in &modes {
                let (mi, ml) = (basis.mode(i).expect("mode"), basis.mode(l).expect("mode"));
                let rate = mi.lambda_discrete + ml.lambda_discrete;
                let gram = grid.inner(&mi.vector, &ml.vector);
                pairwise += ai * al * gram * -(-rate * time.horizon()).exp_m1() / rate;
            }
        }
        worst = worst.max((closed - pairwise).abs() / pairwise);
    }
    Ok((worst <= 1e-12, format!("max relative deviation {worst:.2e} (tol 1e-12)")))
}

fn cn_eigenmode_decay() -> Outcome {
    let time = TimeGrid::new(1.0, 64)?;
    let dt = time.dt();
    let mut worst: f64 = 0.0;
    for (bc, k) in [(BoundaryCondition::Dirichlet, 3), (BoundaryCondition::Neumann, 4)] {
        let grid = Grid::new(1.0, 32, bc)?;
        let basis = discrete_eigenbasis(&grid, k)?;
        let mode = basis.mode(k).expect("mode");
        let r = (1.0 - 0.5 * dt * mode.lambda_discrete) / (1.0 + 0.5 * dt * mode.lambda_discrete);
        let theta = solve_linear(&LinearParabolicInstance::forward(&mode.vector), &grid, &time)?;
        for m in 0..time.nodes() {
            let c = r.powi(m as i32);
            for (v, phi) in theta.row(m).iter().zip(&mode.vector) {
                worst = worst.max((v - c * phi).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max nodal deviation {worst:.2e} (tol 1e-12)")))
}

fn duality(rng: &mut ChaCha8Rng, f: Nonlinearity) -> Outcome {
    let costs = CostSpec { running: CostFamily::Quadratic, terminal: CostFamily::Linear };
    let u0 = random_vec(rng, 16, 0.0, 1.0);
    let p = problem(BoundaryCondition::Neumann, 16, 16, f, costs, u0)?;
    let (y, _) = project_control(&random_field(rng, &p.grid, &p.time, 0.0, 1.0), &p.constraints, &p.grid, &p.time)?;
    let u = solve_state(&p, &y)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
        let w = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
        let b = random_vec(rng, p.grid.dofs(), -1.0, 1.0);
        let scale = (st_norm(&p.grid, &p.time, &h) * (st_norm(&p.grid, &p.time, &w) + p.grid.norm(&b))).max(1.0);
        let defect = duality_defect_with_terminal(&p, &u, &h, &w, Some(&b))?;
        worst = worst.max(defect / scale);
    }
    Ok((worst <= 1e-10, format!("max scaled defect {worst:.2e} over 20 pairs (tol 1e-10)")))
}

fn reactions() -> [Nonlinearity; 4] {
    [
        Nonlinearity::Zero,
        Nonlinearity::Linear(-1.0),
        Nonlinearity::Monostable(Coefficient::Constant(1.0)),
        Nonlinearity::Bistable(Coefficient::Constant(0.3)),
    ]
}

/// Relative gap between `⟨p, h⟩` and a central difference of the cost.
fn gradient_gap(p: &ProblemSpec, y: &SpaceTimeField, h: &SpaceTimeField, eps: f64) -> Result<f64> {
    let g = eval_gradient(p, y)?;
    let exact = st_inner(&p.grid, &p.time, &g, h);
    let fd = (eval_cost(p, &y.add_scaled(eps, h))? - eval_cost(p, &y.add_scaled(-eps, h))?) / (2.0 * eps);
    let scale = exact.abs().max(st_norm(&p.grid, &p.time, &g) * st_norm(&p.grid, &p.time, h)).max(f64::MIN_POSITIVE);
    Ok((fd - exact).abs() / scale)
}

fn gradient_all_families(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (i, f) in reactions().into_iter().enumerate() {
        for running in CostFamily::ALL {
            for terminal in CostFamily::ALL {
                let bc = if (i + cases) % 2 == 0 { BoundaryCondition::Neumann } else { BoundaryCondition::Dirichlet };
                let dofs = Grid::new(1.0, 12, bc)?.dofs();
                let p =
                    problem(bc, 12, 12, f.clone(), CostSpec { running, terminal }, random_vec(rng, dofs, 0.0, 1.0))?;
                let y = random_field(rng, &p.grid, &p.time, 0.0, 1.0);
                let h = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
                worst = worst.max(gradient_gap(&p, &y, &h, 1e-4)?);
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative gap {worst:.2e} over {cases} family combinations (tol 1e-6)")))
}

fn second_difference(p: &ProblemSpec, y: &SpaceTimeField, h: &SpaceTimeField, eps: f64) -> Result<(f64, f64)> {
    let exact = second_variation(p, y, h)?;
    let fd = (eval_cost(p, &y.add_scaled(eps, h))? - 2.0 * eval_cost(p, y)? + eval_cost(p, &y.add_scaled(-eps, h))?)
        / (eps * eps);
    Ok((exact, fd))
}

fn second_variation_quadratic(rng: &mut ChaCha8Rng) -> Outcome {
    let costs = CostSpec { running: CostFamily::Quadratic, terminal: CostFamily::Zero };
    let p = problem(BoundaryCondition::Neumann, 16, 16, Nonlinearity::Zero, costs, random_vec(rng, 16, 0.0, 1.0))?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let y = random_field(rng, &p.grid, &p.time, 0.0, 1.0);
        let h = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
        let (exact, fd) = second_difference(&p, &y, &h, 1.0)?;
        worst = worst.max((exact - fd).abs() / exact.abs().max(1.0));
    }
    Ok((worst <= 1e-10, format!("max relative gap {worst:.2e} with unit step (tol 1e-10)")))
}

fn second_variation_bistable(rng: &mut ChaCha8Rng) -> Outcome {
    let costs = CostSpec { running: CostFamily::Quadratic, terminal: CostFamily::Quadratic };
    let f = Nonlinearity::Bistable(Coefficient::Constant(0.3));
    let p = problem(BoundaryCondition::Neumann, 16, 16, f, costs, random_vec(rng, 16, 0.0, 1.0))?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let y = random_field(rng, &p.grid, &p.time, 0.0, 1.0);
        let h = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
        let (exact, fd) = second_difference(&p, &y, &h, 1e-3)?;
        worst = worst.max((exact - fd).abs() / exact.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst <= 1e-4, format!("max relative gap {worst:.2e} with step 1e-3 (tol 1e-4)")))
}

fn random_small_instance(rng: &mut ChaCha8Rng) -> Result<(Grid, Constraints)> {
    let grid = if rng.gen_bool(0.5) {
        Grid::new(rng.gen_range(0.5..2.0), rng.gen_range(4..=6), BoundaryCondition::Neumann)?
    } else {
        Grid::new(rng.gen_range(0.5..2.0), rng.gen_range(4..=7), BoundaryCondition::Dirichlet)?
    };
    let kappa0 = rng.gen_range(0.0..1.0);
    let kappa1 = rng.gen_range(0.05..1.0);
    let mean = rng.gen_range(-kappa0..=kappa1);
    Ok((grid, Constraints::new(kappa0, kappa1, mean)?))
}

/// Projection by enumerating every lower/free/upper assignment.
fn brute_force_projection(z: &[f64], cons: &Constraints, grid: &Grid) -> Option<Vec<f64>> {
    let n = z.len();
    let w = grid.weights();
    let target = cons.mean * grid.total_weight();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut fixed = 0.0;
        let (mut free_w, mut free_z) = (0.0, 0.0);
        for j in 0..n {
            match state[j] {
                0 => fixed += w[j] * cons.lower(),
                1 => fixed += w[j] * cons.upper(),
                _ => {
                    free_w += w[j];
                    free_z += w[j] * z[j];
                }
            }
        }
        let shift = if free_w > 0.0 { (free_z + fixed - target) / free_w } else { 0.0 };
        if free_w == 0.0 && (fixed - target).abs() > 1e-12 * grid.total_weight() {
            continue;
        }
        let y: Vec<f64> = (0..n)
            .map(|j| match state[j] {
                0 => cons.lower(),
                1 => cons.upper(),
                _ => z[j] - shift,
            })
            .collect();
        if y.iter().any(|&v| v < cons.lower() - 1e-12 || v > cons.upper() + 1e-12) {
            continue;
        }
        let dist: f64 = (0..n).map(|j| w[j] * (y[j] - z[j]).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, y));
        }
    }
    best.map(|b| b.1)
}

fn bathtub_vs_brute_force(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (grid, cons) = random_small_instance(rng)?;
        let z = random_vec(rng, grid.dofs(), -3.0, 3.0);
        let (y, _) = bathtub_project_slice(&z, &cons, &grid)?;
        let Some(oracle) = brute_force_projection(&z, &cons, &grid) else {
            return Ok((false, "brute force found no feasible point".into()));
        };
        worst = y.iter().zip(&oracle).fold(worst, |acc, (a, b)| acc.max((a - b).abs()));
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e} over 200 instances (tol 1e-9)")))
}

fn projection_properties(rng: &mut ChaCha8Rng) -> Outcome {
    let (mut idem, mut expansion): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for _ in 0..200 {
        let (grid, cons) = random_small_instance(rng)?;
        let a = random_vec(rng, grid.dofs(), -3.0, 3.0);
        let b = random_vec(rng, grid.dofs(), -3.0, 3.0);
        let (pa, _) = bathtub_project_slice(&a, &cons, &grid)?;
        let (pb, _) = bathtub_project_slice(&b, &cons, &grid)?;
        let (ppa, _) = bathtub_project_slice(&pa, &cons, &grid)?;
        idem = pa.iter().zip(&ppa).fold(idem, |acc, (x, y)| acc.max((x - y).abs()));
        let diff = |u: &[f64], v: &[f64]| grid.norm(&u.iter().zip(v).map(|(x, y)| x - y).collect::<Vec<_>>());
        expansion = expansion.max(diff(&pa, &pb) - diff(&a, &b));
    }
    let pass = idem <= 1e-12 && expansion <= 1e-12;
    Ok((pass, format!("idempotence gap {idem:.2e}, max expansion {expansion:.2e} over 200 pairs")))
}

fn threshold_dominance(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let grid = Grid::new(1.0, rng.gen_range(4..=32), BoundaryCondition::Neumann)?;
        let kappa0 = rng.gen_range(0.0..1.0);
        let kappa1 = rng.gen_range(0.05..1.0);
        let cons = Constraints::new(kappa0, kappa1, rng.gen_range(-kappa0..=kappa1))?;
        let p = random_vec(rng, grid.dofs(), -1.0, 1.0);
        let (y, _) = bathtub_project_slice(&random_vec(rng, grid.dofs(), -2.0, 2.0), &cons, &grid)?;
        let step = threshold_step(&p, &cons, &grid)?;
        worst = worst.max(grid.inner(&p, &y) - grid.inner(&p, &step));
    }
    Ok((worst <= 1e-12, format!("max excess of a feasible slice {worst:.2e} over 100 slices")))
}

fn logistic_order() -> Outcome {
    let m = 1.0;
    let u0 = 0.5;
    let exact = m * u0 / (u0 + (m - u0) * (-m * 1.0f64).exp());
    let mut errors = Vec::new();
    for (n, nt) in [(8, 16), (16, 32), (32, 64)] {
        let grid = Grid::new(1.0, n, BoundaryCondition::Neumann)?;
        let time = TimeGrid::new(1.0, nt)?;
        let costs = CostSpec { running: CostFamily::Zero, terminal: CostFamily::Zero };
        let f = Nonlinearity::Monostable(Coefficient::Constant(m));
        let p = ProblemSpec::new(grid, time, f, costs, vec![u0; n], Constraints::new(0.0, 1.0, 0.0)?)?;
        let u = solve_state(&p, &SpaceTimeField::zeros(&p.grid, &p.time))?;
        errors.push(u.row(nt).iter().map(|v| (v - exact).abs()).fold(0.0, f64::max));
    }
    let orders: Vec<f64> = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let pass = orders.iter().all(|o| (1.9..=2.1).contains(o));
    Ok((
        pass,
        format!(
            "errors {:.3e}, {:.3e}, {:.3e}; orders {:.3}, {:.3}",
            errors[0], errors[1], errors[2], orders[0], orders[1]
        ),
    ))
}

fn neumann_mass(rng: &mut ChaCha8Rng) -> Outcome {
    let grid = Grid::new(1.0, 32, BoundaryCondition::Neumann)?;
    let time = TimeGrid::new(1.0, 64)?;
    let cons = Constraints::new(1.0, 1.0, 0.0)?;
    let u0 = random_vec(rng, grid.dofs(), -1.0, 1.0);
    let (y, _) = project_control(&random_field(rng, &grid, &time, -2.0, 2.0), &cons, &grid, &time)?;
    let costs = CostSpec { running: CostFamily::Zero, terminal: CostFamily::Zero };
    let p = ProblemSpec::new(grid, time, Nonlinearity::Zero, costs, u0, cons)?;
    let u = solve_state(&p, &y)?;
    let mass0 = p.grid.integrate(&p.initial)?;
    let mut drift: f64 = 0.0;
    for m in 0..u.nodes() {
        drift = drift.max((p.grid.integrate(u.row(m))? - mass0).abs());
    }
    let bound = 1e-10 * p.grid.norm(&p.initial) * p.grid.length();
    Ok((drift <= bound, format!("max mass drift {drift:.2e} (bound {bound:.2e})")))
}

fn energy_bound(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let bc = if i % 2 == 0 { BoundaryCondition::Neumann } else { BoundaryCondition::Dirichlet };
        let grid = Grid::new(rng.gen_range(0.5..2.0), rng.gen_range(8..=32), bc)?;
        let time = TimeGrid::new(rng.gen_range(0.1..1.0), rng.gen_range(8..=64))?;
        let amp = rng.gen_range(0.0..3.0f64).min(1.9 / time.dt());
        let q = random_field(rng, &grid, &time, -amp, amp);
        let g = random_field(rng, &grid, &time, -1.0, 1.0);
        let theta0 = random_vec(rng, grid.dofs(), -1.0, 1.0);
        let inst = LinearParabolicInstance::forward(&theta0).with_potential(&q).with_source(&g);
        let theta = solve_linear(&inst, &grid, &time)?;
        let lhs = (0..theta.nodes()).map(|m| grid.norm(theta.row(m))).fold(0.0, f64::max);
        let forcing: f64 = (0..g.nodes()).map(|m| time.dt() * grid.norm(g.row(m))).sum();
        let rhs = (q.max_abs() * time.horizon()).exp() * (grid.norm(&theta0) + forcing);
        worst = worst.max(lhs / rhs);
    }
    Ok((worst <= 1.0, format!("max ratio sup|theta| / bound {worst:.3} over 20 instances")))
}

fn config_gradient(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Outcome {
    let p = cfg.problem().map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let raw = cfg.experiment.y0.build(&p.grid, &p.time, &p.constraints);
    let (y, _) = project_control(&raw, &p.constraints, &p.grid, &p.time)?;
    let h = random_field(rng, &p.grid, &p.time, -1.0, 1.0);
    let gap = gradient_gap(&p, &y, &h, 1e-4)?;
    Ok((gap <= 1e-6, format!("relative gap {gap:.2e} on the configured problem (tol 1e-6)")))
}

/// Runs every check; a check that errors counts as failed. With a config,
/// the gradient is also checked on the configured problem.
pub fn run_selftest(cfg: Option<&RunConfig>) -> RunReport {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut report = RunReport::new("selftest", cfg.map_or(&[][..], |c| &c.entries));
    let mut record = |name: &str, outcome: Outcome| match outcome {
        Ok((pass, detail)) => report.verdict(name, pass, detail),
        Err(e) => report.verdict(name, false, format!("error: {e}")),
    };
    record("laplace_moment_quadrature", laplace_vs_quadrature());
    record("closed_norm_pairwise", closed_norm_vs_pairwise());
    record("cn_eigenmode_decay", cn_eigenmode_decay());
    record("duality_zero", duality(&mut rng, Nonlinearity::Zero));
    record("duality_monostable", duality(&mut rng, Nonlinearity::Monostable(Coefficient::Constant(1.0))));
    record("duality_bistable", duality(&mut rng, Nonlinearity::Bistable(Coefficient::Constant(0.3))));
    record("gradient_central_differences", gradient_all_families(&mut rng));
    record("second_variation_quadratic", second_variation_quadratic(&mut rng));
    record("second_variation_bistable", second_variation_bistable(&mut rng));
    record("bathtub_brute_force", bathtub_vs_brute_force(&mut rng));
    record("projection_idempotent_nonexpansive", projection_properties(&mut rng));
    record("threshold_dominance", threshold_dominance(&mut rng));
    record("logistic_order", logistic_order());
    record("neumann_mass_drift", neumann_mass(&mut rng));
    record("energy_bound", energy_bound(&mut rng));
    if let Some(cfg) = cfg {
        record("config_gradient", config_gradient(cfg, &mut rng));
    }
    report
}
