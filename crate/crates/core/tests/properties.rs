use parcon::control::*;
use parcon::grid::{discrete_eigenbasis, BoundaryCondition, Grid};
use parcon::oscillation::{dirac_perturbation, laplace_moment, SpaceTimeMask};
use parcon::parabolic::*;
use proptest::prelude::*;

fn bc() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![Just(BoundaryCondition::Dirichlet), Just(BoundaryCondition::Neumann)]
}

fn grid_and_vectors(count: usize) -> impl Strategy<Value = (Grid, Vec<Vec<f64>>)> {
    (bc(), 4usize..24, 0.5f64..3.0).prop_flat_map(move |(bc, n, l)| {
        let grid = Grid::new(l, n, bc).unwrap();
        let dofs = grid.dofs();
        (Just(grid), prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dofs), count))
    })
}

/// Grid with a feasible constraint set and a random slice.
fn slice_problem() -> impl Strategy<Value = (Grid, Constraints, Vec<f64>)> {
    (bc(), 4usize..16, 0.0f64..1.5, 0.1f64..2.0, 0.0f64..=1.0).prop_flat_map(|(bc, n, k0, width, frac)| {
        let grid = Grid::new(1.0, n, bc).unwrap();
        let dofs = grid.dofs();
        let kappa1 = (width - k0).max(0.0);
        let mean = -k0 + frac * (k0 + kappa1);
        let cons = Constraints::new(k0, kappa1, mean).unwrap();
        (Just(grid), Just(cons), prop::collection::vec(-4.0f64..4.0, dofs))
    })
}

fn feasible(y: &[f64], cons: &Constraints, grid: &Grid) -> bool {
    let box_ok = y.iter().all(|&v| v >= cons.lower() - 1e-12 && v <= cons.upper() + 1e-12);
    box_ok && (grid.mean(y).unwrap() - cons.mean).abs() <= 1e-10
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        Just(Nonlinearity::Zero),
        (-2.0f64..2.0).prop_map(Nonlinearity::Linear),
        (0.0f64..2.0).prop_map(|a| Nonlinearity::Monostable(Coefficient::Constant(a))),
        (0.05f64..0.95).prop_map(|a| Nonlinearity::Bistable(Coefficient::Constant(a))),
    ]
}

fn cost_family() -> impl Strategy<Value = CostFamily> {
    prop::sample::select(CostFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_linear_and_symmetric((grid, v) in grid_and_vectors(2), a in -3.0f64..3.0) {
        let (f, g) = (&v[0], &v[1]);
        let combo: Vec<f64> = f.iter().zip(g).map(|(x, y)| a * x + y).collect();
        let lhs = grid.apply_laplacian(&combo);
        let (lf, lg) = (grid.apply_laplacian(f), grid.apply_laplacian(g));
        for j in 0..grid.dofs() {
            prop_assert!((lhs[j] - (a * lf[j] + lg[j])).abs() <= 1e-9 * (1.0 + lhs[j].abs()));
        }
        let scale = grid.lambda_max() * grid.norm(f) * grid.norm(g) + 1.0;
        prop_assert!((grid.inner(&lf, g) - grid.inner(f, &lg)).abs() <= 1e-12 * scale);
        prop_assert!(grid.inner(&lf, f) <= 1e-12 * scale);
    }

    #[test]
    fn eigenbasis_is_orthonormal(bc in bc(), n in 4usize..40) {
        let grid = Grid::new(1.0, n, bc).unwrap();
        let basis = discrete_eigenbasis(&grid, grid.dofs()).unwrap();
        for a in basis.modes() {
            for b in basis.modes() {
                let expected = if a.index == b.index { 1.0 } else { 0.0 };
                prop_assert!((grid.inner(&a.vector, &b.vector) - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bathtub_is_a_feasible_idempotent_contraction((grid, cons, z) in slice_problem(), shift in prop::collection::vec(-2.0f64..2.0, 16)) {
        let (y, _) = bathtub_project_slice(&z, &cons, &grid).unwrap();
        prop_assert!(feasible(&y, &cons, &grid));
        let (again, _) = bathtub_project_slice(&y, &cons, &grid).unwrap();
        for (a, b) in again.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let other: Vec<f64> = z.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let (y2, _) = bathtub_project_slice(&other, &cons, &grid).unwrap();
        prop_assert!(grid.norm(&sub(&y, &y2)) <= grid.norm(&sub(&z, &other)) * (1.0 + 1e-10) + 1e-12);
        // obtuse angle with every other feasible point
        prop_assert!(grid.inner(&sub(&z, &y), &sub(&y2, &y)) <= 1e-9);
    }

    #[test]
    fn threshold_dominates_feasible_controls((grid, cons, p) in slice_problem(), z in prop::collection::vec(-4.0f64..4.0, 16)) {
        let star = threshold_step(&p, &cons, &grid).unwrap();
        prop_assert!(feasible(&star, &cons, &grid));
        let (y, _) = bathtub_project_slice(&z[..grid.dofs()], &cons, &grid).unwrap();
        prop_assert!(grid.inner(&p, &star) >= grid.inner(&p, &y) - 1e-10);
    }

    #[test]
    fn cost_derivatives_are_consistent(f in cost_family(), u in -3.0f64..3.0) {
        let d = 1e-5;
        prop_assert!(((f.value(u + d) - f.value(u - d)) / (2.0 * d) - f.du(u)).abs() <= 1e-6 * (1.0 + f.du(u).abs()));
        prop_assert!(((f.du(u + d) - f.du(u - d)) / (2.0 * d) - f.duu(u)).abs() <= 1e-6 * (1.0 + f.duu(u).abs()));
    }

    #[test]
    fn nonlinearity_derivatives_are_consistent(f in nonlinearity(), u in -2.0f64..2.0) {
        let d = 1e-5;
        let (du, duu) = (f.du(0, 0, u), f.duu(0, 0, u));
        prop_assert!(((f.value(0, 0, u + d) - f.value(0, 0, u - d)) / (2.0 * d) - du).abs() <= 1e-6 * (1.0 + du.abs()));
        prop_assert!(((f.du(0, 0, u + d) - f.du(0, 0, u - d)) / (2.0 * d) - duu).abs() <= 1e-6 * (1.0 + duu.abs()));
    }

    #[test]
    fn dirac_slices_have_zero_mean(n in 4usize..20, eps_steps in 1usize..5, h0 in prop::collection::vec(-3.0f64..3.0, 20), cut in 0.2f64..0.9) {
        let grid = Grid::new(1.0, n, BoundaryCondition::Neumann).unwrap();
        let time = TimeGrid::new(1.0, 20).unwrap();
        let mask = SpaceTimeMask::from_fn(&grid, &time, |_, x| x < cut);
        let eps = eps_steps as f64 * time.dt();
        let h = dirac_perturbation(&mask, 0.5, &h0[..n], eps, &grid, &time).unwrap();
        for m in 0..time.nodes() {
            let row = h.row(m);
            prop_assert!(grid.integrate(row).unwrap().abs() <= 1e-12);
            for (j, x) in grid.positions().iter().enumerate() {
                if *x >= cut {
                    prop_assert_eq!(row[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn laplace_moment_bounds(m in 0u32..6, k in 0.1f64..50.0, t in 0.05f64..5.0) {
        let v = laplace_moment(m, k, t).unwrap();
        let factorial: f64 = (1..=m).map(f64::from).product();
        prop_assert!(v > 0.0);
        prop_assert!(v <= factorial / k.powi(m as i32 + 1) * (1.0 + 1e-12));
        prop_assert!(v <= t.powi(m as i32 + 1) / (m as f64 + 1.0) * (1.0 + 1e-12));
        prop_assert!(laplace_moment(m, k, 2.0 * t).unwrap() >= v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linearized_and_adjoint_are_dual(
        f in nonlinearity(),
        bc in bc(),
        n in 4usize..10,
        nt in 4usize..12,
        seed in prop::collection::vec(-1.0f64..1.0, 4 * 12 * 13),
    ) {
        let grid = Grid::new(1.0, n, bc).unwrap();
        let time = TimeGrid::new(0.5, nt).unwrap();
        let dofs = grid.dofs();
        let take = |offset: usize| -> SpaceTimeField {
            let rows = (0..time.nodes()).map(|m| (0..dofs).map(|j| seed[(offset + m * dofs + j) % seed.len()]).collect()).collect();
            SpaceTimeField::from_rows(rows).unwrap()
        };
        let u0: Vec<f64> = (0..dofs).map(|j| 0.5 + 0.3 * seed[j]).collect();
        let costs = CostSpec { running: CostFamily::Zero, terminal: CostFamily::Linear };
        let problem = ProblemSpec::new(grid.clone(), time, f, costs, u0, Constraints::new(0.0, 1.0, 0.4).unwrap()).unwrap();
        let y = take(7).map(|v| 0.4 + 0.3 * v);
        let state = solve_state(&problem, &y).unwrap();
        let (h, a) = (take(101), take(211));
        let b: Vec<f64> = (0..dofs).map(|j| seed[(300 + j) % seed.len()]).collect();
        let lin = solve_linearized(&problem, &state, &h).unwrap();
        let p = adjoint_propagate(&problem, &state, Some(&a), Some(&b)).unwrap();
        let lhs = st_inner(&grid, &time, &p, &h);
        let rhs = st_inner(&grid, &time, &lin, &a) + grid.inner(lin.row(nt), &b);
        let scale = st_norm(&grid, &time, &h) * (st_norm(&grid, &time, &a) + grid.norm(&b)) + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale, "{} vs {}", lhs, rhs);
    }
}
