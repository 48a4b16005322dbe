//! One-step operator, residual and cross-scheme checks on the solvers.

use maxplus_hjb::families::{canonical, AffineParams};
use maxplus_hjb::grid::Grid;
use maxplus_hjb::problem::ControlProblem;
use maxplus_hjb::solver::{
    fd_cfl_ratio, one_step_operator, residual_qvi, solve_pde_fd, solve_qvi_semilagrangian,
    solve_qvi_semilagrangian_from, FdForm,
};

fn node_of(grid: &Grid, x: f64) -> usize {
    let axis = &grid.axes()[0];
    let i = ((x - axis.lower) / axis.spacing()).round() as usize;
    assert!((axis.coord(i) - x).abs() < 1e-12);
    i
}

/// `φ = 3 + 0.1 sin x` lies above every cost of the canonical problem by at
/// least 0.9, so the difference quotient must approach `min_u H^u(x, φ')`.
#[test]
fn generator_above_the_cost() {
    let problem = canonical();
    let grid = Grid::line(-2.0, 2.0, 4001, 0.0, 1.0, 1).unwrap();
    let phi: Vec<f64> = (0..grid.len()).map(|i| 3.0 + 0.1 * grid.point(i)[0].sin()).collect();
    let x = 0.3;
    let i = node_of(&grid, x);
    let p = 0.1 * f64::cos(x);
    let generator = problem
        .controls()
        .iter()
        .map(|u| problem.hamiltonian_u(&[x], u, &[p]))
        .fold(f64::INFINITY, f64::min);
    let mut errors = Vec::new();
    for delta in [1e-2, 1e-3, 1e-4] {
        let next = one_step_operator(&problem, &grid, &phi, 0.0, delta).unwrap();
        errors.push(((next[i] - phi[i]) / delta - generator).abs());
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[2] < 0.01, "{errors:?}");
}

/// Below the cost the quotient grows like `ρ/δ`.
#[test]
fn generator_below_the_cost() {
    let problem = canonical();
    let grid = Grid::line(-2.0, 2.0, 401, 0.0, 1.0, 1).unwrap();
    let phi = vec![-1.0; grid.len()];
    let i = node_of(&grid, 0.5);
    let rho = 0.25 + 1.0;
    for delta in [1e-2, 1e-3, 1e-4] {
        let next = one_step_operator(&problem, &grid, &phi, 0.0, delta).unwrap();
        assert!((next[i] - phi[i]) / delta >= rho / (2.0 * delta));
    }
}

#[test]
fn one_step_is_monotone_and_nonexpansive() {
    let problem = canonical();
    let grid = Grid::line(-2.0, 2.0, 201, 0.0, 1.0, 1).unwrap();
    let low: Vec<f64> = (0..grid.len()).map(|i| (3.0 * grid.point(i)[0]).cos()).collect();
    let high: Vec<f64> = low
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.3 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let gap = high.iter().zip(&low).map(|(a, b)| a - b).fold(0.0, f64::max);
    let f_low = one_step_operator(&problem, &grid, &low, 0.0, 0.01).unwrap();
    let f_high = one_step_operator(&problem, &grid, &high, 0.0, 0.01).unwrap();
    for (a, b) in f_high.iter().zip(&f_low) {
        assert!(a >= b);
        assert!(a - b <= gap + 1e-12);
    }
}

/// Ordered terminal data give ordered solutions.
#[test]
fn discrete_comparison() {
    let problem = canonical();
    let grid = Grid::line(-2.0, 2.0, 101, 0.0, 1.0, 100).unwrap();
    let base: Vec<f64> = (0..grid.len()).map(|i| grid.point(i)[0].powi(2).min(2.0)).collect();
    let raised: Vec<f64> = base.iter().map(|v| v + 0.25).collect();
    let low = solve_qvi_semilagrangian_from(&problem, &grid, &base).unwrap();
    let high = solve_qvi_semilagrangian_from(&problem, &grid, &raised).unwrap();
    for (a, b) in high.values().iter().zip(low.values()) {
        assert!(*a >= *b - 1e-12);
        assert!(*a <= *b + 0.25 + 1e-12);
    }
}

#[test]
fn canonical_residual_is_within_consistency_bound() {
    let problem = canonical();
    let grid = Grid::line(-2.0, 2.0, 201, 0.0, 1.0, 400).unwrap();
    let field = solve_qvi_semilagrangian(&problem, &grid).unwrap();
    let residual = residual_qvi(&problem, &field).unwrap();
    let inner = grid.inner_nodes();
    let bound = 5.0 * (grid.spacing(0) + grid.delta());
    // the terminal slice has no forward difference
    let worst = (0..grid.steps())
        .map(|k| inner.iter().map(|&i| residual.slice(k)[i].abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    assert!(worst <= bound, "{worst} > {bound}");
}

fn steps_for_fd(problem: &ControlProblem, grid: Grid) -> Grid {
    let ratio = fd_cfl_ratio(problem, &grid).unwrap();
    if ratio <= 1.0 {
        return grid;
    }
    let steps = (grid.steps() as f64 * ratio / 0.95).ceil() as usize;
    grid.with_steps(steps).unwrap()
}

fn cross_scheme(problem: &ControlProblem, grid: Grid) -> (f64, f64) {
    let grid = steps_for_fd(problem, grid);
    let sl = solve_qvi_semilagrangian(problem, &grid).unwrap();
    let inner = grid.inner_nodes();
    let q = solve_pde_fd(problem, &grid, FdForm::Qvi).unwrap();
    let h = solve_pde_fd(problem, &grid, FdForm::HForm).unwrap();
    (
        sl.sup_distance_where(&q, &inner, |_| true).unwrap(),
        sl.sup_distance_where(&h, &inner, |_| true).unwrap(),
    )
}

#[test]
fn schemes_agree_on_a_weaker_control_variant() {
    let problem = AffineParams {
        sigma: 0.3,
        u_max: 0.5,
        u_points: 11,
        clip: 1.5,
        ..Default::default()
    }
    .build()
    .unwrap();
    let (q, h) = cross_scheme(&problem, Grid::line(-2.0, 2.0, 201, 0.0, 1.0, 200).unwrap());
    assert!(q <= 0.05 && h <= 0.05, "{q} {h}");
}

/// The finite-difference error concentrates at the origin, where V touches
/// the cost, and shrinks from 0.24 at 41 points per axis to 0.036 at 161.
#[test]
fn schemes_agree_in_two_dimensions() {
    let problem = AffineParams {
        dim: 2,
        u_points: 5,
        ..Default::default()
    }
    .build()
    .unwrap();
    let axes = vec![maxplus_hjb::grid::Axis::new(-2.0, 2.0, 161); 2];
    let grid = Grid::new(axes, 0.0, 1.0, 400).unwrap();
    let (q, h) = cross_scheme(&problem, grid);
    assert!(q <= 0.05 && h <= 0.05, "{q} {h}");
}
