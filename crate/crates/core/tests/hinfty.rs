use maxplus_hjb::families::canonical;
use maxplus_hjb::grid::{Axis, Grid};
use maxplus_hjb::hinfty::{
    quadratic_example_certificate, simulate_dissipation, v_infinity_sweep, QuadraticExample, Storage,
};
use maxplus_hjb::trajectory::{OptimizerOptions, Policy};

#[test]
fn small_k_is_falsified_by_the_optimizer() {
    let params = QuadraticExample::default();
    let problem = params.augmented_problem().unwrap();
    let bad = Storage::Augmented {
        mu: params.mu,
        base: Box::new(Storage::Quadratic { k: 0.01 }),
    };
    let states: Vec<Vec<f64>> = [-1.5, -0.75, 0.75, 1.5].iter().map(|x| vec![*x, 0.0]).collect();
    let opts = OptimizerOptions {
        dt: 0.02,
        coarsen: 25,
        random_starts: 1,
        ..Default::default()
    };
    let report = simulate_dissipation(&problem, &bad, &Policy::constant(&[0.0]), &states, 5.0, &opts, 1e-8).unwrap();
    assert!(!report.passed());
    assert!(report.min_margin < -0.01, "{}", report.min_margin);
    assert!(!report.counterexamples.is_empty());
}

/// The excess of the swept value over the certified storage comes from
/// interpolating a parabola, so it scales like `h²`.
#[test]
fn dominance_excess_scales_with_h_squared() {
    let params = QuadraticExample::default();
    let cert = quadratic_example_certificate(&params).unwrap();
    let storage = cert.storage().unwrap();
    let problem = params.augmented_problem().unwrap();
    let excess: Vec<f64> = [41usize, 81]
        .iter()
        .map(|&points| {
            let grid = Grid::new(
                vec![Axis::new(-2.0, 2.0, points), Axis::new(0.0, 4.0, 41)],
                0.0,
                0.5,
                25,
            )
            .unwrap();
            let sweep = v_infinity_sweep(&problem, &grid, &[0.5, 1.0, 2.0, 4.0, 8.0]).unwrap();
            assert!(sweep.nondecreasing());
            sweep.excess_over(&storage)
        })
        .collect();
    let ratio = excess[0] / excess[1];
    assert!((3.5..=4.5).contains(&ratio), "{excess:?}");
}

#[test]
fn canonical_steady_residual_decreases_with_the_horizon() {
    let grid = Grid::line(-2.0, 2.0, 201, 0.0, 0.5, 100).unwrap();
    let sweep = v_infinity_sweep(&canonical(), &grid, &[0.5, 1.0, 2.0, 4.0, 8.0]).unwrap();
    assert!(sweep.nondecreasing());
    assert!(sweep.residuals_decreasing(), "{:?}", sweep.rows);
}

#[test]
fn sweep_needs_increasing_horizons() {
    let grid = Grid::line(-2.0, 2.0, 21, 0.0, 0.5, 10).unwrap();
    assert!(v_infinity_sweep(&canonical(), &grid, &[1.0, 0.5]).is_err());
}
