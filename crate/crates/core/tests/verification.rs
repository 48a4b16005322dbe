//! Policy evaluation on problems whose value exceeds the running cost, so
//! the equality `J = W` is not met at the initial time trivially.

use maxplus_hjb::grid::Grid;
use maxplus_hjb::merton::{modified_merton_problem, MertonParams, ModifiedOptions};
use maxplus_hjb::problem::{ControlProblem, ControlSet};
use maxplus_hjb::solver::solve_qvi_semilagrangian;
use maxplus_hjb::trajectory::{
    argmin_policy, maxplus_expectation_policy, verify_lower_bound, ExpectationSeeds, OptimizerOptions, Policy,
    VerificationMode,
};

/// `f = u`, `σ = 1`, `l = x`, `U = {0, 1/2}`: drifting up only adds cost,
/// so `V(t, x) = x + (T − t)/2` and a constant `u = 1/2` costs another
/// `(T − t)/2`.
fn drift_choice() -> ControlProblem {
    ControlProblem::builder("drift choice", 1, 1)
        .drift(|_, u, out| out[0] = u[0])
        .diffusion(|_, _, out| out[0] = 1.0)
        .cost(|x, _| x[0])
        .controls(ControlSet::from_points(1, vec![0.0, 0.5]).unwrap())
        .domain(vec![(-4.0, 4.0)])
        .cost_lipschitz(1.0)
        .build()
        .unwrap()
}

#[test]
fn argmin_policy_attains_a_value_above_the_cost() {
    let problem = drift_choice();
    let grid = Grid::line(-4.0, 4.0, 161, 0.0, 1.0, 100).unwrap();
    let field = solve_qvi_semilagrangian(&problem, &grid).unwrap();
    let states: Vec<Vec<f64>> = (0..5).map(|k| vec![-1.0 + 0.5 * k as f64]).collect();
    for x in &states {
        assert!((field.value_at(0.0, x) - (x[0] + 0.5)).abs() <= 0.02);
    }
    let opts = OptimizerOptions::default();
    let policy = argmin_policy(&problem, &field);
    let report = verify_lower_bound(
        &problem,
        &policy,
        &field,
        0.0,
        &states,
        &opts,
        VerificationMode::Equality { tol: 0.05 },
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.records);

    let report = verify_lower_bound(
        &problem,
        &Policy::constant(&[0.5]),
        &field,
        0.0,
        &states,
        &opts,
        VerificationMode::LowerBound { tol: 1e-6 },
    )
    .unwrap();
    assert!(report.passed());
    for r in &report.records {
        assert!((r.j - (r.x[0] + 1.0)).abs() <= 0.02, "{r:?}");
    }
}

/// `k ≡ k*`, `c = c̃*(t)` is optimal for the capped Merton problem, so its
/// max-plus cost reproduces `−y + B̃(t)`.
#[test]
fn merton_optimal_open_loop_policy_matches_oracle() {
    let params = MertonParams::default();
    let (problem, oracle) = modified_merton_problem(&params, &ModifiedOptions::default()).unwrap();
    let k_star = params.k_star();
    let c_oracle = oracle.clone();
    let policy = Policy::open_loop("k*, c~*", move |s, out| {
        out[0] = k_star;
        out[1] = c_oracle.c_tilde(s);
    });
    for y in [-0.5, 0.0, 0.5] {
        let est = maxplus_expectation_policy(
            &problem,
            &policy,
            0.0,
            &[y],
            params.horizon,
            &OptimizerOptions::default(),
            ExpectationSeeds::default(),
        )
        .unwrap();
        let exact = oracle.value(0.0, y);
        assert!((est.value - exact).abs() <= 0.02, "y = {y}: {} vs {exact}", est.value);
    }
}
