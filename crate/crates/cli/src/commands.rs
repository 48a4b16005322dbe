//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns whether its checks passed.

use std::fs;

use maxplus_hjb::config::{ExperimentConfig, PolicyKind, ProblemConfig, Scheme};
use maxplus_hjb::grid::{Grid, ValueField};
use maxplus_hjb::hinfty::{quadratic_example_certificate, simulate_dissipation, v_infinity_sweep, QuadraticExample};
use maxplus_hjb::io::svg::{Chart, Series};
use maxplus_hjb::io::{decode_value_field, encode_value_field, fmt_f64, value_field_to_csv_string, Table};
use maxplus_hjb::merton::{modified_merton_problem, qvi_identity_check, BTildeOracle};
use maxplus_hjb::problem::ControlProblem;
use maxplus_hjb::properties::{property_suite, PROPERTIES};
use maxplus_hjb::risk::{
    convergence_study, psi_theta_constant_control_mc, sandwich_check, solve_v_theta, RiskSolution,
};
use maxplus_hjb::solver::{
    residual_qvi, solve_pde_fd, solve_pde_fd_from, solve_qvi_semilagrangian, solve_qvi_semilagrangian_from, FdForm,
};
use maxplus_hjb::trajectory::{
    argmin_policy, maxplus_expectation_policy, verify_lower_bound, worst_bracket_policy, ExpectationSeeds, Policy,
    VerificationMode,
};
use maxplus_hjb::Error;
use serde_json::{json, Value};

use crate::output::OutputDir;
use crate::CliError;

/// Tolerance of the per-path dissipation inequality.
const DISSIPATION_TOL: f64 = 1e-8;
/// Identity residual bounds for the Merton oracle.
const MERTON_LOG_TOL: f64 = 1e-12;
const MERTON_ODE_TOL: f64 = 1e-10;

pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
    /// Time steps actually used, when a CFL retry changed them.
    pub steps: Option<usize>,
}

impl Outcome {
    fn pass(summary: Value) -> Self {
        Self {
            passed: true,
            summary,
            steps: None,
        }
    }
}

fn solver(e: Error) -> CliError {
    CliError::Solver(e.to_string())
}

fn validation(e: Error) -> CliError {
    CliError::Validation(e.to_string())
}

fn setup(cfg: &ExperimentConfig) -> Result<(ControlProblem, Grid), CliError> {
    let problem = cfg.problem.build().map_err(validation)?;
    let grid = cfg.grid_for(&problem).map_err(validation)?;
    Ok((problem, grid))
}

/// Terminal data from `solver.resume_from`: the first slice of a binary
/// dump on the same spatial grid.
fn resume_terminal(cfg: &ExperimentConfig, grid: &Grid) -> Result<Option<Vec<f64>>, CliError> {
    let Some(path) = &cfg.solver.resume_from else {
        return Ok(None);
    };
    let bytes = fs::read(path).map_err(|e| CliError::Validation(format!("solver.resume_from `{path}`: {e}")))?;
    let dump = decode_value_field(&bytes).map_err(|e| CliError::Validation(format!("solver.resume_from: {e}")))?;
    if dump.grid().axes() != grid.axes() {
        return Err(CliError::Validation(
            "solver.resume_from: the dump's spatial grid differs from [grid]".into(),
        ));
    }
    Ok(Some(dump.slice(0).to_vec()))
}

/// `(x, values[i])` along the first axis, other coordinates at their middle
/// index.
fn profile(grid: &Grid, values: &[f64]) -> Vec<(f64, f64)> {
    let axes = grid.axes();
    let mut base = 0;
    for k in 1..axes.len() {
        base += (axes[k].points / 2) * grid.stride(k);
    }
    (0..axes[0].points)
        .map(|j| (axes[0].coord(j), values[base + j * grid.stride(0)]))
        .collect()
}

fn coordinate_header(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["x".into()]
    } else {
        (1..=n).map(|k| format!("x{k}")).collect()
    }
}

fn sl_solve(cfg: &ExperimentConfig, problem: &ControlProblem, grid: &Grid) -> Result<ValueField, CliError> {
    match resume_terminal(cfg, grid)? {
        Some(t) => solve_qvi_semilagrangian_from(problem, grid, &t),
        None => solve_qvi_semilagrangian(problem, grid),
    }
    .map_err(solver)
}

fn write_field(
    out: &mut OutputDir,
    problem: &ControlProblem,
    field: &ValueField,
    label: &str,
) -> Result<Value, CliError> {
    let grid = field.grid();
    out.write("value_field.csv", value_field_to_csv_string(field))?;
    out.write("value_field.bin", encode_value_field(field))?;
    let residual = out.timed("residual", || residual_qvi(problem, field)).map_err(solver)?;
    let inner = grid.inner_nodes();
    let mut table = Table::new(&["t", "sup_abs_inner", "min_inner"]);
    let mut worst = 0.0f64;
    // the terminal slice has no forward neighbour
    for k in 0..grid.steps() {
        let slice = residual.slice(k);
        let sup = inner.iter().map(|&i| slice[i].abs()).fold(0.0, f64::max);
        let min = inner.iter().map(|&i| slice[i]).fold(f64::INFINITY, f64::min);
        worst = worst.max(sup);
        table.push_floats(&[grid.time(k), sup, min]);
    }
    out.write("residual.csv", table.to_csv())?;
    let first = profile(grid, field.slice(0));
    let last = profile(grid, field.slice(grid.steps()));
    out.write_svg("value_t0.svg", || {
        Chart::new(format!("{label}: value at t0 and at T"), "x", "V")
            .with(Series::new("V(t0, x)", first))
            .with(Series::new("V(T, x)", last))
            .render()
    })?;
    let values = field.slice(0);
    Ok(json!({
        "scheme": label,
        "nodes": grid.len(),
        "steps": grid.steps(),
        "v_t0_min": values.iter().copied().fold(f64::INFINITY, f64::min),
        "v_t0_max": values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "residual_sup_inner": worst,
    }))
}

/// Runs `solve`, and when `grid.steps` was left to its default and the
/// solve reports a CFL violation, retries once with the suggested step.
fn with_cfl_retry(
    grid: &Grid,
    steps_fixed: bool,
    solve: impl Fn(&Grid) -> Result<ValueField, Error>,
) -> Result<ValueField, CliError> {
    match solve(grid) {
        Err(Error::Cfl { suggested_delta, .. }) if !steps_fixed => {
            let span = grid.horizon() - grid.t0();
            let steps = (span / (0.95 * suggested_delta)).ceil() as usize;
            let finer = grid.with_steps(steps.max(grid.steps() + 1)).map_err(solver)?;
            solve(&finer).map_err(solver)
        }
        other => other.map_err(solver),
    }
}

pub fn solve_qvi(cfg: &ExperimentConfig, steps_fixed: bool, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid) = setup(cfg)?;
    let field = match cfg.solver.scheme {
        Scheme::SemiLagrangian => out.timed("solve", || sl_solve(cfg, &problem, &grid))?,
        Scheme::FdQvi => out.timed("solve", || fd_solve(cfg, &problem, &grid, FdForm::Qvi, steps_fixed))?,
        Scheme::FdHForm => out.timed("solve", || fd_solve(cfg, &problem, &grid, FdForm::HForm, steps_fixed))?,
    };
    let label = scheme_label(cfg.solver.scheme);
    let mut outcome = Outcome::pass(write_field(out, &problem, &field, label)?);
    outcome.steps = Some(field.grid().steps());
    Ok(outcome)
}

fn scheme_label(s: Scheme) -> &'static str {
    match s {
        Scheme::SemiLagrangian => "semi-lagrangian",
        Scheme::FdQvi => "fd-qvi",
        Scheme::FdHForm => "fd-h-form",
    }
}

fn fd_solve(
    cfg: &ExperimentConfig,
    problem: &ControlProblem,
    grid: &Grid,
    form: FdForm,
    steps_fixed: bool,
) -> Result<ValueField, CliError> {
    let terminal = resume_terminal(cfg, grid)?;
    with_cfl_retry(grid, steps_fixed, |g| match &terminal {
        Some(t) => solve_pde_fd_from(problem, g, form, t),
        None => solve_pde_fd(problem, g, form),
    })
}

/// The finite-difference PDE solve; `scheme = "fd-qvi"` selects the QVI
/// form, anything else the Hamiltonian form.
pub fn solve_pde(cfg: &ExperimentConfig, steps_fixed: bool, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid) = setup(cfg)?;
    let (form, scheme) = if cfg.solver.scheme == Scheme::FdQvi {
        (FdForm::Qvi, Scheme::FdQvi)
    } else {
        (FdForm::HForm, Scheme::FdHForm)
    };
    let field = out.timed("solve", || fd_solve(cfg, &problem, &grid, form, steps_fixed))?;
    let mut outcome = Outcome::pass(write_field(out, &problem, &field, scheme_label(scheme))?);
    outcome.steps = Some(field.grid().steps());
    Ok(outcome)
}

fn build_policy(cfg: &ExperimentConfig, problem: &ControlProblem, field: Option<&ValueField>) -> Policy {
    match (cfg.policy.kind, field) {
        (PolicyKind::Argmin, Some(f)) => argmin_policy(problem, f),
        (PolicyKind::Farthest, Some(f)) => worst_bracket_policy(problem, f),
        _ => Policy::constant(&cfg.policy.control),
    }
}

pub fn eval_policy(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid) = setup(cfg)?;
    let field = out.timed("solve", || sl_solve(cfg, &problem, &grid))?;
    let policy = build_policy(cfg, &problem, Some(&field));
    let mode = if cfg.policy.kind == PolicyKind::Argmin {
        VerificationMode::Equality { tol: cfg.tol }
    } else {
        VerificationMode::LowerBound { tol: 1e-6 }
    };
    let states = cfg.policy_states(&grid);
    let report = out
        .timed("evaluate", || {
            verify_lower_bound(
                &problem,
                &policy,
                &field,
                cfg.policy.t0,
                &states,
                &cfg.policy.optimizer,
                mode,
            )
        })
        .map_err(solver)?;
    let mut header = coordinate_header(problem.state_dim());
    header.extend(["W", "J", "J_minus_W", "ok"].map(String::from));
    let mut table = Table::new(&header);
    for r in &report.records {
        let mut row: Vec<String> = r.x.iter().map(|v| fmt_f64(*v)).collect();
        row.extend([
            fmt_f64(r.w),
            fmt_f64(r.j),
            fmt_f64(r.j - r.w),
            u8::from(r.ok).to_string(),
        ]);
        table.push(row);
    }
    out.write("policy_eval.csv", table.to_csv())?;
    let check = match mode {
        VerificationMode::Equality { tol } => format!("|J - W| <= {tol}"),
        VerificationMode::LowerBound { tol } => format!("J >= W - {tol}"),
    };
    Ok(Outcome {
        steps: None,
        passed: report.passed(),
        summary: json!({
            "policy": report.policy,
            "check": check,
            "states": report.records.len(),
            "failures": report.counterexamples.len(),
            "max_abs_gap": report.max_gap(),
        }),
    })
}

pub fn maxplus_expect(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid) = setup(cfg)?;
    let field = if cfg.policy.kind == PolicyKind::Constant {
        None
    } else {
        Some(out.timed("solve", || sl_solve(cfg, &problem, &grid))?)
    };
    let policy = build_policy(cfg, &problem, field.as_ref());
    let states = cfg.policy_states(&grid);
    let seeds = ExpectationSeeds { field: field.as_ref() };
    let estimates = out.timed("optimize", || {
        states
            .iter()
            .map(|x| {
                maxplus_expectation_policy(
                    &problem,
                    &policy,
                    cfg.policy.t0,
                    x,
                    grid.horizon(),
                    &cfg.policy.optimizer,
                    seeds,
                )
            })
            .collect::<Result<Vec<_>, _>>()
    });
    let estimates = estimates.map_err(solver)?;
    let mut header = coordinate_header(problem.state_dim());
    header.extend(["J", "best_start", "evaluations"].map(String::from));
    let mut table = Table::new(&header);
    let mut values = Vec::new();
    for (x, est) in states.iter().zip(&estimates) {
        let best = est
            .starts
            .iter()
            .filter(|s| s.error.is_none())
            .max_by(|a, b| a.final_payoff.total_cmp(&b.final_payoff));
        let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(est.value));
        row.push(best.map_or_else(|| "none".to_string(), |s| s.label.clone()));
        row.push(est.starts.iter().map(|s| s.evaluations).sum::<usize>().to_string());
        table.push(row);
        values.push(est.value);
    }
    out.write("maxplus_expectation.csv", table.to_csv())?;
    Ok(Outcome::pass(json!({
        "policy": policy.name(),
        "horizon": grid.horizon(),
        "estimates": values,
        "lower_bounds": true,
    })))
}

/// Solves the reference QVI and the θ sweep. When the configuration leaves
/// `grid.steps` unset and the risk-sensitive scheme reports a CFL
/// violation, the step count is raised and both solves are repeated.
fn risk_sweep(
    cfg: &ExperimentConfig,
    steps_fixed: bool,
    out: &mut OutputDir,
) -> Result<
    (
        ControlProblem,
        Grid,
        ValueField,
        maxplus_hjb::risk::ThetaSweepReport,
        Vec<RiskSolution>,
    ),
    CliError,
> {
    let (problem, mut grid) = setup(cfg)?;
    for _ in 0..4 {
        let reference = out
            .timed("reference solve", || solve_qvi_semilagrangian(&problem, &grid))
            .map_err(solver)?;
        let study = out.timed("theta sweep", || {
            convergence_study(&problem, &grid, &cfg.sweep.thetas, &reference, cfg.sweep.target)
        });
        match study {
            Ok((report, sols)) => return Ok((problem, grid, reference, report, sols)),
            Err(Error::Cfl { suggested_delta, .. }) if !steps_fixed => {
                let span = grid.horizon() - grid.t0();
                let steps = (span / (0.9 * suggested_delta)).ceil() as usize;
                grid = grid.with_steps(steps.max(grid.steps() + 1)).map_err(solver)?;
            }
            Err(e) => return Err(solver(e)),
        }
    }
    Err(CliError::Solver(
        "no stable time step found for the risk-sensitive sweep; set grid.steps".into(),
    ))
}

pub fn risk_limit(cfg: &ExperimentConfig, steps_fixed: bool, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid, _reference, report, sols) = risk_sweep(cfg, steps_fixed, out)?;
    let mut table = Table::new(&["theta", "distance", "clamp_events", "clamp_rate", "warning"]);
    for (row, sol) in report.rows.iter().zip(&sols) {
        table.push(vec![
            fmt_f64(row.theta),
            fmt_f64(row.distance),
            sol.clamp_events.to_string(),
            fmt_f64(row.clamp_rate),
            row.warning.clone().unwrap_or_default(),
        ]);
    }
    out.write("risk_distance.csv", table.to_csv())?;
    let points: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.theta, r.distance)).collect();
    out.write_svg("risk_distance.svg", || {
        Chart::new("distance of V_theta to V on the study window", "theta", "sup distance")
            .log_x()
            .with(Series::new("distance", points))
            .render()
    })?;

    let inner = grid.inner_nodes();
    let t_max = grid.horizon() - 0.1;
    let mut sandwich = Table::new(&[
        "theta",
        "epsilon",
        "ceiling_rate",
        "floor_violation",
        "ceiling_violation",
        "holds",
    ]);
    let mut sandwich_ok = true;
    for sol in sols.iter().filter(|s| s.theta >= 20.0) {
        let s = sandwich_check(&problem, &sol.field, &inner, t_max, cfg.sweep.epsilon).map_err(solver)?;
        sandwich_ok &= s.holds();
        sandwich.push(vec![
            fmt_f64(sol.theta),
            fmt_f64(s.epsilon),
            fmt_f64(s.ceiling_rate),
            fmt_f64(s.floor_violation),
            fmt_f64(s.ceiling_violation),
            u8::from(s.holds()).to_string(),
        ]);
    }
    out.write("risk_sandwich.csv", sandwich.to_csv())?;

    let mut mc_summary = Value::Null;
    if cfg.sweep.mc_samples > 0 {
        mc_summary = risk_monte_carlo(cfg, &problem, &grid, out)?;
    }
    Ok(Outcome {
        steps: Some(grid.steps()),
        passed: report.passed() && sandwich_ok,
        summary: json!({
            "steps": grid.steps(),
            "distances": report.rows.iter().map(|r| r.distance).collect::<Vec<_>>(),
            "nonincreasing_with_slack": report.nonincreasing_with_slack,
            "final_below_target": report.final_below_target,
            "sandwich_holds": sandwich_ok,
            "monte_carlo": mc_summary,
        }),
    })
}

fn risk_monte_carlo(
    cfg: &ExperimentConfig,
    problem: &ControlProblem,
    grid: &Grid,
    out: &mut OutputDir,
) -> Result<Value, CliError> {
    let s = &cfg.sweep;
    let single = problem.restricted_to(s.mc_control).map_err(validation)?;
    let u0 = problem.controls().get(s.mc_control).to_vec();
    let field = out
        .timed("mc pde solve", || solve_v_theta(&single, grid, s.mc_theta))
        .map_err(solver)?
        .field;
    let x0 = if s.mc_state.is_empty() {
        grid.axes().iter().map(|a| 0.5 * (a.lower + a.upper)).collect()
    } else {
        s.mc_state.clone()
    };
    let t0 = grid.t0();
    let (mean, stderr) = out
        .timed("monte carlo", || {
            psi_theta_constant_control_mc(
                problem,
                &u0,
                s.mc_theta,
                t0,
                &x0,
                grid.horizon(),
                s.mc_samples,
                s.mc_dt,
                cfg.seed,
            )
        })
        .map_err(solver)?;
    let pde = (s.mc_theta * field.value_at(t0, &x0)).exp();
    let mut table = Table::new(&["theta", "psi_pde", "psi_mc", "stderr", "z"]);
    let z = (pde - mean) / stderr;
    table.push_floats(&[s.mc_theta, pde, mean, stderr, z]);
    out.write("risk_mc.csv", table.to_csv())?;
    Ok(json!({ "psi_pde": pde, "psi_mc": mean, "stderr": stderr, "z": z }))
}

fn merton_config(cfg: &ExperimentConfig) -> maxplus_hjb::config::MertonConfig {
    match &cfg.problem {
        ProblemConfig::Merton(m) => m.clone(),
        _ => Default::default(),
    }
}

pub fn merton_oracle(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let m = merton_config(cfg);
    let params = m.params();
    let oracle = BTildeOracle::new(&params, m.cap, 0.0).map_err(validation)?;
    let mut table = Table::new(&[
        "t",
        "B",
        "B_dot",
        "c_star",
        "B_tilde",
        "c_tilde",
        "log_identity_residual",
        "ode_residual",
    ]);
    let samples = 100;
    let (mut worst_log, mut worst_ode) = (0.0f64, 0.0f64);
    let mut b_curve = Vec::new();
    let mut bt_curve = Vec::new();
    for j in 0..samples {
        let t = params.horizon * j as f64 / samples as f64;
        let b = params.b(t).map_err(solver)?;
        let (r_log, r_ode) = qvi_identity_check(&params, t).map_err(solver)?;
        worst_log = worst_log.max(r_log.abs());
        worst_ode = worst_ode.max(r_ode.abs());
        table.push_floats(&[
            t,
            b,
            params.b_dot(t).map_err(solver)?,
            params.c_star(t).map_err(solver)?,
            oracle.b_tilde(t),
            oracle.c_tilde(t),
            r_log,
            r_ode,
        ]);
        b_curve.push((t, b));
        bt_curve.push((t, oracle.b_tilde(t)));
    }
    out.write("merton_oracle.csv", table.to_csv())?;
    out.write_svg("merton_oracle.svg", || {
        Chart::new("time parts of the Merton values", "t", "B")
            .with(Series::new("B(t)", b_curve))
            .with(Series::new("B_tilde(t), capped consumption", bt_curve))
            .render()
    })?;
    Ok(Outcome {
        steps: None,
        passed: worst_log <= MERTON_LOG_TOL && worst_ode <= MERTON_ODE_TOL,
        summary: json!({
            "nu": params.nu(),
            "k_star": params.k_star(),
            "max_log_identity_residual": worst_log,
            "max_ode_residual": worst_ode,
        }),
    })
}

pub fn merton_check(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let m = merton_config(cfg);
    let (problem, oracle) = modified_merton_problem(&m.params(), &m.options()).map_err(validation)?;
    let grid = cfg.grid_for(&problem).map_err(validation)?;
    let field = out.timed("solve", || sl_solve(cfg, &problem, &grid))?;
    let inner = grid.inner_nodes();
    let mut table = Table::new(&["t", "sup_error_inner"]);
    let mut worst = 0.0f64;
    for k in 0..=grid.steps() {
        let t = grid.time(k);
        let slice = field.slice(k);
        let err = inner
            .iter()
            .map(|&i| (slice[i] - oracle.value(t, grid.axes()[0].coord(i))).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        table.push_floats(&[t, err]);
    }
    out.write("merton_check.csv", table.to_csv())?;
    let t0 = grid.t0();
    let mut profile_table = Table::new(&["y", "V", "oracle"]);
    let mut solved = Vec::new();
    let mut exact = Vec::new();
    for (i, v) in field.slice(0).iter().enumerate() {
        let y = grid.axes()[0].coord(i);
        profile_table.push_floats(&[y, *v, oracle.value(t0, y)]);
        solved.push((y, *v));
        exact.push((y, oracle.value(t0, y)));
    }
    out.write("merton_profile.csv", profile_table.to_csv())?;
    out.write_svg("merton_profile.svg", || {
        Chart::new("capped Merton problem at t0", "y", "V")
            .with(Series::new("semi-Lagrangian", solved))
            .with(Series::new("-y + B_tilde(t0)", exact))
            .render()
    })?;
    println!(
        "merton-check: sup error on the inner half-domain {worst:.6e} (tolerance {})",
        cfg.tol
    );
    Ok(Outcome {
        steps: None,
        passed: worst <= cfg.tol,
        summary: json!({ "sup_error_inner": worst, "tol": cfg.tol }),
    })
}

fn hinfty_params(cfg: &ExperimentConfig) -> QuadraticExample {
    match &cfg.problem {
        ProblemConfig::HinftyQuadratic(q) => *q,
        _ => QuadraticExample::default(),
    }
}

pub fn hinfty_certify(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let params = hinfty_params(cfg);
    let cert = out
        .timed("certificate", || quadratic_example_certificate(&params))
        .map_err(validation)?;
    let k_used = cert.k.or(cert.infeasibility.as_ref().map(|i| i.best_k));
    let mut table = Table::new(&["k", "condition", "lhs", "rhs", "holds"]);
    for c in &cert.inequalities {
        table.push(vec![
            k_used.map(fmt_f64).unwrap_or_default(),
            c.name.clone(),
            fmt_f64(c.lhs),
            fmt_f64(c.rhs),
            u8::from(c.holds).to_string(),
        ]);
    }
    out.write("hinfty_inequalities.csv", table.to_csv())?;

    let (Some(k), Some(storage), Some(grid_cert)) = (cert.k, cert.storage(), cert.certificate.as_ref()) else {
        let violated: Vec<&str> = cert
            .infeasibility
            .as_ref()
            .map(|i| i.violated.iter().map(|c| c.name.as_str()).collect())
            .unwrap_or_default();
        println!("hinfty-certify: no K certifies; violated: {}", violated.join(", "));
        return Ok(Outcome {
            steps: None,
            passed: false,
            summary: json!({ "certified": false, "best_k": k_used, "violated": violated }),
        });
    };

    let mut margins = Table::new(&["x", "z", "hamiltonian", "cost_gap", "margin"]);
    for (j, y) in grid_cert.points.iter().enumerate() {
        margins.push_floats(&[
            y[0],
            y[1],
            grid_cert.hamiltonian[j],
            grid_cert.cost_gap[j],
            grid_cert.margins[j],
        ]);
    }
    out.write("hinfty_margins.csv", margins.to_csv())?;

    let h = &cfg.hinfty;
    let states: Vec<Vec<f64>> = (0..h.runs)
        .map(|i| {
            let s = if h.runs == 1 {
                0.5
            } else {
                i as f64 / (h.runs - 1) as f64
            };
            vec![h.x_min + (h.x_max - h.x_min) * s, 0.0]
        })
        .collect();
    let problem = params.augmented_problem().map_err(validation)?;
    let mut opts = h.optimizer.clone();
    opts.seed = cfg.seed;
    let report = out
        .timed("adversarial runs", || {
            simulate_dissipation(
                &problem,
                &storage,
                &Policy::constant(&[0.0]),
                &states,
                h.horizon,
                &opts,
                DISSIPATION_TOL,
            )
        })
        .map_err(solver)?;
    let mut runs = Table::new(&["x", "z", "payoff", "storage", "margin", "energy"]);
    for r in &report.runs {
        runs.push_floats(&[r.x0[0], r.x0[1], r.payoff, r.storage, r.margin, r.energy]);
    }
    out.write("hinfty_runs.csv", runs.to_csv())?;
    if !report.counterexamples.is_empty() {
        let text = serde_json::to_string_pretty(&report.counterexamples).map_err(|e| CliError::Io(e.to_string()))?;
        out.write("hinfty_counterexamples.json", text)?;
    }
    println!(
        "hinfty-certify: K = {k:.6}, grid max margin {:.3e}, adversarial min margin {:.3e}",
        grid_cert.max_margin, report.min_margin
    );
    Ok(Outcome {
        steps: None,
        passed: cert.certified() && report.passed(),
        summary: json!({
            "certified": cert.certified(),
            "k": k,
            "storage": storage.describe(),
            "grid_max_margin": grid_cert.max_margin,
            "adversarial_runs": report.runs.len(),
            "adversarial_min_margin": report.min_margin,
            "counterexamples": report.counterexamples.len(),
        }),
    })
}

pub fn hinfty_sweep(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (problem, grid) = setup(cfg)?;
    let horizons = &cfg.sweep.horizons;
    let sweep = out
        .timed("sweep", || v_infinity_sweep(&problem, &grid, horizons))
        .map_err(solver)?;
    let mut rows = Table::new(&["horizon", "steady_residual", "max_value"]);
    for r in &sweep.rows {
        rows.push_floats(&[r.horizon, r.steady_residual, r.max_value]);
    }
    out.write("horizon_sweep.csv", rows.to_csv())?;
    let n = grid.dim();
    let mut header = coordinate_header(n);
    header.extend(horizons.iter().map(|t| format!("V_T{t}")));
    let mut values = Table::new(&header);
    for i in 0..grid.len() {
        let mut row = grid.point(i);
        row.extend(sweep.values.iter().map(|v| v[i]));
        values.push_floats(&row);
    }
    out.write("horizon_values.csv", values.to_csv())?;
    let series: Vec<Series> = horizons
        .iter()
        .zip(&sweep.values)
        .map(|(t, v)| Series::new(format!("T = {t}"), profile(&grid, v)))
        .collect();
    out.write_svg("horizon_sweep.svg", || {
        series
            .into_iter()
            .fold(Chart::new("V(t0, x; T) across horizons", "x", "V"), Chart::with)
            .render()
    })?;

    let mut summary = json!({
        "nondecreasing": sweep.nondecreasing(),
        "max_decrease": sweep.max_decrease,
        "residuals_decreasing": sweep.residuals_decreasing(),
    });
    let mut passed = sweep.nondecreasing();
    if let ProblemConfig::HinftyQuadratic(params) = &cfg.problem {
        let cert = quadratic_example_certificate(params).map_err(validation)?;
        match (cert.k, cert.storage()) {
            (Some(k), Some(storage)) => {
                let excess = sweep.excess_over(&storage);
                let t_max = horizons.last().copied().unwrap_or(0.0) - grid.t0();
                let allowance = params.dominance_allowance(k, grid.spacing(0), t_max);
                passed &= excess <= allowance;
                summary["storage"] = json!(storage.describe());
                summary["excess_over_storage"] = json!(excess);
                summary["allowance"] = json!(allowance);
            }
            _ => {
                passed = false;
                summary["storage"] = Value::Null;
            }
        }
    }
    Ok(Outcome {
        passed,
        summary,
        steps: None,
    })
}

pub fn properties(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let report = out
        .timed("property suite", || property_suite(cfg.seed, &cfg.properties))
        .map_err(validation)?;
    let mut table = Table::new(&["property", "checked", "failures"]);
    for p in &report.properties {
        table.push(vec![p.name.clone(), p.checked.to_string(), p.failures.to_string()]);
    }
    table.push(vec![
        "semiring identities".into(),
        report.instances.to_string(),
        report.semiring_failures.to_string(),
    ]);
    table.push(vec![
        "strict-gap instance K = 0 < H = 0.5".into(),
        "1".into(),
        u8::from(!report.gap_instance.holds).to_string(),
    ]);
    out.write("properties.csv", table.to_csv())?;
    let failures: Vec<Value> = report
        .properties
        .iter()
        .filter_map(|p| {
            p.first_failure
                .as_ref()
                .map(|inst| json!({ "property": p.name, "detail": p.detail, "instance": inst }))
        })
        .collect();
    if !failures.is_empty() {
        let text = serde_json::to_string_pretty(&failures).map_err(|e| CliError::Io(e.to_string()))?;
        out.write("property_failures.json", text)?;
    }
    let failed = report.failed_properties();
    if !failed.is_empty() {
        println!("property-suite: failed: {}", failed.join(", "));
    }
    Ok(Outcome {
        steps: None,
        passed: report.passed(),
        summary: json!({
            "instances": report.instances,
            "properties": PROPERTIES.len(),
            "failed": failed,
            "inject_k_fault": report.inject_k_fault,
            "gap_instance": { "k": report.gap_instance.k, "h": report.gap_instance.h },
        }),
    })
}
