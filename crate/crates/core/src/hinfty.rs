//! Infinite-horizon tools: dissipation certificates for a stationary
//! policy, the augmented-state embedding of the finite-gain inequality
//! `μ[∫l₁ + G(x(T))] ≤ W(x) + ½∫|v|²`, the quadratic-storage example, and
//! the horizon sweep of `V(0,x;T)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, ValueField};
use crate::problem::{hamiltonian_from_parts, ControlProblem, ControlSet};
use crate::solver::solve_qvi_semilagrangian;
use crate::trajectory::{
    integrate, maxplus_expectation_policy, DisturbancePath, ExpectationSeeds, OptimizerOptions, Policy,
};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A storage function `W` with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// `K|x|²`.
    Quadratic { k: f64 },
    /// `μ·x_last + base(x without its last coordinate)`, the storage of the
    /// augmented system.
    Augmented { mu: f64, base: Box<Storage> },
    /// Multilinear interpolant of node values; the gradient uses centered
    /// differences.
    Grid { grid: Grid, values: Vec<f64> },
}

impl Storage {
    pub fn grid(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "storage has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self::Grid { grid, values })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Quadratic { k } => k * x.iter().map(|c| c * c).sum::<f64>(),
            Self::Augmented { mu, base } => {
                let (head, last) = x.split_at(x.len() - 1);
                mu * last[0] + base.value(head)
            }
            Self::Grid { grid, values } => grid.interpolate(values, x),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Quadratic { k } => {
                for (o, c) in out.iter_mut().zip(x) {
                    *o = 2.0 * k * c;
                }
            }
            Self::Augmented { mu, base } => {
                let m = x.len() - 1;
                base.gradient_into(&x[..m], &mut out[..m]);
                out[m] = *mu;
            }
            Self::Grid { grid, values } => grid.gradient_at(values, x, out),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Quadratic { k } => format!("{k}|x|^2"),
            Self::Augmented { mu, base } => format!("{mu}*z + {}", base.describe()),
            Self::Grid { grid, .. } => format!("grid storage on {} nodes", grid.len()),
        }
    }
}

/// Margins `max{H^{u(y)}(y, ∇W(y)), l(y,u(y)) − W(y)}` of a stationary policy
/// over a check grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub storage: String,
    pub policy: String,
    pub points: Vec<Vec<f64>>,
    pub hamiltonian: Vec<f64>,
    pub cost_gap: Vec<f64>,
    pub margins: Vec<f64>,
    pub max_margin: f64,
    pub worst_point: Vec<f64>,
    pub tol: f64,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.max_margin <= self.tol
    }
}

/// Evaluates the certificate at every node of `check_grid`. The policy is
/// queried at time 0.
pub fn check_dissipation_certificate(
    problem: &ControlProblem,
    storage: &Storage,
    policy: &Policy,
    check_grid: &Grid,
    tol: f64,
) -> Result<Certificate> {
    let n = problem.state_dim();
    if check_grid.dim() != n {
        return Err(Error::Dimension(format!(
            "check grid has {} axes, state dimension is {n}",
            check_grid.dim()
        )));
    }
    if let Storage::Grid { grid, .. } = storage {
        if grid.dim() != n {
            return Err(Error::Dimension("storage grid dimension".into()));
        }
    }
    let m = problem.controls().dim();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..check_grid.len())
        .into_par_iter()
        .map(|i| {
            let y = check_grid.point(i);
            let mut u = vec![0.0; m];
            policy.control_into(0.0, &y, &mut u);
            let mut grad = vec![0.0; n];
            storage.gradient_into(&y, &mut grad);
            let h = hamiltonian_from_parts(
                &problem.drift(&y, &u),
                &problem.sigma(&y, &u),
                &grad,
                problem.noise_dim(),
            );
            let gap = problem.cost(&y, &u) - storage.value(&y);
            (y, h, gap)
        })
        .collect();
    let mut cert = Certificate {
        storage: storage.describe(),
        policy: policy.name().to_string(),
        points: Vec::with_capacity(rows.len()),
        hamiltonian: Vec::with_capacity(rows.len()),
        cost_gap: Vec::with_capacity(rows.len()),
        margins: Vec::with_capacity(rows.len()),
        max_margin: f64::NEG_INFINITY,
        worst_point: Vec::new(),
        tol,
    };
    for (y, h, gap) in rows {
        let margin = h.max(gap);
        if margin > cert.max_margin || cert.worst_point.is_empty() {
            cert.max_margin = margin;
            cert.worst_point = y.clone();
        }
        cert.points.push(y);
        cert.hamiltonian.push(h);
        cert.cost_gap.push(gap);
        cert.margins.push(margin);
    }
    Ok(cert)
}

/// The `(n+1)`-dimensional problem with `dz/ds = l₁(x,u)`, zero noise in
/// `z`, and cost `μ(z + G(x))`. The `z` axis of the domain is `[0, z_max]`.
pub fn augmented_embedding(
    problem: &ControlProblem,
    l1: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    mu: f64,
    z_max: f64,
) -> Result<ControlProblem> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(invalid("hinfty.mu", "must be a nonnegative number"));
    }
    if !(z_max > 0.0) {
        return Err(invalid("hinfty.z_max", "must be positive"));
    }
    let n = problem.state_dim();
    let d = problem.noise_dim();
    let l1: CostFn = Arc::new(l1);
    let g: ScalarFn = Arc::new(terminal);
    let mut domain = problem.domain().to_vec();
    domain.push((0.0, z_max));
    let (pf, ps) = (problem.clone(), problem.clone());
    let l1_drift = Arc::clone(&l1);
    ControlProblem::builder(format!("{}-augmented", problem.name()), n + 1, d)
        .drift(move |x, u, out| {
            pf.drift_into(&x[..n], u, &mut out[..n]);
            out[n] = l1_drift(&x[..n], u);
        })
        .diffusion(move |x, u, out| {
            ps.sigma_into(&x[..n], u, &mut out[..n * d]);
            out[n * d..].fill(0.0);
        })
        .cost(move |x, _| mu * (x[n] + g(&x[..n])))
        .controls(problem.controls().clone())
        .domain(domain)
        .build()
}

/// Parameters of the quadratic example: a stabilizing policy with
/// `f·x ≤ −c|x|²`, `0 ≤ l₁ ≤ C₁|x|²`, `0 ≤ G ≤ C₂|x|²` and `‖σσᵀ‖ = a_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticExample {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub a_norm: f64,
    pub mu: f64,
    /// Half-width of the `x` box used for the grid certificate.
    pub half_width: f64,
    pub x_points: usize,
    /// Upper end of the `z` axis.
    pub z_max: f64,
    pub z_points: usize,
}

impl Default for QuadraticExample {
    fn default() -> Self {
        Self {
            c: 1.0,
            c1: 1.0,
            c2: 1.0,
            a_norm: 0.1,
            mu: 0.05,
            half_width: 2.0,
            x_points: 81,
            z_max: 4.0,
            z_points: 41,
        }
    }
}

impl QuadraticExample {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(invalid("hinfty.c", "must be positive"));
        }
        if !(self.a_norm > 0.0) {
            return Err(invalid("hinfty.a_norm", "must be positive"));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(invalid("hinfty.c1", "C1 and C2 must be nonnegative"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid("hinfty.mu", "must be a nonnegative number"));
        }
        if !(self.half_width > 0.0 && self.z_max > 0.0) {
            return Err(invalid("hinfty.half_width", "box sizes must be positive"));
        }
        if self.x_points < 3 || self.z_points < 3 {
            return Err(invalid("hinfty.x_points", "need at least 3 points per axis"));
        }
        Ok(())
    }

    /// The scalar instance `f = −cx`, `σ = √a_norm`, one control.
    pub fn base_problem(&self) -> Result<ControlProblem> {
        self.validate()?;
        let c = self.c;
        let s = self.a_norm.sqrt();
        ControlProblem::builder("quadratic-example", 1, 1)
            .drift(move |x, _, out| out[0] = -c * x[0])
            .diffusion(move |_, _, out| out[0] = s)
            .controls(ControlSet::singleton(&[0.0])?)
            .domain(vec![(-self.half_width, self.half_width)])
            .build()
    }

    /// Augmented instance with `l₁ = C₁x²` and `G = C₂x²`.
    pub fn augmented_problem(&self) -> Result<ControlProblem> {
        let (c1, c2) = (self.c1, self.c2);
        augmented_embedding(
            &self.base_problem()?,
            move |x, _| c1 * x[0] * x[0],
            move |x| c2 * x[0] * x[0],
            self.mu,
            self.z_max,
        )
    }

    /// Accumulated upward bias of the semi-Lagrangian scheme where the
    /// value touches `μz + Kx²`: linear interpolation of a parabola with
    /// curvature `K` on spacing `h` gains at most `δ·½‖a‖(Kh)²` per step.
    pub fn dominance_allowance(&self, k: f64, h: f64, horizon: f64) -> f64 {
        horizon * 0.5 * self.a_norm * (k * h).powi(2)
    }

    pub fn check_grid(&self) -> Result<Grid> {
        use crate::grid::Axis;
        Grid::new(
            vec![
                Axis::new(-self.half_width, self.half_width, self.x_points),
                Axis::new(0.0, self.z_max, self.z_points),
            ],
            0.0,
            1.0,
            1,
        )
    }

    /// The four sufficient conditions for `W = K|x|²`, in the order
    /// `K‖a‖ < c`, `μ < 1`, `μC₂ < K`, `C₁μ + 2K²‖a‖² − Kc ≤ 0`.
    pub fn inequalities(&self, k: f64) -> Vec<InequalityCheck> {
        let a = self.a_norm;
        let entry = |name: &str, lhs: f64, rhs: f64, strict: bool| InequalityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            holds: if strict { lhs < rhs } else { lhs <= rhs },
        };
        vec![
            entry("K*|a| < c", k * a, self.c, true),
            entry("mu < 1", self.mu, 1.0, true),
            entry("mu*C2 < K", self.mu * self.c2, k, true),
            entry(
                "C1*mu + 2*K^2*|a|^2 - K*c <= 0",
                self.c1 * self.mu + 2.0 * k * k * a * a - k * self.c,
                0.0,
                false,
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infeasibility {
    /// The candidate violating the fewest conditions (smallest total excess
    /// on ties).
    pub best_k: f64,
    pub violated: Vec<InequalityCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticCertificate {
    pub params: QuadraticExample,
    pub k: Option<f64>,
    pub inequalities: Vec<InequalityCheck>,
    pub certificate: Option<Certificate>,
    pub infeasibility: Option<Infeasibility>,
}

impl QuadraticCertificate {
    pub fn certified(&self) -> bool {
        self.k.is_some() && self.certificate.as_ref().is_some_and(Certificate::passed)
    }

    pub fn storage(&self) -> Option<Storage> {
        self.k.map(|k| Storage::Augmented {
            mu: self.params.mu,
            base: Box::new(Storage::Quadratic { k }),
        })
    }
}

/// `count` log-spaced candidates for `K` on `[10⁻³, 10³]`.
pub fn k_candidates(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (count - 1) as f64))
        .collect()
}

pub const K_CANDIDATES: usize = 60;

/// Searches `K` over [`k_candidates`] for the first value meeting all four
/// conditions and checks the resulting storage `μz + K|x|²` on the grid of
/// the augmented instance.
pub fn quadratic_example_certificate(params: &QuadraticExample) -> Result<QuadraticCertificate> {
    params.validate()?;
    let candidates = k_candidates(K_CANDIDATES);
    let found = candidates
        .iter()
        .copied()
        .find(|&k| params.inequalities(k).iter().all(|c| c.holds));
    match found {
        Some(k) => {
            let problem = params.augmented_problem()?;
            let storage = Storage::Augmented {
                mu: params.mu,
                base: Box::new(Storage::Quadratic { k }),
            };
            let certificate = check_dissipation_certificate(
                &problem,
                &storage,
                &Policy::constant(&[0.0]),
                &params.check_grid()?,
                0.0,
            )?;
            Ok(QuadraticCertificate {
                params: *params,
                k: Some(k),
                inequalities: params.inequalities(k),
                certificate: Some(certificate),
                infeasibility: None,
            })
        }
        None => {
            let score = |k: f64| {
                let checks = params.inequalities(k);
                let count = checks.iter().filter(|c| !c.holds).count();
                let excess: f64 = checks.iter().filter(|c| !c.holds).map(|c| c.lhs - c.rhs).sum();
                (count, excess)
            };
            let best_k = candidates
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let (ca, ea) = score(a);
                    let (cb, eb) = score(b);
                    ca.cmp(&cb).then(ea.total_cmp(&eb))
                })
                .expect("candidate list is nonempty");
            let checks = params.inequalities(best_k);
            Ok(QuadraticCertificate {
                params: *params,
                k: None,
                inequalities: checks.clone(),
                certificate: None,
                infeasibility: Some(Infeasibility {
                    best_k,
                    violated: checks.into_iter().filter(|c| !c.holds).collect(),
                }),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationRun {
    pub x0: Vec<f64>,
    /// Best payoff `max_s l − ½∫|v|²` found by the adversary.
    pub payoff: f64,
    pub storage: f64,
    /// `W(x₀) − payoff`; the inequality holds when this is at least `−tol`.
    pub margin: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub run: DissipationRun,
    pub times: Vec<f64>,
    pub disturbance: Vec<f64>,
    pub states: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    pub horizon: f64,
    pub tol: f64,
    pub runs: Vec<DissipationRun>,
    pub min_margin: f64,
    pub counterexamples: Vec<Counterexample>,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// For every initial state, searches for the disturbance maximizing
/// `max_s l(x(s), u(x(s))) − ½∫|v|²` on `[0, T]` and compares it with
/// `W(x₀)`.
pub fn simulate_dissipation(
    problem: &ControlProblem,
    storage: &Storage,
    policy: &Policy,
    initial_states: &[Vec<f64>],
    horizon: f64,
    opts: &OptimizerOptions,
    tol: f64,
) -> Result<DissipationReport> {
    if initial_states.is_empty() {
        return Err(invalid("hinfty.initial_states", "need at least one initial state"));
    }
    let results: Vec<(DissipationRun, DisturbancePath)> = initial_states
        .par_iter()
        .map(|x0| {
            let est = maxplus_expectation_policy(problem, policy, 0.0, x0, horizon, opts, ExpectationSeeds::default())?;
            let w = storage.value(x0);
            Ok((
                DissipationRun {
                    x0: x0.clone(),
                    payoff: est.value,
                    storage: w,
                    margin: w - est.value,
                    energy: est.path.energy(),
                },
                est.path,
            ))
        })
        .collect::<Result<_>>()?;
    let mut counterexamples = Vec::new();
    for (run, path) in &results {
        if run.margin < -tol {
            let traj = integrate(problem, policy, path, 0.0, &run.x0, horizon, opts.dt)?;
            counterexamples.push(Counterexample {
                run: run.clone(),
                times: path.times().to_vec(),
                disturbance: path.values().to_vec(),
                states: traj.states.clone(),
            });
        }
    }
    let runs: Vec<DissipationRun> = results.into_iter().map(|(r, _)| r).collect();
    let min_margin = runs.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(DissipationReport {
        horizon,
        tol,
        runs,
        min_margin,
        counterexamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRow {
    pub horizon: f64,
    /// `sup |min_u max{H^u(x, ∇V), l − V}|` of `V(0,·;T)` on the inner half.
    pub steady_residual: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSweep {
    pub grid: Grid,
    pub rows: Vec<HorizonRow>,
    /// `V(0,·;T)` for each horizon.
    pub values: Vec<Vec<f64>>,
    /// Largest `V(0,x;T_k) − V(0,x;T_{k+1})` over all nodes and pairs.
    pub max_decrease: f64,
}

/// Rounding allowance for the horizon-monotonicity check.
pub const MONOTONE_TOL: f64 = 1e-12;

impl HorizonSweep {
    pub fn nondecreasing(&self) -> bool {
        self.max_decrease <= MONOTONE_TOL
    }

    pub fn residuals_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].steady_residual <= w[0].steady_residual)
    }

    /// Largest `V(0,x;T) − W(x)` over all horizons and nodes.
    pub fn excess_over(&self, storage: &Storage) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let mut x = vec![0.0; self.grid.dim()];
        for values in &self.values {
            for (i, v) in values.iter().enumerate() {
                self.grid.point_into(i, &mut x);
                worst = worst.max(v - storage.value(&x));
            }
        }
        worst
    }
}

/// Steady residual `min_u max{H^u(x, ∇V), l(x,u) − V}` at every node.
pub fn steady_residual(problem: &ControlProblem, grid: &Grid, values: &[f64]) -> Vec<f64> {
    let n = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let mut grad = vec![0.0; n];
            grid.node_gradient(values, i, &mut grad);
            problem
                .controls()
                .iter()
                .map(|u| problem.hamiltonian_u(&x, u, &grad).max(problem.cost(&x, u) - values[i]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Solves the QVI on `[t0, T]` for each horizon with the grid's step and
/// collects `V(t0, ·; T)`.
pub fn v_infinity_sweep(problem: &ControlProblem, grid: &Grid, horizons: &[f64]) -> Result<HorizonSweep> {
    if horizons.is_empty() || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sweep.horizons", "need a nonempty increasing list"));
    }
    if horizons[0] <= grid.t0() {
        return Err(invalid("sweep.horizons", "horizons must exceed the initial time"));
    }
    let inner = grid.inner_nodes();
    let solved: Vec<(HorizonRow, Vec<f64>)> = horizons
        .par_iter()
        .map(|&horizon| {
            let g = grid.with_horizon_same_step(horizon)?;
            let field: ValueField = solve_qvi_semilagrangian(problem, &g)?;
            let values = field.slice(0).to_vec();
            let residual = steady_residual(problem, &g, &values);
            let steady = inner.iter().map(|&i| residual[i].abs()).fold(0.0, f64::max);
            let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((
                HorizonRow {
                    horizon,
                    steady_residual: steady,
                    max_value,
                },
                values,
            ))
        })
        .collect::<Result<_>>()?;
    let (rows, values): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let max_decrease = values
        .windows(2)
        .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a - b))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HorizonSweep {
        grid: grid.clone(),
        rows,
        values,
        max_decrease,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grid_matches_expected_first_hit() {
        let cert = quadratic_example_certificate(&QuadraticExample::default()).unwrap();
        let k = cert.k.unwrap();
        assert!(k > 0.05 && k < 0.06, "{k}");
        assert!(
            cert.certified(),
            "{:?}",
            cert.certificate.as_ref().map(|c| c.max_margin)
        );
        // the hand-checked value also satisfies all four conditions
        assert!(QuadraticExample::default().inequalities(0.1).iter().all(|c| c.holds));
    }

    #[test]
    fn mu_at_least_one_is_infeasible() {
        for mu in [1.0, 1.5] {
            let params = QuadraticExample {
                mu,
                ..Default::default()
            };
            let cert = quadratic_example_certificate(&params).unwrap();
            assert!(cert.k.is_none());
            let inf = cert.infeasibility.unwrap();
            assert!(inf.violated.iter().any(|c| c.name == "mu < 1"));
        }
    }

    #[test]
    fn degenerate_cost_is_feasible() {
        let params = QuadraticExample {
            c1: 0.0,
            mu: 1e-9,
            ..Default::default()
        };
        let cert = quadratic_example_certificate(&params).unwrap();
        assert!(cert.k.unwrap() < 1e-2);
    }

    #[test]
    fn trivial_certificate() {
        let p = ControlProblem::builder("stable", 1, 1)
            .drift(|x, _, out| out[0] = -x[0])
            .cost(|_, _| -1.0)
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-1.0, 1.0)])
            .build()
            .unwrap();
        let g = Grid::line(-1.0, 1.0, 11, 0.0, 1.0, 1).unwrap();
        let cert =
            check_dissipation_certificate(&p, &Storage::Quadratic { k: 0.0 }, &Policy::constant(&[0.0]), &g, 0.0)
                .unwrap();
        assert!(cert.margins.iter().all(|m| *m == 0.0f64.max(-1.0)));
        assert!(cert.passed());
    }

    #[test]
    fn large_k_fails_at_large_state() {
        let params = QuadraticExample::default();
        let p = params.augmented_problem().unwrap();
        let k = 2.0 * params.c / params.a_norm;
        let storage = Storage::Augmented {
            mu: params.mu,
            base: Box::new(Storage::Quadratic { k }),
        };
        let cert = check_dissipation_certificate(
            &p,
            &storage,
            &Policy::constant(&[0.0]),
            &params.check_grid().unwrap(),
            0.0,
        )
        .unwrap();
        assert!(!cert.passed());
        assert!(cert.worst_point[0].abs() > 1.9);
    }

    #[test]
    fn embedding_accumulates_running_cost() {
        let base = QuadraticExample::default().base_problem().unwrap();
        let p = augmented_embedding(&base, |_, _| 1.0, |_| 0.0, 1.0, 10.0).unwrap();
        let v = DisturbancePath::zero(DisturbancePath::uniform_times(0.0, 2.0, 200), 1).unwrap();
        let traj = integrate(&p, &Policy::constant(&[0.0]), &v, 0.0, &[0.5, 0.0], 2.0, 0.01).unwrap();
        let z = traj.final_state()[1];
        assert!((z - 2.0).abs() < 1e-12);
        assert!((p.cost(traj.final_state(), &[0.0]) - (2.0)).abs() < 1e-12);
        let zero = augmented_embedding(&base, |_, _| 0.0, |_| 0.0, 1.0, 10.0).unwrap();
        assert_eq!(zero.cost(&[1.3, 0.0], &[0.0]), 0.0);
    }

    #[test]
    fn constant_cost_sweep_is_flat() {
        let p = crate::families::constant_cost(0.7, 2.0).unwrap();
        let g = Grid::line(-2.0, 2.0, 41, 0.0, 0.5, 25).unwrap();
        let sweep = v_infinity_sweep(&p, &g, &[0.5, 1.0, 2.0]).unwrap();
        assert!(sweep.nondecreasing());
        for (row, values) in sweep.rows.iter().zip(&sweep.values) {
            assert!(values.iter().all(|v| (v - 0.7).abs() < 1e-12));
            assert!(row.steady_residual < 1e-12);
        }
    }
}
