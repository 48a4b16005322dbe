//! Trajectories of `dx/ds = f(x,u) + σ(x,u)v`, the running-maximum cost
//! `∮ l ds = max_s l(x(s),u(s))`, the game payoff `∮ l − ½∫|v|²`, and a
//! multi-start search for the worst-case disturbance of a policy.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::ValueField;
use crate::problem::{hamiltonian_from_parts, sigma_transpose_times, ControlProblem};

type MarkovFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type OpenLoopFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum PolicyKind {
    Constant(Vec<f64>),
    OpenLoop(OpenLoopFn),
    Markov(MarkovFn),
}

/// A control law `u(s, x)`.
#[derive(Clone)]
pub struct Policy {
    kind: PolicyKind,
    name: String,
    lipschitz: Option<f64>,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Policy({})", self.name)
    }
}

impl Policy {
    pub fn constant(u: &[f64]) -> Self {
        Self {
            kind: PolicyKind::Constant(u.to_vec()),
            name: format!("constant{u:?}"),
            lipschitz: Some(0.0),
        }
    }

    pub fn open_loop(name: impl Into<String>, u: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            kind: PolicyKind::OpenLoop(Arc::new(u)),
            name: name.into(),
            lipschitz: None,
        }
    }

    pub fn markov(name: impl Into<String>, u: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            kind: PolicyKind::Markov(Arc::new(u)),
            name: name.into(),
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, bound: f64) -> Self {
        self.lipschitz = Some(bound);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn control_into(&self, s: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PolicyKind::Constant(u) => out.copy_from_slice(u),
            PolicyKind::OpenLoop(f) => f(s, out),
            PolicyKind::Markov(f) => f(s, x, out),
        }
    }
}

/// Markov policy choosing, at `(s, y)`, the control minimizing
/// `max{ ∂W/∂s + H^u(y, ∇W), l(y,u) − W }` for a solved field `W`. Ties in
/// the bracket (within `1e-9`) go to the smaller `H^u`, then to the lower
/// control index.
pub fn argmin_policy(problem: &ControlProblem, field: &ValueField) -> Policy {
    let problem = problem.clone();
    let field = Arc::new(field.clone());
    let n = problem.state_dim();
    let d = problem.noise_dim();
    Policy::markov("argmin", move |s, y, out| {
        let i = argmin_control(&problem, &field, s, y, n, d);
        out.copy_from_slice(problem.controls().get(i));
    })
}

fn argmin_control(problem: &ControlProblem, field: &ValueField, s: f64, y: &[f64], n: usize, d: usize) -> usize {
    let mut grad = vec![0.0; n];
    field.gradient_at(s, y, &mut grad);
    let w = field.value_at(s, y);
    let wt = field.time_derivative_at(s, y);
    let mut f = vec![0.0; n];
    let mut sig = vec![0.0; n * d];
    let mut best = (f64::INFINITY, f64::INFINITY, 0usize);
    for (i, u) in problem.controls().iter().enumerate() {
        problem.drift_into(y, u, &mut f);
        problem.sigma_into(y, u, &mut sig);
        let h = hamiltonian_from_parts(&f, &sig, &grad, d);
        let bracket = (wt + h).max(problem.cost(y, u) - w);
        let better = bracket < best.0 - 1e-9 || (bracket <= best.0 + 1e-9 && h < best.1);
        if better {
            best = (bracket, h, i);
        }
    }
    best.2
}

/// Markov policy picking the control whose bracket value is largest, the
/// opposite of [`argmin_policy`].
pub fn worst_bracket_policy(problem: &ControlProblem, field: &ValueField) -> Policy {
    let problem = problem.clone();
    let field = Arc::new(field.clone());
    let n = problem.state_dim();
    let d = problem.noise_dim();
    Policy::markov("farthest", move |s, y, out| {
        let mut grad = vec![0.0; n];
        field.gradient_at(s, y, &mut grad);
        let mut f = vec![0.0; n];
        let mut sig = vec![0.0; n * d];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, u) in problem.controls().iter().enumerate() {
            problem.drift_into(y, u, &mut f);
            problem.sigma_into(y, u, &mut sig);
            let h = hamiltonian_from_parts(&f, &sig, &grad, d);
            if h > best.0 {
                best = (h, i);
            }
        }
        out.copy_from_slice(problem.controls().get(best.1));
    })
}

/// Piecewise-constant disturbance: `values[j]` on `[times[j], times[j+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisturbancePath {
    times: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
}

impl DisturbancePath {
    pub fn new(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("disturbance.times", "need at least one interval"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("disturbance.times", "must be strictly increasing"));
        }
        if values.len() != (times.len() - 1) * dim {
            return Err(Error::Dimension(format!(
                "disturbance needs {} values, got {}",
                (times.len() - 1) * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("disturbance.values", "must be finite"));
        }
        Ok(Self { times, dim, values })
    }

    /// Uniform partition of `[t0, t1]` into `intervals` pieces.
    pub fn uniform_times(t0: f64, t1: f64, intervals: usize) -> Vec<f64> {
        (0..=intervals)
            .map(|j| {
                if j == intervals {
                    t1
                } else {
                    t0 + (t1 - t0) * j as f64 / intervals as f64
                }
            })
            .collect()
    }

    pub fn zero(times: Vec<f64>, dim: usize) -> Result<Self> {
        let m = times.len().saturating_sub(1);
        Self::new(times, dim, vec![0.0; m * dim])
    }

    pub fn constant(times: Vec<f64>, v: &[f64]) -> Result<Self> {
        let m = times.len().saturating_sub(1);
        Self::new(times, v.len(), v.repeat(m))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn piece(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Index of the piece containing `s` (right-continuous, last piece
    /// closed).
    pub fn piece_index(&self, s: f64) -> usize {
        let m = self.intervals();
        match self.times.partition_point(|&t| t <= s) {
            0 => 0,
            k => (k - 1).min(m - 1),
        }
    }

    pub fn value_at(&self, s: f64) -> &[f64] {
        self.piece(self.piece_index(s))
    }

    /// `½∫|v|²`.
    pub fn energy(&self) -> f64 {
        (0..self.intervals())
            .map(|j| {
                let dt = self.times[j + 1] - self.times[j];
                0.5 * dt * self.piece(j).iter().map(|c| c * c).sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    /// Row `j` is `x(s_j)`.
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub disturbances: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.state_dim..(j + 1) * self.state_dim]
    }

    pub fn control(&self, j: usize) -> &[f64] {
        &self.controls[j * self.control_dim..(j + 1) * self.control_dim]
    }

    pub fn disturbance(&self, j: usize) -> &[f64] {
        &self.disturbances[j * self.noise_dim..(j + 1) * self.noise_dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

/// Disturbance supplier: `(step, s, x, u, σ, out)`.
type Feed<'a> = dyn FnMut(usize, f64, &[f64], &[f64], &[f64], &mut [f64]) + 'a;

/// Running maximum accumulated while integrating.
struct Summary {
    max_cost: f64,
}

fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(invalid("dt", "need dt > 0 and t0 < T"));
    }
    let steps = ((t1 - t0) / dt).round();
    if ((t1 - t0) / dt - steps).abs() > 1e-6 || steps < 1.0 {
        return Err(invalid("dt", format!("dt = {dt} does not divide [{t0}, {t1}]")));
    }
    Ok(steps as usize)
}

fn check_partition(v: &DisturbancePath, t0: f64, t1: f64, dt: f64) -> Result<()> {
    let times = v.times();
    let tol = 1e-9 * (t1 - t0).abs().max(1.0);
    if (times[0] - t0).abs() > tol || (times[times.len() - 1] - t1).abs() > tol {
        return Err(invalid(
            "disturbance.times",
            format!("partition must cover [{t0}, {t1}]"),
        ));
    }
    for w in times.windows(2) {
        let k = (w[1] - w[0]) / dt;
        if (k - k.round()).abs() > 1e-6 {
            return Err(invalid(
                "dt",
                "the integrator step must divide every partition interval",
            ));
        }
    }
    Ok(())
}

struct Integrator<'a> {
    problem: &'a ControlProblem,
    policy: &'a Policy,
    lo: Vec<f64>,
    hi: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    sig: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(problem: &'a ControlProblem, policy: &'a Policy) -> Self {
        let (lo, hi) = problem
            .domain()
            .iter()
            .map(|&(a, b)| {
                let c = 0.5 * (a + b);
                let w = b - a;
                (c - w, c + w)
            })
            .unzip();
        Self {
            problem,
            policy,
            lo,
            hi,
            u: vec![0.0; problem.controls().dim()],
            f: vec![0.0; problem.state_dim()],
            sig: vec![0.0; problem.state_dim() * problem.noise_dim()],
        }
    }

    /// `f(x,u(s,x)) + σ(x,u(s,x))v`, with `v` a function of `(u, x)` so the
    /// closed system can feed back through it.
    fn rate(&mut self, j: usize, s: f64, x: &[f64], v: &mut Feed<'_>, out: &mut [f64]) {
        let n = self.problem.state_dim();
        let d = self.problem.noise_dim();
        self.policy.control_into(s, x, &mut self.u);
        self.problem.drift_into(x, &self.u, &mut self.f);
        self.problem.sigma_into(x, &self.u, &mut self.sig);
        let mut vv = vec![0.0; d];
        v(j, s, x, &self.u, &self.sig, &mut vv);
        for i in 0..n {
            out[i] = self.f[i] + (0..d).map(|j| self.sig[i * d + j] * vv[j]).sum::<f64>();
        }
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (a, b))| c.is_finite() && *c >= *a && *c <= *b)
    }

    /// RK4 over `steps` steps of size `dt`; `v` supplies the disturbance.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        t0: f64,
        x0: &[f64],
        dt: f64,
        steps: usize,
        v: &mut Feed<'_>,
        mut record: Option<&mut Trajectory>,
    ) -> Result<Summary> {
        let n = self.problem.state_dim();
        let d = self.problem.noise_dim();
        let mut x = x0.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut vv = vec![0.0; d];
        let mut max_cost = f64::NEG_INFINITY;
        for j in 0..=steps {
            let s = if j == steps {
                t0 + dt * steps as f64
            } else {
                t0 + dt * j as f64
            };
            self.policy.control_into(s, &x, &mut self.u);
            max_cost = max_cost.max(self.problem.cost(&x, &self.u));
            if let Some(traj) = record.as_deref_mut() {
                self.problem.sigma_into(&x, &self.u, &mut self.sig);
                v(j.min(steps - 1), s, &x, &self.u, &self.sig, &mut vv);
                traj.times.push(s);
                traj.states.extend_from_slice(&x);
                traj.controls.extend_from_slice(&self.u);
                traj.disturbances.extend_from_slice(&vv);
            }
            if j == steps {
                break;
            }
            self.rate(j, s, &x, v, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            self.rate(j, s + 0.5 * dt, &tmp, v, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            self.rate(j, s + 0.5 * dt, &tmp, v, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + dt * k3[i];
            }
            self.rate(j, s + dt, &tmp, v, &mut k4);
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !self.inside(&x) {
                return Err(Error::BlowUp { time: s + dt, state: x });
            }
        }
        Ok(Summary { max_cost })
    }
}

fn new_trajectory(problem: &ControlProblem, steps: usize) -> Trajectory {
    let n = problem.state_dim();
    let m = problem.controls().dim();
    let d = problem.noise_dim();
    Trajectory {
        times: Vec::with_capacity(steps + 1),
        state_dim: n,
        control_dim: m,
        noise_dim: d,
        states: Vec::with_capacity((steps + 1) * n),
        controls: Vec::with_capacity((steps + 1) * m),
        disturbances: Vec::with_capacity((steps + 1) * d),
    }
}

fn check_inputs(problem: &ControlProblem, v: &DisturbancePath, x0: &[f64]) -> Result<()> {
    if x0.len() != problem.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, state dimension is {}",
            x0.len(),
            problem.state_dim()
        )));
    }
    if v.dim() != problem.noise_dim() {
        return Err(Error::Dimension(format!(
            "disturbance has dimension {}, problem expects {}",
            v.dim(),
            problem.noise_dim()
        )));
    }
    Ok(())
}

/// RK4 trajectory of `dx/ds = f(x,u) + σ(x,u)v` on `[t0, T]`.
pub fn integrate(
    problem: &ControlProblem,
    policy: &Policy,
    v: &DisturbancePath,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_inputs(problem, v, x0)?;
    let steps = step_count(t0, horizon, dt)?;
    check_partition(v, t0, horizon, dt)?;
    let mut traj = new_trajectory(problem, steps);
    let mut integ = Integrator::new(problem, policy);
    let mut supply = |j: usize, _: f64, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| {
        out.copy_from_slice(v.value_at(t0 + (j as f64 + 0.5) * dt));
    };
    integ.run(t0, x0, dt, steps, &mut supply, Some(&mut traj))?;
    Ok(traj)
}

/// `max_j l(x(s_j), u(s_j))`.
pub fn maxplus_cost(traj: &Trajectory, problem: &ControlProblem) -> f64 {
    (0..traj.len())
        .map(|j| problem.cost(traj.state(j), traj.control(j)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `∮ l − ½∫|v|²`.
pub fn game_payoff(traj: &Trajectory, v: &DisturbancePath, problem: &ControlProblem) -> f64 {
    maxplus_cost(traj, problem) - v.energy()
}

/// Payoff of one disturbance without storing the path.
fn payoff_of(
    problem: &ControlProblem,
    policy: &Policy,
    v: &DisturbancePath,
    t0: f64,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<f64> {
    let mut integ = Integrator::new(problem, policy);
    let mut supply = |j: usize, _: f64, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]| {
        out.copy_from_slice(v.value_at(t0 + (j as f64 + 0.5) * dt));
    };
    let summary = integ.run(t0, x0, dt, steps, &mut supply, None)?;
    Ok(summary.max_cost - v.energy())
}

/// Settings for [`maxplus_expectation_policy`].
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Integrator step.
    pub dt: f64,
    /// Disturbance pieces span this many integrator steps.
    pub coarsen: usize,
    pub random_starts: usize,
    pub seed: u64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_sweeps: usize,
    /// Standard deviation of the random starts.
    pub start_scale: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            coarsen: 5,
            random_starts: 3,
            seed: 7,
            initial_step: 0.5,
            min_step: 1e-4,
            max_sweeps: 200,
            start_scale: 1.0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("policy.dt", "must be positive"));
        }
        if self.coarsen == 0 {
            return Err(invalid("policy.coarsen", "must be at least 1"));
        }
        if !(self.initial_step > 0.0 && self.min_step > 0.0 && self.min_step <= self.initial_step) {
            return Err(invalid("policy.initial_step", "need 0 < min_step <= initial_step"));
        }
        if !(self.start_scale >= 0.0) {
            return Err(invalid("policy.start_scale", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    pub label: String,
    pub initial_payoff: f64,
    pub final_payoff: f64,
    pub evaluations: usize,
    /// Set when the start itself could not be evaluated (blow-up).
    pub error: Option<String>,
}

/// Best payoff found. The value is a lower bound on the supremum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationEstimate {
    pub value: f64,
    pub lower_bound: bool,
    pub path: DisturbancePath,
    pub starts: Vec<StartReport>,
}

/// Additional information for [`maxplus_expectation_policy`].
#[derive(Default, Clone, Copy)]
pub struct ExpectationSeeds<'a> {
    /// Solved field used for the closed-system start `v̂ = σᵀ∇W`.
    pub field: Option<&'a ValueField>,
}

/// `J(t,x;α) = sup_v {∮l − ½∫|v|²}` by coordinate ascent over
/// piecewise-constant `v`, started at `v ≡ 0`, at the closed-system
/// candidate when a field is supplied, and at seeded random paths.
pub fn maxplus_expectation_policy(
    problem: &ControlProblem,
    policy: &Policy,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    opts: &OptimizerOptions,
    seeds: ExpectationSeeds<'_>,
) -> Result<ExpectationEstimate> {
    opts.validate()?;
    let steps = step_count(t0, horizon, opts.dt)?;
    let pieces = steps.div_ceil(opts.coarsen);
    let times: Vec<f64> = (0..=pieces)
        .map(|j| {
            if j == pieces {
                horizon
            } else {
                t0 + opts.dt * (j * opts.coarsen) as f64
            }
        })
        .collect();
    let d = problem.noise_dim();
    let mut starts: Vec<(String, Vec<f64>)> = vec![("zero".into(), vec![0.0; pieces * d])];
    if let Some(field) = seeds.field {
        let (_, vhat) = closed_system_worst_case_with(problem, policy, field, t0, x0, horizon, opts.dt)?;
        // average v̂ over each piece
        let mut values = vec![0.0; pieces * d];
        for j in 0..pieces {
            let lo = j * opts.coarsen;
            let hi = ((j + 1) * opts.coarsen).min(steps);
            for k in lo..hi {
                for c in 0..d {
                    values[j * d + c] += vhat.piece(k)[c] / (hi - lo) as f64;
                }
            }
        }
        starts.push(("closed-system".into(), values));
    }
    for r in 0..opts.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
        let values = (0..pieces * d)
            .map(|_| opts.start_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        starts.push((format!("random-{r}"), values));
    }

    let runs: Vec<(StartReport, Vec<f64>)> = starts
        .into_par_iter()
        .map(|(label, init)| {
            let eval = |vals: &[f64]| -> f64 {
                let path = DisturbancePath {
                    times: times.clone(),
                    dim: d,
                    values: vals.to_vec(),
                };
                payoff_of(problem, policy, &path, t0, x0, opts.dt, steps).unwrap_or(f64::NEG_INFINITY)
            };
            coordinate_ascent(label, init, opts, eval)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (rep, _)) in runs.iter().enumerate() {
        if best.is_none_or(|b| rep.final_payoff > runs[b].0.final_payoff) {
            best = Some(i);
        }
    }
    let b = best.expect("at least the zero start exists");
    if !runs[b].0.final_payoff.is_finite() {
        return Err(Error::BlowUp {
            time: t0,
            state: x0.to_vec(),
        });
    }
    let path = DisturbancePath::new(times, d, runs[b].1.clone())?;
    Ok(ExpectationEstimate {
        value: runs[b].0.final_payoff,
        lower_bound: true,
        path,
        starts: runs.into_iter().map(|(r, _)| r).collect(),
    })
}

fn coordinate_ascent(
    label: String,
    mut p: Vec<f64>,
    opts: &OptimizerOptions,
    eval: impl Fn(&[f64]) -> f64,
) -> (StartReport, Vec<f64>) {
    let mut value = eval(&p);
    let initial = value;
    let mut evaluations = 1;
    if !value.is_finite() {
        return (
            StartReport {
                label,
                initial_payoff: initial,
                final_payoff: value,
                evaluations,
                error: Some("start left the enlarged domain".into()),
            },
            p,
        );
    }
    let mut step = vec![opts.initial_step; p.len()];
    for _ in 0..opts.max_sweeps {
        if step.iter().all(|s| *s < opts.min_step) {
            break;
        }
        for c in 0..p.len() {
            if step[c] < opts.min_step {
                continue;
            }
            let orig = p[c];
            let mut moved = false;
            for dir in [1.0, -1.0] {
                p[c] = orig + dir * step[c];
                let trial = eval(&p);
                evaluations += 1;
                if trial > value {
                    value = trial;
                    moved = true;
                    // keep going in the same direction while it pays
                    loop {
                        let prev = p[c];
                        p[c] += dir * step[c];
                        let next = eval(&p);
                        evaluations += 1;
                        if next > value {
                            value = next;
                        } else {
                            p[c] = prev;
                            break;
                        }
                    }
                    break;
                }
            }
            if !moved {
                p[c] = orig;
                step[c] *= 0.5;
            }
        }
    }
    (
        StartReport {
            label,
            initial_payoff: initial,
            final_payoff: value,
            evaluations,
            error: None,
        },
        p,
    )
}

/// Closed system `dx̂/ds = f + σσᵀ∇W(s,x̂)` under `policy` on
/// `[t0, T]` with `T` and the step taken from the field's grid, and the
/// induced disturbance `v̂(s) = σᵀ∇W(s, x̂(s))`.
pub fn closed_system_worst_case(
    problem: &ControlProblem,
    policy: &Policy,
    field: &ValueField,
    t0: f64,
    x0: &[f64],
) -> Result<(Trajectory, DisturbancePath)> {
    let g = field.grid();
    closed_system_worst_case_with(problem, policy, field, t0, x0, g.horizon(), g.delta())
}

fn closed_system_worst_case_with(
    problem: &ControlProblem,
    policy: &Policy,
    field: &ValueField,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<(Trajectory, DisturbancePath)> {
    let n = problem.state_dim();
    let d = problem.noise_dim();
    if x0.len() != n {
        return Err(Error::Dimension("initial state dimension".into()));
    }
    let steps = step_count(t0, horizon, dt)?;
    let mut traj = new_trajectory(problem, steps);
    let mut integ = Integrator::new(problem, policy);
    let mut grad = vec![0.0; n];
    let mut feedback = |_: usize, s: f64, x: &[f64], _: &[f64], sig: &[f64], out: &mut [f64]| {
        field.gradient_at(s, x, &mut grad);
        out.copy_from_slice(&sigma_transpose_times(sig, &grad, n, d));
    };
    integ.run(t0, x0, dt, steps, &mut feedback, Some(&mut traj))?;
    let times = DisturbancePath::uniform_times(t0, horizon, steps);
    let values = traj.disturbances[..steps * d].to_vec();
    let path = DisturbancePath::new(times, d, values)?;
    Ok((traj, path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub x: Vec<f64>,
    pub w: f64,
    pub j: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub policy: String,
    pub records: Vec<VerificationRecord>,
    /// Records where the check failed.
    pub counterexamples: Vec<VerificationRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    pub fn max_gap(&self) -> f64 {
        self.records.iter().map(|r| (r.j - r.w).abs()).fold(0.0, f64::max)
    }
}

/// Which inequality [`verify_lower_bound`] checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerificationMode {
    /// `J ≥ W − tol` for an arbitrary policy.
    LowerBound { tol: f64 },
    /// `|J − W| ≤ tol` for an argmin policy.
    Equality { tol: f64 },
}

/// Checks `W(t0,x) ≤ J(t0,x;α)` (or equality) at each sample state with
/// `J` from [`maxplus_expectation_policy`] seeded by the closed system.
pub fn verify_lower_bound(
    problem: &ControlProblem,
    policy: &Policy,
    field: &ValueField,
    t0: f64,
    samples: &[Vec<f64>],
    opts: &OptimizerOptions,
    mode: VerificationMode,
) -> Result<VerificationReport> {
    let horizon = field.grid().horizon();
    let records: Vec<VerificationRecord> = samples
        .par_iter()
        .map(|x| -> Result<VerificationRecord> {
            let w = field.value_at(t0, x);
            let est = maxplus_expectation_policy(
                problem,
                policy,
                t0,
                x,
                horizon,
                opts,
                ExpectationSeeds { field: Some(field) },
            )?;
            let ok = match mode {
                VerificationMode::LowerBound { tol } => est.value >= w - tol,
                VerificationMode::Equality { tol } => (est.value - w).abs() <= tol,
            };
            Ok(VerificationRecord {
                x: x.clone(),
                w,
                j: est.value,
                ok,
            })
        })
        .collect::<Result<_>>()?;
    let counterexamples = records.iter().filter(|r| !r.ok).cloned().collect();
    Ok(VerificationReport {
        policy: policy.name().to_string(),
        records,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::running_max_toy;
    use crate::problem::ControlSet;

    fn still() -> ControlProblem {
        ControlProblem::builder("still", 1, 1)
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-2.0, 2.0)])
            .build()
            .unwrap()
    }

    fn decay() -> ControlProblem {
        ControlProblem::builder("decay", 1, 1)
            .drift(|x, _, out| out[0] = -x[0])
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-2.0, 2.0)])
            .build()
            .unwrap()
    }

    #[test]
    fn trivial_flows() {
        let times = DisturbancePath::uniform_times(0.0, 1.0, 10);
        let v = DisturbancePath::constant(times.clone(), &[1.0]).unwrap();
        let pol = Policy::constant(&[0.0]);
        let traj = integrate(&still(), &pol, &v, 0.0, &[0.3], 1.0, 0.01).unwrap();
        assert!(traj.states.iter().all(|&x| x == 0.3));
        let toy = running_max_toy(2.0).unwrap();
        let traj = integrate(&toy, &pol, &v, 0.0, &[0.0], 1.0, 0.01).unwrap();
        assert!((traj.final_state()[0] - 1.0).abs() < 1e-10);
        assert!((maxplus_cost(&traj, &toy) - 1.0).abs() < 1e-10);
        assert!((game_payoff(&traj, &v, &toy) - 0.5).abs() < 1e-10);
        let zero = DisturbancePath::zero(times, 1).unwrap();
        let traj = integrate(&decay(), &pol, &zero, 0.0, &[1.0], 1.0, 1e-3).unwrap();
        assert!((traj.final_state()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn partition_must_align() {
        let times = DisturbancePath::uniform_times(0.0, 1.0, 3);
        let v = DisturbancePath::zero(times, 1).unwrap();
        let pol = Policy::constant(&[0.0]);
        assert!(integrate(&still(), &pol, &v, 0.0, &[0.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let toy = running_max_toy(1.0).unwrap();
        let times = DisturbancePath::uniform_times(0.0, 1.0, 1);
        let v = DisturbancePath::constant(times, &[10.0]).unwrap();
        let r = integrate(&toy, &Policy::constant(&[0.0]), &v, 0.0, &[0.0], 1.0, 0.01);
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn energy_of_piecewise_path() {
        let v = DisturbancePath::new(vec![0.0, 0.5, 2.0], 1, vec![2.0, -1.0]).unwrap();
        assert!((v.energy() - (0.5 * 0.5 * 4.0 + 0.5 * 1.5)).abs() < 1e-15);
        assert_eq!(v.value_at(0.5), &[-1.0]);
        assert_eq!(v.value_at(2.0), &[-1.0]);
    }

    #[test]
    fn toy_expectation_is_one_half() {
        let toy = running_max_toy(4.0).unwrap();
        let est = maxplus_expectation_policy(
            &toy,
            &Policy::constant(&[0.0]),
            0.0,
            &[0.0],
            1.0,
            &OptimizerOptions::default(),
            ExpectationSeeds::default(),
        )
        .unwrap();
        assert!((est.value - 0.5).abs() < 1e-3, "{}", est.value);
        assert!(est.lower_bound);
    }

    #[test]
    fn no_disturbance_channel_gives_zero_path_payoff() {
        let p = ControlProblem::builder("quiet", 1, 1)
            .drift(|_, _, out| out[0] = 1.0)
            .cost(|x, _| x[0])
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-2.0, 2.0)])
            .build()
            .unwrap();
        let est = maxplus_expectation_policy(
            &p,
            &Policy::constant(&[0.0]),
            0.0,
            &[0.0],
            1.0,
            &OptimizerOptions::default(),
            ExpectationSeeds::default(),
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!(est.path.values().iter().all(|v| *v == 0.0));
    }
}
