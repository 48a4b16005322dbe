//! Risk-sensitive approximation of the max-plus value.
//!
//! With noise scale `θ^{−1/2}` and `Ψ_θ = inf E[∫ e^{θl} ds]`, the function
//! `V_θ = θ⁻¹ log Ψ_θ` solves
//!
//! ```text
//! ∂V/∂t + min_u { (1/2θ) tr(a D²V) + H^u(x, ∇V) + θ⁻¹ e^{θ(l − V)} } = 0,
//! ```
//!
//! and tends to the max-plus value as `θ → ∞`. The solver works in log
//! space: an explicit step with upwinded drift, a Godunov flux for
//! `½|σᵀ∇V|²` and a centered second difference, followed by the exact
//! source step
//! `V ← θ⁻¹ log(e^{θV} + δ e^{θl})`, evaluated as a log-sum-exp.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, ValueField};
use crate::problem::{hamiltonian_from_parts, ControlProblem};
use crate::solver::{slope_bounds, NodeTables};

/// Exponent range outside which an explicit `e^{θ(l−V)}` would overflow or
/// swamp the step; the log-space update never evaluates it, but such
/// updates are counted.
pub const CLAMP_HIGH: f64 = 50.0;
pub const CLAMP_LOW: f64 = -700.0;

#[derive(Debug, Clone)]
pub struct RiskSolution {
    pub field: ValueField,
    pub theta: f64,
    /// Updates whose exponent `θ(l − Ṽ)` left `[CLAMP_LOW, CLAMP_HIGH]`.
    pub clamp_events: usize,
    pub updates: usize,
    /// Set when more than 1% of updates hit the clamp range.
    pub warning: Option<String>,
}

impl RiskSolution {
    pub fn clamp_rate(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.clamp_events as f64 / self.updates as f64
        }
    }
}

/// `δ·Σ_k ((max|f_k| + max a_kk·P_k)/h_k + max a_kk/(θ h_k²))` for slope
/// bounds `P_k`.
fn risk_cfl(tables: &NodeTables, grid: &Grid, theta: f64, slopes: &[f64], delta: f64) -> f64 {
    let drift = tables.max_abs_drift();
    let diag = max_diffusion_diagonal(tables);
    delta
        * (0..grid.dim())
            .map(|k| {
                let h = grid.spacing(k);
                (drift[k] + diag[k] * slopes[k]) / h + diag[k] / (theta * h * h)
            })
            .sum::<f64>()
}

/// Entry `(k, j)` of `a = σσᵀ` at a (node, control) pair.
fn diffusion_entry(tables: &NodeTables, i: usize, u: usize, k: usize, j: usize) -> f64 {
    let d = tables.d;
    let s = tables.sigma(i, u);
    (0..d).map(|c| s[k * d + c] * s[j * d + c]).sum()
}

fn max_diffusion_diagonal(tables: &NodeTables) -> Vec<f64> {
    let (n, d) = (tables.n, tables.d);
    let mut out = vec![0.0f64; n];
    for s in tables.sigma.chunks(n * d) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = o.max((0..d).map(|c| s[k * d + c] * s[k * d + c]).sum());
        }
    }
    out
}

/// `log(e^a + e^b)`.
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (-(a - b).abs()).exp().ln_1p()
}

/// Solves for `V_θ` backward in log space.
///
/// The slice at `T` holds `min_u l`, the limit value there. The slice at
/// `T − δ` is the one-rectangle quadrature `θ⁻¹ log δ + min_u l`, and the
/// scheme runs from there.
pub fn solve_v_theta(problem: &ControlProblem, grid: &Grid, theta: f64) -> Result<RiskSolution> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", "must be positive and finite"));
    }
    if grid.steps() < 2 {
        return Err(Error::InvalidGrid(
            "the risk-sensitive solve needs at least two time steps".into(),
        ));
    }
    let tables = NodeTables::build(problem, grid)?;
    let delta = grid.delta();
    let len = grid.len();
    let n = grid.dim();
    let steps = grid.steps();
    let mut field = ValueField::zeros(grid.clone());
    let lmin = tables.lmin.to_vec();
    field.slice_mut(steps).copy_from_slice(&lmin);
    let anchor = delta.ln() / theta;
    for (slot, l) in field.slice_mut(steps - 1).iter_mut().zip(&lmin) {
        *slot = anchor + l;
    }
    let strides: Vec<usize> = (0..n).map(|k| grid.stride(k)).collect();
    let ln_delta = delta.ln();
    let mut clamp_events = 0usize;
    let mut updates = 0usize;
    for k in (0..steps - 1).rev() {
        let (out, next) = field.pair_mut(k);
        let slopes = slope_bounds(grid, next);
        let ratio = risk_cfl(&tables, grid, theta, &slopes, delta);
        if ratio > 1.0 {
            return Err(Error::Cfl {
                ratio,
                suggested_delta: delta / ratio,
            });
        }
        let clamps: usize = out
            .par_iter_mut()
            .enumerate()
            .map(|(i, slot)| {
                let v = next[i];
                let mut forward = [0.0; 2];
                let mut backward = [0.0; 2];
                let mut second = [0.0; 2];
                let mut idx = [0usize; 2];
                for k in 0..n {
                    idx[k] = grid.axis_index(i, k);
                    let last = grid.axes()[k].points - 1;
                    let up = if idx[k] < last { next[i + strides[k]] } else { v };
                    let down = if idx[k] > 0 { next[i - strides[k]] } else { v };
                    let h = grid.spacing(k);
                    forward[k] = (up - v) / h;
                    backward[k] = (v - down) / h;
                    second[k] = (up - 2.0 * v + down) / (h * h);
                }
                let cross = if n == 2 {
                    mixed_derivative(grid, next, i, &idx, &strides)
                } else {
                    0.0
                };
                let mut best = f64::INFINITY;
                let mut clamped = 0usize;
                for u in 0..tables.m {
                    let mut trace = 0.0;
                    for k in 0..n {
                        trace += diffusion_entry(&tables, i, u, k, k) * second[k];
                    }
                    if n == 2 {
                        trace += 2.0 * diffusion_entry(&tables, i, u, 0, 1) * cross;
                    }
                    let f = tables.f(i, u);
                    let mut h = 0.0;
                    for k in 0..n {
                        h += if f[k] >= 0.0 {
                            f[k] * forward[k]
                        } else {
                            f[k] * backward[k]
                        };
                        let up = forward[k].max(0.0);
                        let down = backward[k].min(0.0);
                        h += 0.5 * diffusion_entry(&tables, i, u, k, k) * (up * up).max(down * down);
                    }
                    if n == 2 {
                        let p0 = 0.5 * (forward[0] + backward[0]);
                        let p1 = 0.5 * (forward[1] + backward[1]);
                        h += diffusion_entry(&tables, i, u, 0, 1) * p0 * p1;
                    }
                    let transported = v + delta * (trace / (2.0 * theta) + h);
                    let l = tables.l(i, u);
                    let z = theta * (l - transported);
                    if !(CLAMP_LOW..=CLAMP_HIGH).contains(&z) {
                        clamped += 1;
                    }
                    let updated = logaddexp(theta * transported, ln_delta + theta * l) / theta;
                    best = best.min(updated);
                }
                *slot = best;
                clamped
            })
            .sum();
        clamp_events += clamps;
        updates += len * tables.m;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: grid.time(k),
                state: grid.point(i),
            });
        }
    }
    let warning = (updates > 0 && clamp_events as f64 > 0.01 * updates as f64).then(|| {
        format!(
            "{clamp_events} of {updates} updates ({:.2}%) had θ(l − V) outside [{CLAMP_LOW}, {CLAMP_HIGH}]",
            100.0 * clamp_events as f64 / updates as f64
        )
    });
    Ok(RiskSolution {
        field,
        theta,
        clamp_events,
        updates,
        warning,
    })
}

fn mixed_derivative(grid: &Grid, v: &[f64], i: usize, idx: &[usize; 2], strides: &[usize]) -> f64 {
    let last0 = grid.axes()[0].points - 1;
    let last1 = grid.axes()[1].points - 1;
    if idx[0] == 0 || idx[0] == last0 || idx[1] == 0 || idx[1] == last1 {
        return 0.0;
    }
    let (s0, s1) = (strides[0], strides[1]);
    (v[i + s0 + s1] - v[i + s0 - s1] - v[i - s0 + s1] + v[i - s0 - s1]) / (4.0 * grid.spacing(0) * grid.spacing(1))
}

/// `Ψ_θ` by an explicit upwind scheme in `Ψ` itself, for small θ where
/// `e^{θl}` stays representable. Returns `θ⁻¹ log Ψ_θ` on the same slices as
/// [`solve_v_theta`] (the slice at `T` holds `min_u l`).
pub fn solve_v_theta_psi_space(problem: &ControlProblem, grid: &Grid, theta: f64) -> Result<ValueField> {
    if !(theta > 0.0 && theta <= 50.0) {
        return Err(invalid("theta", "the direct Ψ solve needs 0 < θ ≤ 50"));
    }
    if grid.dim() != 1 {
        return Err(Error::Dimension("the direct Ψ solve is one-dimensional".into()));
    }
    let tables = NodeTables::build(problem, grid)?;
    let delta = grid.delta();
    let h = grid.spacing(0);
    let len = grid.len();
    let steps = grid.steps();
    let drift = tables.max_abs_drift();
    let diag = max_diffusion_diagonal(&tables);
    let ratio = delta * (drift[0] / h + diag[0] / (theta * h * h));
    if ratio > 1.0 {
        return Err(Error::Cfl {
            ratio,
            suggested_delta: delta / ratio,
        });
    }
    let lmin = tables.lmin.to_vec();
    let mut psi: Vec<f64> = lmin.iter().map(|l| delta * (theta * l).exp()).collect();
    let mut field = ValueField::zeros(grid.clone());
    field.slice_mut(steps).copy_from_slice(&lmin);
    for (slot, p) in field.slice_mut(steps - 1).iter_mut().zip(&psi) {
        *slot = p.ln() / theta;
    }
    let mut next = vec![0.0; len];
    for k in (0..steps - 1).rev() {
        next.copy_from_slice(&psi);
        psi.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let v = next[i];
            let up = if i + 1 < len { next[i + 1] } else { v };
            let down = if i > 0 { next[i - 1] } else { v };
            *slot = (0..tables.m)
                .map(|u| {
                    let f = tables.f(i, u)[0];
                    let a = diffusion_entry(&tables, i, u, 0, 0);
                    let transport = if f >= 0.0 { f * (up - v) / h } else { f * (v - down) / h };
                    let diffusion = a / (2.0 * theta) * (up - 2.0 * v + down) / (h * h);
                    v + delta * (transport + diffusion + (theta * tables.l(i, u)).exp())
                })
                .fold(f64::INFINITY, f64::min);
        });
        for (slot, p) in field.slice_mut(k).iter_mut().zip(&psi) {
            *slot = p.ln() / theta;
        }
    }
    Ok(field)
}

/// `M` in the ceiling `V ≤ min_u l + M(T − t)`: the largest
/// `min_u H^u(x, ∇ min_u l)` over the grid (at least 0), minimizing over the
/// controls attaining `min_u l`.
pub fn estimate_ceiling_rate(problem: &ControlProblem, grid: &Grid) -> Result<f64> {
    let tables = NodeTables::build(problem, grid)?;
    let lmin = &tables.lmin;
    let mut grad = vec![0.0; grid.dim()];
    let mut rate = 0.0f64;
    for i in 0..grid.len() {
        grid.node_gradient(lmin, i, &mut grad);
        let h = (0..tables.m)
            .filter(|&u| tables.l(i, u) <= lmin[i] + 1e-12)
            .map(|u| hamiltonian_from_parts(tables.f(i, u), tables.sigma(i, u), &grad, tables.d))
            .fold(f64::INFINITY, f64::min);
        rate = rate.max(h);
    }
    Ok(rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichCheck {
    pub epsilon: f64,
    pub ceiling_rate: f64,
    /// `max (min_u l − ε − V_θ)`; positive means the floor is violated.
    pub floor_violation: f64,
    /// `max (V_θ − min_u l − M(T−t) − ε)`.
    pub ceiling_violation: f64,
}

impl SandwichCheck {
    pub fn holds(&self) -> bool {
        self.floor_violation <= 0.0 && self.ceiling_violation <= 0.0
    }
}

/// Checks `min_u l − ε ≤ V_θ ≤ min_u l + M(T−t) + ε` on `nodes` at time
/// levels `t ≤ t_max`.
pub fn sandwich_check(
    problem: &ControlProblem,
    field: &ValueField,
    nodes: &[usize],
    t_max: f64,
    epsilon: f64,
) -> Result<SandwichCheck> {
    let grid = field.grid();
    let ceiling_rate = estimate_ceiling_rate(problem, grid)?;
    let tables = NodeTables::build(problem, grid)?;
    let lmin = &tables.lmin;
    let mut floor_violation = f64::NEG_INFINITY;
    let mut ceiling_violation = f64::NEG_INFINITY;
    for k in 0..=grid.steps() {
        let t = grid.time(k);
        if t > t_max + 1e-12 {
            continue;
        }
        let slice = field.slice(k);
        for &i in nodes {
            floor_violation = floor_violation.max(lmin[i] - epsilon - slice[i]);
            ceiling_violation =
                ceiling_violation.max(slice[i] - lmin[i] - ceiling_rate * (grid.horizon() - t) - epsilon);
        }
    }
    Ok(SandwichCheck {
        epsilon,
        ceiling_rate,
        floor_violation,
        ceiling_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub distance: f64,
    pub clamp_rate: f64,
    pub runtime_seconds: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSweepReport {
    pub rows: Vec<ThetaRow>,
    /// Each distance is at most 1.1 times the previous one.
    pub nonincreasing_with_slack: bool,
    pub target: f64,
    pub final_below_target: bool,
}

impl ThetaSweepReport {
    pub fn passed(&self) -> bool {
        self.nonincreasing_with_slack && self.final_below_target
    }
}

/// Space-time window of the study: the inner half of the box and
/// `t ∈ [t0 + 0.1(T−t0), T − 0.1(T−t0)]`.
pub fn study_window(grid: &Grid) -> (Vec<usize>, f64, f64) {
    let span = grid.horizon() - grid.t0();
    (grid.inner_nodes(), grid.t0() + 0.1 * span, grid.horizon() - 0.1 * span)
}

/// Sup distance of `field` to `reference` on the study window.
pub fn window_distance(field: &ValueField, reference: &ValueField) -> Result<f64> {
    let (nodes, lo, hi) = study_window(field.grid());
    field.sup_distance_where(reference, &nodes, |t| t >= lo - 1e-12 && t <= hi + 1e-12)
}

/// Solves `V_θ` for every θ and measures the distance to `reference`.
pub fn convergence_study(
    problem: &ControlProblem,
    grid: &Grid,
    thetas: &[f64],
    reference: &ValueField,
    target: f64,
) -> Result<(ThetaSweepReport, Vec<RiskSolution>)> {
    if thetas.is_empty() || thetas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sweep.thetas", "need a nonempty increasing list"));
    }
    if reference.grid() != grid {
        return Err(Error::InvalidGrid("reference field lives on a different grid".into()));
    }
    let solved: Vec<(RiskSolution, f64)> = thetas
        .par_iter()
        .map(|&theta| {
            let start = Instant::now();
            let sol = solve_v_theta(problem, grid, theta)?;
            Ok((sol, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(thetas.len());
    for (sol, secs) in &solved {
        rows.push(ThetaRow {
            theta: sol.theta,
            distance: window_distance(&sol.field, reference)?,
            clamp_rate: sol.clamp_rate(),
            runtime_seconds: *secs,
            warning: sol.warning.clone(),
        });
    }
    let nonincreasing_with_slack = rows.windows(2).all(|w| w[1].distance <= 1.1 * w[0].distance);
    let final_below_target = rows.last().is_some_and(|r| r.distance <= target);
    Ok((
        ThetaSweepReport {
            rows,
            nonincreasing_with_slack,
            target,
            final_below_target,
        },
        solved.into_iter().map(|(s, _)| s).collect(),
    ))
}

/// Monte Carlo estimate of `E[∫_t^T e^{θ l(X(s),u0)} ds]` for
/// `dX = f dt + θ^{−1/2} σ dW` by Euler–Maruyama with trapezoid quadrature.
/// Samples are split into fixed chunks with their own seeded streams, so
/// the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn psi_theta_constant_control_mc(
    problem: &ControlProblem,
    u0: &[f64],
    theta: f64,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    n_samples: usize,
    dt: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(invalid("theta", "must be positive"));
    }
    if n_samples < 2 {
        return Err(invalid("n_samples", "need at least two samples"));
    }
    if !(dt > 0.0) || !(horizon > t0) {
        return Err(invalid("dt", "need dt > 0 and t0 < T"));
    }
    if x0.len() != problem.state_dim() || u0.len() != problem.controls().dim() {
        return Err(Error::Dimension("initial state or control dimension".into()));
    }
    let n = problem.state_dim();
    let d = problem.noise_dim();
    let steps = ((horizon - t0) / dt).round().max(1.0) as usize;
    let dt = (horizon - t0) / steps as f64;
    let noise = (dt / theta).sqrt();
    const CHUNKS: usize = 64;
    let per_chunk = n_samples.div_ceil(CHUNKS);
    let sums: Vec<(f64, f64, usize)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(c as u64));
            let count = per_chunk.min(n_samples.saturating_sub(c * per_chunk));
            let mut f = vec![0.0; n];
            let mut sig = vec![0.0; n * d];
            let mut z = vec![0.0; d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut x = x0.to_vec();
                let mut prev = (theta * problem.cost(&x, u0)).exp();
                let mut total = 0.0;
                for _ in 0..steps {
                    problem.drift_into(&x, u0, &mut f);
                    problem.sigma_into(&x, u0, &mut sig);
                    for zj in z.iter_mut() {
                        *zj = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    }
                    for i in 0..n {
                        x[i] += f[i] * dt + noise * (0..d).map(|j| sig[i * d + j] * z[j]).sum::<f64>();
                    }
                    let cur = (theta * problem.cost(&x, u0)).exp();
                    total += 0.5 * dt * (prev + cur);
                    prev = cur;
                }
                s1 += total;
                s2 += total * total;
            }
            (s1, s2, count)
        })
        .collect();
    let (s1, s2, count) = sums
        .iter()
        .fold((0.0, 0.0, 0usize), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    let mean = s1 / count as f64;
    let var = ((s2 - count as f64 * mean * mean) / (count as f64 - 1.0)).max(0.0);
    Ok((mean, (var / count as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::constant_cost;
    use crate::problem::ControlSet;

    fn frozen(c: f64) -> ControlProblem {
        ControlProblem::builder("frozen", 1, 1)
            .cost(move |_, _| c)
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-1.0, 1.0)])
            .build()
            .unwrap()
    }

    #[test]
    fn closed_form_without_noise() {
        let c = 0.3;
        let g = Grid::line(-1.0, 1.0, 11, 0.0, 1.0, 100).unwrap();
        for theta in [0.5, 2.0, 50.0] {
            let sol = solve_v_theta(&frozen(c), &g, theta).unwrap();
            for k in 0..100 {
                let expected = c + (1.0 - g.time(k)).ln() / theta;
                for &v in sol.field.slice(k) {
                    assert!((v - expected).abs() < 1e-8, "θ={theta} k={k}: {v} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn logaddexp_is_stable() {
        assert_eq!(logaddexp(1000.0, 0.0), 1000.0);
        assert!((logaddexp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logaddexp(f64::NEG_INFINITY, 3.0), 3.0);
    }

    #[test]
    fn mc_constant_cost() {
        let p = constant_cost(0.2, 2.0).unwrap();
        let (mean, se) = psi_theta_constant_control_mc(&p, &[0.0], 3.0, 0.0, &[0.0], 1.0, 2000, 0.01, 1).unwrap();
        assert!((mean - (0.6f64).exp()).abs() < 1e-9 && se < 1e-9);
    }

    #[test]
    fn psi_space_agrees_when_both_are_exact() {
        let p = ControlProblem::builder("static", 1, 1)
            .cost(|x, u| (x[0] - u[0]).powi(2) + 0.1 * u[0])
            .controls(ControlSet::grid(&[-1.0], &[1.0], &[5]).unwrap())
            .domain(vec![(-1.0, 1.0)])
            .build()
            .unwrap();
        let g = Grid::line(-1.0, 1.0, 21, 0.0, 1.0, 200).unwrap();
        let a = solve_v_theta(&p, &g, 4.0).unwrap().field;
        let b = solve_v_theta_psi_space(&p, &g, 4.0).unwrap();
        let gap = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-9, "{gap}");
    }

    #[test]
    fn psi_space_close_with_noise() {
        let p = crate::families::canonical();
        let g = Grid::line(-2.0, 2.0, 101, 0.0, 1.0, 400).unwrap();
        let a = solve_v_theta(&p, &g, 2.0).unwrap().field;
        let b = solve_v_theta_psi_space(&p, &g, 2.0).unwrap();
        let (nodes, lo, hi) = study_window(&g);
        let gap = a.sup_distance_where(&b, &nodes, |t| t >= lo && t <= hi).unwrap();
        assert!(gap < 0.05, "{gap}");
    }

    #[test]
    fn distance_to_itself_is_zero() {
        let p = crate::families::canonical();
        let g = Grid::line(-2.0, 2.0, 41, 0.0, 1.0, 100).unwrap();
        let v = solve_v_theta(&p, &g, 5.0).unwrap().field;
        assert_eq!(window_distance(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn nonincreasing_in_time() {
        let p = crate::families::canonical();
        let g = Grid::line(-2.0, 2.0, 81, 0.0, 1.0, 200).unwrap();
        let v = solve_v_theta(&p, &g, 5.0).unwrap().field;
        // The slice at T holds the limit anchor, not V_θ.
        for k in 0..g.steps() - 1 {
            for i in 0..g.len() {
                assert!(v.get(k, i) >= v.get(k + 1, i) - 1e-12);
            }
        }
    }

    #[test]
    fn cfl_violation_reports_smaller_step() {
        let p = crate::families::canonical();
        let g = Grid::line(-2.0, 2.0, 201, 0.0, 1.0, 20).unwrap();
        match solve_v_theta(&p, &g, 2.0) {
            Err(Error::Cfl { ratio, suggested_delta }) => assert!(ratio > 1.0 && suggested_delta < g.delta()),
            other => panic!("expected a CFL error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_theta() {
        let g = Grid::line(-1.0, 1.0, 11, 0.0, 1.0, 100).unwrap();
        assert!(solve_v_theta(&frozen(0.0), &g, 0.0).is_err());
        assert!(solve_v_theta(&frozen(0.0), &g, f64::NAN).is_err());
    }
}
