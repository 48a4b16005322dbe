//! Semi-Lagrangian discretization of the dynamic programming principle:
//!
//! ```text
//! V(t,x) = min_u max{ l(x,u), sup_v [ V(t+δ, x + δ(f + σv)) − ½δ|v|² ] }
//! ```
//!
//! With one noise channel the foot point moves along a line as `v` varies
//! and the interpolant is piecewise polynomial along it, so the inner
//! supremum is computed exactly piece by piece. Only `v` with
//! `|v| ≤ 2·Σ_k L_k|σ_k|` can beat `v = 0` (`L_k` the slopes of the next
//! slice), which bounds the search. The resulting step is monotone in the
//! next slice. With several noise channels the supremum is approximated by
//! the analytic candidate `σᵀ∇V` scaled by {0.5, 0.75, 1, 1.25, 1.5} and
//! `v = 0`.

use rayon::prelude::*;

use super::{check_terminal, slope_bounds, sweep_backward, terminal_slice, NodeTables};
use crate::error::{invalid, Error, Result};
use crate::grid::{Axis, BoundaryPolicy, Grid, ValueField};
use crate::problem::ControlProblem;

const CANDIDATE_SCALES: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

/// Solves the QVI backward from `V(T,·) = min_u l(·,u)`.
pub fn solve_qvi_semilagrangian(problem: &ControlProblem, grid: &Grid) -> Result<ValueField> {
    let tables = NodeTables::build(problem, grid)?;
    let terminal = terminal_slice(&tables);
    run(problem, grid, &tables, &terminal)
}

/// Same scheme started from arbitrary terminal data on the grid nodes.
pub fn solve_qvi_semilagrangian_from(problem: &ControlProblem, grid: &Grid, terminal: &[f64]) -> Result<ValueField> {
    let tables = NodeTables::build(problem, grid)?;
    check_terminal(grid, terminal)?;
    run(problem, grid, &tables, terminal)
}

fn run(problem: &ControlProblem, grid: &Grid, tables: &NodeTables, terminal: &[f64]) -> Result<ValueField> {
    let delta = grid.delta();
    sweep_backward(grid, terminal, |_, next, out| {
        sl_step(problem, grid, tables, next, out, delta)
    })
}

/// `F_{t,t+δ}φ` on the nodes of `grid`. `δ = 0` returns `φ` unchanged.
pub fn one_step_operator(problem: &ControlProblem, grid: &Grid, phi: &[f64], t: f64, delta: f64) -> Result<Vec<f64>> {
    check_terminal(grid, phi)?;
    if !(delta >= 0.0) {
        return Err(invalid("delta", "must be nonnegative"));
    }
    if t + delta > grid.horizon() + 1e-12 * grid.horizon().abs().max(1.0) {
        return Err(invalid(
            "delta",
            format!("t + δ = {} exceeds the horizon {}", t + delta, grid.horizon()),
        ));
    }
    if delta == 0.0 {
        return Ok(phi.to_vec());
    }
    let tables = NodeTables::build(problem, grid)?;
    let mut out = vec![0.0; grid.len()];
    sl_step(problem, grid, &tables, phi, &mut out, delta)?;
    Ok(out)
}

pub(crate) fn sl_step(
    problem: &ControlProblem,
    grid: &Grid,
    tables: &NodeTables,
    next: &[f64],
    out: &mut [f64],
    delta: f64,
) -> Result<()> {
    let slopes = slope_bounds(grid, next);
    let strict = grid.boundary() == BoundaryPolicy::Strict;
    out.par_iter_mut().enumerate().try_for_each(|(i, slot)| {
        let mut x = vec![0.0; tables.n];
        grid.point_into(i, &mut x);
        let mut best = f64::INFINITY;
        for &u in tables.order(i) {
            let u = u as usize;
            let l = tables.l(i, u);
            if l >= best {
                break;
            }
            let (cont, v) = continuation(grid, tables, next, &slopes, &x, i, u, delta);
            if strict {
                check_foot(problem, grid, tables, &x, u, &v, delta)?;
                check_foot(
                    problem,
                    grid,
                    tables,
                    &x,
                    u,
                    &analytic_disturbance(grid, tables, next, i, u),
                    delta,
                )?;
            }
            best = best.min(l.max(cont));
        }
        *slot = best;
        Ok(())
    })
}

/// `σᵀ∇V` at node `i` from the finite-difference gradient of `next`.
fn analytic_disturbance(grid: &Grid, tables: &NodeTables, next: &[f64], i: usize, u: usize) -> Vec<f64> {
    let (n, d) = (tables.n, tables.d);
    let mut grad = vec![0.0; n];
    grid.node_gradient(next, i, &mut grad);
    let s = tables.sigma(i, u);
    (0..d).map(|j| (0..n).map(|k| s[k * d + j] * grad[k]).sum()).collect()
}

/// Under the strict policy both the maximizing `v` and the analytic
/// candidate must keep the foot point inside the box.
fn check_foot(
    problem: &ControlProblem,
    grid: &Grid,
    tables: &NodeTables,
    x: &[f64],
    u: usize,
    v: &[f64],
    delta: f64,
) -> Result<()> {
    let i = grid_index_of(grid, x);
    let foot = foot_point(tables, i, u, x, v, delta);
    if grid.contains(&foot) {
        Ok(())
    } else {
        Err(Error::FootEscape {
            x: x.to_vec(),
            control: problem.controls().get(u).to_vec(),
            v: v.to_vec(),
        })
    }
}

fn grid_index_of(grid: &Grid, x: &[f64]) -> usize {
    let mut flat = 0;
    for (k, a) in grid.axes().iter().enumerate() {
        let j = ((x[k] - a.lower) / a.spacing()).round() as usize;
        flat = flat * a.points + j.min(a.points - 1);
    }
    flat
}

fn foot_point(tables: &NodeTables, i: usize, u: usize, x: &[f64], v: &[f64], delta: f64) -> Vec<f64> {
    let (n, d) = (tables.n, tables.d);
    let f = tables.f(i, u);
    let s = tables.sigma(i, u);
    (0..n)
        .map(|k| x[k] + delta * (f[k] + (0..d).map(|j| s[k * d + j] * v[j]).sum::<f64>()))
        .collect()
}

/// `sup_v [ I(next)(x + δ(f+σv)) − ½δ|v|² ]` and a maximizing `v`.
#[allow(clippy::too_many_arguments)]
fn continuation(
    grid: &Grid,
    tables: &NodeTables,
    next: &[f64],
    slopes: &[f64],
    x: &[f64],
    i: usize,
    u: usize,
    delta: f64,
) -> (f64, Vec<f64>) {
    let (n, d) = (tables.n, tables.d);
    let f = tables.f(i, u);
    let s = tables.sigma(i, u);
    let a: Vec<f64> = (0..n).map(|k| x[k] + delta * f[k]).collect();
    match d {
        0 => (grid.interpolate(next, &a), Vec::new()),
        1 => {
            let b: Vec<f64> = (0..n).map(|k| delta * s[k]).collect();
            let reach: f64 = (0..n).map(|k| slopes[k] * s[k].abs()).sum();
            let radius = 2.0 * reach * (1.0 + 1e-9) + 1e-12;
            let v = if n == 1 {
                line_max_1d(&grid.axes()[0], next, a[0], b[0], delta, radius)
            } else {
                line_max_generic(grid, next, &a, &b, delta, radius)
            };
            (v.0, vec![v.1])
        }
        _ => candidate_max(grid, next, &a, s, n, d, i, delta),
    }
}

/// Exact supremum of `I(a + βv) − ½δv²` over `|v| ≤ radius` for a
/// piecewise-linear `I` clamped outside the axis.
fn line_max_1d(axis: &Axis, vals: &[f64], a: f64, beta: f64, delta: f64, radius: f64) -> (f64, f64) {
    let h = axis.spacing();
    let last = axis.points - 1;
    let eval_at = |xi: f64| -> f64 {
        let s = ((xi - axis.lower) / h).clamp(0.0, last as f64);
        let j = (s.floor() as usize).min(last - 1);
        let w = s - j as f64;
        vals[j] * (1.0 - w) + vals[j + 1] * w
    };
    if beta == 0.0 || radius == 0.0 {
        return (eval_at(a), 0.0);
    }
    // in ξ = a + βv the penalty is c(ξ − a)² with c = δ / (2β²)
    let c = delta / (2.0 * beta * beta);
    let lo = a - beta.abs() * radius;
    let hi = a + beta.abs() * radius;
    let mut best = f64::NEG_INFINITY;
    let mut best_xi = a;
    let mut p = lo;
    for _ in 0..=axis.points + 2 {
        let (q, slope, base, anchor) = if p < axis.lower {
            (hi.min(axis.lower), 0.0, vals[0], p)
        } else if p >= axis.upper {
            (hi, 0.0, vals[last], p)
        } else {
            let mut j = (((p - axis.lower) / h).floor() as usize).min(last - 1);
            if axis.coord(j + 1) <= p && j + 1 < last {
                j += 1;
            }
            let xj = axis.coord(j);
            (hi.min(axis.coord(j + 1)), (vals[j + 1] - vals[j]) / h, vals[j], xj)
        };
        let xi = (a + slope / (2.0 * c)).clamp(p, q);
        let g = base + slope * (xi - anchor) - c * (xi - a) * (xi - a);
        if g > best {
            best = g;
            best_xi = xi;
        }
        if q >= hi {
            break;
        }
        p = q;
    }
    (best, (best_xi - a) / beta)
}

/// Same supremum for an `n`-dimensional foot line `a + bv`; on each piece
/// between grid-line crossings the multilinear interpolant is a polynomial
/// of degree at most `n ≤ 2` in `v`, so a three-point quadratic fit is
/// exact.
fn line_max_generic(grid: &Grid, vals: &[f64], a: &[f64], b: &[f64], delta: f64, radius: f64) -> (f64, f64) {
    let n = a.len();
    let mut xi = vec![0.0; n];
    let mut g = |v: f64| -> f64 {
        for k in 0..n {
            xi[k] = a[k] + b[k] * v;
        }
        grid.interpolate(vals, &xi) - 0.5 * delta * v * v
    };
    if radius == 0.0 || b.iter().all(|c| *c == 0.0) {
        return (g(0.0), 0.0);
    }
    let mut breaks = vec![-radius, 0.0, radius];
    for k in 0..n {
        if b[k] == 0.0 {
            continue;
        }
        let axis = &grid.axes()[k];
        let h = axis.spacing();
        let e1 = a[k] - b[k].abs() * radius;
        let e2 = a[k] + b[k].abs() * radius;
        let j0 = (((e1 - axis.lower) / h).ceil().max(0.0)) as usize;
        let j1 = (((e2 - axis.lower) / h).floor().min((axis.points - 1) as f64)).max(-1.0);
        if j1 < 0.0 {
            continue;
        }
        for j in j0..=(j1 as usize) {
            let v = (axis.coord(j) - a[k]) / b[k];
            if v.abs() < radius {
                breaks.push(v);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut best = f64::NEG_INFINITY;
    let mut best_v = 0.0;
    let mut g0 = g(breaks[0]);
    for w in breaks.windows(2) {
        let (v0, v1) = (w[0], w[1]);
        let gm = g(0.5 * (v0 + v1));
        let g1 = g(v1);
        for (val, v) in [(g0, v0), (gm, 0.5 * (v0 + v1))] {
            if val > best {
                best = val;
                best_v = v;
            }
        }
        let curv = 2.0 * (g0 - 2.0 * gm + g1);
        let lin = -3.0 * g0 + 4.0 * gm - g1;
        if curv < 0.0 {
            let s = -lin / (2.0 * curv);
            if s > 0.0 && s < 1.0 {
                let v = v0 + s * (v1 - v0);
                let val = g(v);
                if val > best {
                    best = val;
                    best_v = v;
                }
            }
        }
        g0 = g1;
    }
    if g0 > best {
        best = g0;
        best_v = *breaks.last().expect("nonempty");
    }
    (best, best_v)
}

#[allow(clippy::too_many_arguments)]
fn candidate_max(
    grid: &Grid,
    vals: &[f64],
    a: &[f64],
    s: &[f64],
    n: usize,
    d: usize,
    i: usize,
    delta: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; n];
    grid.node_gradient(vals, i, &mut grad);
    let w: Vec<f64> = (0..d).map(|j| (0..n).map(|k| s[k * d + j] * grad[k]).sum()).collect();
    let mut xi = vec![0.0; n];
    let mut eval = |v: &[f64]| -> f64 {
        for k in 0..n {
            xi[k] = a[k] + delta * (0..d).map(|j| s[k * d + j] * v[j]).sum::<f64>();
        }
        grid.interpolate(vals, &xi) - 0.5 * delta * v.iter().map(|c| c * c).sum::<f64>()
    };
    let zero = vec![0.0; d];
    let mut best = eval(&zero);
    let mut best_v = zero;
    for scale in CANDIDATE_SCALES {
        let v: Vec<f64> = w.iter().map(|c| c * scale).collect();
        let val = eval(&v);
        if val > best {
            best = val;
            best_v = v;
        }
    }
    (best, best_v)
}
