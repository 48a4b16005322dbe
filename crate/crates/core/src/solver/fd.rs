//! Explicit monotone finite differences with a local Lax–Friedrichs
//! numerical Hamiltonian.
//!
//! Per control, `Ĥ^u = H^u(x, p̄) + Σ_k α_k/(2h_k)·(V₊ − 2V + V₋)` with `p̄`
//! the centered gradient and `α_k` a bound on `|∂H^u/∂p_k|`. Stencil
//! neighbours outside the box are clamped to the boundary node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_terminal, slope_bounds, sweep_backward, terminal_slice, NodeTables};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueField};
use crate::problem::{hamiltonian_from_parts, ControlProblem};

/// Disturbance bound used by the a priori CFL check.
pub const CFL_V_MAX: f64 = 4.0;

/// How the backward step combines the control Hamiltonians with the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdForm {
    /// `Vⁿ = min_u max{ Vⁿ⁺¹ + δĤ^u, l(x,u) }`.
    Qvi,
    /// `Vⁿ = Vⁿ⁺¹ + δ·𝓗(x, Vⁿ⁺¹, p)`, taking `min_u l` when the admissible
    /// set is empty, floored at `min_u l`.
    HForm,
}

/// A priori ratio `δ·Σ_k (max|f_k| + max‖σ‖·v_max)/h_k`.
pub fn fd_cfl_ratio(problem: &ControlProblem, grid: &Grid) -> Result<f64> {
    let tables = NodeTables::build(problem, grid)?;
    Ok(a_priori_ratio(&tables, grid))
}

fn a_priori_ratio(tables: &NodeTables, grid: &Grid) -> f64 {
    let drift = tables.max_abs_drift();
    let sig = tables.max_sigma_norm();
    grid.delta()
        * (0..grid.dim())
            .map(|k| (drift[k] + sig * CFL_V_MAX) / grid.spacing(k))
            .sum::<f64>()
}

pub fn solve_pde_fd(problem: &ControlProblem, grid: &Grid, form: FdForm) -> Result<ValueField> {
    let tables = NodeTables::build(problem, grid)?;
    let terminal = terminal_slice(&tables);
    run(grid, &tables, &terminal, form)
}

pub fn solve_pde_fd_from(problem: &ControlProblem, grid: &Grid, form: FdForm, terminal: &[f64]) -> Result<ValueField> {
    let tables = NodeTables::build(problem, grid)?;
    check_terminal(grid, terminal)?;
    run(grid, &tables, terminal, form)
}

fn run(grid: &Grid, tables: &NodeTables, terminal: &[f64], form: FdForm) -> Result<ValueField> {
    let ratio = a_priori_ratio(tables, grid);
    if ratio > 1.0 {
        return Err(Error::Cfl {
            ratio,
            suggested_delta: grid.delta() / ratio,
        });
    }
    let delta = grid.delta();
    sweep_backward(grid, terminal, |_, next, out| {
        fd_step(grid, tables, next, out, delta, form)
    })
}

fn fd_step(grid: &Grid, tables: &NodeTables, next: &[f64], out: &mut [f64], delta: f64, form: FdForm) -> Result<()> {
    let n = tables.n;
    let d = tables.d;
    let slopes = slope_bounds(grid, next);
    let p_norm = slopes.iter().map(|s| s * s).sum::<f64>().sqrt();
    let drift = tables.max_abs_drift();
    let sig = tables.max_sigma_norm();
    let alpha: Vec<f64> = (0..n).map(|k| drift[k] + sig * sig * p_norm).collect();
    let ratio = delta * (0..n).map(|k| alpha[k] / grid.spacing(k)).sum::<f64>();
    if ratio > 1.0 {
        return Err(Error::Cfl {
            ratio,
            suggested_delta: delta / ratio,
        });
    }
    let strides: Vec<usize> = (0..n).map(|k| grid.stride(k)).collect();
    out.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let v = next[i];
        let mut p = vec![0.0; n];
        let mut diffusion = 0.0;
        for k in 0..n {
            let idx = grid.axis_index(i, k);
            let last = grid.axes()[k].points - 1;
            let up = if idx < last { next[i + strides[k]] } else { v };
            let down = if idx > 0 { next[i - strides[k]] } else { v };
            let h = grid.spacing(k);
            p[k] = (up - down) / (2.0 * h);
            diffusion += alpha[k] / (2.0 * h) * (up - 2.0 * v + down);
        }
        let update =
            |u: usize| v + delta * (hamiltonian_from_parts(tables.f(i, u), tables.sigma(i, u), &p, d) + diffusion);
        *slot = match form {
            FdForm::Qvi => (0..tables.m)
                .map(|u| update(u).max(tables.l(i, u)))
                .fold(f64::INFINITY, f64::min),
            FdForm::HForm => {
                let lmin = tables.lmin[i];
                let inner = (0..tables.m)
                    .filter(|&u| tables.l(i, u) <= v)
                    .map(update)
                    .fold(f64::INFINITY, f64::min);
                if inner.is_finite() {
                    inner.max(lmin)
                } else {
                    lmin
                }
            }
        };
    });
    Ok(())
}
