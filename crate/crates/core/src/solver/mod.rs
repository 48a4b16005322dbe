//! Backward-in-time solvers for the running-maximum QVI
//!
//! ```text
//! min_u max{ ∂V/∂t + H^u(x, ∇V), l(x,u) − V } = 0,   V(T,x) = min_u l(x,u).
//! ```
//!
//! Problems are autonomous, so drift, diffusion and cost are tabulated once
//! per (node, control) pair and reused by every time step.

mod fd;
mod residual;
mod semilagrangian;

pub use fd::{fd_cfl_ratio, solve_pde_fd, solve_pde_fd_from, FdForm};
pub use residual::{residual_qvi, Residual};
pub use semilagrangian::{one_step_operator, solve_qvi_semilagrangian, solve_qvi_semilagrangian_from};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ValueField};
use crate::problem::ControlProblem;

/// `f`, `σ` and `l` at every (node, control) pair.
pub(crate) struct NodeTables {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub f: Vec<f64>,
    pub sigma: Vec<f64>,
    pub l: Vec<f64>,
    pub lmin: Vec<f64>,
    /// Per node, control indices sorted by ascending cost.
    pub order: Vec<u32>,
}

impl NodeTables {
    pub fn build(problem: &ControlProblem, grid: &Grid) -> Result<Self> {
        let n = problem.state_dim();
        let d = problem.noise_dim();
        if grid.dim() != n {
            return Err(Error::Dimension(format!(
                "grid has {} axes but the state dimension is {n}",
                grid.dim()
            )));
        }
        let m = problem.controls().len();
        if m == 0 {
            return Err(Error::EmptyControlSet);
        }
        let len = grid.len();
        let mut f = vec![0.0; len * m * n];
        let mut sigma = vec![0.0; len * m * n * d];
        let mut l = vec![0.0; len * m];
        f.par_chunks_mut(m * n)
            .zip(sigma.par_chunks_mut(m * n * d))
            .zip(l.par_chunks_mut(m))
            .enumerate()
            .for_each(|(i, ((fi, si), li))| {
                let x = grid.point(i);
                for (j, u) in problem.controls().iter().enumerate() {
                    problem.drift_into(&x, u, &mut fi[j * n..(j + 1) * n]);
                    problem.sigma_into(&x, u, &mut si[j * n * d..(j + 1) * n * d]);
                    li[j] = problem.cost(&x, u);
                }
            });
        if l.iter().chain(&f).chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "problem `{}` has non-finite coefficients on the grid",
                problem.name()
            )));
        }
        let lmin: Vec<f64> = l
            .chunks(m)
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let mut order = vec![0u32; len * m];
        order.par_chunks_mut(m).zip(l.par_chunks(m)).for_each(|(o, li)| {
            for (j, slot) in o.iter_mut().enumerate() {
                *slot = j as u32;
            }
            o.sort_by(|&a, &b| li[a as usize].total_cmp(&li[b as usize]));
        });
        Ok(Self {
            n,
            d,
            m,
            f,
            sigma,
            l,
            lmin,
            order,
        })
    }

    pub fn f(&self, i: usize, u: usize) -> &[f64] {
        let s = (i * self.m + u) * self.n;
        &self.f[s..s + self.n]
    }

    pub fn sigma(&self, i: usize, u: usize) -> &[f64] {
        let w = self.n * self.d;
        let s = (i * self.m + u) * w;
        &self.sigma[s..s + w]
    }

    pub fn l(&self, i: usize, u: usize) -> f64 {
        self.l[i * self.m + u]
    }

    pub fn order(&self, i: usize) -> &[u32] {
        &self.order[i * self.m..(i + 1) * self.m]
    }

    pub fn max_abs_drift(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.n];
        for chunk in self.f.chunks(self.n) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o = o.max(v.abs());
            }
        }
        out
    }

    /// Largest Frobenius norm of `σ` over nodes and controls.
    pub fn max_sigma_norm(&self) -> f64 {
        self.sigma
            .chunks(self.n * self.d)
            .map(|s| s.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Terminal slice `min_u l(x,u)`.
pub(crate) fn terminal_slice(tables: &NodeTables) -> Vec<f64> {
    tables.lmin.clone()
}

/// Largest one-sided difference quotient of `values` along each axis.
pub(crate) fn slope_bounds(grid: &Grid, values: &[f64]) -> Vec<f64> {
    (0..grid.dim())
        .map(|k| {
            let stride = grid.stride(k);
            let h = grid.spacing(k);
            let last = grid.axes()[k].points - 1;
            (0..values.len())
                .filter(|&i| grid.axis_index(i, k) < last)
                .map(|i| (values[i + stride] - values[i]).abs() / h)
                .fold(0.0, f64::max)
        })
        .collect()
}

pub(crate) fn check_terminal(grid: &Grid, terminal: &[f64]) -> Result<()> {
    if terminal.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "terminal data has {} entries, grid has {}",
            terminal.len(),
            grid.len()
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("terminal data must be finite".into()));
    }
    Ok(())
}

/// Runs `step(next, out)` backward from the terminal slice.
pub(crate) fn sweep_backward(
    grid: &Grid,
    terminal: &[f64],
    mut step: impl FnMut(usize, &[f64], &mut [f64]) -> Result<()>,
) -> Result<ValueField> {
    let mut field = ValueField::zeros(grid.clone());
    field.slice_mut(grid.steps()).copy_from_slice(terminal);
    for k in (0..grid.steps()).rev() {
        let (out, next) = field.pair_mut(k);
        step(k, next, out)?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: grid.time(k),
                state: grid.point(i),
            });
        }
    }
    Ok(field)
}
