use rayon::prelude::*;

use super::NodeTables;
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueField};
use crate::problem::{hamiltonian_from_parts, ControlProblem};

/// Pointwise QVI residual on time levels `0..steps`.
#[derive(Debug, Clone)]
pub struct Residual {
    grid: Grid,
    values: Vec<f64>,
}

impl Residual {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max |residual|` over the given nodes and all time levels.
    pub fn sup_abs_on(&self, nodes: &[usize]) -> f64 {
        (0..self.grid.steps())
            .flat_map(|k| nodes.iter().map(move |&i| (k, i)))
            .map(|(k, i)| self.slice(k)[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn min_on(&self, nodes: &[usize]) -> f64 {
        (0..self.grid.steps())
            .flat_map(|k| nodes.iter().map(move |&i| (k, i)))
            .map(|(k, i)| self.slice(k)[i])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `min_u max{ ∂W/∂t + H^u(x, ∇W), l(x,u) − W }` with a forward time
/// difference and centered space differences (one-sided on the boundary).
pub fn residual_qvi(problem: &ControlProblem, w: &ValueField) -> Result<Residual> {
    let grid = w.grid();
    if grid.steps() < 1 {
        return Err(Error::InvalidGrid("residual needs two time slices".into()));
    }
    let tables = NodeTables::build(problem, grid)?;
    let len = grid.len();
    let delta = grid.delta();
    let mut values = vec![0.0; grid.steps() * len];
    values.par_chunks_mut(len).enumerate().for_each(|(k, out)| {
        let now = w.slice(k);
        let next = w.slice(k + 1);
        let mut grad = vec![0.0; tables.n];
        for (i, slot) in out.iter_mut().enumerate() {
            grid.node_gradient(now, i, &mut grad);
            let wt = (next[i] - now[i]) / delta;
            *slot = (0..tables.m)
                .map(|u| {
                    let h = hamiltonian_from_parts(tables.f(i, u), tables.sigma(i, u), &grad, tables.d);
                    (wt + h).max(tables.l(i, u) - now[i])
                })
                .fold(f64::INFINITY, f64::min);
        }
    });
    Ok(Residual {
        grid: grid.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::constant_cost;

    #[test]
    fn constant_solution_has_zero_residual() {
        let p = constant_cost(0.7, 2.0).unwrap();
        let g = Grid::line(-2.0, 2.0, 21, 0.0, 1.0, 10).unwrap();
        let w = ValueField::new(g.clone(), vec![0.7; 11 * 21]).unwrap();
        let r = residual_qvi(&p, &w).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
    }
}
