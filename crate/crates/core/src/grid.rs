//! Uniform space-time grids and grid functions `V(t_k, x_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with points that fall outside the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Clamp foot points and stencil neighbours to the box.
    #[default]
    Clamp,
    /// Report foot points that leave the box as errors.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self { lower, upper, points }
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + self.spacing() * i as f64
        }
    }
}

/// Upper bound on `(steps + 1) · nodes`, so a grid always fits in memory
/// as a [`ValueField`].
pub const MAX_FIELD_VALUES: usize = 1 << 28;

/// Tensor grid on a box with uniform time stepping over `[t0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
    t0: f64,
    horizon: f64,
    steps: usize,
    boundary: BoundaryPolicy,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("no axes".into()));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.points < 3 {
                return Err(Error::InvalidGrid(format!("axis {k} needs at least 3 points")));
            }
            if !(a.upper > a.lower) || !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {k} needs finite lower < upper")));
            }
        }
        if !(horizon > t0) || !t0.is_finite() || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("need t0 < T, got [{t0}, {horizon}]")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        let total = axes.iter().fold(steps.checked_add(1), |acc, a| {
            acc.and_then(|acc| acc.checked_mul(a.points))
        });
        if total.is_none_or(|t| t > MAX_FIELD_VALUES) {
            return Err(Error::InvalidGrid(format!(
                "grid is too large (limit {MAX_FIELD_VALUES} space-time values)"
            )));
        }
        Ok(Self {
            axes,
            t0,
            horizon,
            steps,
            boundary: BoundaryPolicy::Clamp,
        })
    }

    /// One-dimensional grid `[lower, upper]` with `points` nodes.
    pub fn line(lower: f64, upper: f64, points: usize, t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, points)], t0, horizon, steps)
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    /// Same space grid on a different horizon with the same time step.
    pub fn with_horizon_same_step(&self, horizon: f64) -> Result<Self> {
        let steps = ((horizon - self.t0) / self.delta()).round() as usize;
        let g = Self::new(self.axes.clone(), self.t0, horizon, steps.max(1))?;
        Ok(g.with_boundary(self.boundary))
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Ok(Self::new(self.axes.clone(), self.t0, self.horizon, steps)?.with_boundary(self.boundary))
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of space nodes.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.boundary
    }

    /// Time step `δ`.
    pub fn delta(&self) -> f64 {
        (self.horizon - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.t0 + self.delta() * k as f64
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Stride of `axis` in the flat index; the last axis is contiguous.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.points).product()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = rest % self.axes[k].points;
            rest /= self.axes[k].points;
        }
        out
    }

    /// Index of node `flat` along `axis`.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.axes[axis].points
    }

    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for k in (0..self.dim()).rev() {
            let a = &self.axes[k];
            out[k] = a.coord(rest % a.points);
            rest /= a.points;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.point_into(flat, &mut out);
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .all(|(a, &c)| c >= a.lower - 1e-12 * (a.upper - a.lower) && c <= a.upper + 1e-12 * (a.upper - a.lower))
    }

    /// Whether `x` lies in the inner half of the box (the middle half of
    /// every axis).
    pub fn in_inner_half(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, &c)| {
            let mid = 0.5 * (a.lower + a.upper);
            let quarter = 0.25 * (a.upper - a.lower);
            (c - mid).abs() <= quarter + 1e-12
        })
    }

    /// Flat indices of nodes in the inner half of the box.
    pub fn inner_nodes(&self) -> Vec<usize> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .filter(|&i| {
                self.point_into(i, &mut x);
                self.in_inner_half(&x)
            })
            .collect()
    }

    /// Multilinear interpolation of a node function, clamped to the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        match self.dim() {
            1 => {
                let (i, w) = self.locate(0, x[0]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
            2 => {
                let (i, wi) = self.locate(0, x[0]);
                let (j, wj) = self.locate(1, x[1]);
                let s = self.axes[1].points;
                let v00 = values[i * s + j];
                let v01 = values[i * s + j + 1];
                let v10 = values[(i + 1) * s + j];
                let v11 = values[(i + 1) * s + j + 1];
                (1.0 - wi) * ((1.0 - wj) * v00 + wj * v01) + wi * ((1.0 - wj) * v10 + wj * v11)
            }
            n => {
                let cells: Vec<(usize, f64)> = (0..n).map(|k| self.locate(k, x[k])).collect();
                let mut total = 0.0;
                for corner in 0..(1usize << n) {
                    let mut flat = 0;
                    let mut weight = 1.0;
                    for (k, &(i, w)) in cells.iter().enumerate() {
                        let up = (corner >> (n - 1 - k)) & 1 == 1;
                        flat = flat * self.axes[k].points + i + up as usize;
                        weight *= if up { w } else { 1.0 - w };
                    }
                    total += weight * values[flat];
                }
                total
            }
        }
    }

    /// Cell index and fractional offset on `axis`, clamped to the box.
    fn locate(&self, axis: usize, c: f64) -> (usize, f64) {
        let a = &self.axes[axis];
        let h = a.spacing();
        let s = ((c - a.lower) / h).clamp(0.0, (a.points - 1) as f64);
        let i = (s.floor() as usize).min(a.points - 2);
        (i, s - i as f64)
    }

    /// Finite-difference gradient at node `flat`: centered inside, one-sided
    /// on the boundary.
    pub fn node_gradient(&self, values: &[f64], flat: usize, out: &mut [f64]) {
        for k in 0..self.dim() {
            let stride = self.stride(k);
            let i = self.axis_index(flat, k);
            let h = self.spacing(k);
            let last = self.axes[k].points - 1;
            out[k] = if i == 0 {
                (values[flat + stride] - values[flat]) / h
            } else if i == last {
                (values[flat] - values[flat - stride]) / h
            } else {
                (values[flat + stride] - values[flat - stride]) / (2.0 * h)
            };
        }
    }

    /// Gradient of the interpolant at an arbitrary point by centered
    /// differences with the grid spacing, one-sided at the box edges.
    pub fn gradient_at(&self, values: &[f64], x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for k in 0..self.dim() {
            let a = &self.axes[k];
            let h = a.spacing();
            let lo = (x[k] - h).max(a.lower);
            let hi = (x[k] + h).min(a.upper);
            probe[k] = hi;
            let up = self.interpolate(values, &probe);
            probe[k] = lo;
            let down = self.interpolate(values, &probe);
            probe[k] = x[k];
            out[k] = if hi > lo { (up - down) / (hi - lo) } else { 0.0 };
        }
    }
}

/// A grid function over all time levels, time-major: slice `k` holds
/// `V(t_k, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: Grid,
    values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let expected = (grid.steps() + 1) * grid.len();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "value field needs {expected} entries, got {}",
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let len = (grid.steps() + 1) * grid.len();
        Self {
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// `(slice k, slice k+1)` with the first mutable.
    pub fn pair_mut(&mut self, k: usize) -> (&mut [f64], &[f64]) {
        let n = self.grid.len();
        let (head, tail) = self.values.split_at_mut((k + 1) * n);
        (&mut head[k * n..], &tail[..n])
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.grid.len() + i]
    }

    /// Time slice index `k` with `t_k <= t < t_{k+1}` and the weight of
    /// `t_{k+1}`.
    fn time_cell(&self, t: f64) -> (usize, f64) {
        let g = &self.grid;
        let s = ((t - g.t0()) / g.delta()).clamp(0.0, g.steps() as f64);
        let k = (s.floor() as usize).min(g.steps() - 1);
        (k, s - k as f64)
    }

    /// Interpolated `V(t, x)`, linear in time and multilinear in space.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let (k, w) = self.time_cell(t);
        let a = self.grid.interpolate(self.slice(k), x);
        let b = self.grid.interpolate(self.slice(k + 1), x);
        (1.0 - w) * a + w * b
    }

    /// Spatial gradient of the interpolant at `(t, x)`.
    pub fn gradient_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (k, w) = self.time_cell(t);
        let n = self.grid.dim();
        let mut ga = vec![0.0; n];
        self.grid.gradient_at(self.slice(k), x, &mut ga);
        self.grid.gradient_at(self.slice(k + 1), x, out);
        for (o, a) in out.iter_mut().zip(&ga) {
            *o = (1.0 - w) * a + w * *o;
        }
    }

    /// `∂V/∂t` at `(t, x)` from the two time slices around `t`.
    pub fn time_derivative_at(&self, t: f64, x: &[f64]) -> f64 {
        let (k, _) = self.time_cell(t);
        let a = self.grid.interpolate(self.slice(k), x);
        let b = self.grid.interpolate(self.slice(k + 1), x);
        (b - a) / self.grid.delta()
    }

    /// `max |self − other|` over nodes selected by `nodes` and time levels
    /// selected by `times`.
    pub fn sup_distance_where(
        &self,
        other: &ValueField,
        nodes: &[usize],
        mut times: impl FnMut(f64) -> bool,
    ) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("fields live on different grids".into()));
        }
        let mut worst = 0.0f64;
        for k in 0..=self.grid.steps() {
            if !times(self.grid.time(k)) {
                continue;
            }
            let (a, b) = (self.slice(k), other.slice(k));
            for &i in nodes {
                worst = worst.max((a[i] - b[i]).abs());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::line(0.0, 1.0, 2, 0.0, 1.0, 1).is_err());
        assert!(Grid::line(1.0, 0.0, 5, 0.0, 1.0, 1).is_err());
        assert!(Grid::line(0.0, 1.0, 5, 1.0, 1.0, 1).is_err());
        assert!(Grid::line(0.0, 1.0, 5, 0.0, 1.0, 0).is_err());
        let g = Grid::line(-2.0, 2.0, 201, 0.0, 1.0, 200).unwrap();
        assert!((g.spacing(0) - 0.02).abs() < 1e-15);
        assert!((g.delta() - 0.005).abs() < 1e-15);
        assert_eq!(g.time(200), 1.0);
        assert_eq!(g.point(200), vec![2.0]);
    }

    #[test]
    fn interpolation_is_exact_on_affine_functions() {
        let g = Grid::new(vec![Axis::new(-1.0, 1.0, 5), Axis::new(0.0, 2.0, 7)], 0.0, 1.0, 1).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                3.0 * x[0] - 2.0 * x[1] + 0.5
            })
            .collect();
        for &(a, b) in &[(0.13, 1.71), (-0.99, 0.01), (0.5, 1.0)] {
            let v = g.interpolate(&vals, &[a, b]);
            assert!((v - (3.0 * a - 2.0 * b + 0.5)).abs() < 1e-12);
        }
        // clamped outside
        let v = g.interpolate(&vals, &[5.0, 1.0]);
        assert!((v - (3.0 - 2.0 + 0.5)).abs() < 1e-12);
        let mut grad = [0.0; 2];
        g.gradient_at(&vals, &[0.2, 0.7], &mut grad);
        assert!((grad[0] - 3.0).abs() < 1e-12 && (grad[1] + 2.0).abs() < 1e-12);
        g.node_gradient(&vals, 0, &mut grad);
        assert!((grad[0] - 3.0).abs() < 1e-12 && (grad[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn inner_half_selection() {
        let g = Grid::line(-2.0, 2.0, 9, 0.0, 1.0, 1).unwrap();
        let inner: Vec<f64> = g.inner_nodes().iter().map(|&i| g.point(i)[0]).collect();
        assert_eq!(inner, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn field_time_interpolation() {
        let g = Grid::line(0.0, 1.0, 3, 0.0, 1.0, 2).unwrap();
        let values = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let f = ValueField::new(g, values).unwrap();
        assert!((f.value_at(0.25, &[0.3]) - 0.5).abs() < 1e-15);
        assert!((f.time_derivative_at(0.7, &[0.3]) - 2.0).abs() < 1e-12);
        assert_eq!(f.value_at(1.0, &[0.0]), 2.0);
    }
}
