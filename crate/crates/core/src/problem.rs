//! Control problem model: dynamics `dx/ds = f(x,u) + σ(x,u) v`, running cost
//! `l(x,u)` and a finite control set `U`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// `(x, u, out)`: writes a vector (drift, length `n`) or a row-major matrix
/// (diffusion, `n × d`) into `out`.
pub type VectorFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(x, u) -> l(x, u)`.
pub type ScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Finite, nonempty set of control points in `R^m`, iterated in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    points: Vec<f64>,
}

impl ControlSet {
    /// Explicit list of points, `dim` coordinates each (flattened).
    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("control dimension must be positive".into()));
        }
        if points.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} control coordinates do not split into dimension {dim}",
                points.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        if points.iter().any(|c| !c.is_finite()) {
            return Err(invalid("controls", "control coordinates must be finite"));
        }
        Ok(Self { dim, points })
    }

    pub fn singleton(point: &[f64]) -> Result<Self> {
        Self::from_points(point.len(), point.to_vec())
    }

    /// Tensor grid over a box with `counts[k]` points on axis `k` (endpoints
    /// included; a count of one uses the midpoint). Last axis varies fastest.
    pub fn grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::Dimension("control box bounds and counts disagree".into()));
        }
        if counts.contains(&0) {
            return Err(Error::EmptyControlSet);
        }
        if lower.iter().zip(upper).any(|(a, b)| !(b >= a)) {
            return Err(invalid("controls", "control box needs lower <= upper"));
        }
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .zip(counts)
            .map(|((&a, &b), &c)| {
                if c == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect()
                }
            })
            .collect();
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total * lower.len());
        let mut idx = vec![0usize; lower.len()];
        for _ in 0..total {
            points.extend(idx.iter().zip(&axes).map(|(&i, axis)| axis[i]));
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self::from_points(lower.len(), points)
    }

    /// Box grid with the default resolution of at most 41 points per axis.
    pub fn default_grid(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let counts = vec![41; lower.len()];
        Self::grid(lower, upper, &counts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the point nearest to `u` (first on ties).
    pub fn nearest(&self, u: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.iter().enumerate() {
            let d: f64 = p.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// The tuple `(f, σ, l, U)` on a truncated box domain.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    n: usize,
    d: usize,
    drift: VectorFn,
    diffusion: VectorFn,
    cost: ScalarFn,
    controls: ControlSet,
    domain: Vec<(f64, f64)>,
    cost_lipschitz: Option<f64>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("controls", &self.controls.len())
            .field("domain", &self.domain)
            .finish()
    }
}

/// Builder for [`ControlProblem`]; drift, diffusion and cost default to zero.
pub struct ProblemBuilder {
    name: String,
    n: usize,
    d: usize,
    drift: Option<VectorFn>,
    diffusion: Option<VectorFn>,
    cost: Option<ScalarFn>,
    controls: Option<ControlSet>,
    domain: Option<Vec<(f64, f64)>>,
    cost_lipschitz: Option<f64>,
}

impl ProblemBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(mut self, sigma: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(sigma));
        self
    }

    pub fn cost(mut self, l: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.cost = Some(Arc::new(l));
        self
    }

    pub fn controls(mut self, controls: ControlSet) -> Self {
        self.controls = Some(controls);
        self
    }

    /// Box domain `[lo_k, hi_k]` per state axis.
    pub fn domain(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.domain = Some(bounds);
        self
    }

    /// Known Lipschitz bound of `l` in `x`.
    pub fn cost_lipschitz(mut self, bound: f64) -> Self {
        self.cost_lipschitz = Some(bound);
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        let n = self.n;
        let d = self.d;
        if n == 0 || d == 0 {
            return Err(Error::Dimension(
                "state and disturbance dimensions must be positive".into(),
            ));
        }
        let controls = self.controls.ok_or(Error::EmptyControlSet)?;
        if controls.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        let domain = self.domain.unwrap_or_else(|| vec![(-1.0, 1.0); n]);
        if domain.len() != n {
            return Err(Error::Dimension(format!(
                "domain has {} axes, state dimension is {n}",
                domain.len()
            )));
        }
        if domain.iter().any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(invalid("domain", "each axis needs finite lower < upper"));
        }
        Ok(ControlProblem {
            name: self.name,
            n,
            d,
            drift: self.drift.unwrap_or_else(|| Arc::new(|_, _, out| out.fill(0.0))),
            diffusion: self.diffusion.unwrap_or_else(|| Arc::new(|_, _, out| out.fill(0.0))),
            cost: self.cost.unwrap_or_else(|| Arc::new(|_, _| 0.0)),
            controls,
            domain,
            cost_lipschitz: self.cost_lipschitz,
        })
    }
}

impl ControlProblem {
    pub fn builder(name: impl Into<String>, n: usize, d: usize) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            n,
            d,
            drift: None,
            diffusion: None,
            cost: None,
            controls: None,
            domain: None,
            cost_lipschitz: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn cost_lipschitz(&self) -> Option<f64> {
        self.cost_lipschitz
    }

    /// Same dynamics and cost with a different control set.
    pub fn with_controls(&self, controls: ControlSet) -> Result<Self> {
        if controls.dim() != self.controls.dim() {
            return Err(Error::Dimension("control dimension changed".into()));
        }
        let mut p = self.clone();
        p.controls = controls;
        Ok(p)
    }

    /// Same problem restricted to the single control `U[i]`.
    pub fn restricted_to(&self, i: usize) -> Result<Self> {
        self.with_controls(ControlSet::singleton(self.controls.get(i))?)
    }

    pub fn drift_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    pub fn drift(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.drift_into(x, u, &mut out);
        out
    }

    /// `σ(x,u)` row-major `n × d`.
    pub fn sigma_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, u, out)
    }

    pub fn sigma(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.d];
        self.sigma_into(x, u, &mut out);
        out
    }

    /// Running cost `l(x,u)`.
    pub fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.cost)(x, u)
    }

    pub fn cost_idx(&self, x: &[f64], i: usize) -> f64 {
        self.cost(x, self.controls.get(i))
    }

    /// `a = σσᵀ`, row-major `n × n`.
    pub fn diffusion_matrix(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let sigma = self.sigma(x, u);
        gram(&sigma, self.n, self.d)
    }

    /// `H^u(x,p) = f·p + ½ a p·p = max_v { (f + σv)·p − ½|v|² }`.
    pub fn hamiltonian_u(&self, x: &[f64], u: &[f64], p: &[f64]) -> f64 {
        let f = self.drift(x, u);
        let sigma = self.sigma(x, u);
        hamiltonian_from_parts(&f, &sigma, p, self.d)
    }

    /// Maximizer `σᵀp` of the disturbance problem inside `H^u`.
    pub fn worst_disturbance(&self, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        let sigma = self.sigma(x, u);
        sigma_transpose_times(&sigma, p, self.n, self.d)
    }

    /// `(f + σv)·p − ½|v|²` for a specific disturbance.
    pub fn disturbed_payoff(&self, x: &[f64], u: &[f64], p: &[f64], v: &[f64]) -> f64 {
        let f = self.drift(x, u);
        let sigma = self.sigma(x, u);
        let mut total = 0.0;
        for i in 0..self.n {
            let mut rate = f[i];
            for j in 0..self.d {
                rate += sigma[i * self.d + j] * v[j];
            }
            total += rate * p[i];
        }
        total - 0.5 * v.iter().map(|c| c * c).sum::<f64>()
    }

    /// Terminal data `min_u l(x,u)` with the minimizing control index (first
    /// in iteration order on ties).
    pub fn terminal_value(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, u) in self.controls.iter().enumerate() {
            let l = self.cost(x, u);
            if l < best.0 {
                best = (l, i);
            }
        }
        best
    }

    /// `A(x,r) = {u : l(x,u) <= r}`, or the strict set `{u : l(x,u) < r}`.
    pub fn admissible_set(&self, x: &[f64], r: f64, strict: bool) -> Vec<usize> {
        self.controls
            .iter()
            .enumerate()
            .filter(|(_, u)| {
                let l = self.cost(x, u);
                if strict {
                    l < r
                } else {
                    l <= r
                }
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// `σσᵀ` for row-major `n × d` σ.
pub fn gram(sigma: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            a[i * n + k] = (0..d).map(|j| sigma[i * d + j] * sigma[k * d + j]).sum();
        }
    }
    a
}

/// `σᵀ p`.
pub fn sigma_transpose_times(sigma: &[f64], p: &[f64], n: usize, d: usize) -> Vec<f64> {
    (0..d).map(|j| (0..n).map(|i| sigma[i * d + j] * p[i]).sum()).collect()
}

/// `f·p + ½|σᵀp|²`, which equals `f·p + ½ a p·p`.
pub fn hamiltonian_from_parts(f: &[f64], sigma: &[f64], p: &[f64], d: usize) -> f64 {
    let n = f.len();
    let drift: f64 = f.iter().zip(p).map(|(a, b)| a * b).sum();
    let mut quad = 0.0;
    for j in 0..d {
        let s: f64 = (0..n).map(|i| sigma[i * d + j] * p[i]).sum();
        quad += s * s;
    }
    drift + 0.5 * quad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: f64, sigma: f64, controls: ControlSet) -> ControlProblem {
        ControlProblem::builder("scalar", 1, 1)
            .drift(move |_, _, out| out[0] = f)
            .diffusion(move |_, _, out| out[0] = sigma)
            .cost(|x, u| x[0] * x[0] + u[0] * u[0])
            .controls(controls)
            .domain(vec![(-2.0, 2.0)])
            .build()
            .unwrap()
    }

    #[test]
    fn control_grid_and_singleton() {
        let g = ControlSet::grid(&[-1.0], &[1.0], &[21]).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.get(0), &[-1.0]);
        assert_eq!(g.get(10), &[0.0]);
        assert_eq!(g.get(20), &[1.0]);
        let g2 = ControlSet::grid(&[0.0, 0.0], &[1.0, 2.0], &[2, 3]).unwrap();
        assert_eq!(g2.len(), 6);
        assert_eq!(g2.get(1), &[0.0, 1.0]);
        assert_eq!(g2.get(3), &[1.0, 0.0]);
        assert_eq!(ControlSet::default_grid(&[-1.0], &[1.0]).unwrap().len(), 41);
        assert_eq!(ControlSet::from_points(1, vec![]).unwrap_err(), Error::EmptyControlSet);
        assert_eq!(
            ControlSet::grid(&[0.0], &[1.0], &[0]).unwrap_err(),
            Error::EmptyControlSet
        );
    }

    #[test]
    fn diffusion_matrices() {
        let p = scalar(0.0, 0.0, ControlSet::singleton(&[0.0]).unwrap());
        assert_eq!(p.diffusion_matrix(&[0.3], &[0.0]), vec![0.0]);
        let p = scalar(0.0, 2.0, ControlSet::singleton(&[0.0]).unwrap());
        assert_eq!(p.diffusion_matrix(&[0.3], &[0.0]), vec![4.0]);

        let p2 = ControlProblem::builder("col", 2, 1)
            .diffusion(|_, _, out| {
                out[0] = 1.0;
                out[1] = 1.0;
            })
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-1.0, 1.0); 2])
            .build()
            .unwrap();
        let a = p2.diffusion_matrix(&[0.0, 0.0], &[0.0]);
        assert_eq!(a, vec![1.0, 1.0, 1.0, 1.0]);
        // trace 2, determinant 0: eigenvalues {0, 2}
        let tr = a[0] + a[3];
        let det = a[0] * a[3] - a[1] * a[2];
        assert_eq!((tr, det), (2.0, 0.0));
    }

    #[test]
    fn hamiltonian_u_cases() {
        let u0 = ControlSet::singleton(&[0.0]).unwrap();
        let p = scalar(1.5, 0.0, u0.clone());
        assert_eq!(p.hamiltonian_u(&[0.0], &[0.0], &[2.0]), 3.0);
        let p = scalar(0.0, 1.0, u0.clone());
        assert_eq!(p.hamiltonian_u(&[0.0], &[0.0], &[3.0]), 4.5);
        let p = scalar(1.0, 2.0, u0);
        let h = p.hamiltonian_u(&[0.0], &[0.0], &[0.5]);
        assert!((h - 1.0).abs() < 1e-15);
        // grid search over v in [-4, 4] confirms the supremum
        let best = (0..=8000)
            .map(|k| -4.0 + k as f64 * 1e-3)
            .map(|v| p.disturbed_payoff(&[0.0], &[0.0], &[0.5], &[v]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best - 1.0).abs() < 1e-6 && best <= h + 1e-15);
    }

    #[test]
    fn worst_disturbance_cases() {
        let u0 = ControlSet::singleton(&[0.0]).unwrap();
        let p = scalar(1.0, 2.0, u0);
        assert_eq!(p.worst_disturbance(&[0.0], &[0.0], &[0.0]), vec![0.0]);
        let v = p.worst_disturbance(&[0.0], &[0.0], &[0.5]);
        assert_eq!(v, vec![1.0]);
        let h = p.hamiltonian_u(&[0.0], &[0.0], &[0.5]);
        assert!((p.disturbed_payoff(&[0.0], &[0.0], &[0.5], &v) - h).abs() < 1e-15);

        let ident = ControlProblem::builder("id", 2, 2)
            .diffusion(|_, _, out| {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            })
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(-1.0, 1.0); 2])
            .build()
            .unwrap();
        assert_eq!(
            ident.worst_disturbance(&[0.0, 0.0], &[0.0], &[0.3, -0.2]),
            vec![0.3, -0.2]
        );
    }

    #[test]
    fn terminal_value_cases() {
        let p = scalar(0.0, 0.0, ControlSet::singleton(&[0.5]).unwrap());
        assert_eq!(p.terminal_value(&[1.0]).0, 1.25);
        let p = scalar(0.0, 0.0, ControlSet::from_points(1, vec![-1.0, 0.0, 1.0]).unwrap());
        assert_eq!(p.terminal_value(&[0.7]), (0.7 * 0.7, 1));
        let abs = ControlProblem::builder("abs", 1, 1)
            .cost(|x, u| (x[0] - u[0]).abs())
            .controls(ControlSet::from_points(1, vec![0.0, 1.0]).unwrap())
            .build()
            .unwrap();
        let (v, i) = abs.terminal_value(&[0.7]);
        assert!((v - 0.3).abs() < 1e-15);
        assert_eq!(i, 1);
    }

    #[test]
    fn admissible_set_cases() {
        let sq = ControlProblem::builder("sq", 1, 1)
            .cost(|_, u| u[0] * u[0])
            .controls(ControlSet::from_points(1, vec![-1.0, 0.0, 1.0]).unwrap())
            .build()
            .unwrap();
        assert_eq!(sq.admissible_set(&[0.0], f64::INFINITY, false), vec![0, 1, 2]);
        assert!(sq.admissible_set(&[0.0], -0.1, false).is_empty());
        assert_eq!(sq.admissible_set(&[0.0], 0.5, false), vec![1]);
        assert!(sq.admissible_set(&[0.0], 0.0, true).is_empty());
        assert_eq!(sq.admissible_set(&[0.0], 0.0, false), vec![1]);
    }

    #[test]
    fn builder_validation() {
        let err = ControlProblem::builder("bad", 1, 1).build().unwrap_err();
        assert_eq!(err, Error::EmptyControlSet);
        let err = ControlProblem::builder("bad", 1, 1)
            .controls(ControlSet::singleton(&[0.0]).unwrap())
            .domain(vec![(1.0, 0.0)])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }
}
