//! The discontinuous Hamiltonian
//!
//! ```text
//! 𝓗(x, r, p) = min_{u ∈ A(x,r)} H^u(x, p),   A(x, r) = {u : l(x,u) <= r}
//! ```
//!
//! (`+∞` on an empty admissible set), its upper envelope in `r` (the same
//! minimum over the strict set `A'(x,r) = {u : l(x,u) < r}`), and the
//! Elliott–Kalton Hamiltonian `𝓚 = max_v min_{u ∈ A} {(f+σv)·p − ½|v|²}`.
//!
//! With a finite control set `r ↦ 𝓗(x,r,p)` is a right-continuous,
//! nonincreasing step function, so both envelopes are exact set operations.

use crate::problem::{sigma_transpose_times, ControlProblem};

/// The argument triple `(x, r, p)`.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianQuery<'a> {
    pub x: &'a [f64],
    pub r: f64,
    pub p: &'a [f64],
}

impl<'a> HamiltonianQuery<'a> {
    pub fn new(x: &'a [f64], r: f64, p: &'a [f64]) -> Self {
        Self { x, r, p }
    }
}

/// Value of a Hamiltonian in `R ∪ {+∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HamiltonianValue {
    /// The filtered control set was empty.
    Infinite,
    /// Finite value and the control index attaining it.
    Finite { value: f64, control: usize },
}

impl HamiltonianValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, HamiltonianValue::Infinite)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            HamiltonianValue::Finite { value, .. } => Some(*value),
            HamiltonianValue::Infinite => None,
        }
    }

    pub fn control(&self) -> Option<usize> {
        match self {
            HamiltonianValue::Finite { control, .. } => Some(*control),
            HamiltonianValue::Infinite => None,
        }
    }

    /// `+∞` maps to `f64::INFINITY`; only for comparisons and reporting.
    pub fn as_f64(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

fn min_over(problem: &ControlProblem, x: &[f64], p: &[f64], set: &[usize]) -> HamiltonianValue {
    let mut best = HamiltonianValue::Infinite;
    for &i in set {
        let h = problem.hamiltonian_u(x, problem.controls().get(i), p);
        if best.value().is_none_or(|b| h < b) {
            best = HamiltonianValue::Finite { value: h, control: i };
        }
    }
    best
}

/// `𝓗(x,r,p)`.
pub fn hamiltonian_h(problem: &ControlProblem, q: &HamiltonianQuery<'_>) -> HamiltonianValue {
    let set = problem.admissible_set(q.x, q.r, false);
    min_over(problem, q.x, q.p, &set)
}

/// Upper envelope `𝓗*(x,r,p) = 𝓗(x, r−0, p)`: the minimum over the strict
/// admissible set.
pub fn hamiltonian_h_upper(problem: &ControlProblem, q: &HamiltonianQuery<'_>) -> HamiltonianValue {
    let set = problem.admissible_set(q.x, q.r, true);
    min_over(problem, q.x, q.p, &set)
}

/// Lower envelope `𝓗_*`. For a finite control set it coincides with `𝓗`.
pub fn hamiltonian_h_lower(problem: &ControlProblem, q: &HamiltonianQuery<'_>) -> HamiltonianValue {
    hamiltonian_h(problem, q)
}

/// `min { l(x,u) − r : l(x,u) > r }`, the distance from `r` to the next cost
/// level above it (`+∞` if none).
pub fn level_gap(problem: &ControlProblem, x: &[f64], r: f64) -> f64 {
    problem
        .controls()
        .iter()
        .map(|u| problem.cost(x, u) - r)
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Default half-width of the `v` box for [`hamiltonian_k`]:
/// `2·max_u |σ(x,u)ᵀp| + 1`.
pub fn default_k_radius(problem: &ControlProblem, x: &[f64], p: &[f64]) -> f64 {
    let n = problem.state_dim();
    let d = problem.noise_dim();
    let peak = problem
        .controls()
        .iter()
        .map(|u| {
            let s = problem.sigma(x, u);
            sigma_transpose_times(&s, p, n, d)
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    2.0 * peak + 1.0
}

/// `𝓚(x,r,p) = max_v min_{u ∈ A(x,r)} {(f+σv)·p − ½|v|²}` with the outer
/// maximum taken over the grid `[−radius, radius]^d` at spacing `v_step`.
/// `radius = None` uses [`default_k_radius`].
pub fn hamiltonian_k(
    problem: &ControlProblem,
    q: &HamiltonianQuery<'_>,
    radius: Option<f64>,
    v_step: f64,
) -> HamiltonianValue {
    let set = problem.admissible_set(q.x, q.r, false);
    if set.is_empty() {
        return HamiltonianValue::Infinite;
    }
    let n = problem.state_dim();
    let d = problem.noise_dim();
    // g_u(v) = f_u·p + w_u·v − ½|v|² with w_u = σ_uᵀ p
    let parts: Vec<(usize, f64, Vec<f64>)> = set
        .iter()
        .map(|&i| {
            let u = problem.controls().get(i);
            let f = problem.drift(q.x, u);
            let s = problem.sigma(q.x, u);
            let fp: f64 = f.iter().zip(q.p).map(|(a, b)| a * b).sum();
            (i, fp, sigma_transpose_times(&s, q.p, n, d))
        })
        .collect();
    let radius = radius.unwrap_or_else(|| default_k_radius(problem, q.x, q.p));
    let per_axis = (radius / v_step).ceil() as i64;
    let axis: Vec<f64> = (-per_axis..=per_axis).map(|k| k as f64 * v_step).collect();

    let mut best_value = f64::NEG_INFINITY;
    let mut best_control = parts[0].0;
    let mut idx = vec![0usize; d];
    let mut v = vec![0.0; d];
    loop {
        for (slot, &k) in v.iter_mut().zip(&idx) {
            *slot = axis[k];
        }
        let penalty = 0.5 * v.iter().map(|c| c * c).sum::<f64>();
        let mut inner = f64::INFINITY;
        let mut inner_control = parts[0].0;
        for (i, fp, w) in &parts {
            let g = fp + w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() - penalty;
            if g < inner {
                inner = g;
                inner_control = *i;
            }
        }
        if inner > best_value {
            best_value = inner;
            best_control = inner_control;
        }
        let mut carry = true;
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < axis.len() {
                carry = false;
                break;
            }
            idx[k] = 0;
        }
        if carry {
            break;
        }
    }
    HamiltonianValue::Finite {
        value: best_value,
        control: best_control,
    }
}
