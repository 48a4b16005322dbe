//! Max-plus (idempotent) algebra and max-plus probability on finite,
//! piecewise-constant disturbance spaces.
//!
//! A disturbance path is a sequence of grid values `v_j`, one per partition
//! interval `[s_j, s_{j+1})`. Its max-plus density is
//!
//! ```text
//! Q(v) = -1/2 * sum_j |v_j|^2 (s_{j+1} - s_j)
//! ```
//!
//! and expectations are `E+[Z] = max_v { Z(v) + Q(v) }`.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// An element of the max-plus semiring `R ∪ {-∞}`.
///
/// `-∞` is a dedicated variant rather than `f64::NEG_INFINITY` so that
/// `⊗` never has to evaluate `-∞ + ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxPlus {
    NegInf,
    Finite(f64),
}

impl MaxPlus {
    /// Additive identity `𝟘 = -∞`.
    pub const ZERO: MaxPlus = MaxPlus::NegInf;
    /// Multiplicative identity `𝟙 = 0`.
    pub const ONE: MaxPlus = MaxPlus::Finite(0.0);

    /// `a ⊕ b = max(a, b)`.
    pub fn oplus(self, other: MaxPlus) -> MaxPlus {
        match (self, other) {
            (MaxPlus::NegInf, b) => b,
            (a, MaxPlus::NegInf) => a,
            (MaxPlus::Finite(a), MaxPlus::Finite(b)) => MaxPlus::Finite(a.max(b)),
        }
    }

    /// `a ⊗ b = a + b`, absorbing at `-∞`.
    pub fn otimes(self, other: MaxPlus) -> MaxPlus {
        match (self, other) {
            (MaxPlus::Finite(a), MaxPlus::Finite(b)) => MaxPlus::Finite(a + b),
            _ => MaxPlus::NegInf,
        }
    }

    pub fn is_neg_inf(self) -> bool {
        matches!(self, MaxPlus::NegInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            MaxPlus::Finite(x) => Some(x),
            MaxPlus::NegInf => None,
        }
    }

    /// Lossy view as `f64` (`-∞` maps to `f64::NEG_INFINITY`).
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }
}

impl From<f64> for MaxPlus {
    fn from(x: f64) -> Self {
        debug_assert!(!x.is_nan(), "NaN is not a max-plus scalar");
        if x == f64::NEG_INFINITY {
            MaxPlus::NegInf
        } else {
            MaxPlus::Finite(x)
        }
    }
}

impl PartialOrd for MaxPlus {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (MaxPlus::NegInf, MaxPlus::NegInf) => Some(Ordering::Equal),
            (MaxPlus::NegInf, _) => Some(Ordering::Less),
            (_, MaxPlus::NegInf) => Some(Ordering::Greater),
            (MaxPlus::Finite(a), MaxPlus::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for MaxPlus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxPlus::NegInf => write!(f, "-inf"),
            MaxPlus::Finite(x) => write!(f, "{x}"),
        }
    }
}

/// `⊕`-sum of an iterator; `𝟘` for an empty one.
pub fn oplus_all<I: IntoIterator<Item = MaxPlus>>(items: I) -> MaxPlus {
    items.into_iter().fold(MaxPlus::ZERO, MaxPlus::oplus)
}

/// A finite max-plus probability space of piecewise-constant disturbances.
#[derive(Debug, Clone)]
pub struct DiscretePathSpace {
    times: Vec<f64>,
    dim: usize,
    /// Disturbance values, `dim` coordinates each.
    values: Vec<f64>,
}

impl DiscretePathSpace {
    /// Builds a space from a strictly increasing partition and an explicit
    /// list of disturbance values in `R^dim` (flattened).
    pub fn new(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "partition".into(),
                reason: "needs at least two times".into(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "partition".into(),
                reason: "times must be strictly increasing".into(),
            });
        }
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} disturbance coordinates do not split into dimension {dim}",
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptySampleSpace);
        }
        Ok(Self { times, dim, values })
    }

    /// Uniform partition of `[t0, t1]` into `steps` intervals with the box
    /// `[-v_max, v_max]^dim` sampled at spacing `dv` on every axis.
    pub fn uniform(t0: f64, t1: f64, steps: usize, dim: usize, v_max: f64, dv: f64) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::InvalidParameter {
                name: "partition".into(),
                reason: format!("need t1 > t0 and at least one step, got [{t0}, {t1}] / {steps}"),
            });
        }
        if !(v_max >= 0.0) || !(dv > 0.0) {
            return Err(Error::InvalidParameter {
                name: "disturbance box".into(),
                reason: format!("need v_max >= 0 and dv > 0, got {v_max}, {dv}"),
            });
        }
        let times = (0..=steps).map(|j| t0 + (t1 - t0) * j as f64 / steps as f64).collect();
        let per_axis = (v_max / dv).round() as i64;
        let axis: Vec<f64> = (-per_axis..=per_axis).map(|k| k as f64 * dv).collect();
        let mut values = Vec::with_capacity(axis.len().pow(dim as u32) * dim);
        let mut idx = vec![0usize; dim];
        loop {
            values.extend(idx.iter().map(|&i| axis[i]));
            if !advance(&mut idx, axis.len()) {
                break;
            }
        }
        Self::new(times, dim, values)
    }

    /// Default disturbance box: `v_max = 4`, `dv = 0.5`.
    pub fn with_default_box(t0: f64, t1: f64, steps: usize, dim: usize) -> Result<Self> {
        Self::uniform(t0, t1, steps, dim, 4.0, 0.5)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of disturbance values available per step.
    pub fn grid_len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn grid_value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Total number of paths, `|grid|^steps` (saturating).
    pub fn path_count(&self) -> usize {
        self.grid_len().saturating_pow(self.steps() as u32)
    }

    fn step_weight(&self, j: usize, value_index: usize) -> f64 {
        let v = self.grid_value(value_index);
        let norm2: f64 = v.iter().map(|c| c * c).sum();
        -0.5 * norm2 * (self.times[j + 1] - self.times[j])
    }

    /// Density `Q` of the steps `range` of a path given by value indices.
    fn partial_density(&self, steps: std::ops::Range<usize>, indices: &[usize]) -> f64 {
        steps.zip(indices).map(|(j, &i)| self.step_weight(j, i)).sum()
    }

    /// Max-plus density `Q(v) <= 0` of a full path.
    pub fn density(&self, path: &Path<'_>) -> f64 {
        self.partial_density(0..self.steps(), path.indices)
    }

    /// Density of the steps before the split index `k` (`Q_1`) and from it
    /// onward (`Q_2`). `Q = Q_1 ⊗ Q_2`.
    pub fn split_density(&self, path: &Path<'_>, k: usize) -> (f64, f64) {
        let q1 = self.partial_density(0..k, &path.indices[..k]);
        let q2 = self.partial_density(k..self.steps(), &path.indices[k..]);
        (q1, q2)
    }

    /// Index `k` with `times[k] == r` for an interior partition point.
    pub fn split_index(&self, r: f64) -> Result<usize> {
        let scale = (self.times[self.steps()] - self.times[0]).abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - r).abs() <= 1e-12 * scale)
            .filter(|&k| k > 0 && k < self.steps())
            .ok_or(Error::NotAPartitionPoint { time: r })
    }

    /// Calls `visit` on every path of `steps` free steps appended to `prefix`.
    fn for_each_completion(&self, prefix: &[usize], mut visit: impl FnMut(&Path<'_>)) {
        let free = self.steps() - prefix.len();
        let mut indices = prefix.to_vec();
        indices.extend(std::iter::repeat_n(0, free));
        let base = prefix.len();
        loop {
            visit(&Path {
                space: self,
                indices: &indices,
            });
            if !advance(&mut indices[base..], self.grid_len()) {
                break;
            }
        }
    }
}

/// Odometer increment; returns false after the last combination.
fn advance(idx: &mut [usize], radix: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < radix {
            return true;
        }
        *slot = 0;
    }
    false
}

/// A borrowed disturbance path: one grid value per partition interval.
#[derive(Debug, Clone, Copy)]
pub struct Path<'a> {
    space: &'a DiscretePathSpace,
    indices: &'a [usize],
}

impl<'a> Path<'a> {
    pub fn new(space: &'a DiscretePathSpace, indices: &'a [usize]) -> Result<Self> {
        if indices.len() != space.steps() {
            return Err(Error::PrefixLength {
                expected: space.steps(),
                got: indices.len(),
            });
        }
        if indices.iter().any(|&i| i >= space.grid_len()) {
            return Err(Error::Dimension("disturbance index out of range".into()));
        }
        Ok(Self { space, indices })
    }

    pub fn steps(&self) -> usize {
        self.indices.len()
    }

    /// Disturbance on interval `j`.
    pub fn value(&self, j: usize) -> &'a [f64] {
        self.space.grid_value(self.indices[j])
    }

    pub fn indices(&self) -> &'a [usize] {
        self.indices
    }

    /// Length of interval `j`.
    pub fn dt(&self, j: usize) -> f64 {
        self.space.times[j + 1] - self.space.times[j]
    }

    pub fn space(&self) -> &'a DiscretePathSpace {
        self.space
    }
}

/// `E+[Z] = max_v { Z(v) ⊗ Q(v) }` by exhaustive enumeration.
pub fn maxplus_expectation<Z>(z: Z, space: &DiscretePathSpace) -> Result<MaxPlus>
where
    Z: Fn(&Path<'_>) -> MaxPlus,
{
    if space.grid_len() == 0 {
        return Err(Error::EmptySampleSpace);
    }
    let mut best = MaxPlus::ZERO;
    space.for_each_completion(&[], |path| {
        best = best.oplus(z(path).otimes(MaxPlus::Finite(space.density(path))));
    });
    Ok(best)
}

/// `P+(A) = sup_{v ∈ A} Q(v)`, `-∞` on the empty event.
pub fn maxplus_probability<A>(event: A, space: &DiscretePathSpace) -> MaxPlus
where
    A: Fn(&Path<'_>) -> bool,
{
    let mut best = MaxPlus::ZERO;
    space.for_each_completion(&[], |path| {
        if event(path) {
            best = best.oplus(MaxPlus::Finite(space.density(path)));
        }
    });
    best
}

/// `E+[Z | v1] = max_{v2} { Z(v1, v2) ⊗ Q_2(v2) }` for a prefix `v1` on
/// `[t, r]`, `r` an interior partition point.
pub fn conditional_expectation<Z>(z: Z, prefix: &[usize], split_time: f64, space: &DiscretePathSpace) -> Result<MaxPlus>
where
    Z: Fn(&Path<'_>) -> MaxPlus,
{
    let k = space.split_index(split_time)?;
    if prefix.len() != k {
        return Err(Error::PrefixLength {
            expected: k,
            got: prefix.len(),
        });
    }
    if prefix.iter().any(|&i| i >= space.grid_len()) {
        return Err(Error::Dimension("disturbance index out of range".into()));
    }
    let mut best = MaxPlus::ZERO;
    space.for_each_completion(prefix, |path| {
        let (_, q2) = space.split_density(path, k);
        best = best.oplus(z(path).otimes(MaxPlus::Finite(q2)));
    });
    Ok(best)
}

/// Right side of the tower identity: `E+[ E+[Z | v1] ]`, the outer
/// expectation taken over prefixes with the prefix density `Q_1`.
pub fn iterated_expectation<Z>(z: Z, split_time: f64, space: &DiscretePathSpace) -> Result<MaxPlus>
where
    Z: Fn(&Path<'_>) -> MaxPlus,
{
    let k = space.split_index(split_time)?;
    let mut prefix = vec![0usize; k];
    let mut best = MaxPlus::ZERO;
    loop {
        let inner = conditional_expectation(&z, &prefix, split_time, space)?;
        let q1 = space.partial_density(0..k, &prefix);
        best = best.oplus(inner.otimes(MaxPlus::Finite(q1)));
        if !advance(&mut prefix, space.grid_len()) {
            break;
        }
    }
    Ok(best)
}
