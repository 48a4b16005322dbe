//! Built-in problem families used by the experiments and tests.
//!
//! The Merton family lives in [`crate::merton`] and the quadratic
//! H-infinity family in [`crate::hinfty`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::problem::{ControlProblem, ControlSet};

/// Affine-drift family `f = u − x`, `σ = sigma·I`, `l = min(|x|², clip)`,
/// `U = [−u_max, u_max]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineParams {
    pub dim: usize,
    pub sigma: f64,
    pub clip: f64,
    pub u_max: f64,
    pub u_points: usize,
    pub half_width: f64,
}

impl Default for AffineParams {
    /// The canonical test problem: n = 1, σ = 0.5, l = min(x², 2),
    /// U = [−1, 1] at 21 points, domain [−2, 2].
    fn default() -> Self {
        Self {
            dim: 1,
            sigma: 0.5,
            clip: 2.0,
            u_max: 1.0,
            u_points: 21,
            half_width: 2.0,
        }
    }
}

impl AffineParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(invalid("problem.dim", "must be 1 or 2"));
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("problem.sigma", "must be nonnegative"));
        }
        if !(self.clip > 0.0) {
            return Err(invalid("problem.clip", "must be positive"));
        }
        if !(self.u_max >= 0.0) {
            return Err(invalid("problem.u_max", "must be nonnegative"));
        }
        if self.u_points == 0 {
            return Err(invalid("problem.u_points", "control set would be empty"));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("problem.half_width", "must be positive"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ControlProblem> {
        self.validate()?;
        let n = self.dim;
        let sigma = self.sigma;
        let clip = self.clip;
        let controls = ControlSet::grid(&vec![-self.u_max; n], &vec![self.u_max; n], &vec![self.u_points; n])?;
        ControlProblem::builder("affine", n, n)
            .drift(|x, u, out| {
                for k in 0..x.len() {
                    out[k] = u[k] - x[k];
                }
            })
            .diffusion(move |_, _, out| {
                out.fill(0.0);
                for k in 0..n {
                    out[k * n + k] = sigma;
                }
            })
            .cost(move |x, _| x.iter().map(|c| c * c).sum::<f64>().min(clip))
            .controls(controls)
            .domain(vec![(-self.half_width, self.half_width); n])
            .cost_lipschitz(2.0 * clip.sqrt())
            .build()
    }
}

/// The canonical test problem.
pub fn canonical() -> ControlProblem {
    AffineParams::default().build().expect("canonical parameters are valid")
}

/// `l ≡ c` with stable dynamics `f = −x`, `σ = 1`, `U = {0}`.
pub fn constant_cost(c: f64, half_width: f64) -> Result<ControlProblem> {
    if !c.is_finite() {
        return Err(invalid("problem.c", "must be finite"));
    }
    ControlProblem::builder("constant", 1, 1)
        .drift(|x, _, out| out[0] = -x[0])
        .diffusion(|_, _, out| out[0] = 1.0)
        .cost(move |_, _| c)
        .controls(ControlSet::singleton(&[0.0])?)
        .domain(vec![(-half_width, half_width)])
        .cost_lipschitz(0.0)
        .build()
}

/// `f ≡ 0`, `σ ≡ 1`, `l(x) = x`: the running maximum of a pure disturbance
/// channel. Its max-plus value from `(0, 0)` over `[0, 1]` is `1/2`.
pub fn running_max_toy(half_width: f64) -> Result<ControlProblem> {
    ControlProblem::builder("toy", 1, 1)
        .diffusion(|_, _, out| out[0] = 1.0)
        .cost(|x, _| x[0])
        .controls(ControlSet::singleton(&[0.0])?)
        .domain(vec![(-half_width, half_width)])
        .cost_lipschitz(1.0)
        .build()
}
