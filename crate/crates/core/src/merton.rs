//! Merton consumption-investment benchmark.
//!
//! Finite risk parameter θ:
//!
//! ```text
//! ν_θ = (μ−r)² / (2Σ²(1+θ)) + r
//! h_θ(t) = (1+θ)/(ν_θ θ) · (1 − exp(−ν_θ θ (T−t)/(1+θ)))
//! Ψ_θ(t,x) = h_θ(t)^{1+θ} x^{−θ},   k*_θ = (μ−r)/(Σ²(1+θ)),   c*_θ = 1/h_θ
//! ```
//!
//! and the totally risk-averse limit (`θΣ² → σ̄²`):
//!
//! ```text
//! V(t,x) = −log x + B(t),   B(t) = log((1 − e^{−ν(T−t)})/ν),   ν = (μ−r)²/(2σ̄²) + r
//! k* = (μ−r)/σ̄²,   c*(t) = e^{−B(t)}
//! ```
//!
//! The modified problem works in `y = log x` with consumption capped at
//! `C > ν`; its value is `−y + B̃(t)` with `dB̃/dt = ν − min(C, e^{−B̃})` and
//! `B̃(T) = −log C`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{ControlProblem, ControlSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MertonParams {
    /// Riskless rate.
    pub r: f64,
    /// Mean return of the risky asset.
    pub mu: f64,
    /// Volatility `Σ` at finite θ.
    pub sigma: f64,
    /// Limit volatility scale `σ̄`.
    pub sigma_bar: f64,
    pub horizon: f64,
    pub theta: f64,
}

impl Default for MertonParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            mu: 0.1,
            sigma: 0.2,
            sigma_bar: 0.2,
            horizon: 1.0,
            theta: 1.0,
        }
    }
}

impl MertonParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("merton.r", self.r), ("merton.mu", self.mu)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("merton.sigma", self.sigma),
            ("merton.sigma_bar", self.sigma_bar),
            ("merton.horizon", self.horizon),
            ("merton.theta", self.theta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    fn remaining(&self, t: f64) -> Result<f64> {
        self.validate()?;
        let tau = self.horizon - t;
        if !(tau > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("need t < T = {}, got t = {t}", self.horizon)));
        }
        Ok(tau)
    }

    pub fn nu_theta(&self) -> f64 {
        let excess = self.mu - self.r;
        excess * excess / (2.0 * self.sigma * self.sigma * (1.0 + self.theta)) + self.r
    }

    pub fn nu(&self) -> f64 {
        let excess = self.mu - self.r;
        excess * excess / (2.0 * self.sigma_bar * self.sigma_bar) + self.r
    }

    /// `h_θ(t)`; equals `T − t` in the degenerate case `ν_θ = 0`.
    pub fn h_theta(&self, t: f64) -> Result<f64> {
        let tau = self.remaining(t)?;
        let rate = self.nu_theta() * self.theta / (1.0 + self.theta);
        Ok(if rate == 0.0 {
            tau
        } else {
            -(-rate * tau).exp_m1() / rate
        })
    }

    /// `B(t)`; `B(T) = −∞` is reported as a domain error.
    pub fn b(&self, t: f64) -> Result<f64> {
        if t == self.horizon {
            return Err(Error::Domain("B(T) = −∞".into()));
        }
        let tau = self.remaining(t)?;
        let nu = self.nu();
        Ok(if nu == 0.0 {
            tau.ln()
        } else {
            (-(-nu * tau).exp_m1() / nu).ln()
        })
    }

    /// Analytic `Ḃ(t) = −ν e^{−ν(T−t)} / (1 − e^{−ν(T−t)})`.
    pub fn b_dot(&self, t: f64) -> Result<f64> {
        let tau = self.remaining(t)?;
        let nu = self.nu();
        Ok(if nu == 0.0 {
            -1.0 / tau
        } else {
            -nu / (nu * tau).exp_m1()
        })
    }

    pub fn k_star(&self) -> f64 {
        (self.mu - self.r) / (self.sigma_bar * self.sigma_bar)
    }

    /// `c*(t) = e^{−B(t)}`.
    pub fn c_star(&self, t: f64) -> Result<f64> {
        Ok((-self.b(t)?).exp())
    }
}

/// `(Ψ_θ(t,x), V_θ(t,x) = θ⁻¹ log Ψ_θ)`.
pub fn merton_value_finite(params: &MertonParams, t: f64, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    let h = params.h_theta(t)?;
    let theta = params.theta;
    let log_psi = (1.0 + theta) * h.ln() - theta * x.ln();
    Ok((log_psi.exp(), log_psi / theta))
}

/// `(k*_θ, c*_θ(s))`. `c*_θ` diverges as `s → T⁻`.
pub fn merton_optimal_controls_finite(params: &MertonParams, s: f64) -> Result<(f64, f64)> {
    let h = params.h_theta(s)?;
    let k = (params.mu - params.r) / (params.sigma * params.sigma * (1.0 + params.theta));
    Ok((k, 1.0 / h))
}

/// `V(t,x) = −log x + B(t)`.
pub fn merton_limit_value(params: &MertonParams, t: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    Ok(-x.ln() + params.b(t)?)
}

/// `(−log c*(t) − B(t), Ḃ(t) + c*(t) − ν)`.
pub fn qvi_identity_check(params: &MertonParams, t: f64) -> Result<(f64, f64)> {
    let b = params.b(t)?;
    let c = params.c_star(t)?;
    let r1 = -c.ln() - b;
    let r2 = params.b_dot(t)? + c - params.nu();
    Ok((r1, r2))
}

/// Volatility schedule `Σ(θ)` with `θΣ(θ)² → σ̄²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VolatilitySchedule {
    /// `Σ² = σ̄²/θ`.
    #[default]
    Inverse,
    /// `Σ² = σ̄²/θ · (1 + 1/θ)`.
    InversePerturbed,
}

impl VolatilitySchedule {
    pub fn sigma(&self, sigma_bar: f64, theta: f64) -> f64 {
        let base = sigma_bar * sigma_bar / theta;
        match self {
            VolatilitySchedule::Inverse => base.sqrt(),
            VolatilitySchedule::InversePerturbed => (base * (1.0 + 1.0 / theta)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitConsistencyRow {
    pub theta: f64,
    pub t: f64,
    pub x: f64,
    pub v_theta: f64,
    pub v_limit: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitConsistencyReport {
    pub rows: Vec<LimitConsistencyRow>,
    /// Largest distance per θ, in sweep order.
    pub max_distance: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// `|V_θ(t,x) − V(t,x)|` along a θ sweep with `Σ = Σ(θ)`.
pub fn merton_limit_consistency(
    params: &MertonParams,
    thetas: &[f64],
    schedule: VolatilitySchedule,
    samples: &[(f64, f64)],
) -> Result<LimitConsistencyReport> {
    let mut rows = Vec::new();
    let mut max_distance = Vec::new();
    for &theta in thetas {
        let p = MertonParams {
            theta,
            sigma: schedule.sigma(params.sigma_bar, theta),
            ..params.clone()
        };
        let mut worst = 0.0f64;
        for &(t, x) in samples {
            let (_, v_theta) = merton_value_finite(&p, t, x)?;
            let v_limit = merton_limit_value(&p, t, x)?;
            let distance = (v_theta - v_limit).abs();
            worst = worst.max(distance);
            rows.push(LimitConsistencyRow {
                theta,
                t,
                x,
                v_theta,
                v_limit,
                distance,
            });
        }
        max_distance.push(worst);
    }
    let strictly_decreasing = max_distance.windows(2).all(|w| w[1] < w[0]);
    Ok(LimitConsistencyReport {
        rows,
        max_distance,
        strictly_decreasing,
    })
}

/// Drift of the log-wealth state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DriftConvention {
    /// `r + (μ−r)k − c`, the deterministic image of the wealth equation.
    #[default]
    Literal,
    /// `r + (μ−r)k − c − ½σ̄²k²`.
    ItoCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModifiedOptions {
    /// Consumption cap `C`.
    pub cap: f64,
    /// Points on `k ∈ [0, 2k*]`; odd counts put `k*` on the grid.
    pub k_points: usize,
    /// Points on `c ∈ [c_min, C]`.
    pub c_points: usize,
    pub c_min: f64,
    pub drift: DriftConvention,
    pub half_width: f64,
}

impl Default for ModifiedOptions {
    fn default() -> Self {
        Self {
            cap: 1.0,
            k_points: 21,
            c_points: 41,
            c_min: 0.05,
            drift: DriftConvention::Literal,
            half_width: 2.0,
        }
    }
}

/// `B̃` on a uniform backward RK4 grid over `[t0, T]`.
#[derive(Debug, Clone)]
pub struct BTildeOracle {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    nu: f64,
    cap: f64,
}

pub const ORACLE_STEPS: usize = 10_000;

impl BTildeOracle {
    pub fn new(params: &MertonParams, cap: f64, t0: f64) -> Result<Self> {
        params.validate()?;
        let nu = params.nu();
        if !(cap > nu) || !cap.is_finite() {
            return Err(invalid(
                "merton.cap",
                format!("the consumption cap must exceed ν = {nu}, got {cap}"),
            ));
        }
        if !(t0 < params.horizon) {
            return Err(invalid("t0", "must precede the horizon"));
        }
        let dt = (params.horizon - t0) / ORACLE_STEPS as f64;
        // dB̃/dt = ν − min(C, e^{−B̃}); integrate in τ = T − t.
        let rhs = |b: f64| -(nu - cap.min((-b).exp()));
        let mut values = vec![0.0; ORACLE_STEPS + 1];
        let mut b = -cap.ln();
        values[ORACLE_STEPS] = b;
        for k in (0..ORACLE_STEPS).rev() {
            let k1 = rhs(b);
            let k2 = rhs(b + 0.5 * dt * k1);
            let k3 = rhs(b + 0.5 * dt * k2);
            let k4 = rhs(b + dt * k3);
            b += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            values[k] = b;
        }
        Ok(Self {
            t0,
            dt,
            values,
            nu,
            cap,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn horizon(&self) -> f64 {
        self.t0 + self.dt * ORACLE_STEPS as f64
    }

    /// `B̃(t)` by linear interpolation between RK4 nodes.
    pub fn b_tilde(&self, t: f64) -> f64 {
        let s = ((t - self.t0) / self.dt).clamp(0.0, ORACLE_STEPS as f64);
        let k = (s.floor() as usize).min(ORACLE_STEPS - 1);
        let w = s - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// `c̃*(t) = min(C, e^{−B̃(t)})`.
    pub fn c_tilde(&self, t: f64) -> f64 {
        self.cap.min((-self.b_tilde(t)).exp())
    }

    /// `Ṽ(t,y) = −y + B̃(t)`.
    pub fn value(&self, t: f64, y: f64) -> f64 {
        -y + self.b_tilde(t)
    }
}

/// The capped log-wealth problem with state `y`, control `(k, c)`,
/// `σ = σ̄k`, `l = −y − log c`, and its oracle.
pub fn modified_merton_problem(
    params: &MertonParams,
    opts: &ModifiedOptions,
) -> Result<(ControlProblem, BTildeOracle)> {
    let oracle = BTildeOracle::new(params, opts.cap, 0.0)?;
    if opts.k_points == 0 || opts.c_points == 0 {
        return Err(invalid("merton.k_points", "control grids need at least one point"));
    }
    if !(opts.c_min > 0.0 && opts.c_min < opts.cap) {
        return Err(invalid("merton.c_min", "need 0 < c_min < C"));
    }
    if !(opts.half_width > 0.0) {
        return Err(invalid("merton.half_width", "must be positive"));
    }
    let k_max = 2.0 * params.k_star().max(0.0);
    let controls = ControlSet::grid(&[0.0, opts.c_min], &[k_max, opts.cap], &[opts.k_points, opts.c_points])?;
    let (r, excess, sb) = (params.r, params.mu - params.r, params.sigma_bar);
    let ito = opts.drift == DriftConvention::ItoCorrected;
    let problem = ControlProblem::builder("merton-modified", 1, 1)
        .drift(move |_, u, out| {
            let (k, c) = (u[0], u[1]);
            out[0] = r + excess * k - c - if ito { 0.5 * sb * sb * k * k } else { 0.0 };
        })
        .diffusion(move |_, u, out| out[0] = sb * u[0])
        .cost(|y, u| -y[0] - u[1].ln())
        .controls(controls)
        .domain(vec![(-opts.half_width, opts.half_width)])
        .cost_lipschitz(1.0)
        .build()?;
    Ok((problem, oracle))
}

/// Consumption path `c(s)` on `[t, T]` with `k ≡ k*`.
#[derive(Clone)]
pub enum ConsumptionPolicy {
    Constant(f64),
    /// `c*(s) = e^{−B(s)}`.
    Optimal,
    /// `c_δ(s) = 1` on `[t, t+δ]`, `c*(s−δ)` afterwards.
    Delayed(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for ConsumptionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConsumptionPolicy::Constant(c) => write!(f, "constant({c})"),
            ConsumptionPolicy::Optimal => write!(f, "optimal"),
            ConsumptionPolicy::Delayed(d) => write!(f, "delayed({d})"),
            ConsumptionPolicy::Custom(_) => write!(f, "custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparisonRow {
    pub policy: String,
    pub j_tilde: f64,
    pub b: f64,
    pub lower_bound_holds: bool,
    /// Only set for delayed policies: `J̃ ≤ B + |1−ν|δ + tol`.
    pub delayed_upper_bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparisonReport {
    pub t0: f64,
    pub b: f64,
    pub rows: Vec<PolicyComparisonRow>,
}

impl PolicyComparisonReport {
    pub fn all_hold(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.lower_bound_holds && r.delayed_upper_bound_holds.unwrap_or(true))
    }
}

/// Sample count for the maximum over `s`.
const COMPARISON_POINTS: usize = 100_000;

/// `∫_t^s c*(ρ) dρ = log(e^{ν(T−t)} − 1) − log(e^{ν(T−s)} − 1)`.
fn optimal_consumption_integral(nu: f64, horizon: f64, t: f64, s: f64) -> f64 {
    if nu == 0.0 {
        return ((horizon - t) / (horizon - s)).ln();
    }
    (nu * (horizon - t)).exp_m1().ln() - (nu * (horizon - s)).exp_m1().ln()
}

/// `J̃(t, k*, c) = max_{s ∈ [t,T)} [∫_t^s (c − ν) dρ − log c(s)]` for each
/// policy, checked against `J̃ ≥ B(t)` and, for `c_δ`, `J̃ ≤ B(t) + |1−ν|δ`.
pub fn policy_comparison_analysis(
    params: &MertonParams,
    policies: &[ConsumptionPolicy],
    t0: f64,
    tol: f64,
) -> Result<PolicyComparisonReport> {
    let b = params.b(t0)?;
    let nu = params.nu();
    let horizon = params.horizon;
    let h = (horizon - t0) / COMPARISON_POINTS as f64;
    let mut rows = Vec::with_capacity(policies.len());
    for policy in policies {
        let j_tilde = match policy {
            ConsumptionPolicy::Constant(c) => {
                if !(*c > 0.0) {
                    return Err(invalid("policy.c", "consumption must be positive"));
                }
                // (c − ν)(s − t) − log c is monotone in s
                let end = (c - nu) * (horizon - t0) - c.ln();
                end.max(-c.ln())
            }
            ConsumptionPolicy::Optimal => (0..COMPARISON_POINTS)
                .map(|j| {
                    let s = t0 + h * j as f64;
                    optimal_consumption_integral(nu, horizon, t0, s) - nu * (s - t0) + params.b(s).unwrap_or(b)
                })
                .fold(f64::NEG_INFINITY, f64::max),
            ConsumptionPolicy::Delayed(delta) => {
                let delta = *delta;
                if !(delta > 0.0 && t0 + delta < horizon) {
                    return Err(invalid("policy.delta", "need 0 < δ < T − t"));
                }
                let head = (1.0 - nu) * delta;
                let mut best = head.max(0.0);
                for j in 0..COMPARISON_POINTS {
                    let s = t0 + delta + (horizon - t0 - delta) * j as f64 / COMPARISON_POINTS as f64;
                    // shifted optimal consumption: ∫_{t+δ}^s c*(ρ−δ) dρ = ∫_t^{s−δ} c*
                    let tail = optimal_consumption_integral(nu, horizon, t0, s - delta) - nu * (s - delta - t0)
                        + params.b(s - delta)?;
                    best = best.max(head + tail);
                }
                best
            }
            ConsumptionPolicy::Custom(c) => {
                let mut integral = 0.0;
                let mut prev = c(t0);
                let mut best = -prev.ln();
                for j in 1..COMPARISON_POINTS {
                    let s = t0 + h * j as f64;
                    let cur = c(s);
                    integral += 0.5 * h * (prev + cur) - nu * h;
                    best = best.max(integral - cur.ln());
                    prev = cur;
                }
                best
            }
        };
        let delayed_upper_bound_holds = match policy {
            ConsumptionPolicy::Delayed(delta) => Some(j_tilde <= b + (1.0 - nu).abs() * delta + tol),
            _ => None,
        };
        rows.push(PolicyComparisonRow {
            policy: format!("{policy:?}"),
            j_tilde,
            b,
            lower_bound_holds: j_tilde >= b - tol,
            delayed_upper_bound_holds,
        });
    }
    Ok(PolicyComparisonReport { t0, b, rows })
}
