//! Randomized property suite for the admissible sets, the Hamiltonians and
//! the semiring.
//!
//! Instances live on dyadic lattices (multiples of 1/8 with small
//! numerators, disturbance grids at spacing 1/8 or 1/4), so every sum and
//! product the checks touch is exact in `f64` and the inequalities can be
//! tested without tolerances. Each instance has `m ≤ 6` controls with
//! affine drift `a + Bx`, constant `σ` and affine cost `c + g·x`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hamiltonian::{
    hamiltonian_h, hamiltonian_h_lower, hamiltonian_h_upper, hamiltonian_k, level_gap, HamiltonianQuery,
};
use crate::maxplus::MaxPlus;
use crate::problem::{ControlProblem, ControlSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertiesConfig {
    pub instances: usize,
    /// Test hook: reverses the `𝓚 ≤ 𝓗` comparison so the suite must fail.
    pub inject_k_fault: bool,
}

impl Default for PropertiesConfig {
    fn default() -> Self {
        Self {
            instances: 10_000,
            inject_k_fault: false,
        }
    }
}

impl PropertiesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.instances > 10_000_000 {
            return Err(invalid("properties.instances", "need 1..=10000000"));
        }
        Ok(())
    }
}

/// One control of a random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    /// Drift offset, length `n`.
    pub a: Vec<f64>,
    /// Drift matrix, row-major `n × n`.
    pub b: Vec<f64>,
    /// Noise matrix, row-major `n × d`.
    pub sigma: Vec<f64>,
    pub c: f64,
    /// Cost slope, length `n`.
    pub g: Vec<f64>,
}

/// A replayable `(x, y, r, r′, p, U)` instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    /// Second state for the set-inclusion check across states.
    pub y: Vec<f64>,
    pub r: f64,
    pub r_prime: f64,
    /// Fraction of the level gap used for the envelope identities.
    pub gap_fraction: f64,
    pub p: Vec<f64>,
    pub controls: Vec<ControlSpec>,
}

impl Instance {
    /// Cost Lipschitz constant `max_u ‖g_u‖₁`.
    pub fn cost_lipschitz(&self) -> f64 {
        self.controls
            .iter()
            .map(|c| c.g.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        let (n, d) = (self.n, self.d);
        let specs = self.controls.clone();
        let drift_specs = specs.clone();
        let sigma_specs = specs.clone();
        let index = |u: &[f64]| u[0] as usize;
        ControlProblem::builder("property instance", n, d)
            .drift(move |x, u, out| {
                let s = &drift_specs[index(u)];
                for i in 0..n {
                    out[i] = s.a[i] + (0..n).map(|j| s.b[i * n + j] * x[j]).sum::<f64>();
                }
            })
            .diffusion(move |_, u, out| out.copy_from_slice(&sigma_specs[index(u)].sigma))
            .cost(move |x, u| {
                let s = &specs[index(u)];
                s.c + s.g.iter().zip(x).map(|(g, x)| g * x).sum::<f64>()
            })
            .controls(ControlSet::from_points(
                1,
                (0..self.controls.len()).map(|i| i as f64).collect(),
            )?)
            .cost_lipschitz(self.cost_lipschitz())
            .build()
    }

    fn v_step(&self) -> f64 {
        if self.d == 1 {
            0.125
        } else {
            0.25
        }
    }
}

fn dyadic(rng: &mut ChaCha8Rng, max_numerator: i32) -> f64 {
    f64::from(rng.random_range(-max_numerator..=max_numerator)) / 8.0
}

fn dyadic_vec(rng: &mut ChaCha8Rng, len: usize, max_numerator: i32) -> Vec<f64> {
    (0..len).map(|_| dyadic(rng, max_numerator)).collect()
}

/// Draws an instance. A third of the instances use only three cost levels
/// so that ties and `r` sitting exactly on a level are common.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=2);
    let d = rng.random_range(1..=2);
    let m = rng.random_range(1..=6);
    let coarse_levels = rng.random_bool(1.0 / 3.0);
    let controls: Vec<ControlSpec> = (0..m)
        .map(|_| ControlSpec {
            a: dyadic_vec(rng, n, 16),
            b: dyadic_vec(rng, n * n, 8),
            sigma: dyadic_vec(rng, n * d, 8),
            c: if coarse_levels {
                f64::from(rng.random_range(0..3)) / 2.0
            } else {
                dyadic(rng, 16)
            },
            g: if coarse_levels {
                vec![0.0; n]
            } else {
                dyadic_vec(rng, n, 8)
            },
        })
        .collect();
    let x = dyadic_vec(rng, n, 16);
    let y = dyadic_vec(rng, n, 16);
    let p = dyadic_vec(rng, n, 16);
    let levels: Vec<f64> = controls
        .iter()
        .map(|s| s.c + s.g.iter().zip(&x).map(|(g, x)| g * x).sum::<f64>())
        .collect();
    let lo = levels.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let r = match rng.random_range(0..3) {
        0 => levels[rng.random_range(0..m)],
        1 => dyadic(rng, 24),
        _ => rng.random_range(lo..hi),
    };
    let r_prime = match rng.random_range(0..3) {
        0 => levels
            .iter()
            .copied()
            .filter(|l| *l > r)
            .fold(f64::INFINITY, f64::min)
            .min(r + 1.0),
        1 => r + f64::from(rng.random_range(1..=16)) / 8.0,
        _ => r + rng.random_range(1e-9..2.0),
    };
    Instance {
        n,
        d,
        x,
        y,
        r,
        r_prime,
        gap_fraction: rng.random_range(0.01..0.99),
        p,
        controls,
    }
}

/// The two-control instance `f = 0`, `l = 0`, `σ = ±1` at `p = 1`, where
/// the lower game value is strictly below the upper one.
pub fn strict_gap_instance() -> Instance {
    let control = |s: f64| ControlSpec {
        a: vec![0.0],
        b: vec![0.0],
        sigma: vec![s],
        c: 0.0,
        g: vec![0.0],
    };
    Instance {
        n: 1,
        d: 1,
        x: vec![0.0],
        y: vec![0.0],
        r: 1.0,
        r_prime: 2.0,
        gap_fraction: 0.5,
        p: vec![1.0],
        controls: vec![control(1.0), control(-1.0)],
    }
}

/// Names of the checked properties, in report order.
pub const PROPERTIES: [&str; 11] = [
    "admissible sets grow with r",
    "strict set inside closed set",
    "admissible sets across states",
    "H nonincreasing in r",
    "H upper envelope nonincreasing in r",
    "K nonincreasing in r",
    "H <= H upper envelope",
    "K <= H",
    "lower envelope gap identity",
    "upper envelope gap identity",
    "H^u is the disturbance supremum",
];

const K_INDEX: usize = 7;

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| b.contains(i))
}

/// Evaluates every property on one instance. Returns `(property index,
/// detail)` for each violation.
pub fn check_instance(inst: &Instance, inject_k_fault: bool) -> Result<Vec<(usize, String)>> {
    let problem = inst.problem()?;
    let (x, y, p) = (&inst.x[..], &inst.y[..], &inst.p[..]);
    let (r, r2) = (inst.r, inst.r_prime);
    let mut bad = Vec::new();
    let mut check = |k: usize, ok: bool, detail: String| {
        if !ok {
            bad.push((k, detail));
        }
    };

    let a_r = problem.admissible_set(x, r, false);
    let a_r2 = problem.admissible_set(x, r2, false);
    let strict_r = problem.admissible_set(x, r, true);
    check(
        0,
        subset(&a_r, &a_r2),
        format!("A(x,r) = {a_r:?} not inside A(x,r') = {a_r2:?}"),
    );
    check(
        1,
        subset(&strict_r, &a_r),
        format!("A'(x,r) = {strict_r:?} not inside A(x,r) = {a_r:?}"),
    );
    let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let a_y = problem.admissible_set(y, r, false);
    let widened = problem.admissible_set(x, r + inst.cost_lipschitz() * dist, false);
    check(
        2,
        subset(&a_y, &widened),
        format!("A(y,r) = {a_y:?} not inside A(x, r + L|x-y|) = {widened:?}"),
    );

    let q = HamiltonianQuery::new(x, r, p);
    let q2 = HamiltonianQuery::new(x, r2, p);
    let h = hamiltonian_h(&problem, &q).as_f64();
    let h2 = hamiltonian_h(&problem, &q2).as_f64();
    let hu = hamiltonian_h_upper(&problem, &q).as_f64();
    let hu2 = hamiltonian_h_upper(&problem, &q2).as_f64();
    let dv = inst.v_step();
    let k = hamiltonian_k(&problem, &q, None, dv).as_f64();
    let k2 = hamiltonian_k(&problem, &q2, None, dv).as_f64();
    check(3, h >= h2, format!("H(r) = {h} < H(r') = {h2}"));
    check(4, hu >= hu2, format!("H*(r) = {hu} < H*(r') = {hu2}"));
    check(5, k >= k2, format!("K(r) = {k} < K(r') = {k2}"));
    check(6, h <= hu, format!("H = {h} > H* = {hu}"));
    let k_ok = if inject_k_fault { h <= k } else { k <= h };
    check(K_INDEX, k_ok, format!("K = {k}, H = {h}"));

    let gap = level_gap(&problem, x, r);
    let eps = if gap.is_finite() {
        inst.gap_fraction * gap
    } else {
        inst.gap_fraction
    };
    let qe = HamiltonianQuery::new(x, r + eps, p);
    let lower = hamiltonian_h_lower(&problem, &q).as_f64();
    let h_eps = hamiltonian_h(&problem, &qe).as_f64();
    check(
        8,
        h_eps == h && lower == h,
        format!("H(r+eps) = {h_eps}, H_*(r) = {lower}, H(r) = {h} with eps = {eps}, gap = {gap}"),
    );
    let hu_eps = hamiltonian_h_upper(&problem, &qe).as_f64();
    check(
        9,
        hu_eps == h,
        format!("H*(r+eps) = {hu_eps}, H(r) = {h} with eps = {eps}"),
    );

    let n_axis: usize = 9;
    for (i, u) in problem.controls().iter().enumerate() {
        let value = problem.hamiltonian_u(x, u, p);
        let w = problem.worst_disturbance(x, u, p);
        let at_w = problem.disturbed_payoff(x, u, p, &w);
        let mut ok = at_w == value;
        let mut v = vec![0.0; inst.d];
        for j in 0..n_axis.pow(inst.d as u32) {
            let mut rest = j;
            for slot in v.iter_mut() {
                *slot = (rest % n_axis) as f64 * 0.5 - 2.0;
                rest /= n_axis;
            }
            ok &= problem.disturbed_payoff(x, u, p, &v) <= value;
        }
        check(10, ok, format!("control {i}: H^u = {value}, payoff at σᵀp = {at_w}"));
    }
    Ok(bad)
}

/// Semiring identities on random dyadic elements, with `−∞` drawn often.
fn check_semiring(rng: &mut ChaCha8Rng) -> Option<String> {
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.2) {
            MaxPlus::ZERO
        } else {
            MaxPlus::from(dyadic(rng, 64))
        }
    };
    let (a, b, c) = (draw(rng), draw(rng), draw(rng));
    let ok = a.oplus(b) == b.oplus(a)
        && a.oplus(b).oplus(c) == a.oplus(b.oplus(c))
        && a.otimes(b).otimes(c) == a.otimes(b.otimes(c))
        && a.oplus(a) == a
        && a.oplus(MaxPlus::ZERO) == a
        && a.otimes(MaxPlus::ONE) == a
        && a.otimes(MaxPlus::ZERO) == MaxPlus::ZERO
        && a.otimes(b.oplus(c)) == a.otimes(b).oplus(a.otimes(c));
    (!ok).then(|| format!("a = {a}, b = {b}, c = {c}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub detail: Option<String>,
    /// First failing instance, for replay with [`check_instance`].
    pub first_failure: Option<Instance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapInstanceCheck {
    pub k: f64,
    pub h: f64,
    /// `𝓚 = 0 < 𝓗 = 0.5`.
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub instances: usize,
    pub inject_k_fault: bool,
    pub properties: Vec<PropertyOutcome>,
    pub semiring_failures: usize,
    pub semiring_detail: Option<String>,
    pub gap_instance: GapInstanceCheck,
    pub runtime_seconds: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.failures == 0) && self.semiring_failures == 0 && self.gap_instance.holds
    }

    pub fn failed_properties(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|p| p.failures > 0)
            .map(|p| p.name.as_str())
            .collect()
    }
}

/// Runs the suite. Instances are drawn sequentially from one seeded stream,
/// so the report depends only on `seed` and the configuration.
pub fn property_suite(seed: u64, config: &PropertiesConfig) -> Result<PropertyReport> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes: Vec<PropertyOutcome> = PROPERTIES
        .iter()
        .map(|name| PropertyOutcome {
            name: name.to_string(),
            checked: 0,
            failures: 0,
            detail: None,
            first_failure: None,
        })
        .collect();
    let mut semiring_failures = 0;
    let mut semiring_detail = None;
    for _ in 0..config.instances {
        let inst = random_instance(&mut rng);
        let bad = check_instance(&inst, config.inject_k_fault)?;
        for o in outcomes.iter_mut() {
            o.checked += 1;
        }
        for (k, detail) in bad {
            let o = &mut outcomes[k];
            o.failures += 1;
            if o.first_failure.is_none() {
                o.detail = Some(detail);
                o.first_failure = Some(inst.clone());
            }
        }
        if let Some(detail) = check_semiring(&mut rng) {
            semiring_failures += 1;
            semiring_detail.get_or_insert(detail);
        }
    }

    let gap = strict_gap_instance();
    let problem = gap.problem()?;
    let q = HamiltonianQuery::new(&gap.x, gap.r, &gap.p);
    let k = hamiltonian_k(&problem, &q, Some(2.0), 0.01).as_f64();
    let h = hamiltonian_h(&problem, &q).as_f64();
    let gap_instance = GapInstanceCheck {
        k,
        h,
        holds: k == 0.0 && h == 0.5,
    };

    Ok(PropertyReport {
        seed,
        instances: config.instances,
        inject_k_fault: config.inject_k_fault,
        properties: outcomes,
        semiring_failures,
        semiring_detail,
        gap_instance,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cfg = PropertiesConfig {
            instances: 500,
            inject_k_fault: false,
        };
        let report = property_suite(3, &cfg).unwrap();
        assert!(report.passed(), "{:?}", report.failed_properties());
        assert!(report.gap_instance.holds);
    }

    #[test]
    fn injected_fault_is_caught() {
        let cfg = PropertiesConfig {
            instances: 500,
            inject_k_fault: true,
        };
        let report = property_suite(3, &cfg).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failed_properties(), vec!["K <= H"]);
        let inst = report.properties[K_INDEX].first_failure.clone().unwrap();
        let replay = check_instance(&inst, true).unwrap();
        assert!(replay.iter().any(|(k, _)| *k == K_INDEX));
        assert!(check_instance(&inst, false).unwrap().is_empty());
    }

    #[test]
    fn instance_round_trips_through_serde() {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(1));
        let text = toml::to_string(&inst).unwrap();
        let back: Instance = toml::from_str(&text).unwrap();
        assert_eq!(back, inst);
    }
}
