//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! family = "affine"      # affine | constant | toy | merton | hinfty-quadratic
//! sigma = 0.5
//!
//! [grid]
//! points = [201]
//! steps = 200
//! horizon = 1.0
//!
//! [solver]
//! scheme = "semi-lagrangian"
//! ```
//!
//! Every section and field is optional. [`ExperimentConfig::resolved`]
//! fills in defaults that depend on the problem family (grid box, horizon),
//! so the echoed configuration always lists every value used by a run.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::families::{constant_cost, running_max_toy, AffineParams};
use crate::grid::{Axis, BoundaryPolicy, Grid};
use crate::hinfty::QuadraticExample;
use crate::merton::{modified_merton_problem, DriftConvention, MertonParams, ModifiedOptions};
use crate::problem::ControlProblem;
use crate::properties::PropertiesConfig;
use crate::trajectory::OptimizerOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantParams {
    pub c: f64,
    pub half_width: f64,
}

impl Default for ConstantParams {
    fn default() -> Self {
        Self {
            c: 0.0,
            half_width: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    pub half_width: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self { half_width: 4.0 }
    }
}

/// Merton market and modified-problem options in one flat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MertonConfig {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
    pub horizon: f64,
    pub theta: f64,
    pub cap: f64,
    pub k_points: usize,
    pub c_points: usize,
    pub c_min: f64,
    pub drift: DriftConvention,
    pub half_width: f64,
}

impl Default for MertonConfig {
    fn default() -> Self {
        let p = MertonParams::default();
        let o = ModifiedOptions::default();
        Self {
            r: p.r,
            mu: p.mu,
            sigma: p.sigma,
            sigma_bar: p.sigma_bar,
            horizon: p.horizon,
            theta: p.theta,
            cap: o.cap,
            k_points: o.k_points,
            c_points: o.c_points,
            c_min: o.c_min,
            drift: o.drift,
            half_width: o.half_width,
        }
    }
}

impl MertonConfig {
    pub fn params(&self) -> MertonParams {
        MertonParams {
            r: self.r,
            mu: self.mu,
            sigma: self.sigma,
            sigma_bar: self.sigma_bar,
            horizon: self.horizon,
            theta: self.theta,
        }
    }

    pub fn options(&self) -> ModifiedOptions {
        ModifiedOptions {
            cap: self.cap,
            k_points: self.k_points,
            c_points: self.c_points,
            c_min: self.c_min,
            drift: self.drift,
            half_width: self.half_width,
        }
    }
}

/// Cap on control-grid sizes accepted from a configuration file.
const MAX_CONTROLS_PER_AXIS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Affine(AffineParams),
    Constant(ConstantParams),
    Toy(ToyParams),
    Merton(MertonConfig),
    HinftyQuadratic(QuadraticExample),
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self::Affine(AffineParams::default())
    }
}

impl ProblemConfig {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Affine(_) => "affine",
            Self::Constant(_) => "constant",
            Self::Toy(_) => "toy",
            Self::Merton(_) => "merton",
            Self::HinftyQuadratic(_) => "hinfty-quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Affine(p) => {
                p.validate()?;
                if p.u_points > MAX_CONTROLS_PER_AXIS {
                    return Err(invalid("problem.u_points", format!("at most {MAX_CONTROLS_PER_AXIS}")));
                }
                Ok(())
            }
            Self::Constant(p) => {
                if !p.c.is_finite() {
                    return Err(invalid("problem.c", "must be finite"));
                }
                positive("problem.half_width", p.half_width)
            }
            Self::Toy(p) => positive("problem.half_width", p.half_width),
            Self::Merton(m) => {
                m.params().validate()?;
                if !(m.cap > 0.0) {
                    return Err(invalid("problem.cap", "must be positive"));
                }
                if !(m.c_min > 0.0 && m.c_min < m.cap) {
                    return Err(invalid("problem.c_min", "need 0 < c_min < cap"));
                }
                if m.k_points == 0 || m.c_points == 0 {
                    return Err(invalid("problem.k_points", "control grids need at least one point"));
                }
                if m.k_points.saturating_mul(m.c_points) > MAX_CONTROLS_PER_AXIS * 10 {
                    return Err(invalid("problem.c_points", "k_points × c_points is too large"));
                }
                positive("problem.half_width", m.half_width)
            }
            Self::HinftyQuadratic(q) => q.validate(),
        }
    }

    /// Builds the problem. For the H-infinity family this is the augmented
    /// `(x, z)` instance.
    pub fn build(&self) -> Result<ControlProblem> {
        self.validate()?;
        match self {
            Self::Affine(p) => p.build(),
            Self::Constant(p) => constant_cost(p.c, p.half_width),
            Self::Toy(p) => running_max_toy(p.half_width),
            Self::Merton(m) => Ok(modified_merton_problem(&m.params(), &m.options())?.0),
            Self::HinftyQuadratic(q) => q.augmented_problem(),
        }
    }

    fn default_horizon(&self) -> f64 {
        match self {
            Self::Merton(m) => m.horizon,
            _ => 1.0,
        }
    }

    fn default_points(&self, dim: usize) -> Vec<usize> {
        match self {
            Self::HinftyQuadratic(q) => vec![q.x_points, q.z_points],
            _ if dim == 1 => vec![201],
            _ => vec![61; dim],
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be positive and finite"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis; defaults depend on the family.
    pub points: Option<Vec<usize>>,
    /// Box corners; default to the problem's domain.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub t0: Option<f64>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub boundary: Option<BoundaryPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    SemiLagrangian,
    FdQvi,
    FdHForm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Optional resume point: a binary dump whose first slice becomes the
    /// terminal data.
    pub resume_from: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub target: f64,
    pub epsilon: f64,
    pub horizons: Vec<f64>,
    /// Monte Carlo cross-check of the risk-sensitive solve.
    pub mc_samples: usize,
    pub mc_dt: f64,
    pub mc_theta: f64,
    pub mc_control: usize,
    pub mc_state: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thetas: vec![2.0, 5.0, 10.0, 20.0, 50.0],
            target: 0.15,
            epsilon: 0.1,
            horizons: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            mc_samples: 0,
            mc_dt: 0.001,
            mc_theta: 5.0,
            mc_control: 0,
            mc_state: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Bracket-minimizing policy of the solved field.
    #[default]
    Argmin,
    /// Bracket-maximizing policy of the solved field.
    Farthest,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Control for `kind = "constant"`.
    pub control: Vec<f64>,
    /// Initial states to evaluate; empty means ten states across the inner
    /// half of the first axis (other coordinates at the box centre).
    pub states: Vec<Vec<f64>>,
    pub t0: f64,
    pub optimizer: OptimizerOptions,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Argmin,
            control: Vec::new(),
            states: Vec::new(),
            t0: 0.0,
            optimizer: OptimizerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HinftyConfig {
    pub runs: usize,
    pub horizon: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub optimizer: OptimizerOptions,
}

impl Default for HinftyConfig {
    fn default() -> Self {
        Self {
            runs: 50,
            horizon: 5.0,
            x_min: -1.5,
            x_max: 1.5,
            optimizer: OptimizerOptions {
                dt: 0.02,
                coarsen: 25,
                random_starts: 1,
                ..OptimizerOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tol: f64,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub policy: PolicyConfig,
    pub hinfty: HinftyConfig,
    pub properties: PropertiesConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            tol: 0.05,
            problem: ProblemConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            policy: PolicyConfig::default(),
            hinfty: HinftyConfig::default(),
            properties: PropertiesConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates. Errors name the offending field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid("tol", "must be positive and finite"));
        }
        self.problem.validate()?;
        let problem = self.problem.build()?;
        self.grid_for(&problem)?;
        let s = &self.sweep;
        if s.thetas.is_empty() || s.thetas.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("sweep.thetas", "need positive finite values"));
        }
        if s.thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("sweep.thetas", "must be strictly increasing"));
        }
        if s.horizons.is_empty() || s.horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("sweep.horizons", "need a nonempty strictly increasing list"));
        }
        if s.horizons.iter().any(|h| !(h.is_finite() && *h > 0.0 && *h <= 1e3)) {
            return Err(invalid("sweep.horizons", "need values in (0, 1000]"));
        }
        if !(s.target > 0.0) || !(s.epsilon >= 0.0) {
            return Err(invalid(
                "sweep.target",
                "target must be positive and epsilon nonnegative",
            ));
        }
        if s.mc_samples > 0 {
            if s.mc_samples < 1000 {
                return Err(invalid("sweep.mc_samples", "use 0 to skip, or at least 1000"));
            }
            if !(s.mc_dt > 0.0 && s.mc_theta > 0.0 && s.mc_theta <= 10.0) {
                return Err(invalid("sweep.mc_theta", "need mc_dt > 0 and 0 < mc_theta <= 10"));
            }
            if s.mc_control >= problem.controls().len() {
                return Err(invalid("sweep.mc_control", "index outside the control set"));
            }
            if !s.mc_state.is_empty() && s.mc_state.len() != problem.state_dim() {
                return Err(invalid("sweep.mc_state", "wrong dimension"));
            }
        }
        let p = &self.policy;
        p.optimizer.validate()?;
        if p.kind == PolicyKind::Constant && p.control.len() != problem.controls().dim() {
            return Err(invalid(
                "policy.control",
                "constant policy needs a control of the right dimension",
            ));
        }
        if p.states
            .iter()
            .any(|x| x.len() != problem.state_dim() || x.iter().any(|c| !c.is_finite()))
        {
            return Err(invalid("policy.states", "every state needs the problem's dimension"));
        }
        if !p.t0.is_finite() {
            return Err(invalid("policy.t0", "must be finite"));
        }
        let h = &self.hinfty;
        h.optimizer.validate()?;
        if h.runs == 0 || !(h.horizon > 0.0 && h.horizon <= 1e3) || !(h.x_min <= h.x_max) {
            return Err(invalid(
                "hinfty.runs",
                "need runs >= 1, 0 < horizon <= 1000 and x_min <= x_max",
            ));
        }
        self.properties.validate()?;
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        Ok(())
    }

    /// The grid described by `[grid]`, with defaults taken from the problem.
    pub fn grid_for(&self, problem: &ControlProblem) -> Result<Grid> {
        let n = problem.state_dim();
        let g = &self.grid;
        let points = g.points.clone().unwrap_or_else(|| self.problem.default_points(n));
        let domain = problem.domain();
        let lower = g.lower.clone().unwrap_or_else(|| domain.iter().map(|d| d.0).collect());
        let upper = g.upper.clone().unwrap_or_else(|| domain.iter().map(|d| d.1).collect());
        if points.len() != n {
            return Err(invalid("grid.points", format!("need {n} entries")));
        }
        if lower.len() != n || upper.len() != n {
            return Err(invalid("grid.lower", format!("lower and upper need {n} entries")));
        }
        let horizon = g.horizon.unwrap_or_else(|| self.problem.default_horizon());
        let axes = (0..n).map(|k| Axis::new(lower[k], upper[k], points[k])).collect();
        let grid = Grid::new(axes, g.t0.unwrap_or(0.0), horizon, g.steps.unwrap_or(200))
            .map_err(|e| invalid("grid", e.to_string()))?;
        Ok(grid.with_boundary(g.boundary.unwrap_or_default()))
    }

    /// Copy with every grid default written out.
    pub fn resolved(&self) -> Result<Self> {
        let problem = self.problem.build()?;
        let grid = self.grid_for(&problem)?;
        let mut out = self.clone();
        out.grid = GridConfig {
            points: Some(grid.axes().iter().map(|a| a.points).collect()),
            lower: Some(grid.axes().iter().map(|a| a.lower).collect()),
            upper: Some(grid.axes().iter().map(|a| a.upper).collect()),
            t0: Some(grid.t0()),
            horizon: Some(grid.horizon()),
            steps: Some(grid.steps()),
            boundary: Some(grid.boundary()),
        };
        Ok(out)
    }

    /// States from `[policy] states`, or ten evenly spaced states across the
    /// inner half of the first axis.
    pub fn policy_states(&self, grid: &Grid) -> Vec<Vec<f64>> {
        if !self.policy.states.is_empty() {
            return self.policy.states.clone();
        }
        let axes = grid.axes();
        let centre: Vec<f64> = axes.iter().map(|a| 0.5 * (a.lower + a.upper)).collect();
        let half = 0.25 * (axes[0].upper - axes[0].lower);
        (0..10)
            .map(|j| {
                let mut x = centre.clone();
                x[0] = centre[0] - 0.9 * half + 1.8 * half * j as f64 / 9.0;
                x
            })
            .collect()
    }
}
