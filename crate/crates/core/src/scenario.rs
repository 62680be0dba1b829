//! Scenario configuration, the library of closed-form solutions, and the
//! drivers behind the command line: single runs, convergence studies,
//! boundary checks and batches.
//!
//! Configs are plain `key = value` text with `#` comments:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `scenario` | required | `grim_reaper`, `cylinder_disk`, `sine_tube`, `pseudosphere`, `plane`, `hyperbolic_plane` |
//! | `nodes` | required | nodes per line (disk: across the diameter), at least 5 |
//! | `profile` | per scenario | boundary grammar of [`Tube`] |
//! | `grid` | per scenario | `curve1d`, `radial2d` or `disk2d` |
//! | `t0` | `-1` for `grim_reaper`, else `0` | initial time |
//! | `initial` | `exact` | `exact`, `constant(c)`, `bump(base,amp)`, `leaf(z)`, `hyperboloid(R)`, `nodes(u0 u1 ...)` |
//! | `cfl`, `eps_guard`, `max_steps`, `h_stop`, `t_end`, `integrator`, `stride`, `probe_every` | see [`StepControl`] | time stepping |
//! | `output_dir` | `output/<scenario>` | relative paths sit under `MINKFLOW_OUTPUT_ROOT` when set |
//! | `monitor_volume`, `monitor_evolution`, `monitor_boundary`, `monitor_estimates` | `true` | monitor toggles |
//! | `require_conditions` | `false` | refuse profiles failing the curvature condition (exit 4) |
//! | `identity_orders` | `false` | repeat the run at half resolution and report residual orders |
//! | `certificate_center` | unset | axis height of the stability certificate centre, run on the final state |
//! | `comparison` | unset | initial data of a second solution co-evolved with the first; writes `min_gap.csv` |

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::chart::FlatChart;
use crate::error::Error;
use crate::flow::{comparison_pair_run, run, Event, Integrator, StepControl, Trajectory};
use crate::graph::{self, DiskLayout, FlowState, GridKind};
use crate::lorentz::SpacetimeVector;
use crate::monitor::{
    boundary_identities, evolution_residuals, stability_certificate, volume_identity, MonitorReport, MonitorToggles,
};
use crate::profile::{self, check_condition_curvature, cmc_leaf_through, PlanarBoundary, PlanarShape, RotationalProfile, Tube};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "MINKFLOW_OUTPUT_ROOT";

/// Below this a convergence error counts as machine precision.
pub const SATURATION_FLOOR: f64 = 1e-12;

/// Curvature beyond which a planar boundary counts as unbounded.
const PLANAR_CURVATURE_BOUND: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl ScenarioError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 3,
            ScenarioError::Core(Error::InvalidArgument(_)) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ScenarioError::Config(msg.into()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// config

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    GrimReaper,
    CylinderDisk,
    SineTube,
    Pseudosphere,
    Plane,
    HyperbolicPlane,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::GrimReaper,
        ScenarioKind::CylinderDisk,
        ScenarioKind::SineTube,
        ScenarioKind::Pseudosphere,
        ScenarioKind::Plane,
        ScenarioKind::HyperbolicPlane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::GrimReaper => "grim_reaper",
            ScenarioKind::CylinderDisk => "cylinder_disk",
            ScenarioKind::SineTube => "sine_tube",
            ScenarioKind::Pseudosphere => "pseudosphere",
            ScenarioKind::Plane => "plane",
            ScenarioKind::HyperbolicPlane => "hyperbolic_plane",
        }
    }

    fn default_profile(self) -> Tube {
        match self {
            ScenarioKind::GrimReaper => Tube::Planar(PlanarBoundary::trumpet()),
            ScenarioKind::CylinderDisk | ScenarioKind::Plane => Tube::Rotational(RotationalProfile::cylinder(1.0)),
            ScenarioKind::SineTube => Tube::Rotational(RotationalProfile::sine_tube(2.0, 0.5, 1.0)),
            ScenarioKind::Pseudosphere | ScenarioKind::HyperbolicPlane => {
                Tube::Rotational(RotationalProfile::pseudosphere(1.0, 0.0))
            }
        }
    }

    fn default_grid(self) -> GridKind {
        match self {
            ScenarioKind::GrimReaper => GridKind::Curve1D,
            ScenarioKind::CylinderDisk => GridKind::Disk2D,
            _ => GridKind::Radial2D,
        }
    }

    fn default_t0(self) -> f64 {
        if self == ScenarioKind::GrimReaper {
            -1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScenarioError::Config(format!("unknown scenario `{s}`")))
    }
}

/// Initial data selector.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    /// The scenario's closed-form solution at `t0`.
    Exact,
    Constant(f64),
    /// `base + amp (1 - rho^2 / R^2)^2` with `R` the tube radius at `base`.
    Bump { base: f64, amp: f64 },
    /// The CMC leaf meeting the tube perpendicularly at height `z`.
    Leaf(f64),
    /// Upper hyperboloid `sqrt(R^2 + rho^2)`.
    Hyperboloid(f64),
    /// Node values on a uniform line grid; the domain follows from the end values.
    Nodes(Vec<f64>),
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Exact => f.write_str("exact"),
            InitialData::Constant(c) => write!(f, "constant({c})"),
            InitialData::Bump { base, amp } => write!(f, "bump({base},{amp})"),
            InitialData::Leaf(z) => write!(f, "leaf({z})"),
            InitialData::Hyperboloid(r) => write!(f, "hyperboloid({r})"),
            InitialData::Nodes(v) => {
                f.write_str("nodes(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for InitialData {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "exact" {
            return Ok(InitialData::Exact);
        }
        let (name, inner) = s
            .split_once('(')
            .and_then(|(n, rest)| rest.strip_suffix(')').map(|i| (n.trim(), i)))
            .ok_or_else(|| ScenarioError::Config(format!("bad initial data `{s}`")))?;
        let nums = inner
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| ScenarioError::Config(format!("bad number `{t}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                cfg_err(format!("`{name}` takes {n} argument(s), got {}", nums.len()))
            }
        };
        match name {
            "constant" => want(1).map(|_| InitialData::Constant(nums[0])),
            "bump" => want(2).map(|_| InitialData::Bump { base: nums[0], amp: nums[1] }),
            "leaf" => want(1).map(|_| InitialData::Leaf(nums[0])),
            "hyperboloid" => {
                want(1)?;
                if !(nums[0] > 0.0) {
                    return cfg_err("hyperboloid radius must be positive");
                }
                Ok(InitialData::Hyperboloid(nums[0]))
            }
            "nodes" => {
                if nums.len() < 5 {
                    return cfg_err("node list needs at least 5 values");
                }
                Ok(InitialData::Nodes(nums))
            }
            other => cfg_err(format!("unknown initial data `{other}`")),
        }
    }
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub profile: Tube,
    pub grid: GridKind,
    pub nodes: usize,
    pub t0: f64,
    pub initial: InitialData,
    pub control: StepControl,
    pub output_dir: PathBuf,
    pub monitors: MonitorToggles,
    pub require_conditions: bool,
    pub identity_orders: bool,
    pub certificate_center: Option<f64>,
    pub comparison: Option<InitialData>,
}

const KEYS: &[&str] = &[
    "scenario",
    "nodes",
    "profile",
    "grid",
    "t0",
    "initial",
    "cfl",
    "eps_guard",
    "max_steps",
    "h_stop",
    "t_end",
    "integrator",
    "stride",
    "probe_every",
    "output_dir",
    "monitor_volume",
    "monitor_evolution",
    "monitor_boundary",
    "monitor_estimates",
    "require_conditions",
    "identity_orders",
    "certificate_center",
    "comparison",
];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| ScenarioError::Config(format!("bad value `{v}` for `{key}`")))
}

/// Parses and validates a config text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ScenarioError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return cfg_err(format!("line {}: unknown key `{k}`", lineno + 1));
        }
        if map.insert(k, v).is_some() {
            return cfg_err(format!("line {}: duplicate key `{k}`", lineno + 1));
        }
    }
    let required = |k: &str| map.get(k).copied().ok_or_else(|| ScenarioError::Config(format!("missing required key `{k}`")));
    let scenario: ScenarioKind = required("scenario")?.parse()?;
    let nodes: usize = parse_value("nodes", required("nodes")?)?;
    let get = |k: &str| map.get(k).copied();
    let profile = match get("profile") {
        Some(p) => p.parse::<Tube>().map_err(|e| ScenarioError::Config(e.to_string()))?,
        None => scenario.default_profile(),
    };
    let grid = match get("grid") {
        Some(g) => g.parse::<GridKind>().map_err(|e| ScenarioError::Config(e.to_string()))?,
        None => scenario.default_grid(),
    };
    let defaults = StepControl::default();
    let mut control = StepControl { ..defaults };
    macro_rules! opt {
        ($key:literal, $field:expr) => {
            if let Some(v) = get($key) {
                $field = parse_value($key, v)?;
            }
        };
    }
    opt!("cfl", control.cfl);
    opt!("eps_guard", control.eps_guard);
    opt!("max_steps", control.max_steps);
    opt!("h_stop", control.h_stop);
    opt!("t_end", control.t_end);
    opt!("stride", control.stride);
    opt!("probe_every", control.probe_every);
    if let Some(v) = get("integrator") {
        control.integrator = v.parse::<Integrator>().map_err(|e| ScenarioError::Config(e.to_string()))?;
    }
    let mut t0 = scenario.default_t0();
    opt!("t0", t0);
    let mut monitors = MonitorToggles::default();
    opt!("monitor_volume", monitors.volume);
    opt!("monitor_evolution", monitors.evolution);
    opt!("monitor_boundary", monitors.boundary);
    opt!("monitor_estimates", monitors.estimates);
    let mut require_conditions = false;
    opt!("require_conditions", require_conditions);
    let mut identity_orders = false;
    opt!("identity_orders", identity_orders);
    let certificate_center = get("certificate_center").map(|v| parse_value("certificate_center", v)).transpose()?;
    let comparison = get("comparison").map(str::parse).transpose()?;
    let initial = match get("initial") {
        Some(v) => v.parse()?,
        None => InitialData::Exact,
    };
    let output_dir = PathBuf::from(get("output_dir").map_or_else(|| format!("output/{scenario}"), str::to_string));
    let cfg = ScenarioConfig {
        scenario,
        profile,
        grid,
        nodes,
        t0,
        initial,
        control,
        output_dir,
        monitors,
        require_conditions,
        identity_orders,
        certificate_center,
        comparison,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Minimal config with every default applied.
    pub fn new(scenario: ScenarioKind, nodes: usize) -> Result<Self> {
        parse_config(&format!("scenario = {scenario}\nnodes = {nodes}\n"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 5 {
            return cfg_err(format!("nodes must be at least 5, got {}", self.nodes));
        }
        self.control.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        if !self.t0.is_finite() {
            return cfg_err("t0 must be finite");
        }
        match (self.grid, &self.profile) {
            (GridKind::Curve1D, Tube::Planar(_)) => {}
            (GridKind::Curve1D, _) => return cfg_err("curve grids need a planar profile"),
            (_, Tube::Planar(_)) => return cfg_err("planar profiles need a curve grid"),
            (GridKind::Disk2D, Tube::Rotational(p)) if !p.is_cylinder() => {
                return cfg_err("disk grids need a cylinder profile")
            }
            _ => {}
        }
        if let InitialData::Nodes(v) = &self.initial {
            if self.grid == GridKind::Disk2D {
                return cfg_err("node lists are supported on curve and radial grids only");
            }
            if v.len() != self.nodes {
                return cfg_err(format!("node list has {} values but nodes = {}", v.len(), self.nodes));
            }
        }
        if let Some(InitialData::Nodes(v)) = &self.comparison {
            if v.len() != self.nodes {
                return cfg_err(format!("comparison node list has {} values but nodes = {}", v.len(), self.nodes));
            }
        }
        if self.identity_orders && self.nodes.is_multiple_of(2) {
            return cfg_err("identity_orders needs an odd node count so the companion run halves h");
        }
        Ok(())
    }

    /// Serialises every key so that [`parse_config`] reproduces the config.
    pub fn serialize(&self) -> String {
        let c = &self.control;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("scenario", self.scenario.to_string());
        kv("nodes", self.nodes.to_string());
        kv("profile", self.profile.to_string());
        kv("grid", self.grid.to_string());
        kv("t0", self.t0.to_string());
        kv("initial", self.initial.to_string());
        kv("cfl", c.cfl.to_string());
        kv("eps_guard", c.eps_guard.to_string());
        kv("max_steps", c.max_steps.to_string());
        kv("h_stop", c.h_stop.to_string());
        kv("t_end", c.t_end.to_string());
        kv("integrator", c.integrator.to_string());
        kv("stride", c.stride.to_string());
        kv("probe_every", c.probe_every.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("monitor_volume", self.monitors.volume.to_string());
        kv("monitor_evolution", self.monitors.evolution.to_string());
        kv("monitor_boundary", self.monitors.boundary.to_string());
        kv("monitor_estimates", self.monitors.estimates.to_string());
        kv("require_conditions", self.require_conditions.to_string());
        kv("identity_orders", self.identity_orders.to_string());
        if let Some(z) = self.certificate_center {
            kv("certificate_center", z.to_string());
        }
        if let Some(c) = &self.comparison {
            kv("comparison", c.to_string());
        }
        s
    }

    /// Output directory after applying [`OUTPUT_ROOT_VAR`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Same scenario with `(nodes - 1) / 2 + 1` nodes and strides scaled to the
    /// four times larger step.
    pub fn coarsened(&self) -> Self {
        let mut c = self.clone();
        c.nodes = (self.nodes - 1) / 2 + 1;
        c.control.stride = (self.control.stride / 4).max(1);
        c.control.probe_every = if self.control.probe_every == 0 { 0 } else { (self.control.probe_every / 4).max(1) };
        c.control.max_steps = (self.control.max_steps / 4).max(1);
        c.identity_orders = false;
        c.comparison = None;
        c
    }

    /// Same scenario refined `k` times by halving `h`.
    pub fn refined(&self, k: u32) -> Self {
        let mut c = self.clone();
        let f = 1usize << k;
        c.nodes = (self.nodes - 1) * f + 1;
        c.control.stride = self.control.stride.saturating_mul(f * f);
        c.control.probe_every = self.control.probe_every.saturating_mul(f * f);
        c.control.max_steps = self.control.max_steps.saturating_mul(f * f);
        if let InitialData::Nodes(_) = c.initial {
            c.initial = InitialData::Exact;
        }
        c.comparison = None;
        c
    }
}

// ---------------------------------------------------------------------------
// closed-form solutions

/// Closed-form solutions shipped with the scenarios.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticSolution {
    /// `u = log cosh x + t` inside the trumpet `s = log sinh |x|`.
    GrimReaper,
    /// `u = sqrt(A^2 + (z + B)^2)`: the pseudosphere radius, evaluated as a function of `z`.
    PseudosphereProfile { a: f64, b: f64 },
    /// `u = z`.
    Plane(f64),
    /// `u = J +- sqrt(R^2 + rho^2)`, mean curvature `2/R` (static).
    HyperbolicPlane { radius: f64, vertex: f64, up: bool },
    /// `u = c` over a disk in a cylinder.
    CylinderDiskConstant(f64),
}

impl AnalyticSolution {
    pub fn name(&self) -> &'static str {
        match self {
            AnalyticSolution::GrimReaper => "grim_reaper",
            AnalyticSolution::PseudosphereProfile { .. } => "pseudosphere_profile",
            AnalyticSolution::Plane(_) => "plane",
            AnalyticSolution::HyperbolicPlane { .. } => "hyperbolic_plane",
            AnalyticSolution::CylinderDiskConstant(_) => "cylinder_disk_constant",
        }
    }

    /// `u(x, t)`; `x` is the first coordinate, or the radius for radial solutions.
    pub fn u(&self, x: f64, t: f64) -> f64 {
        match *self {
            AnalyticSolution::GrimReaper => x.cosh().ln() + t,
            AnalyticSolution::PseudosphereProfile { a, b } => (a * a + (x + b) * (x + b)).sqrt(),
            AnalyticSolution::Plane(z) | AnalyticSolution::CylinderDiskConstant(z) => z,
            AnalyticSolution::HyperbolicPlane { radius, vertex, up } => {
                let s = if up { 1.0 } else { -1.0 };
                vertex + s * (radius * radius + x * x).sqrt()
            }
        }
    }

    /// `(u_x, u_xx)`.
    pub fn derivatives(&self, x: f64, _t: f64) -> (f64, f64) {
        match *self {
            AnalyticSolution::GrimReaper => (x.tanh(), 1.0 / x.cosh().powi(2)),
            AnalyticSolution::PseudosphereProfile { a, b } => {
                let w = x + b;
                let f = (a * a + w * w).sqrt();
                (w / f, a * a / (f * f * f))
            }
            AnalyticSolution::Plane(_) | AnalyticSolution::CylinderDiskConstant(_) => (0.0, 0.0),
            AnalyticSolution::HyperbolicPlane { radius, up, .. } => {
                let s = if up { 1.0 } else { -1.0 };
                let q = (radius * radius + x * x).sqrt();
                (s * x / q, s * radius * radius / (q * q * q))
            }
        }
    }

    /// `u_t`.
    pub fn time_derivative(&self, _x: f64, _t: f64) -> f64 {
        match self {
            AnalyticSolution::GrimReaper => 1.0,
            _ => 0.0,
        }
    }

    /// Whether `u` solves the flow for all time (otherwise it is only initial data).
    pub fn is_flow_solution(&self) -> bool {
        !matches!(self, AnalyticSolution::HyperbolicPlane { .. } | AnalyticSolution::PseudosphereProfile { .. })
    }
}

/// Closed-form reference of a config, when its initial data has one.
pub fn analytic_solution(cfg: &ScenarioConfig) -> Option<AnalyticSolution> {
    let rot = cfg.profile.as_rotational();
    match (&cfg.initial, cfg.scenario) {
        (InitialData::Exact, ScenarioKind::GrimReaper) => {
            matches!(cfg.profile.as_planar(), Some(b) if b.shape == PlanarShape::Trumpet).then_some(AnalyticSolution::GrimReaper)
        }
        (InitialData::Exact, ScenarioKind::CylinderDisk) => Some(AnalyticSolution::CylinderDiskConstant(0.0)),
        (InitialData::Constant(c), _) if rot.is_some_and(|p| p.is_cylinder()) => {
            Some(AnalyticSolution::CylinderDiskConstant(*c))
        }
        (InitialData::Exact, ScenarioKind::Plane | ScenarioKind::SineTube) => {
            let p = rot?;
            Some(AnalyticSolution::Plane(stationary_height(p)))
        }
        (InitialData::Exact | InitialData::Leaf(_), ScenarioKind::Pseudosphere | ScenarioKind::HyperbolicPlane) => {
            let leaf = cmc_leaf_through(rot?, leaf_anchor(cfg));
            match leaf.radius {
                Some(r) => Some(AnalyticSolution::HyperbolicPlane { radius: r, vertex: leaf.vertex, up: leaf.opens_up }),
                None => Some(AnalyticSolution::Plane(leaf.vertex)),
            }
        }
        _ => None,
    }
}

/// Height of the plane used as exact data: a radius maximum of the profile
/// (`pi / (2 omega)` for sine tubes), else `0`.
fn stationary_height(p: &RotationalProfile) -> f64 {
    match p.shape {
        profile::ProfileShape::SineTube { b, omega, .. } => {
            let q = std::f64::consts::FRAC_PI_2 / omega;
            if b >= 0.0 {
                q
            } else {
                3.0 * q
            }
        }
        _ => 0.0,
    }
}

/// Anchor height of leaf data; exact data of the leaf scenarios anchors at `z = 1`.
const DEFAULT_LEAF_ANCHOR: f64 = 1.0;

fn leaf_anchor(cfg: &ScenarioConfig) -> f64 {
    match cfg.initial {
        InitialData::Leaf(z) => z,
        _ => DEFAULT_LEAF_ANCHOR,
    }
}

// ---------------------------------------------------------------------------
// initial states

/// Builds the initial state of a config.
pub fn initial_state(cfg: &ScenarioConfig) -> Result<FlowState<f64>> {
    let n = cfg.nodes;
    let t0 = cfg.t0;
    let state = match (&cfg.profile, cfg.grid) {
        (Tube::Planar(b), GridKind::Curve1D) => match &cfg.initial {
            InitialData::Exact => {
                if b.shape != PlanarShape::Trumpet {
                    return cfg_err("exact curve data is the translator and needs the trumpet profile");
                }
                if !(t0 < 0.0) {
                    return cfg_err("the translator fits inside the trumpet only for t0 < 0");
                }
                let xb = t0.exp().atanh();
                FlowState::curve(n, -xb, xb, t0, |x| x.cosh().ln() + t0)?
            }
            InitialData::Constant(c) => {
                let xb = b.branch_x(*c)?;
                FlowState::curve(n, -xb, xb, t0, |_| *c)?
            }
            InitialData::Nodes(v) => {
                let (xl, xr) = (-b.branch_x(v[0])?, b.branch_x(v[n - 1])?);
                let mut s = FlowState::curve(n, xl, xr, t0, |_| 0.0)?;
                s.u = v.clone();
                s
            }
            other => return cfg_err(format!("initial data `{other}` is not available on curve grids")),
        },
        (Tube::Rotational(p), GridKind::Radial2D) => {
            let (radius, f): (f64, Box<dyn Fn(f64) -> f64>) = match &cfg.initial {
                InitialData::Exact => match cfg.scenario {
                    ScenarioKind::HyperbolicPlane | ScenarioKind::Pseudosphere => leaf_data(p, DEFAULT_LEAF_ANCHOR),
                    _ => {
                        let z = stationary_height(p);
                        (p.f(z), Box::new(move |_| z))
                    }
                },
                InitialData::Constant(c) => {
                    let c = *c;
                    (p.f(c), Box::new(move |_| c))
                }
                InitialData::Bump { base, amp } => {
                    let (base, amp, r) = (*base, *amp, p.f(*base));
                    (r, Box::new(move |rho: f64| base + amp * (1.0 - (rho / r).powi(2)).powi(2)))
                }
                InitialData::Leaf(z) => leaf_data(p, *z),
                InitialData::Hyperboloid(r) => hyperboloid_in(p, *r)?,
                InitialData::Nodes(v) => {
                    let rb = p.f(v[n - 1]);
                    let mut s = FlowState::radial(n, rb, t0, |_| 0.0)?;
                    s.u = v.clone();
                    return Ok(s);
                }
            };
            FlowState::radial(n, radius, t0, f)?
        }
        (Tube::Rotational(p), GridKind::Disk2D) => {
            let r = p.f(0.0);
            let layout = Arc::new(DiskLayout::new(n, r)?);
            match &cfg.initial {
                InitialData::Exact => FlowState::disk(layout, t0, |_, _| 0.0)?,
                InitialData::Constant(c) => FlowState::disk(layout, t0, |_, _| *c)?,
                InitialData::Bump { base, amp } => FlowState::disk(layout, t0, |x, y| {
                    let q = 1.0 - (x * x + y * y) / (r * r);
                    base + amp * q * q
                })?,
                other => return cfg_err(format!("initial data `{other}` is not available on disk grids")),
            }
        }
        _ => return cfg_err("profile and grid do not match"),
    };
    Ok(state)
}

fn leaf_data(p: &RotationalProfile, z: f64) -> (f64, Box<dyn Fn(f64) -> f64>) {
    let leaf = cmc_leaf_through(p, z);
    (p.f(z), Box::new(move |rho| leaf.height(rho)))
}

/// Hyperboloid `sqrt(R^2 + rho^2)` cut where it meets the tube.
fn hyperboloid_in(p: &RotationalProfile, r: f64) -> Result<(f64, Box<dyn Fn(f64) -> f64>)> {
    // fixed point of rho = f(sqrt(R^2 + rho^2)); contracting since |f'| < 1
    let mut rho = p.f(r);
    for _ in 0..200 {
        rho = p.f((r * r + rho * rho).sqrt());
    }
    if !rho.is_finite() || rho <= 0.0 {
        return cfg_err("hyperboloid does not meet the tube");
    }
    Ok((rho, Box::new(move |x: f64| (r * r + x * x).sqrt())))
}

// ---------------------------------------------------------------------------
// boundary conditions

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCheck {
    pub profile: String,
    pub ok: bool,
    pub lines: Vec<(String, String)>,
}

impl BoundaryCheck {
    pub fn text(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Checks the curvature condition on the tube. Rotational tubes are sampled
/// on their `z` range; planar tubes must keep bounded curvature.
pub fn check_boundary(cfg: &ScenarioConfig) -> Result<BoundaryCheck> {
    let mut lines = vec![("profile".to_string(), cfg.profile.to_string())];
    let ok = match &cfg.profile {
        Tube::Rotational(p) => {
            let (lo, hi) = p.z_range;
            let r = check_condition_curvature(p, lo, hi, 2001)?;
            lines.push(("z_range".into(), format!("{lo} {hi}")));
            lines.push(("worst_z".into(), format!("{:.16e}", r.worst_z)));
            lines.push(("worst_condition_value".into(), format!("{:.16e}", r.worst_value)));
            lines.push(("signs_agree".into(), r.signs_agree.to_string()));
            let chart = crate::chart::RotationalLeafChart::new(p.clone(), 0.0);
            match crate::chart::check_compatibility(&chart, &cfg.profile, lo.max(-5.0), hi.min(5.0), 21) {
                Ok(c) => {
                    lines.push(("foliation_lapse_min".into(), format!("{:.16e}", c.lapse_min)));
                    lines.push((
                        "foliation_v_pairing".into(),
                        format!("{:.16e} {:.16e}", c.v_hat_pairing.0, c.v_hat_pairing.1),
                    ));
                }
                Err(e) => lines.push(("foliation".into(), format!("unavailable ({e})"))),
            }
            r.ok
        }
        Tube::Planar(b) => {
            // a branch turning null counts as unbounded curvature
            let sup = if b.is_vertical() {
                0.0
            } else {
                (1..=40)
                    .map(|k| k as f64 * 0.5)
                    .map(|x| profile::planar_curvature(b, x).map_or(f64::INFINITY, |c| c.a_vv.abs()))
                    .fold(0.0, f64::max)
            };
            lines.push(("sup_abs_a_vv_sampled".into(), format!("{sup:.16e}")));
            sup <= PLANAR_CURVATURE_BOUND
        }
    };
    lines.push(("curvature_condition".into(), if ok { "pass" } else { "fail" }.into()));
    Ok(BoundaryCheck { profile: cfg.profile.to_string(), ok, lines })
}

// ---------------------------------------------------------------------------
// runs

/// Outcome of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub event: Option<Event>,
    pub output_dir: PathBuf,
    pub report: MonitorReport,
    pub trajectory: Option<Trajectory<f64>>,
}

/// Exit code of a finished run.
pub fn exit_code(event: &Event) -> i32 {
    match event {
        Event::GuardTripped { .. } => 2,
        _ => 0,
    }
}

/// Largest nodal error against the closed form over the stored snapshots.
pub fn max_error(traj: &Trajectory<f64>, sol: &AnalyticSolution) -> f64 {
    traj.states
        .iter()
        .map(|s| {
            let pos = s.positions();
            let radial = s.dim() == 2;
            s.active()
                .into_iter()
                .map(|k| {
                    let p = pos[k];
                    let x = if radial { p[0].hypot(p[1]) } else { p[0] };
                    (s.u[k] - sol.u(x, s.t)).abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Runs the flow of a config without writing anything.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Trajectory<f64>> {
    let s0 = initial_state(cfg)?;
    Ok(run(s0, &cfg.control, &cfg.profile, &FlatChart::new(cfg.profile.dim()))?)
}

fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > SATURATION_FLOOR && fine > SATURATION_FLOOR).then(|| (coarse / fine).log2())
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or_else(|| "saturated".to_string(), |x| format!("{x:.6}"))
}

fn residual_values(traj: &Trajectory<f64>, tube: &Tube) -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    if traj.records.len() >= 2 {
        out.push(("volume_identity_residual", volume_identity(traj)?.residual));
    }
    if !traj.probes.is_empty() {
        let e = evolution_residuals(traj, tube)?;
        out.push(("res_h", e.res_h));
        out.push(("res_v", e.res_v));
    }
    let b = boundary_identities(traj, tube)?;
    out.push(("res_hmu", b.res_hmu));
    out.push(("res_vmu", b.res_vmu));
    Ok(out)
}

/// Executes a config: runs the flow and the monitors, then writes
/// `timeseries.csv`, `final_profile.csv` and `monitor_summary.txt`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = cfg.resolved_output_dir();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    if cfg.require_conditions {
        let check = check_boundary(cfg)?;
        if !check.ok {
            let mut report = MonitorReport::default();
            for (k, v) in check.lines {
                report.push(&k, v);
            }
            report.push("exit", "condition check failed".into());
            let path = out.join("monitor_summary.txt");
            report.write_summary(&path)?;
            return Ok(RunReport { exit_code: 4, event: None, output_dir: out, report, trajectory: None });
        }
    }
    let traj = simulate(cfg)?;
    let mut report = MonitorReport::build(&traj, &cfg.profile, cfg.monitors)?;
    report.summary.insert(0, ("scenario".into(), cfg.scenario.to_string()));
    report.summary.insert(1, ("profile".into(), cfg.profile.to_string()));
    report.summary.insert(2, ("nodes".into(), cfg.nodes.to_string()));
    if let Event::GuardTripped { t, .. } = traj.event {
        report.push("guard_trip_time", format!("{t:.16e}"));
    }
    if let Some(sol) = analytic_solution(cfg) {
        if sol.is_flow_solution() {
            report.push("analytic_solution", sol.name().into());
            report.push("max_error", format!("{:.16e}", max_error(&traj, &sol)));
        }
    }
    if let Some(z) = cfg.certificate_center {
        let center = SpacetimeVector::from_components(cfg.profile.dim(), &certificate_center(cfg.profile.dim(), z));
        match stability_certificate(traj.final_state(), &cfg.profile, &center, None, 1e-3) {
            Ok(c) => {
                report.push("certificate_ok", c.ok.to_string());
                report.push("certificate_radius", format!("{:.16e}", c.radius));
                report.push("certificate_interior_margin", format!("{:.16e}", c.interior_margin));
                report.push("certificate_boundary_margin", format!("{:.16e}", c.boundary_margin));
                report.push("certificate_identity_residual", format!("{:.16e}", c.identity_residual));
            }
            Err(e) => report.push("certificate", format!("not constructible ({e})")),
        }
    }
    if cfg.identity_orders {
        let coarse_cfg = cfg.coarsened();
        let coarse = simulate(&coarse_cfg)?;
        let fine_vals = residual_values(&traj, &cfg.profile)?;
        let coarse_vals = residual_values(&coarse, &cfg.profile)?;
        report.push("companion_nodes", coarse_cfg.nodes.to_string());
        for ((k, f), (_, c)) in fine_vals.iter().zip(&coarse_vals) {
            report.push(&format!("{k}_companion"), format!("{c:.16e}"));
            report.push(&format!("{k}_order"), fmt_order(order(*c, *f)));
        }
    }
    if let Some(data) = &cfg.comparison {
        let upper_cfg = ScenarioConfig { initial: data.clone(), ..cfg.clone() };
        let pair = comparison_pair_run(
            initial_state(cfg)?,
            initial_state(&upper_cfg)?,
            &cfg.control,
            &cfg.profile,
            &FlatChart::new(cfg.profile.dim()),
            None,
        )?;
        let all = pair.min_gap.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
        let later = pair.min_gap.iter().skip(1).map(|g| g.1).fold(f64::INFINITY, f64::min);
        report.push("comparison_event", pair.lower.event.to_string());
        report.push("comparison_min_gap", format!("{all:.16e}"));
        report.push("comparison_min_gap_after_first_step", format!("{later:.16e}"));
        write_gaps(&out.join("min_gap.csv"), &pair.min_gap)?;
    }
    report.push("exit_code", exit_code(&traj.event).to_string());
    report.write_timeseries(&out.join("timeseries.csv"))?;
    write_final_profile(&out.join("final_profile.csv"), traj.final_state(), &cfg.profile)?;
    report.write_summary(&out.join("monitor_summary.txt"))?;
    Ok(RunReport {
        exit_code: exit_code(&traj.event),
        event: Some(traj.event.clone()),
        output_dir: out,
        report,
        trajectory: Some(traj),
    })
}

fn write_gaps(path: &Path, gaps: &[(f64, f64)]) -> Result<()> {
    let csv_err = |e: csv::Error| ScenarioError::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["t", "min_gap"]).map_err(csv_err)?;
    for (t, g) in gaps {
        w.write_record([format!("{t:.16e}"), format!("{g:.16e}")]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn certificate_center(dim: usize, z: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim + 1];
    c[dim] = z;
    c
}

/// Writes the final graph: reference coordinate, physical position, height
/// and the geometric fields per node. Disks carry an extra `y` column.
pub fn write_final_profile(path: &Path, state: &FlowState<f64>, tube: &Tube) -> Result<()> {
    let geo = graph::geometry(state, tube, &FlatChart::new(state.dim()))?;
    let reference = state.reference();
    let disk = state.grid.kind == GridKind::Disk2D;
    let csv_err = |e: csv::Error| ScenarioError::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["s", "physical_coord"];
    if disk {
        header.push("y");
    }
    header.extend(["u", "H", "v", "v_hat", "normA2", "dV"]);
    w.write_record(&header).map_err(csv_err)?;
    let f = |x: f64| format!("{x:.16e}");
    for (i, &k) in geo.nodes.iter().enumerate() {
        let mut row = vec![f(reference[k]), f(geo.pos[i][0])];
        if disk {
            row.push(f(geo.pos[i][1]));
        }
        row.extend([state.u[k], geo.mean_curvature[i], geo.v[i], geo.v_hat[i], geo.norm_a2[i], geo.dv[i]].map(f));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceLevel {
    pub nodes: usize,
    pub h: f64,
    pub error: f64,
    /// `log2(e_{k-1} / e_k)`; `None` on the first level or when saturated.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub solution: String,
    pub levels: Vec<ConvergenceLevel>,
}

impl ConvergenceTable {
    pub fn text(&self) -> String {
        let mut s = format!("solution = {}\nnodes,h,max_error,order\n", self.solution);
        for (i, l) in self.levels.iter().enumerate() {
            let o = if i == 0 { "-".to_string() } else { fmt_order(l.order) };
            s.push_str(&format!("{},{:.6e},{:.6e},{}\n", l.nodes, l.h, l.error, o));
        }
        s
    }

    /// Orders of all levels after the first (saturated levels excluded).
    pub fn orders(&self) -> Vec<f64> {
        self.levels.iter().skip(1).filter_map(|l| l.order).collect()
    }
}

/// Static check of a hyperbolic leaf: `max | |H| R - 2 |` over the interior
/// nodes (the rim node's ghost closure is only first order).
fn static_leaf_error(state: &FlowState<f64>, tube: &Tube, radius: f64) -> Result<f64> {
    let geo = graph::geometry(state, tube, &FlatChart::new(state.dim()))?;
    let m = geo.mean_curvature.len() - 1;
    Ok(geo.mean_curvature[..m].iter().map(|h| (h.abs() * radius - 2.0).abs()).fold(0.0, f64::max))
}

/// Runs the config at `levels` resolutions, each halving `h`, in parallel.
pub fn convergence_study(cfg: &ScenarioConfig, levels: u32) -> Result<ConvergenceTable> {
    if levels < 2 {
        return cfg_err("a convergence study needs at least two levels");
    }
    let sol = analytic_solution(cfg)
        .ok_or_else(|| ScenarioError::Config(format!("scenario `{}` with initial data `{}` has no closed form", cfg.scenario, cfg.initial)))?;
    let rows = (0..levels)
        .into_par_iter()
        .map(|k| {
            let c = cfg.refined(k);
            let s0 = initial_state(&c)?;
            let h = s0.spacing();
            let error = match &sol {
                AnalyticSolution::HyperbolicPlane { radius, .. } => static_leaf_error(&s0, &c.profile, *radius)?,
                _ => max_error(&simulate(&c)?, &sol),
            };
            Ok((c.nodes, h, error))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ConvergenceLevel> = Vec::new();
    for (nodes, h, error) in rows {
        let order = out.last().and_then(|p| order(p.error, error));
        out.push(ConvergenceLevel { nodes, h, error, order });
    }
    Ok(ConvergenceTable { solution: sol.name().to_string(), levels: out })
}

// ---------------------------------------------------------------------------
// batch

/// Config files (`*.conf`) of a directory, sorted by name.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "conf"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

/// Runs every config of a directory concurrently; one exit code per file.
pub fn batch(dir: &Path) -> Result<Vec<(PathBuf, i32, String)>> {
    let files = config_files(dir)?;
    Ok(files
        .into_par_iter()
        .map(|p| {
            let outcome = load_config(&p).and_then(|c| run_scenario(&c));
            match outcome {
                Ok(r) => {
                    let what = r.event.map_or_else(|| "condition check failed".to_string(), |e| e.to_string());
                    (p, r.exit_code, what)
                }
                Err(e) => (p, e.exit_code(), e.to_string()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("scenario = grim_reaper\nnodes = 101\n").unwrap();
        assert_eq!(c.grid, GridKind::Curve1D);
        assert_eq!(c.t0, -1.0);
        assert_eq!(c.initial, InitialData::Exact);
        assert_eq!(c.control, StepControl::default());
        assert_eq!(c.output_dir, PathBuf::from("output/grim_reaper"));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "scenario = grim_reaper\nnodes = 101\ncfl = 0.9\n",
            "scenario = grim_reaper\n",
            "scenario = grim_reaper\nnodes = 4\n",
            "scenario = grim_reaper\nnodes = 101\ncolour = red\n",
            "scenario = nope\nnodes = 11\n",
            "scenario = cylinder_disk\nnodes = 11\nprofile = sine_tube(2,0.5,1)\n",
            "scenario = grim_reaper\nnodes = 11\nnodes = 12\n",
        ];
        for b in bad {
            let e = parse_config(b).unwrap_err();
            assert_eq!(e.exit_code(), 3, "{b}");
        }
    }

    #[test]
    fn serialize_round_trips() {
        let text = "scenario = sine_tube\nnodes = 41\ninitial = leaf(1.6207963267948966)\nt_end = 25\ncertificate_center = 1.5\ncomparison = constant(1.7)\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn initial_data_grammar() {
        for s in ["exact", "constant(0.5)", "bump(0,0.1)", "leaf(1.2)", "hyperboloid(2)", "nodes(1 2 3 4 5)"] {
            let d: InitialData = s.parse().unwrap();
            assert_eq!(d.to_string().parse::<InitialData>().unwrap(), d);
        }
        assert!("bump(1)".parse::<InitialData>().is_err());
        assert!("hyperboloid(-1)".parse::<InitialData>().is_err());
    }

    #[test]
    fn translator_closed_form_solves_the_flow() {
        // u_t = u_xx / (1 - u_x^2) for graphs over a line
        let s = AnalyticSolution::GrimReaper;
        for x in [-1.0, -0.3, 0.0, 0.4, 2.0] {
            let (ux, uxx) = s.derivatives(x, -0.5);
            assert!((s.time_derivative(x, -0.5) - uxx / (1.0 - ux * ux)).abs() < 1e-14);
        }
    }

    #[test]
    fn trumpet_fails_boundary_check() {
        let c = ScenarioConfig::new(ScenarioKind::GrimReaper, 11).unwrap();
        assert!(!check_boundary(&c).unwrap().ok);
        let s = ScenarioConfig::new(ScenarioKind::SineTube, 11).unwrap();
        assert!(check_boundary(&s).unwrap().ok);
    }

    #[test]
    fn cmc_leaf_has_h_two_over_r() {
        let c = ScenarioConfig::new(ScenarioKind::HyperbolicPlane, 41).unwrap();
        let Some(AnalyticSolution::HyperbolicPlane { radius, .. }) = analytic_solution(&c) else { panic!() };
        let s = initial_state(&c).unwrap();
        assert!(static_leaf_error(&s, &c.profile, radius).unwrap() < 1e-3);
    }
}
