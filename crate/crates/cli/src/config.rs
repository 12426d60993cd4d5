//! Sectioned TOML configuration and its validation.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Printed by `--print-schema`. Every key with its default.
pub const SCHEMA: &str = r#"# wavefront-lab configuration, version 1. Every key is optional except
# `version`; the values shown are the defaults.
version = 1

[model]
kind = "beverton-holt"     # beverton-holt | nicholson | pushed-candidate
r = 2.0                    # beverton-holt, pushed-candidate: g'(0)
kappa = 1.0                # beverton-holt, pushed-candidate: positive equilibrium
s = 0.0                    # pushed-candidate: quadratic coefficient
p_over_delta = 5.0         # nicholson
h = 0.0                    # delay
# gp0 = 2.0                # sets g'(0): replaces r, or p_over_delta for nicholson

[numerics]
dx = 0.05
# dt = 0.01                # default h/50, or 0.01 without delay
# t_end = 150.0            # default depends on the experiment
# x_min = -100.0           # simulate only
# x_max = 40.0             # simulate only
frame = "lab"              # simulate only: lab | co-moving (at experiment.c)
boundary = "neumann"       # simulate only: neumann | dirichlet
boundary_left = 0.0        # dirichlet value at x_min
# boundary_right = 1.0     # dirichlet value at x_max, default kappa

[experiment]
# kind = "roots"           # roots | critical-speed | select-speed | simulate | profile
                           # | speed-selection | stability-rate | nicholson-case
                           # | verify-envelope | tail-invariance
# c = 2.5                  # wave speed; default depends on the experiment
# c_star = 2.0             # minimal speed for select-speed, default c_#
# lambda = 0.5             # decay rate / weight exponent
start = "exponential-tail" # exponential-tail | heaviside | constant
amplitude = 1.0            # tail amplitude, or the value of a constant start
cap = 0.9                  # exponential-tail cap as a fraction of kappa
q = 0.05                   # perturbation size for stability-rate
# b = 8.7                  # corner of the perturbation, default from the kappa box
factor = 1.2               # nicholson-case: c = factor * c_#
level = 0.5                # front crossing level as a fraction of kappa
epsilon = 0.01             # verify-envelope: target of the stability radius
spot_checks = 5            # verify-envelope: seeded perturbations of size 0.9 radius

[output]
dir = "out"
snapshot_every = 100       # simulate: steps between stored snapshots
x_stride = 1               # simulate: nodes between written samples
precision = 17             # significant digits in CSV output

[tolerances]
root_residual = 1e-12      # times (1 + g'(0))
speed_rel = 0.03
tail_rel = 0.02
rate_fraction = 0.5        # fitted rate must reach this fraction of gamma_max
monotone = 1e-9            # relative increase allowed after the transient
transient = 0.3            # fraction of samples dropped before rate fits
norm_floor = 1e-6          # norms below floor * q are treated as noise
ep_residual = 1e-6         # profile defect, times kappa
# residual = 2e-8          # envelope residual, default 1e-8 (1 + kappa)
squeeze = 1e-3             # squeeze violation allowance, times q

[sweep]
# Lists of values; the sweep runs experiment.kind at every combination.
# lambda = [0.2, 0.4]
# h = [0.0, 0.5]
# c = []
# gp0 = []
# p_over_delta = []
# q = []
# factor = []
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BevertonHolt,
    Nicholson,
    PushedCandidate,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub r: f64,
    pub kappa: f64,
    pub s: f64,
    pub p_over_delta: f64,
    pub h: f64,
    pub gp0: Option<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            kind: ModelKind::BevertonHolt,
            r: 2.0,
            kappa: 1.0,
            s: 0.0,
            p_over_delta: 5.0,
            h: 0.0,
            gp0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    Lab,
    CoMoving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub dx: f64,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub frame: FrameKind,
    pub boundary: BoundaryKind,
    pub boundary_left: f64,
    pub boundary_right: Option<f64>,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            dx: 0.05,
            dt: None,
            t_end: None,
            x_min: None,
            x_max: None,
            frame: FrameKind::Lab,
            boundary: BoundaryKind::Neumann,
            boundary_left: 0.0,
            boundary_right: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Roots,
    CriticalSpeed,
    SelectSpeed,
    Simulate,
    Profile,
    SpeedSelection,
    StabilityRate,
    NicholsonCase,
    VerifyEnvelope,
    TailInvariance,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Roots => "roots",
            Self::CriticalSpeed => "critical-speed",
            Self::SelectSpeed => "select-speed",
            Self::Simulate => "simulate",
            Self::Profile => "profile",
            Self::SpeedSelection => "speed-selection",
            Self::StabilityRate => "stability-rate",
            Self::NicholsonCase => "nicholson-case",
            Self::VerifyEnvelope => "verify-envelope",
            Self::TailInvariance => "tail-invariance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    ExponentialTail,
    Heaviside,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: Option<ExperimentKind>,
    pub c: Option<f64>,
    pub c_star: Option<f64>,
    pub lambda: Option<f64>,
    pub start: StartKind,
    pub amplitude: f64,
    pub cap: f64,
    pub q: f64,
    pub b: Option<f64>,
    pub factor: f64,
    pub level: f64,
    pub epsilon: f64,
    pub spot_checks: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            kind: None,
            c: None,
            c_star: None,
            lambda: None,
            start: StartKind::ExponentialTail,
            amplitude: 1.0,
            cap: 0.9,
            q: 0.05,
            b: None,
            factor: 1.2,
            level: 0.5,
            epsilon: 0.01,
            spot_checks: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub snapshot_every: usize,
    pub x_stride: usize,
    pub precision: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_every: 100,
            x_stride: 1,
            precision: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub root_residual: f64,
    pub speed_rel: f64,
    pub tail_rel: f64,
    pub rate_fraction: f64,
    pub monotone: f64,
    pub transient: f64,
    pub norm_floor: f64,
    pub ep_residual: f64,
    pub residual: Option<f64>,
    pub squeeze: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root_residual: 1e-12,
            speed_rel: 0.03,
            tail_rel: 0.02,
            rate_fraction: 0.5,
            monotone: 1e-9,
            transient: 0.3,
            norm_floor: 1e-6,
            ep_residual: 1e-6,
            residual: None,
            squeeze: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub gp0: Vec<f64>,
    pub p_over_delta: Vec<f64>,
    pub q: Vec<f64>,
    pub factor: Vec<f64>,
}

impl SweepBlock {
    /// Non-empty axes in a fixed order.
    pub fn axes(&self) -> Vec<(&'static str, &[f64])> {
        [
            ("lambda", &self.lambda[..]),
            ("h", &self.h[..]),
            ("c", &self.c[..]),
            ("gp0", &self.gp0[..]),
            ("p_over_delta", &self.p_over_delta[..]),
            ("q", &self.q[..]),
            ("factor", &self.factor[..]),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .collect()
    }

    pub fn set(&mut self, name: &str, values: Vec<f64>) -> Result<(), CliError> {
        let slot = match name {
            "lambda" => &mut self.lambda,
            "h" => &mut self.h,
            "c" => &mut self.c,
            "gp0" => &mut self.gp0,
            "p_over_delta" | "p" => &mut self.p_over_delta,
            "q" => &mut self.q,
            "factor" => &mut self.factor,
            _ => return Err(CliError::config(format!("sweep.{name}"), "unknown sweep parameter")),
        };
        *slot = values;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: Option<u32>,
    pub model: ModelBlock,
    pub numerics: NumericsBlock,
    pub experiment: ExperimentBlock,
    pub output: OutputBlock,
    pub tolerances: Tolerances,
    pub sweep: SweepBlock,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            CliError::Config {
                field: None,
                line,
                message: e.message().to_string(),
            }
        })?;
        match cfg.version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(CliError::Config {
                field: Some("version".into()),
                line: text.lines().position(|l| l.trim_start().starts_with("version")).map(|i| i + 1),
                message: format!("version {v} is not supported, expected {CONFIG_VERSION}"),
            }),
            None => Err(CliError::config("version", "missing; add `version = 1`")),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Cross-field checks, run before any computation.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), CliError> {
        let pos = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(field, format!("must be positive, got {v}")))
            }
        };
        let m = &self.model;
        if !(m.h >= 0.0 && m.h.is_finite()) {
            return Err(CliError::config("model.h", format!("must be nonnegative, got {}", m.h)));
        }
        match m.kind {
            ModelKind::BevertonHolt | ModelKind::PushedCandidate => {
                if !(m.r > 1.0) {
                    return Err(CliError::config("model.r", format!("must exceed 1, got {}", m.r)));
                }
                pos("model.kappa", m.kappa)?;
            }
            ModelKind::Nicholson => {
                if !(m.p_over_delta > 1.0) {
                    return Err(CliError::config(
                        "model.p_over_delta",
                        format!("must exceed 1, got {}", m.p_over_delta),
                    ));
                }
            }
        }
        if let Some(g) = m.gp0 {
            if !(g > 1.0) {
                return Err(CliError::config("model.gp0", format!("must exceed 1, got {g}")));
            }
        }
        let n = &self.numerics;
        pos("numerics.dx", n.dx)?;
        if let Some(dt) = n.dt {
            pos("numerics.dt", dt)?;
        }
        if let Some(t) = n.t_end {
            if !(t >= 0.0) {
                return Err(CliError::config("numerics.t_end", format!("must be nonnegative, got {t}")));
            }
        }
        if let (Some(a), Some(b)) = (n.x_min, n.x_max) {
            if !(a < b) {
                return Err(CliError::config("numerics.x_max", "must exceed numerics.x_min"));
            }
        }
        let e = &self.experiment;
        if let Some(l) = e.lambda {
            pos("experiment.lambda", l)?;
        }
        if let Some(c) = e.c {
            pos("experiment.c", c)?;
        }
        pos("experiment.q", e.q)?;
        pos("experiment.factor", e.factor)?;
        pos("experiment.epsilon", e.epsilon)?;
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(CliError::config("experiment.level", "must lie in (0, 1)"));
        }
        if !(e.cap > 0.0 && e.cap <= 1.0) {
            return Err(CliError::config("experiment.cap", "must lie in (0, 1]"));
        }
        let o = &self.output;
        if o.snapshot_every == 0 || o.x_stride == 0 {
            return Err(CliError::config("output.snapshot_every", "strides must be at least 1"));
        }
        if !(1..=17).contains(&o.precision) {
            return Err(CliError::config("output.precision", "must lie in 1..=17"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.root_residual", t.root_residual),
            ("tolerances.speed_rel", t.speed_rel),
            ("tolerances.tail_rel", t.tail_rel),
            ("tolerances.rate_fraction", t.rate_fraction),
            ("tolerances.norm_floor", t.norm_floor),
            ("tolerances.ep_residual", t.ep_residual),
            ("tolerances.squeeze", t.squeeze),
        ] {
            pos(name, v)?;
        }
        if !(t.monotone >= 0.0) {
            return Err(CliError::config("tolerances.monotone", "must be nonnegative"));
        }
        if !(t.transient >= 0.0 && t.transient < 1.0) {
            return Err(CliError::config("tolerances.transient", "must lie in [0, 1)"));
        }
        match kind {
            ExperimentKind::Roots | ExperimentKind::Profile if e.c.is_none() => {
                Err(CliError::config("experiment.c", format!("required by {}", kind.name())))
            }
            ExperimentKind::SelectSpeed if e.lambda.is_none() => {
                Err(CliError::config("experiment.lambda", "required by select-speed"))
            }
            ExperimentKind::Simulate => {
                if e.start == StartKind::ExponentialTail && e.lambda.is_none() {
                    return Err(CliError::config("experiment.lambda", "required by an exponential-tail start"));
                }
                if n.frame == FrameKind::CoMoving && e.c.is_none() {
                    return Err(CliError::config("experiment.c", "required by the co-moving frame"));
                }
                Ok(())
            }
            ExperimentKind::SpeedSelection if e.start == StartKind::ExponentialTail && e.lambda.is_none() => {
                Err(CliError::config("experiment.lambda", "required by an exponential-tail start"))
            }
            ExperimentKind::SpeedSelection if e.start == StartKind::Constant => {
                Err(CliError::config("experiment.start", "speed-selection needs a front, not a constant"))
            }
            _ => Ok(()),
        }
    }
}
