use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{BoundaryKind, ExperimentConfig, ExperimentKind, FrameKind, ModelKind, StartKind};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wavefront-lab", version, about = "Wavefronts of u_t = u_xx - u + g(u(t - h, x))")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (default `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Threads used by `sweep`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Seed of the perturbations drawn by `verify-envelope`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Print every configuration key with its default and exit.
    #[arg(long)]
    pub print_schema: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Characteristic roots λ₁ < λ₂ at speed `--c`.
    Roots(Overrides),
    /// Minimal linear speed c_# and its rate λ_#.
    CriticalSpeed(Overrides),
    /// Speed selected by data decaying like e^{λx}.
    SelectSpeed(Overrides),
    /// Plain run of the solver with snapshots.
    Simulate(Overrides),
    /// Travelling front at speed `--c`.
    Profile(Overrides),
    /// Measured front speed against the selected one.
    SpeedSelection(Overrides),
    /// Decay rate of a weighted perturbation of the front.
    StabilityRate(Overrides),
    /// Non-monotone Nicholson map at `factor · c_#`.
    NicholsonCase(Overrides),
    /// Residual certificates and squeeze checks for the envelopes.
    VerifyEnvelope(Overrides),
    /// Growth of the tail amplitude at fixed decay rate.
    TailInvariance(Overrides),
    /// `experiment.kind` from the configuration.
    Run(Overrides),
    /// One experiment over the product of parameter lists.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Model with parameters, e.g. `beverton-holt:r=2,kappa=1` or
    /// `nicholson:p=5,h=0.5`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gp0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p_over_delta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c_star: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub start: Option<StartKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub amplitude: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub factor: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub spot_checks: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub dx: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,
    #[arg(long, value_enum)]
    pub frame: Option<FrameKind>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryKind>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Experiment to repeat (default `experiment.kind`).
    #[arg(long, value_enum)]
    pub kind: Option<ExperimentKind>,

    /// `name=v1,v2,...` with name one of lambda, h, c, gp0, p_over_delta,
    /// q, factor. Replaces the list from `[sweep]`.
    #[arg(long = "over")]
    pub over: Vec<String>,

    #[command(flatten)]
    pub overrides: Overrides,
}

fn number(field: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::config(field, format!("`{s}` is not a number")))
}

/// Parses `kind[:key=value,...]` into the model block of `cfg`.
pub fn apply_preset(cfg: &mut ExperimentConfig, preset: &str) -> Result<(), CliError> {
    let (kind, rest) = preset.split_once(':').unwrap_or((preset, ""));
    cfg.model.kind = match kind.trim() {
        "beverton-holt" | "bh" => ModelKind::BevertonHolt,
        "nicholson" => ModelKind::Nicholson,
        "pushed-candidate" => ModelKind::PushedCandidate,
        other => return Err(CliError::config("--preset", format!("unknown model `{other}`"))),
    };
    for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config("--preset", format!("expected key=value, got `{pair}`")))?;
        let field = format!("--preset {}", k.trim());
        let v = number(&field, v)?;
        match k.trim() {
            "r" => cfg.model.r = v,
            "kappa" => cfg.model.kappa = v,
            "s" => cfg.model.s = v,
            "p" | "p_over_delta" => cfg.model.p_over_delta = v,
            "h" => cfg.model.h = v,
            _ => return Err(CliError::config(field, "unknown preset parameter")),
        }
    }
    Ok(())
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(p) = &self.preset {
            apply_preset(cfg, p)?;
        }
        let (m, n, e) = (&mut cfg.model, &mut cfg.numerics, &mut cfg.experiment);
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.h, m.h);
        set!(self.p_over_delta, m.p_over_delta);
        set!(self.amplitude, e.amplitude);
        set!(self.q, e.q);
        set!(self.factor, e.factor);
        set!(self.level, e.level);
        set!(self.epsilon, e.epsilon);
        set!(self.spot_checks, e.spot_checks);
        set!(self.start, e.start);
        set!(self.dx, n.dx);
        set!(self.frame, n.frame);
        set!(self.boundary, n.boundary);
        if self.gp0.is_some() {
            m.gp0 = self.gp0;
        }
        for (src, dst) in [
            (self.c, &mut e.c),
            (self.c_star, &mut e.c_star),
            (self.lambda, &mut e.lambda),
            (self.b, &mut e.b),
            (self.dt, &mut n.dt),
            (self.t_end, &mut n.t_end),
            (self.x_min, &mut n.x_min),
            (self.x_max, &mut n.x_max),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        Ok(())
    }
}

/// Parses `name=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (name, list) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config("--over", format!("expected name=v1,v2,..., got `{spec}`")))?;
    let field = format!("--over {}", name.trim());
    let values = list
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| number(&field, v))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::config(field, "empty list"));
    }
    Ok((name.trim().to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let mut cfg = ExperimentConfig::default();
        apply_preset(&mut cfg, "nicholson:p=7.5,h=0.5").unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Nicholson);
        assert_eq!(cfg.model.p_over_delta, 7.5);
        assert_eq!(cfg.model.h, 0.5);
        apply_preset(&mut cfg, "beverton-holt").unwrap();
        assert_eq!(cfg.model.kind, ModelKind::BevertonHolt);
        assert!(apply_preset(&mut cfg, "logistic").is_err());
        assert!(apply_preset(&mut cfg, "bh:r=two").is_err());
        assert!(apply_preset(&mut cfg, "bh:w=2").is_err());
    }

    #[test]
    fn axes() {
        assert_eq!(parse_axis("h=0, 0.5").unwrap(), ("h".to_string(), vec![0.0, 0.5]));
        assert!(parse_axis("h").is_err());
        assert!(parse_axis("h=").is_err());
        assert!(parse_axis("h=a").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = ExperimentConfig::default();
        let o = Overrides {
            preset: Some("bh:r=3".into()),
            h: Some(0.25),
            c: Some(4.0),
            ..Default::default()
        };
        o.apply(&mut cfg).unwrap();
        assert_eq!((cfg.model.r, cfg.model.h, cfg.experiment.c), (3.0, 0.25, Some(4.0)));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
