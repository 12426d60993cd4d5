//! Command-line driver. Exit codes: 0 all checks passed, 2 configuration
//! error, 3 numerical failure, 4 a check failed.

// `!(x > 0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod config;
mod error;
mod output;
mod run;
mod sweep;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command, Overrides};
use config::{ExperimentConfig, ExperimentKind, CONFIG_VERSION, SCHEMA};
use error::CliError;

fn base_config(cli: &Cli, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            version: Some(CONFIG_VERSION),
            ..Default::default()
        },
    };
    overrides.apply(&mut cfg)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn timing(elapsed: f64, extra: &str) -> (String, String) {
    ("timing.txt".into(), format!("wall_seconds = {elapsed:.3}\n{extra}"))
}

fn single(cli: &Cli, kind: Option<ExperimentKind>, o: &Overrides) -> Result<i32, CliError> {
    let cfg = base_config(cli, o)?;
    let kind = kind
        .or(cfg.experiment.kind)
        .ok_or_else(|| CliError::config("experiment.kind", "required by `run`"))?;
    let t0 = Instant::now();
    let outcome = run::run(kind, &cfg, cli.seed)?;
    outcome.write(&cfg.output.dir)?;
    output::write_files(&cfg.output.dir, &[timing(t0.elapsed().as_secs_f64(), "")])?;
    print!("{}", outcome.report());
    Ok(if outcome.passed() { 0 } else { 4 })
}

fn sweep_cmd(cli: &Cli, a: &args::SweepArgs) -> Result<i32, CliError> {
    let mut cfg = base_config(cli, &a.overrides)?;
    for spec in &a.over {
        let (name, values) = args::parse_axis(spec)?;
        cfg.sweep.set(&name, values)?;
    }
    let kind = a
        .kind
        .or(cfg.experiment.kind)
        .ok_or_else(|| CliError::config("experiment.kind", "sweep needs --kind or experiment.kind"))?;
    let workers = match cli.workers {
        Some(0) => return Err(CliError::config("--workers", "must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let points = sweep::expand(&cfg, kind)?;
    let t0 = Instant::now();
    let rows = sweep::run_points(&points, kind, cli.seed, workers)?;
    let digits = cfg.output.precision;
    let table = sweep::table(&points, &rows, &cfg);
    let report = sweep::report(kind, &points, &rows, digits);
    output::write_files(
        &cfg.output.dir,
        &[
            ("sweep.csv".into(), table.render(digits)),
            ("report.txt".into(), report.clone()),
            timing(t0.elapsed().as_secs_f64(), &format!("workers = {workers}\n")),
        ],
    )?;
    print!("{report}");
    Ok(sweep::exit_code(&rows))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(2);
    };
    use ExperimentKind as K;
    let result = match command {
        Command::Roots(o) => single(&cli, Some(K::Roots), o),
        Command::CriticalSpeed(o) => single(&cli, Some(K::CriticalSpeed), o),
        Command::SelectSpeed(o) => single(&cli, Some(K::SelectSpeed), o),
        Command::Simulate(o) => single(&cli, Some(K::Simulate), o),
        Command::Profile(o) => single(&cli, Some(K::Profile), o),
        Command::SpeedSelection(o) => single(&cli, Some(K::SpeedSelection), o),
        Command::StabilityRate(o) => single(&cli, Some(K::StabilityRate), o),
        Command::NicholsonCase(o) => single(&cli, Some(K::NicholsonCase), o),
        Command::VerifyEnvelope(o) => single(&cli, Some(K::VerifyEnvelope), o),
        Command::TailInvariance(o) => single(&cli, Some(K::TailInvariance), o),
        Command::Run(o) => single(&cli, None, o),
        Command::Sweep(a) => sweep_cmd(&cli, a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
