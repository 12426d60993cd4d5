//! Cartesian parameter sweeps over one experiment kind.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, ModelKind};
use crate::error::CliError;
use crate::output::{num, Cell, Table};
use crate::run::{nicholson_regime, run};

#[derive(Debug, Clone)]
pub struct Point {
    pub values: Vec<(&'static str, f64)>,
    pub cfg: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail(Vec<String>),
    Error(String),
}

#[derive(Debug, Clone)]
pub struct Row {
    pub status: Status,
    pub metrics: Vec<(String, f64)>,
}

fn assign(cfg: &mut ExperimentConfig, name: &str, v: f64) {
    match name {
        "lambda" => cfg.experiment.lambda = Some(v),
        "h" => cfg.model.h = v,
        "c" => cfg.experiment.c = Some(v),
        "gp0" => cfg.model.gp0 = Some(v),
        "p_over_delta" => cfg.model.p_over_delta = v,
        "q" => cfg.experiment.q = v,
        "factor" => cfg.experiment.factor = v,
        _ => unreachable!("axis names come from SweepBlock::axes"),
    }
}

/// All combinations, first axis slowest. Every point is validated before
/// anything runs.
pub fn expand(base: &ExperimentConfig, kind: ExperimentKind) -> Result<Vec<Point>, CliError> {
    let axes = base.sweep.axes();
    if axes.is_empty() {
        return Err(CliError::config("sweep", "no parameter lists given"));
    }
    let mut points = vec![Point {
        values: Vec::new(),
        cfg: base.clone(),
    }];
    for (name, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.values.push((name, v));
                    assign(&mut q.cfg, name, v);
                    q
                })
            })
            .collect();
    }
    for p in &points {
        p.cfg.validate(kind).map_err(|e| match e {
            CliError::Config { field, line, message } => CliError::Config {
                field,
                line,
                message: format!("{message} (sweep point {:?})", p.values),
            },
            other => other,
        })?;
    }
    Ok(points)
}

pub fn run_points(points: &[Point], kind: ExperimentKind, seed: u64, workers: usize) -> Result<Vec<Row>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config("--workers", e.to_string()))?;
    let rows = pool.install(|| {
        points
            .par_iter()
            .map(|p| match run(kind, &p.cfg, seed) {
                Ok(o) => {
                    let failed: Vec<String> = o.checks.iter().filter(|c| !c.ok).map(|c| c.name.clone()).collect();
                    Row {
                        status: if failed.is_empty() { Status::Pass } else { Status::Fail(failed) },
                        metrics: o.metrics,
                    }
                }
                Err(e) => Row {
                    status: Status::Error(e.to_string()),
                    metrics: Vec::new(),
                },
            })
            .collect()
    });
    Ok(rows)
}

pub fn table(points: &[Point], rows: &[Row], base: &ExperimentConfig) -> Table {
    let axes: Vec<&str> = points[0].values.iter().map(|v| v.0).collect();
    let regime = base.model.kind == ModelKind::Nicholson || axes.contains(&"p_over_delta");
    let mut metric_names: Vec<String> = Vec::new();
    for r in rows {
        for (k, _) in &r.metrics {
            if !metric_names.contains(k) {
                metric_names.push(k.clone());
            }
        }
    }
    let mut header: Vec<&str> = vec!["index"];
    header.extend(&axes);
    if regime {
        header.push("map_regime");
    }
    header.push("status");
    header.extend(metric_names.iter().map(String::as_str));
    header.push("detail");
    let mut t = Table::new("sweep.csv", &header);
    for (i, (p, r)) in points.iter().zip(rows).enumerate() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(p.values.iter().map(|v| Cell::from(v.1)));
        if regime {
            let pd = p.cfg.model.gp0.unwrap_or(p.cfg.model.p_over_delta);
            row.push(nicholson_regime(pd).into());
        }
        let (status, detail) = match &r.status {
            Status::Pass => ("pass", String::new()),
            Status::Fail(names) => ("fail", names.join("; ")),
            Status::Error(e) => ("error", e.clone()),
        };
        row.push(status.into());
        for name in &metric_names {
            row.push(r.metrics.iter().find(|m| &m.0 == name).map_or(Cell::Empty, |m| m.1.into()));
        }
        row.push(detail.into());
        t.push(row);
    }
    t
}

pub fn report(kind: ExperimentKind, points: &[Point], rows: &[Row], digits: usize) -> String {
    let count = |f: fn(&Status) -> bool| rows.iter().filter(|r| f(&r.status)).count();
    let pass = count(|s| *s == Status::Pass);
    let fail = count(|s| matches!(s, Status::Fail(_)));
    let err = count(|s| matches!(s, Status::Error(_)));
    let mut s = String::new();
    let _ = writeln!(s, "experiment = sweep");
    let _ = writeln!(s, "kind = {}", kind.name());
    let _ = writeln!(
        s,
        "status = {}",
        if err > 0 {
            "error"
        } else if fail > 0 {
            "fail"
        } else {
            "pass"
        }
    );
    s.push_str("\n[axes]\n");
    for (k, (name, _)) in points[0].values.iter().enumerate() {
        let mut vals: Vec<f64> = Vec::new();
        for p in points {
            let v = p.values[k].1;
            if !vals.contains(&v) {
                vals.push(v);
            }
        }
        let vals: Vec<String> = vals.iter().map(|&v| num(v, digits)).collect();
        let _ = writeln!(s, "{name} = [{}]", vals.join(", "));
    }
    s.push_str("\n[results]\n");
    let _ = writeln!(s, "points = {}", rows.len());
    let _ = writeln!(s, "pass = {pass}");
    let _ = writeln!(s, "fail = {fail}");
    let _ = writeln!(s, "error = {err}");
    s
}

/// 0 when every point passed, 3 when any point hit a numerical error,
/// 4 when any check failed.
pub fn exit_code(rows: &[Row]) -> i32 {
    if rows.iter().any(|r| matches!(r.status, Status::Error(_))) {
        3
    } else if rows.iter().any(|r| matches!(r.status, Status::Fail(_))) {
        4
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_order_and_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.lambda = vec![0.5, 1.0];
        cfg.sweep.h = vec![0.0, 0.25, 0.5];
        let pts = expand(&cfg, ExperimentKind::SelectSpeed).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].values, vec![("lambda", 0.5), ("h", 0.25)]);
        assert_eq!(pts[3].cfg.experiment.lambda, Some(1.0));
        assert_eq!(pts[3].cfg.model.h, 0.0);
        cfg.sweep.h = vec![0.0, -1.0];
        assert!(matches!(expand(&cfg, ExperimentKind::SelectSpeed), Err(CliError::Config { .. })));
        cfg.sweep = Default::default();
        assert!(expand(&cfg, ExperimentKind::SelectSpeed).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(nicholson_regime(2.0), "monotone");
        assert_eq!(nicholson_regime(std::f64::consts::E), "monotone");
        assert_eq!(nicholson_regime(5.0), "unimodal-contracting");
        assert_eq!(nicholson_regime(8.0), "unimodal-beyond-e2");
    }
}
