//! One runner per experiment kind. Each returns an [`Outcome`] held in
//! memory; writing is left to the caller.

use std::sync::Arc;

use wavefront_lab::dispersion::{
    char_function, char_roots, critical_speed, gamma_max, select_mu, select_speed, speed_of_decay,
};
use wavefront_lab::envelopes::ResidualCertificate;
use wavefront_lab::experiments::{
    default_dt, envelope_suite, nicholson_case, radius_spot_check, speed_selection_run, stability_rate_run,
    standard_profile, tail_invariance_run, FrontStart, SpeedRunOptions, StabilityOptions,
};
use wavefront_lab::model::BirthFunction;
use wavefront_lab::solver::{
    init_history, simulate, Boundary, Frame, Grid1D, InitialCondition, Observer, SolverConfig,
};
use wavefront_lab::waves::{FrontTrack, FrontTracker, NormSeries, WaveProfile};

use crate::config::{BoundaryKind, ExperimentConfig, ExperimentKind, FrameKind, ModelKind, StartKind};
use crate::error::CliError;
use crate::output::{Cell, Outcome, Table};

type G = BirthFunction<f64>;

pub fn birth(cfg: &ExperimentConfig) -> Result<G, CliError> {
    let m = &cfg.model;
    let g = match m.kind {
        ModelKind::BevertonHolt => BirthFunction::beverton_holt(m.gp0.unwrap_or(m.r), m.kappa)?,
        ModelKind::Nicholson => BirthFunction::nicholson(m.gp0.unwrap_or(m.p_over_delta))?,
        ModelKind::PushedCandidate => BirthFunction::pushed_candidate(m.gp0.unwrap_or(m.r), m.s, m.kappa)?,
    };
    Ok(g)
}

/// Where Nicholson's map sits: monotone up to `e`, a contraction on its
/// attracting interval up to `e²`.
pub fn nicholson_regime(p_over_delta: f64) -> &'static str {
    let e = std::f64::consts::E;
    if p_over_delta <= e {
        "monotone"
    } else if p_over_delta <= e * e {
        "unimodal-contracting"
    } else {
        "unimodal-beyond-e2"
    }
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    cfg.validate(kind)?;
    let g = birth(cfg)?;
    let mut out = Outcome::new(kind, cfg.output.precision);
    out.param("model", &g.name);
    out.param_num("g'(0)", g.gp0);
    out.param_num("kappa", g.kappa);
    out.param_num("h", cfg.model.h);
    match kind {
        ExperimentKind::Roots => roots(cfg, &g, &mut out)?,
        ExperimentKind::CriticalSpeed => critical(cfg, &g, &mut out)?,
        ExperimentKind::SelectSpeed => selection(cfg, &g, &mut out)?,
        ExperimentKind::Simulate => simulate_run(cfg, &g, &mut out)?,
        ExperimentKind::Profile => profile(cfg, &g, &mut out)?,
        ExperimentKind::SpeedSelection => speed(cfg, &g, &mut out)?,
        ExperimentKind::StabilityRate => stability(cfg, &g, &mut out)?,
        ExperimentKind::NicholsonCase => nicholson(cfg, &g, &mut out)?,
        ExperimentKind::VerifyEnvelope => envelope(cfg, &g, seed, &mut out)?,
        ExperimentKind::TailInvariance => tail(cfg, &g, &mut out)?,
    }
    Ok(out)
}

/// `experiment.c`, or `1.25 c_#` when unset.
fn speed_or_default(cfg: &ExperimentConfig, g: &G) -> Result<f64, CliError> {
    match cfg.experiment.c {
        Some(c) => Ok(c),
        None => Ok(1.25 * critical_speed(cfg.model.h, g.gp0)?.0),
    }
}

fn roots(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let (h, c) = (cfg.model.h, cfg.experiment.c.expect("validated"));
    out.param_num("c", c);
    let r = char_roots(c, h, g.gp0)?;
    out.metric("lambda1", r.lambda1);
    out.metric("lambda2", r.lambda2);
    out.metric("residual1", r.residuals.0);
    out.metric("residual2", r.residuals.1);
    out.result("near_critical", r.near_critical);
    let bound = cfg.tolerances.root_residual * (1.0 + g.gp0) * r.tol_factor();
    let worst = r.residuals.0.abs().max(r.residuals.1.abs());
    out.check("root residuals", worst <= bound, format!("{worst:e} <= {bound:e}"));
    let mut t = Table::new(
        "roots.csv",
        &["c", "h", "gp0", "lambda1", "lambda2", "residual1", "residual2", "near_critical"],
    );
    t.push(vec![
        c.into(),
        h.into(),
        g.gp0.into(),
        r.lambda1.into(),
        r.lambda2.into(),
        r.residuals.0.into(),
        r.residuals.1.into(),
        r.near_critical.into(),
    ]);
    out.tables.push(t);
    Ok(())
}

fn critical(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let h = cfg.model.h;
    let (cs, ls) = critical_speed(h, g.gp0)?;
    out.metric("c_sharp", cs);
    out.metric("lambda_sharp", ls);
    out.metric("chi0_at_sharp", char_function(ls, cs, h, g.gp0));
    // the speed curve c(λ) = μ(λ)/λ, whose minimum is (λ_#, c_#)
    let mut t = Table::new("dispersion.csv", &["lambda", "mu", "c"]);
    for k in 1..=200 {
        let l = 0.025 * k as f64;
        t.push(vec![l.into(), select_mu(l, h, g.gp0).into(), speed_of_decay(l, h, g.gp0).into()]);
    }
    out.tables.push(t);
    Ok(())
}

fn selection(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let h = cfg.model.h;
    let lambda = cfg.experiment.lambda.expect("validated");
    let c_star = match cfg.experiment.c_star {
        Some(c) => c,
        None => critical_speed(h, g.gp0)?.0,
    };
    out.param_num("lambda", lambda);
    out.param_num("c_star", c_star);
    let s = select_speed(lambda, h, g.gp0, c_star)?;
    out.metric("mu", s.mu);
    out.metric("c_selected", s.c_selected);
    out.metric("lambda_star", s.lambda_star);
    out.result("regime", s.regime);
    let mut t = Table::new("selection.csv", &["lambda", "h", "gp0", "c_star", "mu", "c_selected", "lambda_star", "regime"]);
    t.push(vec![
        lambda.into(),
        h.into(),
        g.gp0.into(),
        c_star.into(),
        s.mu.into(),
        s.c_selected.into(),
        s.lambda_star.into(),
        s.regime.to_string().into(),
    ]);
    out.tables.push(t);
    Ok(())
}

fn track_table(track: &FrontTrack<f64>) -> Table {
    let mut t = Table::new("front_track.csv", &["t", "position", "c_running"]);
    for (i, (&s, &x)) in track.times.iter().zip(&track.positions).enumerate() {
        let run = track.c_est_running.get(i).map_or(Cell::Empty, |&v| v.into());
        t.push(vec![s.into(), x.into(), run]);
    }
    t
}

fn simulate_run(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let (n, e, h) = (&cfg.numerics, &cfg.experiment, cfg.model.h);
    let x_min = n.x_min.unwrap_or(-100.0);
    let x_max = n.x_max.unwrap_or(40.0);
    let t_end = n.t_end.unwrap_or(50.0);
    let grid = Grid1D::with_spacing(x_min, x_max, n.dx)?;
    let frame = match n.frame {
        FrameKind::Lab => Frame::Lab,
        FrameKind::CoMoving => Frame::CoMoving(e.c.expect("validated")),
    };
    let boundary = match n.boundary {
        BoundaryKind::Neumann => Boundary::Neumann,
        BoundaryKind::Dirichlet => Boundary::Dirichlet(n.boundary_left, n.boundary_right.unwrap_or(g.kappa)),
    };
    let spec = match e.start {
        StartKind::ExponentialTail => {
            let lambda = e.lambda.expect("validated");
            let c = match e.c {
                Some(c) => c,
                None => select_speed(lambda, h, g.gp0, critical_speed(h, g.gp0)?.0)?.c_selected,
            };
            out.param_num("lambda", lambda);
            InitialCondition::ExponentialTail {
                amplitude: e.amplitude,
                lambda,
                c,
                cap: e.cap * g.kappa,
            }
        }
        StartKind::Heaviside => InitialCondition::Heaviside { level: g.kappa, x0: 0.0 },
        StartKind::Constant => InitialCondition::Constant(e.amplitude),
    };
    out.param("start", format!("{:?}", e.start));
    out.param("frame", format!("{frame:?}"));
    out.param("boundary", format!("{boundary:?}"));
    out.param_num("t_end", t_end);
    let buf = init_history(&spec, &grid, frame, h, n.dt.unwrap_or(default_dt(h, 0.01)))?;
    out.param_num("dt", buf.dt);
    out.param_num("dx", grid.dx);
    let config = SolverConfig::new(frame, buf.dt, t_end, boundary).snapshot_every(cfg.output.snapshot_every);
    let mut tracker = FrontTracker::new(e.level * g.kappa);
    let traj = simulate(&grid, buf, &config, g, &mut [&mut tracker as &mut dyn Observer<f64>])?;
    if let Some(err) = traj.error {
        return Err(err.into());
    }
    let last = traj.diagnostics.last().expect("final snapshot");
    out.metric("final_min", last.min);
    out.metric("final_max", last.max);
    out.result("snapshots", traj.times.len());
    match tracker.finish(frame.speed()) {
        Ok(track) => {
            out.metric("c_est", track.c_est);
            out.tables.push(track_table(&track));
        }
        Err(err) => out.result("front", format!("not tracked ({err})")),
    }
    let finite = traj.diagnostics.iter().all(|d| !d.has_nan);
    out.check("finite fields", finite, format!("{} snapshots", traj.times.len()));
    let mut t = Table::new("snapshots.csv", &["t", "x", "u"]);
    for (s, field) in traj.times.iter().zip(&traj.fields) {
        for i in (0..grid.n).step_by(cfg.output.x_stride) {
            t.push(vec![(*s).into(), grid.x(i).into(), field[i].into()]);
        }
    }
    out.tables.push(t);
    Ok(())
}

fn profile_table(p: &WaveProfile<f64>) -> Table {
    let mut t = Table::new("profile.csv", &["z", "phi", "dphi"]);
    let d = p.nodal_derivative();
    for (i, (&v, &dv)) in p.values.iter().zip(&d).enumerate() {
        t.push(vec![p.grid.x(i).into(), v.into(), dv.into()]);
    }
    t
}

fn describe_profile(p: &WaveProfile<f64>, lambda1: f64, cfg: &ExperimentConfig, out: &mut Outcome) {
    out.metric("ep_residual", p.ep_residual);
    out.result("monotone", p.monotone);
    out.metric("overshoot", p.overshoot);
    out.metric("oscillation", p.oscillation);
    out.metric("pin_position", p.pin.position);
    let bound = cfg.tolerances.ep_residual * p.kappa;
    out.check("profile defect", p.ep_residual <= bound, format!("{:e} <= {bound:e}", p.ep_residual));
    match &p.tail_fit {
        Some(f) => {
            let rel = (f.lambda - lambda1).abs() / lambda1;
            out.metric("tail_lambda", f.lambda);
            out.metric("tail_amplitude", f.amplitude);
            out.metric("tail_r_squared", f.r_squared);
            out.check(
                "tail decay rate",
                rel <= cfg.tolerances.tail_rel,
                format!("fitted {:.6} vs lambda1 {lambda1:.6} ({:.3}%)", f.lambda, 100.0 * rel),
            );
        }
        None => out.check("tail decay rate", false, "no tail window with enough decades"),
    }
}

fn profile(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let (h, c) = (cfg.model.h, cfg.experiment.c.expect("validated"));
    out.param_num("c", c);
    let r = char_roots(c, h, g.gp0)?;
    out.metric("lambda1", r.lambda1);
    let p = standard_profile(g, c, h)?;
    describe_profile(&p, r.lambda1, cfg, out);
    out.tables.push(profile_table(&p));
    Ok(())
}

fn speed(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let (n, e, h) = (&cfg.numerics, &cfg.experiment, cfg.model.h);
    let start = match e.start {
        StartKind::ExponentialTail => FrontStart::ExponentialTail {
            lambda: e.lambda.expect("validated"),
        },
        _ => FrontStart::Heaviside,
    };
    let mut opts = SpeedRunOptions::standard(h);
    opts.dx = n.dx;
    opts.level = e.level;
    if let Some(dt) = n.dt {
        opts.dt = dt;
    }
    if let Some(t) = n.t_end {
        opts.t_end = t;
    }
    out.param("start", format!("{start:?}"));
    out.param_num("t_end", opts.t_end);
    out.param_num("dx", opts.dx);
    out.param_num("dt", opts.dt);
    let r = speed_selection_run(g, h, start, &opts)?;
    out.metric("c_sharp", r.c_sharp);
    if let Some(s) = r.selection {
        out.result("regime", s.regime);
    }
    out.metric("predicted", r.predicted);
    out.metric("measured", r.track.c_est);
    out.metric("rel_error", r.rel_error);
    out.check(
        "selected speed",
        r.rel_error <= cfg.tolerances.speed_rel,
        format!("measured {:.6} vs {:.6} ({:.3}%)", r.track.c_est, r.predicted, 100.0 * r.rel_error),
    );
    out.tables.push(track_table(&r.track));
    Ok(())
}

fn norms_table(s: &NormSeries<f64>) -> Table {
    let mut t = Table::new("norms.csv", &["t", "norm"]);
    t.notes.push(format!("{:?} norm, lambda = {}, origin = {}", s.kind, s.lambda, s.shift));
    for (&a, &b) in s.times.iter().zip(&s.values) {
        t.push(vec![a.into(), b.into()]);
    }
    t
}

fn stability_options(cfg: &ExperimentConfig, h: f64, lambda: Option<f64>) -> StabilityOptions {
    let (n, e, tol) = (&cfg.numerics, &cfg.experiment, &cfg.tolerances);
    let mut o = StabilityOptions::standard(h);
    if let Some(l) = lambda {
        o.lambda = l;
    }
    o.q = e.q;
    o.b = e.b;
    if let Some(t) = n.t_end {
        o.t_end = t;
    }
    if let Some(dt) = n.dt {
        o.dt = dt;
    }
    o.transient = tol.transient;
    o.floor = tol.norm_floor;
    o
}

fn stability(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let h = cfg.model.h;
    let c = speed_or_default(cfg, g)?;
    let opts = stability_options(cfg, h, cfg.experiment.lambda);
    out.param_num("c", c);
    out.param_num("lambda", opts.lambda);
    out.param_num("q", opts.q);
    out.param_num("t_end", opts.t_end);
    let gmax = gamma_max(c, opts.lambda, h, g.gp0)?;
    let p = Arc::new(standard_profile(g, c, h)?);
    let r = stability_rate_run(g, &p, &opts)?;
    out.metric("b", r.b);
    out.metric("gamma_max", gmax);
    out.metric("rate", r.fit.gamma);
    out.metric("r_squared", r.fit.r_squared);
    out.metric("max_increase", r.max_increase);
    let want = cfg.tolerances.rate_fraction * gmax;
    out.check("decay rate", r.fit.gamma >= want, format!("{:.6} >= {want:.6}", r.fit.gamma));
    out.check(
        "nonincreasing norm",
        r.max_increase <= cfg.tolerances.monotone,
        format!("largest relative increase {:e}", r.max_increase),
    );
    out.tables.push(norms_table(&r.norms));
    Ok(())
}

fn nicholson(cfg: &ExperimentConfig, _g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let p_over_delta = cfg.model.gp0.unwrap_or(cfg.model.p_over_delta);
    let h = cfg.model.h;
    let factor = cfg.experiment.factor;
    // the case always uses Nicholson's map, whatever model.kind says
    out.params.retain(|(k, _)| k == "h");
    out.param_num("p_over_delta", p_over_delta);
    out.param_num("factor", factor);
    let case = nicholson_case(p_over_delta, h, factor)?;
    out.result("regime", nicholson_regime(p_over_delta));
    out.metric("c_sharp", case.c_sharp);
    out.metric("c", case.c);
    out.result("monotone_g", case.monotone_g);
    out.result(
        "contraction_interval",
        format!("[{:.12}, {:.12}]", case.contraction.interval.0, case.contraction.interval.1),
    );
    out.metric("max_abs_derivative", case.contraction.max_abs_derivative);
    match case.kappa_root {
        Some(r) => out.metric("kappa_real_root", r),
        None => out.result("kappa_real_root", "none"),
    }
    out.metric("rate", case.stability.fit.gamma);
    if !case.monotone_g {
        out.check(
            "contraction on the attracting interval",
            case.contraction.contracting,
            format!("max |g'| = {:.6}", case.contraction.max_abs_derivative),
        );
    }
    out.check("decay", case.stability.fit.gamma > 0.0, format!("rate {:.6}", case.stability.fit.gamma));
    let lambda1 = char_roots(case.c, h, p_over_delta)?.lambda1;
    describe_profile(&case.profile, lambda1, cfg, out);
    out.tables.push(profile_table(&case.profile));
    out.tables.push(norms_table(&case.stability.norms));
    Ok(())
}

fn certificate_rows(t: &mut Table, name: &str, cert: &ResidualCertificate<f64>, stride: usize) {
    for s in cert.samples.iter().step_by(stride) {
        t.push(vec![
            name.into(),
            "sample".into(),
            s.t.into(),
            s.z.into(),
            s.residual.into(),
            s.side.to_string().into(),
        ]);
    }
    for j in &cert.corner_jumps {
        t.push(vec![name.into(), "corner-jump".into(), j.t.into(), Cell::Empty, j.plus.into(), "plus".into()]);
        t.push(vec![name.into(), "corner-jump".into(), j.t.into(), Cell::Empty, j.minus.into(), "minus".into()]);
    }
    t.notes.push(format!("{name}: {cert}, skipped {}", cert.skipped));
}

fn envelope(cfg: &ExperimentConfig, g: &G, seed: u64, out: &mut Outcome) -> Result<(), CliError> {
    let h = cfg.model.h;
    let c = speed_or_default(cfg, g)?;
    let lambda = cfg.experiment.lambda.unwrap_or(1.0);
    let t_max = cfg.numerics.t_end.unwrap_or(30.0);
    out.param_num("c", c);
    out.param_num("lambda", lambda);
    out.param_num("t_max", t_max);
    out.param("seed", seed);
    let p = Arc::new(standard_profile(g, c, h)?);
    let s = envelope_suite(g, &p, lambda, t_max, cfg.tolerances.residual)?;
    out.metric("gamma_max", s.gamma_max);
    out.metric("delta_star", s.kappa.delta_star);
    out.metric("gamma_star", s.kappa.gamma_star);
    out.metric("q_budget", s.kappa.q_budget());
    out.metric("b", s.kappa.b);
    out.metric("residual_tol", s.two_sided.tol);
    for (name, cert, want) in [
        ("two-sided", &s.two_sided, true),
        ("two-sided-xi", &s.two_sided_xi, true),
        ("shifted", &s.shifted, true),
        ("inadmissible", &s.inadmissible, false),
    ] {
        let label = if want {
            format!("{name} envelope certified")
        } else {
            format!("{name} envelope rejected")
        };
        out.check(&label, cert.pass() == want, cert.to_string());
    }
    out.metric("inadmissible_left_min", s.inadmissible_left_min);
    let scale = cfg.tolerances.squeeze / 1e-3;
    for (name, sq) in [("squeeze", &s.squeeze), ("shifted squeeze", &s.squeeze_shifted)] {
        let allow = sq.allowance * scale;
        out.check(
            name,
            sq.max_violation <= allow,
            format!("violation {:e} <= {allow:e} over {} snapshots", sq.max_violation, sq.snapshots),
        );
    }
    let spot = radius_spot_check(
        g,
        &p,
        &s.shifted_envelope,
        &s.kappa,
        cfg.experiment.epsilon,
        cfg.experiment.spot_checks,
        seed,
        t_max,
    )?;
    out.metric("radius", spot.radius.varsigma);
    out.result("radius_below_roundoff", spot.below_roundoff);
    let worst = spot.runs.iter().map(|r| r.1).fold(0.0, f64::max);
    out.check(
        "radius spot checks",
        spot.pass(),
        format!(
            "{} runs, largest distance {worst:e} vs epsilon {:e}{}",
            spot.runs.len(),
            spot.epsilon,
            if spot.below_roundoff { " (radius below rounding of kappa)" } else { "" }
        ),
    );
    let mut t = Table::new("certificate.csv", &["envelope", "kind", "t", "z", "residual", "side"]);
    let stride = cfg.output.x_stride;
    certificate_rows(&mut t, "two-sided", &s.two_sided, stride);
    certificate_rows(&mut t, "two-sided-xi", &s.two_sided_xi, stride);
    certificate_rows(&mut t, "shifted", &s.shifted, stride);
    certificate_rows(&mut t, "inadmissible", &s.inadmissible, stride);
    out.tables.push(t);
    Ok(())
}

fn tail(cfg: &ExperimentConfig, g: &G, out: &mut Outcome) -> Result<(), CliError> {
    let h = cfg.model.h;
    let c = speed_or_default(cfg, g)?;
    let lambda = match cfg.experiment.lambda {
        Some(l) => l,
        None => char_roots(c, h, g.gp0)?.lambda1,
    };
    let t_end = cfg.numerics.t_end.unwrap_or(40.0);
    let dt = cfg.numerics.dt.unwrap_or(default_dt(h, 0.005));
    out.param_num("c", c);
    out.param_num("lambda", lambda);
    out.param_num("t_end", t_end);
    out.param_num("dt", dt);
    let r = tail_invariance_run(g, lambda, c, h, t_end, dt)?;
    out.metric("slope", r.slope);
    out.metric("target", r.target);
    out.metric("rel_error", r.rel_error);
    out.check(
        "tail growth rate",
        !r.insufficient_data && r.rel_error <= cfg.tolerances.tail_rel,
        if r.insufficient_data {
            "too few snapshots in the tail window".to_string()
        } else {
            format!("{:.6} vs lambda c = {:.6} ({:.3}%)", r.slope, r.target, 100.0 * r.rel_error)
        },
    );
    let mut t = Table::new("tail.csv", &["t", "log_amplitude"]);
    for (&a, &b) in r.times.iter().zip(&r.log_amplitudes) {
        t.push(vec![a.into(), b.into()]);
    }
    out.tables.push(t);
    Ok(())
}
