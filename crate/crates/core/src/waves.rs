//! Wavefront profiles and the measurements taken on simulated solutions:
//! front position and speed, exponential tails, weighted norms, shift
//! alignment and decay rates.

use std::fmt;

use crate::dispersion::{char_minimum, char_roots};
use crate::error::{Error, Result};
use crate::model::BirthFunction;
use crate::numeric::{golden_section, linear_fit, Banded, LinearFit};
use crate::scalar::Scalar;
use crate::solver::{
    eta, init_history, Advection, Boundary, Frame, Grid1D, InitialCondition, ShiftInterp, Stepper,
    Trajectory,
};

/// Log-linear fit `u ≈ A e^{λz}` on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit<S> {
    pub lambda: S,
    pub amplitude: S,
    pub r_squared: S,
    pub window: (S, S),
    pub n: usize,
}

impl<S: Scalar> TailFit<S> {
    /// Decades of decay spanned by the window.
    pub fn decades(&self) -> S {
        self.lambda * (self.window.1 - self.window.0) / S::LN_10()
    }
}

/// Where the profile was pinned: `position` is the crossing of `level` in
/// the coordinates of the relaxation run; the stored grid has it at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin<S> {
    pub level: S,
    pub position: S,
}

/// A computed front `φ` on a co-moving grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile<S> {
    pub grid: Grid1D<S>,
    pub values: Vec<S>,
    pub c: S,
    pub h: S,
    pub kappa: S,
    /// Exponent used to extrapolate to the left of the grid.
    pub lambda1: S,
    pub pin: Pin<S>,
    pub tail_fit: Option<TailFit<S>>,
    pub ep_residual: S,
    pub monotone: bool,
    /// `max φ - κ`; positive for profiles that overshoot κ.
    pub overshoot: S,
    /// `max |φ - κ|` to the right of the last maximum; zero for monotone
    /// profiles that approach κ from below only.
    pub oscillation: S,
    /// Drift of the front in the co-moving frame measured while relaxing.
    pub drift: S,
    pub relax_time: S,
    /// Amplitude removed by [`normalize_profile`], if applied.
    pub raw_amplitude: Option<S>,
}

impl<S: Scalar> fmt::Display for WaveProfile<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "profile c={} h={} nodes={} residual={:e} monotone={} overshoot={:e}",
            self.c, self.h, self.grid.n, self.ep_residual, self.monotone, self.overshoot
        )
    }
}

/// Catmull–Rom cubic through uniform samples, with its derivative.
fn cubic<S: Scalar>(v: &[S], x_min: S, dx: S, z: S) -> (S, S) {
    let n = v.len();
    let pos = (z - x_min) / dx;
    let j = pos.floor().max(S::zero()).min(S::from_usize_lossy(n - 2));
    let t = pos - j;
    let j = j.to_usize().unwrap_or(0);
    let p1 = v[j];
    let p2 = v[j + 1];
    let p0 = if j > 0 { v[j - 1] } else { S::lit(2.0) * p1 - p2 };
    let p3 = if j + 2 < n { v[j + 2] } else { S::lit(2.0) * p2 - p1 };
    let half = S::lit(0.5);
    let a = half * (-p0 + S::lit(3.0) * p1 - S::lit(3.0) * p2 + p3);
    let b = half * (S::lit(2.0) * p0 - S::lit(5.0) * p1 + S::lit(4.0) * p2 - p3);
    let cc = half * (p2 - p0);
    let val = ((a * t + b) * t + cc) * t + p1;
    let der = ((S::lit(3.0) * a * t + S::lit(2.0) * b) * t + cc) / dx;
    (val, der)
}

impl<S: Scalar> WaveProfile<S> {
    /// `φ(z)`: cubic inside the grid, exponential tail `φ(z₀) e^{λ₁(z - z₀)}`
    /// to the left and the last value to the right.
    pub fn eval(&self, z: S) -> S {
        let g = &self.grid;
        if z <= g.x_min {
            return self.values[0] * (self.lambda1 * (z - g.x_min)).exp();
        }
        if z >= g.x_max {
            return self.values[g.n - 1];
        }
        cubic(&self.values, g.x_min, g.dx, z).0
    }

    pub fn derivative(&self, z: S) -> S {
        let g = &self.grid;
        if z <= g.x_min {
            return self.lambda1 * self.eval(z);
        }
        if z >= g.x_max {
            return S::zero();
        }
        cubic(&self.values, g.x_min, g.dx, z).1
    }

    /// `φ(x_i + shift)` at the nodes of `grid`.
    pub fn sample(&self, grid: &Grid1D<S>, shift: S) -> Vec<S> {
        (0..grid.n).map(|i| self.eval(grid.x(i) + shift)).collect()
    }

    /// Centered-difference `φ'` at every node (one-sided at the ends).
    pub fn nodal_derivative(&self) -> Vec<S> {
        let n = self.grid.n;
        let dx = self.grid.dx;
        let v = &self.values;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (v[1] - v[0]) / dx
                } else if i == n - 1 {
                    (v[n - 1] - v[n - 2]) / dx
                } else {
                    (v[i + 1] - v[i - 1]) / (S::lit(2.0) * dx)
                }
            })
            .collect()
    }

    /// Zero-flux-free boundary pair matching the profile, for co-moving runs
    /// on its grid.
    pub fn boundary(&self) -> Boundary<S> {
        Boundary::Dirichlet(self.values[0], self.values[self.grid.n - 1])
    }
}

/// Max-norm of the centered-difference defect of
/// `φ'' - cφ' - φ + g(φ(z - ch))` over interior nodes, with the delayed
/// value linearly interpolated.
pub fn ep_defect<S: Scalar>(grid: &Grid1D<S>, values: &[S], c: S, h: S, g: &BirthFunction<S>) -> S {
    let r = ep_residual_vector(grid, values, c, h, g, &ShiftInterp::new(grid, c * h));
    r[1..grid.n - 1].iter().fold(S::zero(), |m, v| m.max(v.abs()))
}

fn ep_residual_vector<S: Scalar>(
    grid: &Grid1D<S>,
    u: &[S],
    c: S,
    _h: S,
    g: &BirthFunction<S>,
    interp: &ShiftInterp<S>,
) -> Vec<S> {
    let n = grid.n;
    let dx = grid.dx;
    let inv2 = S::one() / (dx * dx);
    let adv = c / (S::lit(2.0) * dx);
    let mut r = vec![S::zero(); n];
    for i in 1..n - 1 {
        r[i] = (u[i + 1] - S::lit(2.0) * u[i] + u[i - 1]) * inv2 - adv * (u[i + 1] - u[i - 1]) - u[i]
            + g.eval(interp.at(u, i));
    }
    r
}

/// Newton iteration on the discrete profile equation with both end values
/// held fixed. Returns the final defect.
fn newton_polish<S: Scalar>(
    grid: &Grid1D<S>,
    u: &mut [S],
    c: S,
    h: S,
    g: &BirthFunction<S>,
    target: S,
) -> Option<S> {
    let n = grid.n;
    let dx = grid.dx;
    let interp = ShiftInterp::new(grid, c * h);
    let kl = (0..n).map(|i| i - interp.weights(i).0.min(i)).max().unwrap_or(1).max(1);
    let inv2 = S::one() / (dx * dx);
    let adv = c / (S::lit(2.0) * dx);
    let mut res = ep_residual_vector(grid, u, c, h, g, &interp);
    let mut norm = res.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    for _ in 0..40 {
        if norm <= target {
            break;
        }
        let mut jac = Banded::zeros(n, kl, 1);
        jac.add(0, 0, S::one());
        jac.add(n - 1, n - 1, S::one());
        for i in 1..n - 1 {
            jac.add(i, i - 1, inv2 + adv);
            jac.add(i, i, -S::lit(2.0) * inv2 - S::one());
            jac.add(i, i + 1, inv2 - adv);
            let (j, th) = interp.weights(i);
            let gp = g.derivative(interp.at(u, i));
            jac.add(i, j, gp * (S::one() - th));
            if th != S::zero() {
                jac.add(i, j + 1, gp * th);
            }
        }
        let mut delta: Vec<S> = res.iter().map(|&r| -r).collect();
        jac.solve(&mut delta)?;
        // damped step: halve until the defect decreases
        let mut step = S::one();
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<S> = u.iter().zip(&delta).map(|(&a, &d)| a + step * d).collect();
            let r2 = ep_residual_vector(grid, &trial, c, h, g, &interp);
            let n2 = r2.iter().fold(S::zero(), |m, v| m.max(v.abs()));
            if n2 < norm {
                u.copy_from_slice(&trial);
                res = r2;
                norm = n2;
                accepted = true;
                break;
            }
            step = step / S::lit(2.0);
        }
        if !accepted {
            break;
        }
    }
    Some(norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions<S> {
    pub grid: Grid1D<S>,
    pub dt: S,
    /// Upper bound on the relaxation time.
    pub relax_time: S,
    /// Defaults to κ/2.
    pub pin_level: Option<S>,
    /// Sup-norm change per unit time below which relaxation stops.
    pub tol: S,
    /// Target defect of the Newton polish.
    pub ep_tol: S,
    /// Drift rate above which the speed is declared inadmissible.
    pub drift_tol: S,
}

impl<S: Scalar> ProfileOptions<S> {
    /// Grid `[-60, 30]`, `dx = 0.05`, `dt = 0.02` (or the nearest divisor of
    /// `h`), relaxation up to `t = 400`.
    pub fn standard() -> Self {
        Self {
            grid: Grid1D::with_spacing(S::lit(-60.0), S::lit(30.0), S::lit(0.05)).expect("valid grid"),
            dt: S::lit(0.02),
            relax_time: S::lit(400.0),
            pin_level: None,
            tol: S::lit(1e-10),
            ep_tol: S::tol(1e-12),
            drift_tol: S::lit(1e-2),
        }
    }
}

/// Leftmost node interval where `field` rises through `level`, located by
/// linear interpolation.
pub fn crossing<S: Scalar>(field: &[S], grid: &Grid1D<S>, level: S) -> Option<S> {
    (0..field.len() - 1)
        .find(|&i| field[i] < level && field[i + 1] >= level)
        .map(|i| {
            let (a, b) = (field[i], field[i + 1]);
            grid.x(i) + grid.dx * (level - a) / (b - a)
        })
}

/// Relaxes the co-moving equation to a front of speed `c` and pins it.
///
/// The left end is held at the value of the initial ramp, which by the tail
/// structure of fronts selects one translate; the position is then pinned by
/// translating coordinates, so the nodal values are the discrete steady
/// state itself.
pub fn compute_profile<S: Scalar>(
    c: S,
    g: &BirthFunction<S>,
    h: S,
    opts: &ProfileOptions<S>,
) -> Result<WaveProfile<S>> {
    let kappa = g.kappa;
    let level = opts.pin_level.unwrap_or(kappa / S::lit(2.0));
    let grid = opts.grid;
    let (lambda, admissible) = match char_roots(c, h, g.gp0) {
        Ok(r) => (r.lambda1, true),
        Err(Error::NoRealRoots { .. }) => (char_minimum(c, h, g.gp0).0.max(S::lit(0.1)), false),
        Err(e) => return Err(e),
    };
    let ramp = move |z: S| kappa / (S::one() + (-lambda * z).exp());
    let mut left = if admissible { ramp(grid.x_min) } else { S::zero() };
    let spec = InitialCondition::Function(std::sync::Arc::new(move |s: S, x: S| ramp(x + c * s)));
    let mut buf = init_history(&spec, &grid, Frame::CoMoving(c), h, opts.dt)?;
    buf.map_slices(|s| s[0] = left);
    let boundary = Boundary::Dirichlet(left, kappa);
    let mut stepper = Stepper::new(&grid, Frame::CoMoving(c), h, buf.dt, boundary, Advection::Centered)?;

    let per_check = (S::one() / buf.dt).round().max(S::one()).to_usize().unwrap_or(1);
    let checks = (opts.relax_time).ceil().to_usize().unwrap_or(1).max(1);
    let mut prev = buf.current().to_vec();
    let mut offset = S::zero();
    let (mut ts, mut ps) = (Vec::new(), Vec::new());
    let mut relaxed = false;
    let mut last_change = S::infinity();
    let mut elapsed = S::zero();
    for k in 1..=checks {
        for _ in 0..per_check {
            stepper.step(&mut buf, g)?;
        }
        elapsed = buf.t();
        let cur = buf.current();
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                t: elapsed.to_f64_lossy(),
                reason: "non-finite value during relaxation".into(),
            });
        }
        let p = crossing(cur, &grid, level).ok_or(Error::NoCrossing {
            t: elapsed.to_f64_lossy(),
            level: level.to_f64_lossy(),
        })?;
        ts.push(elapsed);
        ps.push(p + offset);
        last_change = cur.iter().zip(&prev).fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        prev.copy_from_slice(cur);
        // pin: translate by whole cells, moving the tail value with the field
        if p.abs() > S::lit(2.0) {
            let cells = (p / grid.dx).round();
            let k = cells.to_isize().unwrap_or(0);
            buf.translate_cells(k);
            if k < 0 {
                let decay = (-lambda * grid.dx).exp();
                buf.map_slices(|s| {
                    for i in (0..(-k) as usize).rev() {
                        s[i] = s[i + 1] * decay;
                    }
                });
            }
            left = buf.current()[0];
            buf.map_slices(|s| s[0] = left);
            stepper.set_boundary(Boundary::Dirichlet(left, kappa));
            offset = offset + cells * grid.dx;
            prev.copy_from_slice(buf.current());
        }
        if k >= 10 && last_change < S::lit(1e-6).max(opts.tol) {
            relaxed = true;
            break;
        }
    }
    let drift = {
        let half = ts.len() / 2;
        linear_fit(&ts[half..], &ps[half..]).map(|f| f.slope).unwrap_or(S::zero())
    };
    if drift.abs() > opts.drift_tol || !admissible {
        return Err(Error::SpeedMismatch {
            c: c.to_f64_lossy(),
            drift: drift.to_f64_lossy(),
        });
    }
    let mut values = buf.current().to_vec();
    let defect = newton_polish(&grid, &mut values, c, h, g, opts.ep_tol);
    let converged = match defect {
        Some(d) => d <= opts.ep_tol.max(S::lit(1e-9)),
        None => false,
    };
    if !converged && !(relaxed && last_change < opts.tol) {
        return Err(Error::NoConvergence {
            t: elapsed.to_f64_lossy(),
            last_change: last_change.to_f64_lossy(),
        });
    }
    if !converged {
        values = buf.current().to_vec();
    }
    let p = crossing(&values, &grid, level).ok_or(Error::NoCrossing {
        t: elapsed.to_f64_lossy(),
        level: level.to_f64_lossy(),
    })?;
    let pinned = grid.translated(-p);
    finish_profile(pinned, values, c, h, g, lambda, Pin { level, position: p + offset }, drift, elapsed)
}

#[allow(clippy::too_many_arguments)]
fn finish_profile<S: Scalar>(
    grid: Grid1D<S>,
    values: Vec<S>,
    c: S,
    h: S,
    g: &BirthFunction<S>,
    lambda1: S,
    pin: Pin<S>,
    drift: S,
    relax_time: S,
) -> Result<WaveProfile<S>> {
    let kappa = g.kappa;
    let ep_residual = ep_defect(&grid, &values, c, h, g);
    let tol = S::lit(1e-9) * kappa.max(S::one());
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - tol);
    let vmax = values.iter().copied().fold(S::neg_infinity(), S::max);
    let imax = values.iter().position(|&v| v == vmax).unwrap_or(0);
    let oscillation = values[imax..].iter().fold(S::zero(), |m, &v| m.max((v - kappa).abs()));
    let nodes = grid.nodes();
    let tail_fit = tail_window(&values, &nodes, kappa, S::lit(1e-8), S::lit(1e-3))
        .and_then(|(a, b)| fit_tail(&nodes, &values, (a, b)).ok());
    Ok(WaveProfile {
        grid,
        values,
        c,
        h,
        kappa,
        lambda1,
        pin,
        tail_fit,
        ep_residual,
        monotone,
        overshoot: vmax - kappa,
        oscillation,
        drift,
        relax_time,
        raw_amplitude: None,
    })
}

/// The leftmost maximal run of nodes with `lo κ <= u <= hi κ`, as `(z_a, z_b)`.
pub fn tail_window<S: Scalar>(values: &[S], nodes: &[S], kappa: S, lo: S, hi: S) -> Option<(S, S)> {
    let inside = |v: S| v >= lo * kappa && v <= hi * kappa;
    let start = values.iter().position(|&v| inside(v))?;
    let len = values[start..].iter().take_while(|&&v| inside(v)).count();
    if len < 2 {
        return None;
    }
    Some((nodes[start], nodes[start + len - 1]))
}

/// Ordinary least squares of `ln u` against `z` over nodes inside `window`.
pub fn fit_tail<S: Scalar>(z: &[S], u: &[S], window: (S, S)) -> Result<TailFit<S>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&x, &v) in z.iter().zip(u) {
        if x >= window.0 && x <= window.1 {
            if !(v > S::zero()) {
                return Err(Error::NonPositiveField { x: x.to_f64_lossy() });
            }
            xs.push(x);
            ys.push(v.ln());
        }
    }
    let LinearFit {
        slope,
        intercept,
        r_squared,
        n,
    } = linear_fit(&xs, &ys).ok_or_else(|| Error::InsufficientData("fewer than two nodes in the tail window".into()))?;
    Ok(TailFit {
        lambda: slope,
        amplitude: intercept.exp(),
        r_squared,
        window: (xs[0], xs[n - 1]),
        n,
    })
}

/// Translates `profile` so its fitted tail amplitude is one. Returns the
/// normalized profile and the applied shift `s`, with
/// `φ_new(z) = φ_old(z + s)`, `s = -ln(A_raw)/λ_est`.
pub fn normalize_profile<S: Scalar>(profile: &WaveProfile<S>) -> Result<(WaveProfile<S>, S)> {
    let fit = profile
        .tail_fit
        .ok_or_else(|| Error::TailFitUnreliable("no tail window with u in [1e-8, 1e-3] kappa".into()))?;
    if fit.decades() < S::lit(3.0) {
        return Err(Error::TailFitUnreliable(format!(
            "window spans {} decades, need 3",
            fit.decades()
        )));
    }
    if fit.r_squared < S::lit(0.999) {
        return Err(Error::TailFitUnreliable(format!("R^2 = {} < 0.999", fit.r_squared)));
    }
    if ((fit.lambda - profile.lambda1) / profile.lambda1).abs() > S::lit(0.05) {
        return Err(Error::TailFitUnreliable(format!(
            "fitted rate {} is not within 5% of {}",
            fit.lambda, profile.lambda1
        )));
    }
    let shift = -fit.amplitude.ln() / fit.lambda;
    let mut out = profile.clone();
    out.grid = profile.grid.translated(-shift);
    out.tail_fit = Some(TailFit {
        amplitude: (fit.amplitude.ln() + fit.lambda * shift).exp(),
        window: (fit.window.0 - shift, fit.window.1 - shift),
        ..fit
    });
    out.raw_amplitude = Some(profile.raw_amplitude.unwrap_or(S::one()) * fit.amplitude);
    Ok((out, shift))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontTrack<S> {
    pub times: Vec<S>,
    pub positions: Vec<S>,
    pub c_est: S,
    /// Root-mean-square residual of the position fit.
    pub fit_residual: S,
    /// Time interval used by the fit.
    pub window: (S, S),
    /// Frame speed minus the slope between consecutive samples.
    pub c_est_running: Vec<S>,
    /// Snapshots without a crossing.
    pub skipped: Vec<S>,
}

/// Fits positions sampled in a frame moving at `frame_c`; fronts move
/// toward `-x`, so the speed is `frame_c - d(position)/dt`.
pub fn front_track_from_positions<S: Scalar>(
    times: Vec<S>,
    positions: Vec<S>,
    frame_c: S,
    skipped: Vec<S>,
) -> Result<FrontTrack<S>> {
    if times.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} front positions, need at least 10",
            times.len()
        )));
    }
    let start = times.len() / 2;
    let fit = linear_fit(&times[start..], &positions[start..])
        .ok_or_else(|| Error::InsufficientData("degenerate time samples".into()))?;
    let mut ss = S::zero();
    for (t, p) in times[start..].iter().zip(&positions[start..]) {
        let r = *p - (fit.slope * *t + fit.intercept);
        ss = ss + r * r;
    }
    let fit_residual = (ss / S::from_usize_lossy(times.len() - start)).sqrt();
    let mut running = vec![S::nan()];
    for k in 1..times.len() {
        running.push(frame_c - (positions[k] - positions[k - 1]) / (times[k] - times[k - 1]));
    }
    Ok(FrontTrack {
        window: (times[start], times[times.len() - 1]),
        c_est: frame_c - fit.slope,
        fit_residual,
        times,
        positions,
        c_est_running: running,
        skipped,
    })
}

/// Level-crossing front tracking over the stored snapshots of `traj`.
pub fn track_front<S: Scalar>(traj: &Trajectory<S>, level: S) -> Result<FrontTrack<S>> {
    let (mut ts, mut ps, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        match crossing(f, &traj.grid, level) {
            Some(p) => {
                ts.push(*t);
                ps.push(p);
            }
            None => skipped.push(*t),
        }
    }
    if ts.is_empty() {
        if let Some(t) = skipped.first() {
            return Err(Error::NoCrossing {
                t: t.to_f64_lossy(),
                level: level.to_f64_lossy(),
            });
        }
    }
    front_track_from_positions(ts, ps, traj.frame.speed(), skipped)
}

/// Observer recording crossings without storing fields.
#[derive(Debug, Clone, Default)]
pub struct FrontTracker<S> {
    pub level: S,
    pub times: Vec<S>,
    pub positions: Vec<S>,
    pub skipped: Vec<S>,
}

impl<S: Scalar> FrontTracker<S> {
    pub fn new(level: S) -> Self {
        Self {
            level,
            times: Vec::new(),
            positions: Vec::new(),
            skipped: Vec::new(),
        }
    }

    pub fn finish(self, frame_c: S) -> Result<FrontTrack<S>> {
        front_track_from_positions(self.times, self.positions, frame_c, self.skipped)
    }
}

impl<S: Scalar> crate::solver::Observer<S> for FrontTracker<S> {
    fn observe(&mut self, t: S, field: &[S], grid: &Grid1D<S>) {
        match crossing(field, grid, self.level) {
            Some(p) => {
                self.times.push(t);
                self.positions.push(p);
            }
            None => self.skipped.push(t),
        }
    }
}

/// `sup |f(z)| / η_λ(z - origin)` over the given nodes, and where it is
/// attained.
pub fn weighted_norm<S: Scalar>(z: &[S], f: &[S], lambda: S, origin: S) -> (S, S) {
    let mut best = (S::zero(), z.first().copied().unwrap_or(S::zero()));
    for (&x, &v) in z.iter().zip(f) {
        let w = v.abs() / eta(lambda, x - origin);
        if w > best.0 {
            best = (w, x);
        }
    }
    best
}

/// `sup |u/φ - 1|` over nodes with `φ >= 1e-300`, and the number of
/// excluded nodes.
pub fn chen_guo_norm<S: Scalar>(u: &[S], phi: &[S]) -> (S, usize) {
    let floor = S::min_positive_value().max(S::lit(1e-300));
    let mut excluded = 0;
    let mut best = S::zero();
    for (&a, &p) in u.iter().zip(phi) {
        if p < floor {
            excluded += 1;
            continue;
        }
        best = best.max((a / p - S::one()).abs());
    }
    (best, excluded)
}

/// Shift `a` minimizing `|u - φ(· + a)|_λ` over the nodes `z` by golden
/// section on `bracket`.
pub fn align_shift<S: Scalar>(
    z: &[S],
    u: &[S],
    profile: &WaveProfile<S>,
    lambda: S,
    origin: S,
    bracket: (S, S),
    tol: S,
) -> Result<S> {
    let mut diff = vec![S::zero(); z.len()];
    let objective = |a: S, diff: &mut Vec<S>| {
        for (k, (&x, &v)) in z.iter().zip(u).enumerate() {
            diff[k] = v - profile.eval(x + a);
        }
        weighted_norm(z, diff, lambda, origin).0
    };
    let (a, _) = golden_section(|a| objective(a, &mut diff), bracket.0, bracket.1, tol);
    let edge = S::lit(10.0) * tol;
    if a - bracket.0 <= edge || bracket.1 - a <= edge {
        return Err(Error::NoMinimumInBracket {
            lo: bracket.0.to_f64_lossy(),
            hi: bracket.1.to_f64_lossy(),
        });
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailInvarianceReport<S> {
    pub times: Vec<S>,
    pub log_amplitudes: Vec<S>,
    pub slope: S,
    pub target: S,
    pub rel_error: S,
    pub insufficient_data: bool,
}

/// Tail amplitude `A(t)` of each lab-frame snapshot at fixed rate `λ_j`,
/// `ln A = mean(ln u - λ_j x)` over nodes with `u ∈ [lo κ, hi κ]` at least
/// `margin` away from the left end, and the growth rate of `ln A`.
pub fn tail_invariance_check<S: Scalar>(
    traj: &Trajectory<S>,
    lambda_j: S,
    c: S,
    kappa: S,
    window: (S, S),
    margin: S,
) -> Result<TailInvarianceReport<S>> {
    let grid = &traj.grid;
    let (mut ts, mut la) = (Vec::new(), Vec::new());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        let mut acc = S::zero();
        let mut cnt = 0usize;
        for (i, &v) in f.iter().enumerate() {
            let x = grid.x(i);
            if x < grid.x_min + margin || v < window.0 * kappa || v > window.1 * kappa {
                continue;
            }
            acc = acc + v.ln() - lambda_j * x;
            cnt += 1;
        }
        if cnt < 5 {
            return Err(Error::TailFitUnreliable(format!(
                "only {cnt} tail nodes at t = {t}"
            )));
        }
        ts.push(*t);
        la.push(acc / S::from_usize_lossy(cnt));
    }
    let target = lambda_j * c;
    if ts.len() < 2 {
        return Ok(TailInvarianceReport {
            times: ts,
            log_amplitudes: la,
            slope: S::nan(),
            target,
            rel_error: S::nan(),
            insufficient_data: true,
        });
    }
    let fit = linear_fit(&ts, &la).ok_or_else(|| Error::InsufficientData("degenerate times".into()))?;
    Ok(TailInvarianceReport {
        rel_error: ((fit.slope - target) / target).abs(),
        slope: fit.slope,
        target,
        times: ts,
        log_amplitudes: la,
        insufficient_data: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Weighted,
    Xi,
    ChenGuo,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Weighted => "weighted",
            NormKind::Xi => "xi",
            NormKind::ChenGuo => "chen_guo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries<S> {
    pub kind: NormKind,
    pub lambda: S,
    pub shift: S,
    pub times: Vec<S>,
    pub values: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit<S> {
    pub gamma: S,
    pub r_squared: S,
    pub n: usize,
}

/// Least-squares slope of `-ln(value)` against `t` after dropping the first
/// `transient` fraction of samples.
pub fn convergence_rate<S: Scalar>(times: &[S], values: &[S], transient: S) -> Result<RateFit<S>> {
    let n = times.len().min(values.len());
    let cut = (transient * S::from_usize_lossy(n)).floor().to_usize().unwrap_or(0).min(n);
    let (t, v) = (&times[cut..n], &values[cut..n]);
    if t.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples after the transient cut, need 10",
            t.len()
        )));
    }
    if v.iter().any(|&x| !(x > S::zero())) {
        return Err(Error::NonPositiveValues);
    }
    let ys: Vec<S> = v.iter().map(|&x| -x.ln()).collect();
    let fit = linear_fit(t, &ys).ok_or_else(|| Error::InsufficientData("degenerate times".into()))?;
    Ok(RateFit {
        gamma: fit.slope,
        r_squared: fit.r_squared,
        n: fit.n,
    })
}

/// Truncates a series at the first value below `floor`, which is where a
/// decaying norm meets discretization noise.
pub fn above_floor<S: Scalar>(times: &[S], values: &[S], floor: S) -> (Vec<S>, Vec<S>) {
    let k = values.iter().position(|&v| v < floor).unwrap_or(values.len());
    (times[..k].to_vec(), values[..k].to_vec())
}

/// Observer computing a norm of `u - reference` (or `u / reference - 1`) at
/// every snapshot, over the nodes in `range`.
#[derive(Debug, Clone)]
pub struct NormRecorder<S> {
    pub kind: NormKind,
    pub lambda: S,
    pub origin: S,
    pub reference: Vec<S>,
    pub range: std::ops::Range<usize>,
    pub times: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> NormRecorder<S> {
    pub fn new(kind: NormKind, lambda: S, origin: S, reference: Vec<S>, range: std::ops::Range<usize>) -> Self {
        Self {
            kind,
            lambda,
            origin,
            reference,
            range,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn value(&self, field: &[S], grid: &Grid1D<S>) -> S {
        let r = self.range.clone();
        match self.kind {
            NormKind::ChenGuo => chen_guo_norm(&field[r.clone()], &self.reference[r]).0,
            NormKind::Weighted | NormKind::Xi => {
                let mut best = S::zero();
                for i in r {
                    let z = grid.x(i) - self.origin;
                    let w = match self.kind {
                        NormKind::Weighted => eta(self.lambda, z),
                        _ => (self.lambda * z).exp(),
                    };
                    best = best.max((field[i] - self.reference[i]).abs() / w);
                }
                best
            }
        }
    }

    pub fn series(self) -> NormSeries<S> {
        NormSeries {
            kind: self.kind,
            lambda: self.lambda,
            shift: self.origin,
            times: self.times,
            values: self.values,
        }
    }
}

impl<S: Scalar> crate::solver::Observer<S> for NormRecorder<S> {
    fn observe(&mut self, t: S, field: &[S], grid: &Grid1D<S>) {
        let v = self.value(field, grid);
        self.times.push(t);
        self.values.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{init_history, simulate, Boundary, Frame, InitialCondition, Observer, SolverConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn bh() -> BirthFunction<f64> {
        BirthFunction::beverton_holt(2.0, 1.0).unwrap()
    }

    fn bh_profile() -> &'static WaveProfile<f64> {
        static P: OnceLock<WaveProfile<f64>> = OnceLock::new();
        P.get_or_init(|| compute_profile(2.5, &bh(), 0.0, &ProfileOptions::standard()).unwrap())
    }

    #[test]
    fn beverton_holt_profile() {
        let p = bh_profile();
        assert!(p.monotone);
        assert_eq!(p.overshoot, 0.0);
        let fit = p.tail_fit.unwrap();
        assert!(((fit.lambda - 0.5) / 0.5).abs() < 0.02, "tail rate {}", fit.lambda);
        assert!(p.ep_residual <= 1e-6);
        let pinned = crossing(&p.values, &p.grid, 0.5).unwrap();
        assert_abs_diff_eq!(pinned, 0.0, epsilon = 1e-9);
        // re-evaluating the defect reproduces the stored value
        assert_eq!(ep_defect(&p.grid, &p.values, p.c, p.h, &bh()), p.ep_residual);
    }

    #[test]
    fn no_front_below_critical_speed() {
        let mut opts = ProfileOptions::standard();
        opts.relax_time = 100.0;
        let r = compute_profile(1.0, &bh(), 0.0, &opts);
        assert!(matches!(r, Err(Error::SpeedMismatch { .. })), "{r:?}");
    }

    #[test]
    fn tail_fit_examples() {
        let z: Vec<f64> = (0..200).map(|i| -40.0 + 0.1 * i as f64).collect();
        let u: Vec<f64> = z.iter().map(|x| 2.0 * (0.5 * x).exp()).collect();
        let fit = fit_tail(&z, &u, (-40.0, -20.0)).unwrap();
        assert_abs_diff_eq!(fit.lambda, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.amplitude, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);

        let u: Vec<f64> = z.iter().map(|x| (0.5 * x).exp() * (1.0 + x.exp())).collect();
        let errs: Vec<f64> = [(-25.0, -20.0), (-30.0, -25.0), (-40.0, -35.0)]
            .iter()
            .map(|&w| (fit_tail(&z, &u, w).unwrap().lambda - 0.5).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");

        let mut u = u;
        u[10] = 0.0;
        assert!(matches!(fit_tail(&z, &u, (-40.0, -30.0)), Err(Error::NonPositiveField { .. })));
    }

    #[test]
    fn normalization() {
        let (n1, s1) = normalize_profile(bh_profile()).unwrap();
        let (n2, s2) = normalize_profile(&n1).unwrap();
        assert!(s2.abs() < 1e-9, "second shift {s2}");
        assert_abs_diff_eq!(n2.tail_fit.unwrap().amplitude, 1.0, epsilon = 1e-9);
        let raw = bh_profile().tail_fit.unwrap();
        assert_abs_diff_eq!(s1, -raw.amplitude.ln() / raw.lambda, epsilon = 1e-12);

        // synthetic tail 3 e^{λ₁z}
        let mut p = bh_profile().clone();
        let fit = p.tail_fit.unwrap();
        p.tail_fit = Some(TailFit {
            amplitude: 3.0,
            lambda: p.lambda1,
            ..fit
        });
        let (_, s) = normalize_profile(&p).unwrap();
        assert_abs_diff_eq!(s, -(3.0f64).ln() / p.lambda1, epsilon = 1e-12);
    }

    #[test]
    fn tracking_a_translating_profile() {
        let p = bh_profile();
        let grid = Grid1D::with_spacing(-80.0, 20.0, 0.05).unwrap();
        let c = 2.5;
        let mut tracker = FrontTracker::new(0.5);
        for k in 0..40 {
            let t = 0.5 * k as f64;
            let field = p.sample(&grid, c * t - 10.0);
            tracker.observe(t, &field, &grid);
        }
        let track = tracker.finish(0.0).unwrap();
        assert_abs_diff_eq!(track.c_est, c, epsilon = 1e-6);
        assert!(track.skipped.is_empty());

        // the same samples seen from a frame moving at c are stationary
        let mut tracker = FrontTracker::new(0.5);
        for k in 0..40 {
            tracker.observe(0.5 * k as f64, &p.sample(&grid, -10.0), &grid);
        }
        assert_abs_diff_eq!(tracker.finish(c).unwrap().c_est, c, epsilon = 1e-12);
    }

    #[test]
    fn constant_field_has_no_crossing() {
        let grid = Grid1D::new(-10.0, 10.0, 101).unwrap();
        let buf = init_history(&InitialCondition::Constant(1.0), &grid, Frame::Lab, 0.0, 0.1).unwrap();
        let cfg = SolverConfig::new(Frame::Lab, 0.1, 2.0, Boundary::Neumann).snapshot_every(1);
        let tr = simulate(&grid, buf, &cfg, &bh(), &mut []).unwrap();
        assert!(matches!(track_front(&tr, 0.5), Err(Error::NoCrossing { .. })));
    }

    #[test]
    fn weighted_norm_examples() {
        let z: Vec<f64> = (0..=200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let f: Vec<f64> = z.iter().map(|&x| eta(0.7, x)).collect();
        assert_abs_diff_eq!(weighted_norm(&z, &f, 0.7, 0.0).0, 1.0, epsilon = 1e-15);
        let f: Vec<f64> = z.iter().map(|&x| (x * 1.3).sin() * 2.0).collect();
        let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(weighted_norm(&z, &f, 0.0, 0.0).0, sup);
        let left: Vec<f64> = z.iter().copied().filter(|&x| x <= 0.0).collect();
        let f: Vec<f64> = left.iter().map(|&x| (2.0 * 0.4 * x).exp()).collect();
        let (v, at) = weighted_norm(&left, &f, 0.4, 0.0);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(at, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chen_guo_examples() {
        let phi = &bh_profile().values;
        assert_eq!(chen_guo_norm(phi, phi).0, 0.0);
        let u: Vec<f64> = phi.iter().map(|v| 1.1 * v).collect();
        assert_abs_diff_eq!(chen_guo_norm(&u, phi).0, 0.1, epsilon = 1e-12);

        let p = normalize_profile(bh_profile()).unwrap().0;
        let nodes = p.grid.nodes();
        let eps = 1e-3;
        let l1 = p.lambda1;
        let u: Vec<f64> = nodes.iter().zip(&p.values).map(|(&z, &v)| v + eps * eta(l1, z)).collect();
        let oracle = nodes
            .iter()
            .zip(&p.values)
            .map(|(&z, &v)| eps * eta(l1, z) / v)
            .fold(0.0f64, f64::max);
        assert_abs_diff_eq!(chen_guo_norm(&u, &p.values).0, oracle, epsilon = 1e-12 * oracle);
    }

    #[test]
    fn alignment_recovers_translates() {
        let p = bh_profile();
        let z: Vec<f64> = p.grid.nodes().into_iter().filter(|&x| x > -40.0 && x < 20.0).collect();
        let u: Vec<f64> = z.iter().map(|&x| p.eval(x + 0.7)).collect();
        let a = align_shift(&z, &u, p, p.lambda1, 0.0, (-20.0, 20.0), 1e-9).unwrap();
        assert_abs_diff_eq!(a, 0.7, epsilon = 1e-5);
        let u: Vec<f64> = z.iter().map(|&x| p.eval(x)).collect();
        let a = align_shift(&z, &u, p, p.lambda1, 0.0, (-20.0, 20.0), 1e-9).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-5);
        assert!(matches!(
            align_shift(&z, &u, p, p.lambda1, 0.0, (3.0, 5.0), 1e-9),
            Err(Error::NoMinimumInBracket { .. })
        ));
    }

    #[test]
    fn tail_invariance_of_the_linear_equation() {
        let g = BirthFunction::custom("capped linear", |u: f64| (2.0 * u).min(1.0), 1.0);
        let (lambda, c) = (0.5, 2.5);
        let grid = Grid1D::with_spacing(-100.0, 20.0, 0.05).unwrap();
        let spec = InitialCondition::ExponentialTail {
            amplitude: 1.0,
            lambda,
            c,
            cap: 0.9,
        };
        let run = |dt: f64| {
            let buf = init_history(&spec, &grid, Frame::Lab, 0.0, dt).unwrap();
            let every = (1.0 / dt).round() as usize;
            let cfg = SolverConfig::new(Frame::Lab, dt, 20.0, Boundary::Neumann).snapshot_every(every);
            let tr = simulate(&grid, buf, &cfg, &g, &mut []).unwrap();
            tail_invariance_check(&tr, lambda, c, 1.0, (1e-8, 1e-3), 20.0).unwrap()
        };
        // one step multiplies e^{λx} by (1 + dt(a/2 + 2)) / (1 - dt a/2), with
        // a = (4/dx²) sinh²(λdx/2) - 1 the discrete symbol of ∂² - 1
        let discrete = |dt: f64, dx: f64| {
            let a = 4.0 / (dx * dx) * (0.5 * lambda * dx).sinh().powi(2) - 1.0;
            ((1.0 + dt * (0.5 * a + 2.0)) / (1.0 - 0.5 * dt * a)).ln() / dt
        };
        let coarse = run(0.005);
        assert_abs_diff_eq!(coarse.target, 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(coarse.slope, discrete(0.005, grid.dx), epsilon = 1e-6);
        let fine = run(0.0005);
        assert!(fine.rel_error < 1e-3, "slope {} rel {}", fine.slope, fine.rel_error);

        let buf = init_history(&spec, &grid, Frame::Lab, 0.0, 0.005).unwrap();
        let cfg = SolverConfig::new(Frame::Lab, 0.005, 0.0, Boundary::Neumann);
        let tr = simulate(&grid, buf, &cfg, &g, &mut []).unwrap();
        let r = tail_invariance_check(&tr, lambda, c, 1.0, (1e-8, 1e-3), 20.0).unwrap();
        assert!(r.insufficient_data);
        assert_eq!(r.times.len(), 1);
    }

    #[test]
    fn rate_fit_examples() {
        let t: Vec<f64> = (0..100).map(|k| 0.2 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|s| 4.0 * (-0.3 * s).exp()).collect();
        assert_abs_diff_eq!(convergence_rate(&t, &v, 0.3).unwrap().gamma, 0.3, epsilon = 1e-12);
        let noisy: Vec<f64> = v.iter().enumerate().map(|(k, x)| x + 1e-12 * ((k * 7 % 5) as f64 - 2.0)).collect();
        let (tt, vv) = above_floor(&t, &noisy, 1e-8);
        assert_abs_diff_eq!(convergence_rate(&tt, &vv, 0.3).unwrap().gamma, 0.3, epsilon = 1e-3);
        let flat = vec![0.2; 100];
        assert_abs_diff_eq!(convergence_rate(&t, &flat, 0.3).unwrap().gamma, 0.0, epsilon = 1e-15);
        assert!(convergence_rate(&t[..5], &v[..5], 0.3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weighted_norm_nondecreasing_in_lambda_on_left_support(
            vals in prop::collection::vec(-1.0f64..1.0, 50),
            l1 in 0.0f64..2.0,
            dl in 0.0f64..2.0,
        ) {
            let z: Vec<f64> = (0..50).map(|i| -0.2 * i as f64).collect();
            let a = weighted_norm(&z, &vals, l1, 0.0).0;
            let b = weighted_norm(&z, &vals, l1 + dl, 0.0).0;
            prop_assert!(b >= a);
        }

        #[test]
        fn tracking_commutes_with_cell_translation(k in -40i32..40) {
            let p = bh_profile();
            let grid = Grid1D::with_spacing(-60.0, 20.0, 0.05).unwrap();
            let moved = grid.translated(k as f64 * grid.dx);
            let f = p.sample(&grid, -10.0);
            let a = crossing(&f, &grid, 0.5).unwrap();
            let b = crossing(&f, &moved, 0.5).unwrap();
            prop_assert!((b - a - k as f64 * grid.dx).abs() < 1e-9);
        }

        #[test]
        fn alignment_commutes_with_translation(a in -3.0f64..3.0) {
            let p = bh_profile();
            let z: Vec<f64> = (0..400).map(|i| -30.0 + 0.1 * i as f64).collect();
            let u: Vec<f64> = z.iter().map(|&x| p.eval(x + a)).collect();
            let est = align_shift(&z, &u, p, p.lambda1, 0.0, (-20.0, 20.0), 1e-9).unwrap();
            prop_assert!((est - a).abs() < 1e-5, "{} vs {}", est, a);
        }
    }
}
