//! IMEX Crank–Nicolson integration of
//! `w_t = w_zz - c w_z - w + g(w(t - h, z - ch))` on a truncated uniform
//! grid. `c = 0` is the lab frame.
//!
//! The linear part is trapezoidal and solved with a tridiagonal system that
//! is factored once; the delayed reaction is explicit and read from a ring
//! buffer exactly `m = h/dt` steps back, so no temporal interpolation is
//! ever needed.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::BirthFunction;
use crate::numeric::Tridiagonal;
use crate::scalar::Scalar;
use crate::waves::WaveProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<S> {
    pub x_min: S,
    pub x_max: S,
    pub n: usize,
    pub dx: S,
}

impl<S: Scalar> Grid1D<S> {
    pub fn new(x_min: S, x_max: S, n: usize) -> Result<Self> {
        if n < 3 || !(x_max > x_min) {
            return Err(Error::Domain(format!(
                "grid needs n >= 3 and x_max > x_min, got n = {n}, [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / S::from_usize_lossy(n - 1),
        })
    }

    /// Grid starting at `x_min` with spacing exactly `dx`, extending to the
    /// first node at or beyond `x_max`.
    pub fn with_spacing(x_min: S, x_max: S, dx: S) -> Result<Self> {
        if !(dx > S::zero()) || !(x_max > x_min) {
            return Err(Error::Domain(format!("invalid spacing {dx} on [{x_min}, {x_max}]")));
        }
        let cells = ((x_max - x_min) / dx - S::lit(1e-9)).ceil();
        let cells = cells.to_usize().unwrap_or(0).max(2);
        Ok(Self {
            x_min,
            x_max: x_min + dx * S::from_usize_lossy(cells),
            n: cells + 1,
            dx,
        })
    }

    /// Like [`Grid1D::with_spacing`] but with `dx` shrunk so that `shift` is
    /// an integer number of cells.
    pub fn snapped(x_min: S, x_max: S, dx_target: S, shift: S) -> Result<Self> {
        if shift.abs() == S::zero() {
            return Self::with_spacing(x_min, x_max, dx_target);
        }
        let k = (shift.abs() / dx_target).ceil().max(S::one());
        Self::with_spacing(x_min, x_max, shift.abs() / k)
    }

    #[inline]
    pub fn x(&self, i: usize) -> S {
        self.x_min + self.dx * S::from_usize_lossy(i)
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn translated(&self, by: S) -> Self {
        Self {
            x_min: self.x_min + by,
            x_max: self.x_max + by,
            ..*self
        }
    }

    /// Index range of nodes inside `[a, b]`.
    pub fn index_range(&self, a: S, b: S) -> std::ops::Range<usize> {
        let lo = ((a - self.x_min) / self.dx).ceil().max(S::zero());
        let hi = ((b - self.x_min) / self.dx).floor();
        let lo = lo.to_usize().unwrap_or(0).min(self.n);
        if hi < S::zero() {
            return lo..lo;
        }
        let hi = hi.to_usize().unwrap_or(0).min(self.n - 1) + 1;
        lo..hi.max(lo)
    }
}

/// Ring of `m + 1` spatial fields holding the solution on `[t - h, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer<S> {
    slices: Vec<Vec<S>>,
    head: usize,
    pub m: usize,
    pub dt: S,
    pub h: S,
    t0: S,
    steps: usize,
}

impl<S: Scalar> HistoryBuffer<S> {
    /// Builds a buffer from slices ordered oldest first (`s = -h, .., 0`).
    pub fn from_slices(slices: Vec<Vec<S>>, h: S, dt: S) -> Result<Self> {
        let m = slices.len().saturating_sub(1);
        if slices.is_empty() {
            return Err(Error::SpecMismatch("empty history".into()));
        }
        let n = slices[0].len();
        if slices.iter().any(|s| s.len() != n) {
            return Err(Error::SpecMismatch("history slices differ in length".into()));
        }
        if m > 0 && (dt * S::from_usize_lossy(m) - h).abs() > S::lit(1e-12) * h.max(S::one()) {
            return Err(Error::SpecMismatch(format!(
                "{m} steps of {dt} do not cover the delay {h}"
            )));
        }
        Ok(Self {
            slices,
            head: m,
            m,
            dt,
            h,
            t0: S::zero(),
            steps: 0,
        })
    }

    #[inline]
    pub fn t(&self) -> S {
        self.t0 + self.dt * S::from_usize_lossy(self.steps)
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn current(&self) -> &[S] {
        &self.slices[self.head]
    }

    /// The field `k <= m` steps back.
    #[inline]
    pub fn back(&self, k: usize) -> &[S] {
        let len = self.m + 1;
        &self.slices[(self.head + len - k % len) % len]
    }

    /// The field at `t - h`.
    #[inline]
    pub fn delayed(&self) -> &[S] {
        self.back(self.m)
    }

    /// Slices ordered oldest first.
    pub fn ordered(&self) -> Vec<Vec<S>> {
        (0..=self.m).rev().map(|k| self.back(k).to_vec()).collect()
    }

    /// Replaces the oldest slice by `field` and advances the clock.
    fn push(&mut self, field: &[S]) {
        let len = self.m + 1;
        let slot = (self.head + 1) % len;
        self.slices[slot].copy_from_slice(field);
        self.head = slot;
        self.steps += 1;
    }

    /// Shifts every slice by `k` cells toward smaller indices when `k > 0`,
    /// padding with the boundary value.
    pub fn translate_cells(&mut self, k: isize) {
        if k == 0 {
            return;
        }
        for s in &mut self.slices {
            let n = s.len();
            if k > 0 {
                let k = (k as usize).min(n);
                let last = s[n - 1];
                s.copy_within(k.., 0);
                for v in &mut s[n - k..] {
                    *v = last;
                }
            } else {
                let k = ((-k) as usize).min(n);
                let first = s[0];
                s.copy_within(..n - k, k);
                for v in &mut s[..k] {
                    *v = first;
                }
            }
        }
    }

    /// Applies `f` to every slice, for example to rescale a history.
    pub fn map_slices(&mut self, mut f: impl FnMut(&mut [S])) {
        for s in &mut self.slices {
            f(s);
        }
    }
}

/// Number of delay steps and the step size actually used for a target `dt`.
pub fn delay_steps<S: Scalar>(h: S, dt_target: S) -> Result<(usize, S)> {
    if !(dt_target > S::zero()) || h < S::zero() {
        return Err(Error::Domain(format!("need dt > 0 and h >= 0, got dt = {dt_target}, h = {h}")));
    }
    if h == S::zero() {
        return Ok((0, dt_target));
    }
    let m = (h / dt_target).round().max(S::one());
    let m_usize = m.to_usize().ok_or_else(|| Error::Domain("delay too long".into()))?;
    Ok((m_usize, h / m))
}

/// Additive perturbation of a profile, in the profile's own coordinate.
#[derive(Clone)]
pub enum Perturbation<S> {
    None,
    /// `q η_λ(ζ - b)` with `η_λ(t) = min(e^{λt}, 1)`.
    Eta { q: S, lambda: S, b: S },
    /// `q e^{λζ}`.
    Xi { q: S, lambda: S },
    /// Arbitrary `(s, ζ) -> value`.
    Function(Arc<dyn Fn(S, S) -> S + Send + Sync>),
}

impl<S: Scalar> Perturbation<S> {
    pub fn eval(&self, s: S, zeta: S) -> S {
        match self {
            Perturbation::None => S::zero(),
            Perturbation::Eta { q, lambda, b } => *q * eta(*lambda, zeta - *b),
            Perturbation::Xi { q, lambda } => *q * (*lambda * zeta).exp(),
            Perturbation::Function(f) => f(s, zeta),
        }
    }
}

/// `η_λ(t) = min(e^{λt}, 1)`.
#[inline]
pub fn eta<S: Scalar>(lambda: S, t: S) -> S {
    if t >= S::zero() {
        S::one()
    } else {
        (lambda * t).exp()
    }
}

/// Initial history `w₀(s, x)`, `s ∈ [-h, 0]`, always written in lab
/// coordinates; [`init_history`] converts to the frame of the run.
#[derive(Clone)]
pub enum InitialCondition<S> {
    /// `min(A e^{λ(x + cs)}, cap)`.
    ExponentialTail { amplitude: S, lambda: S, c: S, cap: S },
    /// `level` for `x >= x0`, zero to the left.
    Heaviside { level: S, x0: S },
    /// `φ(ζ + shift) + perturbation(s, ζ)` with `ζ = x + c s`, `c` the
    /// profile speed.
    ProfilePlus {
        profile: Arc<WaveProfile<S>>,
        shift: S,
        perturbation: Perturbation<S>,
    },
    Constant(S),
    /// Nodal values already in the frame of the run, oldest first; either
    /// one slice (constant in `s`) or `m + 1`.
    Sampled(Vec<Vec<S>>),
    Function(Arc<dyn Fn(S, S) -> S + Send + Sync>),
}

impl<S: Scalar> InitialCondition<S> {
    /// `w₀(s, x)`; `None` for sampled data.
    pub fn value(&self, s: S, x: S) -> Option<S> {
        Some(match self {
            InitialCondition::ExponentialTail {
                amplitude,
                lambda,
                c,
                cap,
            } => (*amplitude * (*lambda * (x + *c * s)).exp()).min(*cap),
            InitialCondition::Heaviside { level, x0 } => {
                if x >= *x0 {
                    *level
                } else {
                    S::zero()
                }
            }
            InitialCondition::ProfilePlus {
                profile,
                shift,
                perturbation,
            } => {
                let zeta = x + profile.c * s;
                profile.eval(zeta + *shift) + perturbation.eval(s, zeta)
            }
            InitialCondition::Constant(v) => *v,
            InitialCondition::Sampled(_) => return None,
            InitialCondition::Function(f) => f(s, x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame<S> {
    Lab,
    CoMoving(S),
}

impl<S: Scalar> Frame<S> {
    pub fn speed(&self) -> S {
        match self {
            Frame::Lab => S::zero(),
            Frame::CoMoving(c) => *c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary<S> {
    Dirichlet(S, S),
    /// Dirichlet on the left, zero flux on the right.
    LeftDirichletRightNeumann(S),
    /// Zero flux on both sides.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advection {
    /// Centered differences unless the cell Péclet number exceeds one.
    Auto,
    Centered,
    Upwind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<S> {
    pub frame: Frame<S>,
    pub dt: S,
    pub t_end: S,
    pub boundary: Boundary<S>,
    pub snapshot_every: usize,
    /// Defaults to `1e6 * max(1, κ)`.
    pub blowup_threshold: Option<S>,
    pub advection: Advection,
    /// Store snapshot fields in the trajectory; observers see them either way.
    pub keep_fields: bool,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn new(frame: Frame<S>, dt: S, t_end: S, boundary: Boundary<S>) -> Self {
        Self {
            frame,
            dt,
            t_end,
            boundary,
            snapshot_every: 100,
            blowup_threshold: None,
            advection: Advection::Auto,
            keep_fields: true,
        }
    }

    pub fn snapshot_every(mut self, steps: usize) -> Self {
        self.snapshot_every = steps.max(1);
        self
    }

    pub fn advection(mut self, a: Advection) -> Self {
        self.advection = a;
        self
    }

    pub fn keep_fields(mut self, keep: bool) -> Self {
        self.keep_fields = keep;
        self
    }
}

/// Builds the initial buffer for `spec` on `grid`. The step size is
/// `h / round(h / dt_target)` for `h > 0`.
pub fn init_history<S: Scalar>(
    spec: &InitialCondition<S>,
    grid: &Grid1D<S>,
    frame: Frame<S>,
    h: S,
    dt_target: S,
) -> Result<HistoryBuffer<S>> {
    let (m, dt) = delay_steps(h, dt_target)?;
    let c = frame.speed();
    let slices = match spec {
        InitialCondition::Sampled(data) => {
            if data.iter().any(|s| s.len() != grid.n) {
                return Err(Error::SpecMismatch(format!(
                    "sampled slices must have {} nodes",
                    grid.n
                )));
            }
            match data.len() {
                1 => vec![data[0].clone(); m + 1],
                l if l == m + 1 => data.clone(),
                l => {
                    return Err(Error::SpecMismatch(format!(
                        "{l} sampled slices for a delay of {m} steps"
                    )))
                }
            }
        }
        _ => (0..=m)
            .map(|j| {
                let s = -dt * S::from_usize_lossy(m - j);
                (0..grid.n)
                    .map(|i| {
                        let z = grid.x(i);
                        spec.value(s, z - c * s).unwrap_or(S::zero())
                    })
                    .collect()
            })
            .collect(),
    };
    HistoryBuffer::from_slices(slices, h, dt)
}

/// Which discrete order-preservation conditions a configuration meets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderCheck<S> {
    pub cell_peclet: S,
    /// Off-diagonals of the implicit matrix are nonpositive.
    pub implicit_m_matrix: bool,
    /// The explicit half-step matrix is entrywise nonnegative.
    pub explicit_nonnegative: bool,
    /// `dt L_g <= 1`.
    pub reaction_ok: bool,
}

impl<S> OrderCheck<S> {
    pub fn holds(&self) -> bool {
        self.implicit_m_matrix && self.explicit_nonnegative && self.reaction_ok
    }
}

/// Linear interpolation of a nodal field at `z_i - shift`, clamped to the
/// end values outside the grid.
#[derive(Debug, Clone)]
pub struct ShiftInterp<S> {
    idx: Vec<usize>,
    theta: Vec<S>,
}

impl<S: Scalar> ShiftInterp<S> {
    pub fn new(grid: &Grid1D<S>, shift: S) -> Self {
        let n = grid.n;
        let cells = shift / grid.dx;
        let top = S::from_usize_lossy(n - 1);
        let mut idx = vec![0; n];
        let mut theta = vec![S::zero(); n];
        for i in 0..n {
            let pos = S::from_usize_lossy(i) - cells;
            let (j, th) = if pos <= S::zero() {
                (0, S::zero())
            } else if pos >= top {
                (n - 2, S::one())
            } else {
                let j = pos.floor();
                (j.to_usize().unwrap_or(0).min(n - 2), pos - j)
            };
            idx[i] = j;
            theta[i] = th;
        }
        Self { idx, theta }
    }

    /// `(j, θ)` such that the value at node `i` is `(1-θ) f[j] + θ f[j+1]`.
    #[inline]
    pub fn weights(&self, i: usize) -> (usize, S) {
        (self.idx[i], self.theta[i])
    }

    #[inline]
    pub fn at(&self, f: &[S], i: usize) -> S {
        let (j, th) = (self.idx[i], self.theta[i]);
        if th == S::zero() {
            f[j]
        } else {
            (S::one() - th) * f[j] + th * f[j + 1]
        }
    }
}

/// One-step operator with the implicit matrix factored once.
#[derive(Debug, Clone)]
pub struct Stepper<S> {
    grid: Grid1D<S>,
    c: S,
    pub dt: S,
    shift: S,
    boundary: Boundary<S>,
    // bands of L
    ll: Vec<S>,
    ld: Vec<S>,
    lu: Vec<S>,
    // explicit half-step band
    el: Vec<S>,
    ed: Vec<S>,
    eu: Vec<S>,
    matrix: Tridiagonal<S>,
    upwind: bool,
    interp: ShiftInterp<S>,
    rhs: Vec<S>,
}

impl<S: Scalar> Stepper<S> {
    pub fn new(grid: &Grid1D<S>, frame: Frame<S>, h: S, dt: S, boundary: Boundary<S>, advection: Advection) -> Result<Self> {
        let n = grid.n;
        let c = frame.speed();
        let dx = grid.dx;
        let two = S::lit(2.0);
        let peclet = c.abs() * dx / two;
        let upwind = match advection {
            Advection::Auto => peclet > S::one(),
            Advection::Centered => false,
            Advection::Upwind => true,
        };
        let inv2 = S::one() / (dx * dx);
        // bands of L = D2 - c D1 - I
        let (mut ll, mut ld, mut lu) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
        for i in 0..n {
            let (a, d, b) = if upwind {
                if c >= S::zero() {
                    (inv2 + c / dx, -two * inv2 - c / dx - S::one(), inv2)
                } else {
                    (inv2, -two * inv2 + c / dx - S::one(), inv2 - c / dx)
                }
            } else {
                let adv = c / (two * dx);
                (inv2 + adv, -two * inv2 - S::one(), inv2 - adv)
            };
            ll[i] = a;
            ld[i] = d;
            lu[i] = b;
        }
        // zero-flux rows by reflection, which cancels the advective term
        let neumann_left = matches!(boundary, Boundary::Neumann);
        let neumann_right = !matches!(boundary, Boundary::Dirichlet(..));
        if neumann_left {
            ll[0] = S::zero();
            ld[0] = -two * inv2 - S::one();
            lu[0] = two * inv2;
        }
        if neumann_right {
            ll[n - 1] = two * inv2;
            ld[n - 1] = -two * inv2 - S::one();
            lu[n - 1] = S::zero();
        }
        let half = dt / two;
        let (mut al, mut ad, mut au) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
        let (mut el, mut ed, mut eu) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
        for i in 0..n {
            al[i] = -half * ll[i];
            ad[i] = S::one() - half * ld[i];
            au[i] = -half * lu[i];
            el[i] = half * ll[i];
            ed[i] = S::one() + half * ld[i];
            eu[i] = half * lu[i];
        }
        if !neumann_left {
            al[0] = S::zero();
            ad[0] = S::one();
            au[0] = S::zero();
        }
        if !neumann_right {
            al[n - 1] = S::zero();
            ad[n - 1] = S::one();
            au[n - 1] = S::zero();
        }
        let matrix = Tridiagonal::factor(&al, &ad, &au).ok_or_else(|| Error::NumericalFailure {
            t: 0.0,
            reason: "singular implicit matrix".into(),
        })?;

        let interp = ShiftInterp::new(grid, c * h);
        Ok(Self {
            grid: *grid,
            c,
            dt,
            shift: c * h,
            boundary,
            ll,
            ld,
            lu,
            el,
            ed,
            eu,
            matrix,
            upwind,
            interp,
            rhs: vec![S::zero(); n],
        })
    }

    /// Builds the stepper matching a history buffer and a config.
    pub fn for_buffer(grid: &Grid1D<S>, buf: &HistoryBuffer<S>, config: &SolverConfig<S>) -> Result<Self> {
        Self::new(grid, config.frame, buf.h, buf.dt, config.boundary, config.advection)
    }

    /// Changes boundary values; the kind of each end must stay the same.
    pub fn set_boundary(&mut self, boundary: Boundary<S>) {
        debug_assert_eq!(
            std::mem::discriminant(&self.boundary),
            std::mem::discriminant(&boundary)
        );
        self.boundary = boundary;
    }

    pub fn uses_upwind(&self) -> bool {
        self.upwind
    }

    /// The spatial shift `ch` of the delayed argument.
    pub fn delay_shift(&self) -> S {
        self.shift
    }

    pub fn order_check(&self, lg: S) -> OrderCheck<S> {
        let dx = self.grid.dx;
        let peclet = self.c.abs() * dx / S::lit(2.0);
        let n = self.grid.n;
        let implicit_m_matrix = (1..n - 1).all(|i| self.el[i] >= S::zero() && self.eu[i] >= S::zero());
        let explicit_nonnegative = implicit_m_matrix && self.ed.iter().all(|&d| d >= S::zero());
        OrderCheck {
            cell_peclet: peclet,
            implicit_m_matrix,
            explicit_nonnegative,
            reaction_ok: self.dt * lg <= S::one(),
        }
    }

    /// The delayed field evaluated at the shifted nodes.
    pub fn shifted_delayed(&self, delayed: &[S]) -> Vec<S> {
        (0..self.grid.n).map(|i| self.interp.at(delayed, i)).collect()
    }

    /// `L u + g(u_delayed)` at the shifted nodes, i.e. the discrete right-hand
    /// side of the equation at a frozen state; zero on Dirichlet rows.
    pub fn operator_residual(&self, field: &[S], delayed: &[S], g: &BirthFunction<S>) -> Vec<S> {
        let n = self.grid.n;
        let (dl, dr) = match self.boundary {
            Boundary::Dirichlet(..) => (true, true),
            Boundary::LeftDirichletRightNeumann(_) => (true, false),
            Boundary::Neumann => (false, false),
        };
        (0..n)
            .map(|i| {
                if (i == 0 && dl) || (i == n - 1 && dr) {
                    return S::zero();
                }
                let mut v = self.ld[i] * field[i];
                if i > 0 {
                    v = v + self.ll[i] * field[i - 1];
                }
                if i + 1 < n {
                    v = v + self.lu[i] * field[i + 1];
                }
                v + g.eval(self.interp.at(delayed, i))
            })
            .collect()
    }

    /// Advances `buf` by one step.
    pub fn step(&mut self, buf: &mut HistoryBuffer<S>, g: &BirthFunction<S>) -> Result<()> {
        let n = self.grid.n;
        {
            let cur = buf.current();
            let del = buf.delayed();
            for i in 0..n {
                let mut v = self.ed[i] * cur[i];
                if i > 0 {
                    v = v + self.el[i] * cur[i - 1];
                }
                if i + 1 < n {
                    v = v + self.eu[i] * cur[i + 1];
                }
                self.rhs[i] = v + self.dt * g.eval(self.interp.at(del, i));
            }
        }
        match self.boundary {
            Boundary::Dirichlet(l, r) => {
                self.rhs[0] = l;
                self.rhs[n - 1] = r;
            }
            Boundary::LeftDirichletRightNeumann(l) => self.rhs[0] = l,
            Boundary::Neumann => {}
        }
        self.matrix.solve_in_place(&mut self.rhs);
        buf.push(&self.rhs);
        Ok(())
    }
}

/// One step with a freshly factored operator.
pub fn step<S: Scalar>(
    grid: &Grid1D<S>,
    buf: &mut HistoryBuffer<S>,
    config: &SolverConfig<S>,
    g: &BirthFunction<S>,
) -> Result<()> {
    let mut st = Stepper::for_buffer(grid, buf, config)?;
    st.step(buf, g)?;
    check_field(buf.current(), buf.t(), threshold(config, g))
}

fn threshold<S: Scalar>(config: &SolverConfig<S>, g: &BirthFunction<S>) -> S {
    config
        .blowup_threshold
        .unwrap_or(S::lit(1e6) * g.kappa.max(S::one()))
}

fn check_field<S: Scalar>(field: &[S], t: S, threshold: S) -> Result<()> {
    let mut max_abs = S::zero();
    for &v in field {
        if !v.is_finite() {
            return Err(Error::NumericalFailure {
                t: t.to_f64_lossy(),
                reason: "non-finite value in field".into(),
            });
        }
        max_abs = max_abs.max(v.abs());
    }
    if max_abs > threshold {
        return Err(Error::BlowUp {
            t: t.to_f64_lossy(),
            max_abs: max_abs.to_f64_lossy(),
            threshold: threshold.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Callback run at snapshot cadence. Observers see the field read-only.
pub trait Observer<S> {
    fn observe(&mut self, t: S, field: &[S], grid: &Grid1D<S>);
}

impl<S, F: FnMut(S, &[S], &Grid1D<S>)> Observer<S> for F {
    fn observe(&mut self, t: S, field: &[S], grid: &Grid1D<S>) {
        self(t, field, grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotDiagnostics<S> {
    pub min: S,
    pub max: S,
    pub has_nan: bool,
}

impl<S: Scalar> SnapshotDiagnostics<S> {
    fn of(field: &[S]) -> Self {
        let mut d = Self {
            min: S::infinity(),
            max: S::neg_infinity(),
            has_nan: false,
        };
        for &v in field {
            if v.is_nan() {
                d.has_nan = true;
            } else {
                d.min = d.min.min(v);
                d.max = d.max.max(v);
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub grid: Grid1D<S>,
    pub frame: Frame<S>,
    pub h: S,
    pub dt: S,
    pub times: Vec<S>,
    /// Empty when the config asked not to keep fields.
    pub fields: Vec<Vec<S>>,
    pub diagnostics: Vec<SnapshotDiagnostics<S>>,
    /// The starting history, oldest first.
    pub initial_history: Vec<Vec<S>>,
    pub history: HistoryBuffer<S>,
    /// Set when the run stopped early; everything above is the partial run.
    pub error: Option<Error>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn last_field(&self) -> &[S] {
        self.history.current()
    }
}

/// Runs `buf` to `config.t_end`, snapshotting every `snapshot_every` steps
/// (and at the final step) and calling each observer on each snapshot.
pub fn simulate<S: Scalar>(
    grid: &Grid1D<S>,
    mut buf: HistoryBuffer<S>,
    config: &SolverConfig<S>,
    g: &BirthFunction<S>,
    observers: &mut [&mut dyn Observer<S>],
) -> Result<Trajectory<S>> {
    if !(config.dt > S::zero()) || config.t_end < S::zero() {
        return Err(Error::Domain(format!(
            "need dt > 0 and t_end >= 0, got dt = {}, t_end = {}",
            config.dt, config.t_end
        )));
    }
    if buf.current().len() != grid.n {
        return Err(Error::SpecMismatch("buffer and grid sizes differ".into()));
    }
    let mut stepper = Stepper::for_buffer(grid, &buf, config)?;
    let total = (config.t_end / buf.dt - S::lit(1e-9)).ceil().max(S::zero());
    let total = total.to_usize().unwrap_or(0);
    let every = config.snapshot_every.max(1);
    let limit = threshold(config, g);
    let mut traj = Trajectory {
        grid: *grid,
        frame: config.frame,
        h: buf.h,
        dt: buf.dt,
        times: Vec::new(),
        fields: Vec::new(),
        diagnostics: Vec::new(),
        initial_history: buf.ordered(),
        history: buf.clone(),
        error: None,
    };
    let record = |traj: &mut Trajectory<S>, buf: &HistoryBuffer<S>, observers: &mut [&mut dyn Observer<S>]| {
        let t = buf.t();
        let field = buf.current();
        traj.times.push(t);
        traj.diagnostics.push(SnapshotDiagnostics::of(field));
        if config.keep_fields {
            traj.fields.push(field.to_vec());
        }
        for o in observers.iter_mut() {
            o.observe(t, field, grid);
        }
    };
    record(&mut traj, &buf, observers);
    for k in 1..=total {
        let res = stepper
            .step(&mut buf, g)
            .and_then(|_| check_field(buf.current(), buf.t(), limit));
        if let Err(e) = res {
            record(&mut traj, &buf, observers);
            traj.error = Some(e);
            break;
        }
        if k % every == 0 || k == total {
            record(&mut traj, &buf, observers);
        }
    }
    traj.history = buf;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bh() -> BirthFunction<f64> {
        BirthFunction::beverton_holt(2.0, 1.0).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert_abs_diff_eq!(g.dx, 0.1, epsilon = 1e-15);
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        let g = Grid1D::with_spacing(-1.0, 1.0, 0.05).unwrap();
        assert_eq!(g.n, 41);
        let g = Grid1D::<f64>::snapped(-10.0, 10.0, 0.05, 1.25 * 0.3).unwrap();
        let cells = 0.375 / g.dx;
        assert_abs_diff_eq!(cells, cells.round(), epsilon = 1e-9);
        assert!(g.dx <= 0.05);
        let r = Grid1D::new(0.0, 10.0, 11).unwrap().index_range(2.5, 6.0);
        assert_eq!(r, 3..7);
    }

    #[test]
    fn ring_buffer_order() {
        let slices: Vec<Vec<f64>> = (0..4).map(|k| vec![k as f64; 3]).collect();
        let mut b = HistoryBuffer::from_slices(slices, 0.3, 0.1).unwrap();
        assert_eq!(b.current()[0], 3.0);
        assert_eq!(b.delayed()[0], 0.0);
        b.push(&[4.0; 3]);
        assert_eq!(b.current()[0], 4.0);
        assert_eq!(b.delayed()[0], 1.0);
        assert_eq!(b.back(1)[0], 3.0);
        assert_abs_diff_eq!(b.t(), 0.1, epsilon = 1e-15);
        let ord = b.ordered();
        assert_eq!(ord.iter().map(|s| s[0]).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(HistoryBuffer::from_slices(vec![vec![0.0; 3]; 4], 0.5, 0.1).is_err());
    }

    #[test]
    fn delay_step_rounding() {
        assert_eq!(delay_steps(0.5, 0.01).unwrap(), (50, 0.01));
        let (m, dt) = delay_steps(1.0, 0.3).unwrap();
        assert_eq!(m, 3);
        assert_abs_diff_eq!(dt * 3.0, 1.0, epsilon = 1e-15);
        assert_eq!(delay_steps(0.0, 0.02).unwrap(), (0, 0.02));
    }

    #[test]
    fn builders() {
        let grid = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let b = init_history(&InitialCondition::Constant(1.0), &grid, Frame::Lab, 0.5, 0.05).unwrap();
        assert_eq!(b.m, 10);
        assert!(b.ordered().iter().all(|s| s.iter().all(|&v| v == 1.0)));
        let spec = InitialCondition::ExponentialTail {
            amplitude: 1.0,
            lambda: 0.5,
            c: 2.5,
            cap: 0.9,
        };
        let b = init_history(&spec, &grid, Frame::Lab, 0.5, 0.05).unwrap();
        let oldest = &b.ordered()[0];
        let x = grid.x(10);
        assert_eq!(oldest[10], (0.5 * (x + 2.5 * -0.5f64)).exp());
        let hv = InitialCondition::Heaviside { level: 1.0, x0: 0.0 };
        let b = init_history(&hv, &grid, Frame::Lab, 0.0, 0.05).unwrap();
        assert_eq!(b.current()[0], 0.0);
        assert_eq!(b.current()[200], 1.0);
        assert!(init_history(&InitialCondition::Sampled(vec![vec![0.0; 5]]), &grid, Frame::Lab, 0.0, 0.1).is_err());
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let g = bh();
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        for (v, bc) in [(1.0, Boundary::Neumann), (1.0, Boundary::Dirichlet(1.0, 1.0)), (0.0, Boundary::Dirichlet(0.0, 0.0))] {
            for frame in [Frame::Lab, Frame::CoMoving(2.5)] {
                let b = init_history(&InitialCondition::Constant(v), &grid, frame, 0.4, 0.01).unwrap();
                let cfg = SolverConfig::new(frame, 0.01, 2.0, bc);
                let tr = simulate(&grid, b, &cfg, &g, &mut []).unwrap();
                assert!(tr.last_field().iter().all(|&u| (u - v).abs() <= 1e-14));
            }
        }
    }

    #[test]
    fn t_end_zero_gives_single_snapshot() {
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        let b = init_history(&InitialCondition::Constant(0.3), &grid, Frame::Lab, 0.0, 0.01).unwrap();
        let cfg = SolverConfig::new(Frame::Lab, 0.01, 0.0, Boundary::Neumann);
        let tr = simulate(&grid, b, &cfg, &bh(), &mut []).unwrap();
        assert_eq!(tr.times, vec![0.0]);
        assert_eq!(tr.fields.len(), 1);
    }

    #[test]
    fn blow_up_is_reported_with_partial_trajectory() {
        let g = BirthFunction::custom("explosive", |u: f64| 50.0 * u, 1.0);
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        let b = init_history(&InitialCondition::Constant(1.0), &grid, Frame::Lab, 0.0, 0.01).unwrap();
        let cfg = SolverConfig::new(Frame::Lab, 0.01, 10.0, Boundary::Neumann).snapshot_every(10);
        let tr = simulate(&grid, b, &cfg, &g, &mut []).unwrap();
        assert!(matches!(tr.error, Some(Error::BlowUp { .. })));
        assert!(tr.times.len() > 1);
    }

    #[test]
    fn observers_see_every_snapshot() {
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        let b = init_history(&InitialCondition::Constant(0.3), &grid, Frame::Lab, 0.0, 0.01).unwrap();
        let cfg = SolverConfig::new(Frame::Lab, 0.01, 1.0, Boundary::Neumann).snapshot_every(10);
        let mut seen = Vec::new();
        let mut obs = |t: f64, _: &[f64], _: &Grid1D<f64>| seen.push(t);
        let tr = simulate(&grid, b, &cfg, &bh(), &mut [&mut obs]).unwrap();
        assert_eq!(seen.len(), 11);
        assert_eq!(seen, tr.times);
    }

    #[test]
    fn upwind_switch() {
        let grid = Grid1D::new(-5.0, 5.0, 11).unwrap();
        let st = Stepper::new(&grid, Frame::CoMoving(3.0), 0.0, 0.01, Boundary::Neumann, Advection::Auto).unwrap();
        assert!(st.uses_upwind());
        let grid = Grid1D::new(-5.0, 5.0, 201).unwrap();
        let st = Stepper::new(&grid, Frame::CoMoving(3.0), 0.0, 0.001, Boundary::Neumann, Advection::Auto).unwrap();
        assert!(!st.uses_upwind());
        assert!(st.order_check(2.0).holds());
    }
}
