//! Super- and sub-solution envelopes around a front, their parameters, and
//! the checks that tie them to simulated solutions: residual certificates,
//! squeeze checks, monotone evolution and the stability radius.

use std::fmt;
use std::sync::Arc;

use crate::dispersion::{char_roots, gamma_margin};
use crate::error::{Error, Result};
use crate::model::BirthFunction;
use crate::numeric::bisect;
use crate::scalar::Scalar;
use crate::solver::{
    delay_steps, eta, Advection, Boundary, Frame, Grid1D, HistoryBuffer, Observer, SolverConfig, Stepper,
    Trajectory,
};
use crate::waves::{crossing, WaveProfile};

/// Size of the neighbourhood of κ and the perturbation budgets on which the
/// two one-sided difference inequalities for `g` hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaParams<S> {
    pub delta_star: S,
    pub gamma_star: S,
    /// Budget for sub-solutions, strictly below κ.
    pub q_star_minus: S,
    /// Budget for super-solutions.
    pub q_star_plus: S,
    /// `φ(b - ch) = κ - δ*/2`.
    pub b: S,
}

impl<S: Scalar> KappaParams<S> {
    pub fn q_budget(&self) -> S {
        self.q_star_minus.min(self.q_star_plus)
    }
}

/// Worst value of `1 - 2γ - (g(u) - g(u - q e^{γh}))/q` over the sampled box
/// `[κ-δ, κ] × (0, q_max] × [0, γ]`, and its mirror for `u + q e^{γh}`.
/// Nonnegative values mean the inequality holds at every sample.
pub fn kappa_box_margins<S: Scalar>(
    g: &BirthFunction<S>,
    h: S,
    delta: S,
    q_minus: S,
    q_plus: S,
    gamma: S,
    samples: usize,
) -> (S, S) {
    let kappa = g.kappa;
    let n = samples.max(2);
    let last = S::from_usize_lossy(n - 1);
    let mut minus = S::infinity();
    let mut plus = S::infinity();
    for iu in 0..n {
        let u = kappa - delta + delta * S::from_usize_lossy(iu) / last;
        let gu = g.eval(u);
        for iq in 1..=n {
            let frac = S::from_usize_lossy(iq) / S::from_usize_lossy(n);
            for ig in 0..n {
                let gm = gamma * S::from_usize_lossy(ig) / last;
                let grow = (gm * h).exp();
                let base = S::one() - S::lit(2.0) * gm;
                let qm = q_minus * frac;
                let qp = q_plus * frac;
                minus = minus.min(base - (gu - g.eval(u - qm * grow)) / qm);
                plus = plus.min(base - (g.eval(u + qp * grow) - gu) / qp);
            }
        }
    }
    (minus, plus)
}

/// Grid search for `(δ*, γ*, q_*, q*)`.
///
/// For each candidate δ*, γ* is the largest entry of `gamma_grid` for which
/// both inequalities hold with the smallest entry of `q_grid`; the budgets
/// are then the largest `q` keeping them. The widest δ* whose γ* is at least
/// half the best one wins, since a narrow neighbourhood pushes `b` far into
/// the plateau. γ* is reduced to 90% and the final box is re-verified on a
/// 100³ sample.
pub fn estimate_kappa_params<S: Scalar>(
    g: &BirthFunction<S>,
    h: S,
    profile: &WaveProfile<S>,
    gamma_grid: &[S],
    q_grid: &[S],
) -> Result<KappaParams<S>> {
    let kappa = g.kappa;
    let coarse = 24;
    let mut gammas: Vec<S> = gamma_grid
        .iter()
        .copied()
        .filter(|&x| x > S::zero() && x < S::lit(0.5))
        .collect();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut qs: Vec<S> = q_grid.iter().copied().filter(|&q| q > S::zero() && q <= kappa).collect();
    qs.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if gammas.is_empty() || qs.is_empty() {
        return Err(Error::NoAdmissibleParams("empty gamma or q grid".into()));
    }
    let q_small = *qs.last().unwrap_or(&kappa);
    let slack = -S::lit(1e-12);
    let holds = |delta: S, qm: S, qp: S, gm: S, n: usize| {
        let (m, p) = kappa_box_margins(g, h, delta, qm, qp, gm, n);
        m >= slack && p >= slack
    };

    let mut found: Vec<(S, S)> = Vec::new();
    for frac in [0.5, 0.25, 0.1, 0.05, 0.02] {
        let delta = kappa * S::lit(frac);
        if let Some(&gm) = gammas.iter().find(|&&gm| holds(delta, q_small, q_small, gm, coarse)) {
            found.push((delta, gm));
        }
    }
    // widest neighbourhood whose rate is at least half the best one
    let top = found.iter().map(|f| f.1).fold(S::zero(), S::max);
    let (delta, gm) = found
        .iter()
        .copied()
        .find(|f| f.1 >= top / S::lit(2.0))
        .ok_or_else(|| {
            Error::NoAdmissibleParams(format!(
                "no sampled gamma > 0 works even for q = {q_small} (g'(kappa) = {})",
                g.gp_kappa
            ))
        })?;
    let gamma_star = gm * S::lit(0.9);
    let q_minus = qs
        .iter()
        .copied()
        .filter(|&q| q < kappa)
        .find(|&q| kappa_box_margins(g, h, delta, q, q_small, gamma_star, coarse).0 >= slack)
        .unwrap_or(q_small);
    let q_plus = qs
        .iter()
        .copied()
        .find(|&q| kappa_box_margins(g, h, delta, q_small, q, gamma_star, coarse).1 >= slack)
        .unwrap_or(q_small);
    if !holds(delta, q_minus, q_plus, gamma_star, 100) {
        return Err(Error::NoAdmissibleParams(format!(
            "box delta = {delta}, gamma = {gamma_star}, q = ({q_minus}, {q_plus}) fails on the fine sample"
        )));
    }
    let b = solve_b(profile, kappa - delta / S::lit(2.0))?;
    Ok(KappaParams {
        delta_star: delta,
        gamma_star,
        q_star_minus: q_minus,
        q_star_plus: q_plus,
        b,
    })
}

/// Default search grids: 100 values of γ in `(0, 1/2)` and budgets from κ/2
/// down to κ/100.
pub fn default_search_grids<S: Scalar>(kappa: S) -> (Vec<S>, Vec<S>) {
    let gammas = (1..100).map(|k| S::lit(0.005) * S::from_usize_lossy(k)).collect();
    let qs = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01].iter().map(|&f| kappa * S::lit(f)).collect();
    (gammas, qs)
}

/// `b` with `φ(b - ch) = level`, at the leftmost upward crossing.
fn solve_b<S: Scalar>(profile: &WaveProfile<S>, level: S) -> Result<S> {
    let grid = &profile.grid;
    let z0 = crossing(&profile.values, grid, level)
        .ok_or_else(|| Error::DegenerateProfile(format!("profile never reaches {level}")))?;
    let lo = z0 - grid.dx;
    let hi = z0 + grid.dx;
    let z = bisect(|z| profile.eval(z) - level, lo, hi, S::tol(1e-14)).unwrap_or(z0);
    Ok(z + profile.c * profile.h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign<S: Scalar>(self) -> S {
        match self {
            Side::Plus => S::one(),
            Side::Minus => -S::one(),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        })
    }
}

/// Spatial weight of a two-sided envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `η_λ(z - b)`, capped at one to the right of `b`.
    Eta,
    /// `e^{λz}`, unbounded.
    Xi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeKind<S> {
    /// `φ(z) ± q e^{-γt} k(z)` with `k` the chosen weight.
    TwoSided { lambda: S, gamma: S, b: S, q: S, weight: Weight },
    /// `φ(z ± ε±(t)) ± q e^{-γt} η_{λ₁}(z)`.
    Shifted { q: S, gamma: S, alpha: S, d: S, b: S, lambda1: S },
}

/// A pair `(w₋, w₊)` built around a profile.
#[derive(Debug, Clone)]
pub struct Envelope<S> {
    pub kind: EnvelopeKind<S>,
    pub profile: Arc<WaveProfile<S>>,
    /// Where the spatial derivative jumps, if anywhere.
    pub corner: Option<S>,
}

impl<S: Scalar> Envelope<S> {
    pub fn q(&self) -> S {
        match self.kind {
            EnvelopeKind::TwoSided { q, .. } | EnvelopeKind::Shifted { q, .. } => q,
        }
    }

    pub fn gamma(&self) -> S {
        match self.kind {
            EnvelopeKind::TwoSided { gamma, .. } | EnvelopeKind::Shifted { gamma, .. } => gamma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvelopeKind::TwoSided { weight: Weight::Eta, .. } => "two-sided-eta",
            EnvelopeKind::TwoSided { weight: Weight::Xi, .. } => "two-sided-xi",
            EnvelopeKind::Shifted { .. } => "shifted",
        }
    }

    /// `ε₊(t)`; zero for two-sided envelopes.
    pub fn eps_plus(&self, t: S) -> S {
        match self.kind {
            EnvelopeKind::Shifted { q, gamma, alpha, .. } => {
                alpha * q / gamma * ((gamma * self.profile.h).exp() - (-gamma * t).exp())
            }
            _ => S::zero(),
        }
    }

    /// `ε₋(t)`; zero for two-sided envelopes.
    pub fn eps_minus(&self, t: S) -> S {
        match self.kind {
            EnvelopeKind::Shifted { q, gamma, alpha, .. } => -alpha * q / gamma * (-gamma * t).exp(),
            _ => S::zero(),
        }
    }

    fn eps(&self, side: Side, t: S) -> S {
        match side {
            Side::Plus => self.eps_plus(t),
            Side::Minus => self.eps_minus(t),
        }
    }

    fn weight(&self, z: S) -> S {
        match self.kind {
            EnvelopeKind::TwoSided { lambda, b, weight: Weight::Eta, .. } => eta(lambda, z - b),
            EnvelopeKind::TwoSided { lambda, weight: Weight::Xi, .. } => (lambda * z).exp(),
            EnvelopeKind::Shifted { lambda1, .. } => eta(lambda1, z),
        }
    }

    pub fn eval(&self, side: Side, t: S, z: S) -> S {
        let sg: S = side.sign();
        let decay = self.q() * (-self.gamma() * t).exp();
        let arg = z + sg * self.eps(side, t);
        self.profile.eval(arg) + sg * decay * self.weight(z)
    }

    pub fn w_plus(&self, t: S, z: S) -> S {
        self.eval(Side::Plus, t, z)
    }

    pub fn w_minus(&self, t: S, z: S) -> S {
        self.eval(Side::Minus, t, z)
    }

    /// `∂w/∂t`, from the formulas.
    pub fn time_derivative(&self, side: Side, t: S, z: S) -> S {
        let sg: S = side.sign();
        let gamma = self.gamma();
        let decay = self.q() * (-gamma * t).exp();
        let mut v = -sg * gamma * decay * self.weight(z);
        if let EnvelopeKind::Shifted { alpha, .. } = self.kind {
            // both shifts grow at rate αq e^{-γt}
            let rate = alpha * decay;
            v = v + sg * rate * self.profile.derivative(z + sg * self.eps(side, t));
        }
        v
    }

    /// `(w₊_z(z*-) - w₊_z(z*+), w₋_z(z*-) - w₋_z(z*+))` from the formulas:
    /// `(qλe^{-γt}, -qλe^{-γt})`.
    pub fn corner_jump(&self, t: S) -> Option<(S, S)> {
        let lambda = match self.kind {
            EnvelopeKind::TwoSided { weight: Weight::Xi, .. } => return None,
            EnvelopeKind::TwoSided { lambda, .. } => lambda,
            EnvelopeKind::Shifted { lambda1, .. } => lambda1,
        };
        let j = self.q() * lambda * (-self.gamma() * t).exp();
        Some((j, -j))
    }
}

/// Two-sided envelope `φ ± q e^{-γt} k(z)`.
///
/// Requires `λ` between the characteristic roots at the profile speed and
/// `γ <= gamma_max`; with the `η` weight also `q <= min(q*, q_*)`.
pub fn build_sttg_envelope<S: Scalar>(
    profile: Arc<WaveProfile<S>>,
    g: &BirthFunction<S>,
    lambda: S,
    gamma: S,
    kp: &KappaParams<S>,
    q: S,
    weight: Weight,
) -> Result<Envelope<S>> {
    let (c, h) = (profile.c, profile.h);
    let roots = char_roots(c, h, g.gp0)?;
    let slack = S::tol(1e-12) * (S::one() + lambda);
    if lambda < roots.lambda1 - slack || lambda > roots.lambda2 + slack {
        return Err(Error::ParameterOutOfBudget(format!(
            "lambda = {lambda} outside [{}, {}]",
            roots.lambda1, roots.lambda2
        )));
    }
    if gamma < S::zero() || gamma_margin(c, lambda, gamma, h, g.gp0) < -slack {
        return Err(Error::ParameterOutOfBudget(format!(
            "gamma = {gamma} exceeds the decay budget at lambda = {lambda}"
        )));
    }
    if !(q > S::zero()) {
        return Err(Error::ParameterOutOfBudget(format!("q = {q} must be positive")));
    }
    if weight == Weight::Eta && q > kp.q_budget() {
        return Err(Error::ParameterOutOfBudget(format!(
            "q = {q} exceeds min(q*, q_*) = {}",
            kp.q_budget()
        )));
    }
    Ok(unchecked_sttg(profile, lambda, gamma, kp.b, q, weight))
}

/// Two-sided envelope without the admissibility checks, for demonstrating
/// what the checks guard against.
pub fn unchecked_sttg<S: Scalar>(
    profile: Arc<WaveProfile<S>>,
    lambda: S,
    gamma: S,
    b: S,
    q: S,
    weight: Weight,
) -> Envelope<S> {
    Envelope {
        kind: EnvelopeKind::TwoSided { lambda, gamma, b, q, weight },
        profile,
        corner: match weight {
            Weight::Eta if q != S::zero() => Some(b),
            _ => None,
        },
    }
}

/// The rate cap `(g'(0) - 1) e^{-λ₁ch} min(1, 1/λ₁)` of shifted envelopes.
pub fn shifted_gamma_cap<S: Scalar>(gp0: S, lambda1: S, c: S, h: S) -> S {
    (gp0 - S::one()) * (-lambda1 * c * h).exp() * S::one().min(S::one() / lambda1)
}

/// `min φ'(z)/η₁(z)` over nodes `z <= b`, skipping the five leftmost nodes.
pub fn tail_ratio_min<S: Scalar>(profile: &WaveProfile<S>, lambda1: S, b: S) -> S {
    let dphi = profile.nodal_derivative();
    let grid = &profile.grid;
    (5..grid.n - 1)
        .take_while(|&i| grid.x(i) <= b)
        .map(|i| dphi[i] / eta(lambda1, grid.x(i)))
        .fold(S::infinity(), S::min)
}

/// `sup φ'(z)/η₁(z)` over interior nodes.
pub fn tail_ratio_sup<S: Scalar>(profile: &WaveProfile<S>, lambda1: S) -> S {
    let dphi = profile.nodal_derivative();
    let grid = &profile.grid;
    (1..grid.n - 1)
        .map(|i| dphi[i] / eta(lambda1, grid.x(i)))
        .fold(S::neg_infinity(), S::max)
}

/// Shifted envelope `φ(z ± ε±(t)) ± q e^{-γt} η_{λ₁}(z)`.
///
/// γ is the largest of 100 equally spaced values below
/// `min(γ*, rate cap, gamma_cap)`.
pub fn build_uls_envelope<S: Scalar>(
    profile: Arc<WaveProfile<S>>,
    g: &BirthFunction<S>,
    kp: &KappaParams<S>,
    q: S,
    gamma_cap: Option<S>,
) -> Result<Envelope<S>> {
    let (c, h) = (profile.c, profile.h);
    let roots = char_roots(c, h, g.gp0)?;
    if roots.near_critical {
        return Err(Error::ParameterOutOfBudget(format!(
            "c = {c} is critical; shifted envelopes need a faster front"
        )));
    }
    if !(q > S::zero()) || q > kp.q_budget() {
        return Err(Error::ParameterOutOfBudget(format!(
            "q = {q} must lie in (0, {}]",
            kp.q_budget()
        )));
    }
    let lambda1 = roots.lambda1;
    let d = tail_ratio_min(&profile, lambda1, kp.b);
    if !(d > S::zero()) {
        return Err(Error::DegenerateProfile(format!(
            "min of phi'/eta over z <= {} is {d}",
            kp.b
        )));
    }
    let mut cap = kp.gamma_star.min(shifted_gamma_cap(g.gp0, lambda1, c, h));
    if let Some(extra) = gamma_cap {
        cap = cap.min(extra);
    }
    if !(cap > S::zero()) {
        return Err(Error::ParameterOutOfBudget(format!("no room for gamma below {cap}")));
    }
    let gamma = cap * S::lit(0.99);
    let alpha = (gamma * h).exp() * g.lg / d;
    Ok(Envelope {
        kind: EnvelopeKind::Shifted {
            q,
            gamma,
            alpha,
            d,
            b: kp.b,
            lambda1,
        },
        profile,
        corner: Some(S::zero()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample<S> {
    pub side: Side,
    pub t: S,
    pub z: S,
    pub residual: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerJump<S> {
    pub t: S,
    /// One-sided estimate of `w₊_z(z*-) - w₊_z(z*+)`.
    pub plus: S,
    pub minus: S,
    /// The formula value of the `plus` jump.
    pub analytic: S,
}

/// Operator residuals of an envelope on a sample box.
#[derive(Debug, Clone)]
pub struct ResidualCertificate<S> {
    pub envelope: &'static str,
    pub samples: Vec<ResidualSample<S>>,
    /// `min 𝒩w₊` and where it occurs.
    pub min_plus: (S, S, S),
    /// `max 𝒩w₋` and where it occurs.
    pub max_minus: (S, S, S),
    pub corner_jumps: Vec<CornerJump<S>>,
    pub tol: S,
    /// Samples whose stencil would read the profile beyond its right end.
    pub skipped: usize,
}

impl<S: Scalar> ResidualCertificate<S> {
    pub fn plus_ok(&self) -> bool {
        self.min_plus.0 >= -self.tol
    }

    pub fn minus_ok(&self) -> bool {
        self.max_minus.0 <= self.tol
    }

    pub fn jumps_strict(&self) -> bool {
        self.corner_jumps.iter().all(|j| j.plus > S::zero() && j.minus < S::zero())
    }

    pub fn pass(&self) -> bool {
        self.plus_ok() && self.minus_ok() && self.jumps_strict()
    }
}

impl<S: Scalar> fmt::Display for ResidualCertificate<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (mp, tp, zp) = self.min_plus;
        let (mm, tm, zm) = self.max_minus;
        let jump = self
            .corner_jumps
            .iter()
            .map(|j| j.plus)
            .fold(S::infinity(), S::min);
        write!(
            f,
            "{}: min N(w+) = {:e} at (t={}, z={}), max N(w-) = {:e} at (t={}, z={}), min corner jump = {:e}, {}",
            self.envelope,
            mp,
            tp,
            zp,
            mm,
            tm,
            zm,
            jump,
            if self.pass() { "pass" } else { "fail" }
        )
    }
}

/// Default residual tolerance `1e-8 (1 + κ)`.
pub fn default_residual_tol<S: Scalar>(kappa: S) -> S {
    S::lit(1e-8) * (S::one() + kappa)
}

/// Evaluates `𝒩w = w_t - w_zz + c w_z + w - g(w(t - h, z - ch))` for both
/// envelope sides. `w_t` comes from the formulas, `z`-derivatives from
/// centered differences with the profile spacing; samples within one
/// spacing of the corner are skipped, and the corner jump is measured with
/// one-sided fourth-order stencils.
///
/// The stored profile is flat beyond its last node, which is not the front
/// there; samples whose stencil reads past the right end are counted in
/// `skipped` rather than evaluated.
pub fn certify<S: Scalar>(
    env: &Envelope<S>,
    g: &BirthFunction<S>,
    t_samples: &[S],
    z_samples: &[S],
    tol: Option<S>,
) -> ResidualCertificate<S> {
    let p = &env.profile;
    let (c, h) = (p.c, p.h);
    let dz = p.grid.dx;
    let two = S::lit(2.0);
    let mut samples = Vec::with_capacity(2 * t_samples.len() * z_samples.len());
    let mut min_plus = (S::infinity(), S::zero(), S::zero());
    let mut max_minus = (S::neg_infinity(), S::zero(), S::zero());
    let mut skipped = 0;
    let right = p.grid.x_max;
    for &t in t_samples {
        for &z in z_samples {
            if let Some(zc) = env.corner {
                if (z - zc).abs() <= dz {
                    continue;
                }
            }
            for side in [Side::Plus, Side::Minus] {
                let sg: S = side.sign();
                let reach = (z + dz + sg * env.eps(side, t)).max(z - c * h + sg * env.eps(side, t - h));
                if reach > right {
                    skipped += 1;
                    continue;
                }
                let w = |zz: S| env.eval(side, t, zz);
                let (wl, w0, wr) = (w(z - dz), w(z), w(z + dz));
                let wzz = (wr - two * w0 + wl) / (dz * dz);
                let wz = (wr - wl) / (two * dz);
                let delayed = env.eval(side, t - h, z - c * h);
                let r = env.time_derivative(side, t, z) - wzz + c * wz + w0 - g.eval(delayed);
                match side {
                    Side::Plus if r < min_plus.0 => min_plus = (r, t, z),
                    Side::Minus if r > max_minus.0 => max_minus = (r, t, z),
                    _ => {}
                }
                samples.push(ResidualSample { side, t, z, residual: r });
            }
        }
    }
    let mut corner_jumps = Vec::new();
    if let Some(zc) = env.corner {
        let step = dz / S::lit(16.0);
        for &t in t_samples {
            let jump = |side: Side| {
                let f = |k: S| env.eval(side, t, zc + k * step);
                let left = (S::lit(25.0) * f(S::zero()) - S::lit(48.0) * f(-S::one()) + S::lit(36.0) * f(-two)
                    - S::lit(16.0) * f(-S::lit(3.0))
                    + S::lit(3.0) * f(-S::lit(4.0)))
                    / (S::lit(12.0) * step);
                let right = (-S::lit(25.0) * f(S::zero()) + S::lit(48.0) * f(S::one()) - S::lit(36.0) * f(two)
                    + S::lit(16.0) * f(S::lit(3.0))
                    - S::lit(3.0) * f(S::lit(4.0)))
                    / (S::lit(12.0) * step);
                left - right
            };
            let analytic = env.corner_jump(t).map(|j| j.0).unwrap_or(S::zero());
            corner_jumps.push(CornerJump {
                t,
                plus: jump(Side::Plus),
                minus: jump(Side::Minus),
                analytic,
            });
        }
    }
    ResidualCertificate {
        envelope: env.name(),
        samples,
        min_plus,
        max_minus,
        corner_jumps,
        tol: tol.unwrap_or_else(|| default_residual_tol(p.kappa)),
        skipped,
    }
}

/// Every `stride`-th profile node at least `margin` away from both ends.
pub fn interior_samples<S: Scalar>(profile: &WaveProfile<S>, margin: S, stride: usize) -> Vec<S> {
    let grid = &profile.grid;
    (0..grid.n)
        .step_by(stride.max(1))
        .map(|i| grid.x(i))
        .filter(|&z| z >= grid.x_min + margin && z <= grid.x_max - margin)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeReport<S> {
    pub max_violation: S,
    /// The lower bound is compared with `u(t, z + offset)`; nonzero only for
    /// shifted envelopes, whose sub-solution bounds a translate.
    pub lower_offset: S,
    /// `(t, z)` of the largest violation.
    pub worst: (S, S),
    pub allowance: S,
    pub snapshots: usize,
}

impl<S: Scalar> SqueezeReport<S> {
    pub fn pass(&self) -> bool {
        self.max_violation <= self.allowance
    }
}

/// Checks `w₋ <= w <= w₊` on every stored snapshot of a co-moving run, after
/// confirming the initial history lies inside.
///
/// For shifted envelopes the lower bound applies to the translate
/// `u(t, z - ε₋(-h))`, so it is evaluated at `z + ε₋(-h)` against `u(t, z)`.
pub fn squeeze_check<S: Scalar>(traj: &Trajectory<S>, env: &Envelope<S>) -> Result<SqueezeReport<S>> {
    let c = env.profile.c;
    let same_frame = match traj.frame {
        Frame::CoMoving(s) => (s - c).abs() <= S::tol(1e-12) * (S::one() + c.abs()),
        Frame::Lab => c == S::zero(),
    };
    if !same_frame {
        return Err(Error::SpecMismatch(format!(
            "squeeze needs a co-moving run at speed {c}"
        )));
    }
    if traj.fields.is_empty() {
        return Err(Error::InsufficientData("trajectory kept no fields".into()));
    }
    let grid = &traj.grid;
    let kappa = env.profile.kappa;
    let init_tol = S::tol(1e-12) * (S::one() + kappa);
    let offset = -env.eps_minus(-env.profile.h);
    let violation = |t: S, z: S, w: S| (w - env.w_plus(t, z)).max(env.w_minus(t, z - offset) - w);
    let m = traj.initial_history.len() - 1;
    for (j, slice) in traj.initial_history.iter().enumerate() {
        let s = -traj.dt * S::from_usize_lossy(m - j);
        for (i, &w) in slice.iter().enumerate() {
            let z = grid.x(i);
            let v = violation(s, z, w);
            if v > init_tol {
                return Err(Error::InitialDataOutsideEnvelope {
                    violation: v.to_f64_lossy(),
                    s: s.to_f64_lossy(),
                    z: z.to_f64_lossy(),
                });
            }
        }
    }
    let mut worst = (S::zero(), S::zero());
    let mut max_violation = S::neg_infinity();
    for (t, field) in traj.times.iter().zip(&traj.fields) {
        for (i, &w) in field.iter().enumerate() {
            let z = grid.x(i);
            let v = violation(*t, z, w);
            if v > max_violation {
                max_violation = v;
                worst = (*t, z);
            }
        }
    }
    Ok(SqueezeReport {
        max_violation: max_violation.max(S::zero()),
        lower_offset: offset,
        worst,
        allowance: S::lit(1e-3) * env.q(),
        snapshots: traj.fields.len(),
    })
}

/// Which inequality a static field is meant to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticKind {
    Super,
    Sub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport<S> {
    pub kind: StaticKind,
    /// Worst discrete residual of the static field, signed so that
    /// nonpositive is correct.
    pub certified_residual: S,
    /// Largest step-to-step move in the wrong direction.
    pub max_wrong_way: S,
    pub steps: usize,
    pub dt: S,
    pub final_field: Vec<S>,
    pub tol: S,
}

impl<S: Scalar> MonotoneReport<S> {
    pub fn pass(&self) -> bool {
        self.max_wrong_way <= self.tol
    }
}

/// Runs from a history frozen at `field` and checks that every step moves
/// each node down (super-solutions) or up (sub-solutions).
///
/// The field is first certified with the discrete operator of the run, and
/// the step is chosen small enough that the scheme preserves order.
#[allow(clippy::too_many_arguments)]
pub fn monotone_evolution_check<S: Scalar>(
    field: &[S],
    kind: StaticKind,
    grid: &Grid1D<S>,
    c: S,
    h: S,
    g: &BirthFunction<S>,
    t_end: S,
) -> Result<MonotoneReport<S>> {
    if field.len() != grid.n {
        return Err(Error::SpecMismatch("field and grid sizes differ".into()));
    }
    let n = grid.n;
    let boundary = Boundary::Dirichlet(field[0], field[n - 1]);
    let frame = Frame::CoMoving(c);
    let upwind_extra = if c.abs() * grid.dx / S::lit(2.0) > S::one() { c.abs() / grid.dx } else { S::zero() };
    let bound = S::lit(2.0) / (S::lit(2.0) / (grid.dx * grid.dx) + S::one() + upwind_extra);
    let mut dt_target = (bound * S::lit(0.9)).min(S::one() / g.lg.max(S::lit(1e-12)));
    let (mut m, mut dt) = delay_steps(h, dt_target)?;
    if dt > dt_target {
        // rounding went up; add one more step per delay
        let (m2, dt2) = delay_steps(h, h / S::from_usize_lossy(m + 1))?;
        m = m2;
        dt = dt2;
    }
    dt_target = dt;
    let stepper = Stepper::new(grid, frame, h, dt_target, boundary, Advection::Auto)?;
    let oc = stepper.order_check(g.lg);
    if !oc.holds() {
        return Err(Error::CertificationFailed(format!(
            "step {dt} does not preserve order (Peclet {})",
            oc.cell_peclet
        )));
    }
    let sign = match kind {
        StaticKind::Super => S::one(),
        StaticKind::Sub => -S::one(),
    };
    let res = stepper.operator_residual(field, field, g);
    let certified_residual = res.iter().fold(S::neg_infinity(), |a, &r| a.max(sign * r));
    let cert_tol = default_residual_tol(g.kappa);
    if certified_residual > cert_tol {
        let at = res.iter().position(|&r| sign * r == certified_residual).unwrap_or(0);
        return Err(Error::CertificationFailed(format!(
            "static field violates its inequality by {certified_residual:e} at z = {}",
            grid.x(at)
        )));
    }
    let buf = HistoryBuffer::from_slices(vec![field.to_vec(); m + 1], h, dt)?;
    let config = SolverConfig::new(frame, dt, t_end, boundary)
        .snapshot_every(1)
        .keep_fields(false);
    let mut prev = field.to_vec();
    let mut wrong = S::zero();
    let mut steps = 0usize;
    let traj = {
        let mut obs = |_t: S, u: &[S], _g: &Grid1D<S>| {
            for (p, &v) in prev.iter_mut().zip(u) {
                wrong = wrong.max(sign * (v - *p));
                *p = v;
            }
            steps += 1;
        };
        crate::solver::simulate(grid, buf, &config, g, &mut [&mut obs as &mut dyn Observer<S>])?
    };
    if let Some(e) = traj.error {
        return Err(e);
    }
    Ok(MonotoneReport {
        kind,
        certified_residual,
        max_wrong_way: wrong,
        steps: steps.saturating_sub(1),
        dt,
        final_field: traj.history.current().to_vec(),
        tol: S::lit(1e-10),
    })
}

/// `min{cap, φ(z + δ) + q e^{λz}}` on the profile grid, with `δ` rounded to
/// whole cells so the profile part is exact at the nodes.
pub fn plateau_field<S: Scalar>(profile: &WaveProfile<S>, delta: S, q: S, lambda: S, cap: S) -> Vec<S> {
    let grid = &profile.grid;
    let k = (delta / grid.dx).round().to_usize().unwrap_or(0);
    (0..grid.n)
        .map(|i| {
            let base = profile.values[(i + k).min(grid.n - 1)];
            cap.min(base + q * (lambda * grid.x(i)).exp())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRadius<S> {
    pub varsigma0: S,
    pub c1: S,
    pub c2: S,
    pub c: S,
    pub sup_ratio: S,
    pub varsigma: S,
}

/// `ς(ε) = min{ς₀, ε / (C (1 + e^{λ₁Cς₀} sup φ'/η₁))}` with
/// `ς₀ = min{γ, min(q_*, q*) e^{-λ₁αe^{γh}}}`, `C = max(αe^{γh}/γ, e^{λ₁αe^{γh}})`.
pub fn stability_radius<S: Scalar>(
    epsilon: S,
    gamma: S,
    alpha: S,
    lambda1: S,
    kp: &KappaParams<S>,
    profile: &WaveProfile<S>,
) -> StabilityRadius<S> {
    let grow = (gamma * profile.h).exp();
    let c2 = (lambda1 * alpha * grow).exp();
    let varsigma0 = gamma.min(kp.q_budget() / c2);
    let c1 = alpha * grow / gamma;
    let c = c1.max(c2);
    let sup_ratio = tail_ratio_sup(profile, lambda1);
    let varsigma = varsigma0.min(epsilon / (c * (S::one() + (lambda1 * c * varsigma0).exp() * sup_ratio)));
    StabilityRadius {
        varsigma0,
        c1,
        c2,
        c,
        sup_ratio,
        varsigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearKappaReport<S> {
    /// Largest excursion outside `[κ - ρ/4, κ + ρ/4)` for `z >= b - ch`.
    pub band_violation: S,
    /// `max |w₀ - φ| / (ρ e^{λ(z - b)})` over `z <= b`; at most 1/2 is required.
    pub tail_ratio: S,
    /// `max |g'|` on `[κ - ρ, κ + ρ]`.
    pub m_g: S,
    pub gamma_ok: bool,
}

impl<S: Scalar> NearKappaReport<S> {
    pub fn holds(&self) -> bool {
        self.band_violation <= S::zero() && self.tail_ratio <= S::lit(0.5) && self.gamma_ok
    }
}

/// Preconditions for squeezing a co-moving history that already sits in a
/// `ρ`-band around κ on the right and close to `φ` on the left.
#[allow(clippy::too_many_arguments)]
pub fn near_kappa_check<S: Scalar>(
    history: &[Vec<S>],
    grid: &Grid1D<S>,
    profile: &WaveProfile<S>,
    g: &BirthFunction<S>,
    rho: S,
    lambda: S,
    b: S,
    gamma: S,
) -> NearKappaReport<S> {
    let kappa = g.kappa;
    let (c, h) = (profile.c, profile.h);
    let quarter = rho / S::lit(4.0);
    let mut band = S::neg_infinity();
    let mut ratio = S::zero();
    for slice in history {
        for (i, &w) in slice.iter().enumerate() {
            let z = grid.x(i);
            let phi = profile.eval(z);
            if z >= b - c * h {
                for v in [w, phi] {
                    band = band.max((kappa - quarter - v).max(v - kappa - quarter));
                }
            }
            if z <= b {
                ratio = ratio.max((w - phi).abs() / (rho * (lambda * (z - b)).exp()));
            }
        }
    }
    let n = 400;
    let m_g = (0..=n)
        .map(|k| g.derivative(kappa - rho + S::lit(2.0) * rho * S::from_usize_lossy(k) / S::from_usize_lossy(n)).abs())
        .fold(S::zero(), S::max);
    NearKappaReport {
        band_violation: band.max(S::neg_infinity()),
        tail_ratio: ratio,
        m_g,
        gamma_ok: m_g * (gamma * h).exp() < S::one() - gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{char_function, gamma_margin};
    use crate::solver::{init_history, simulate, InitialCondition, Perturbation, SolverConfig};
    use crate::waves::{compute_profile, ProfileOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn bh() -> BirthFunction<f64> {
        BirthFunction::beverton_holt(2.0, 1.0).unwrap()
    }

    fn setup() -> &'static (Arc<WaveProfile<f64>>, KappaParams<f64>) {
        static S: OnceLock<(Arc<WaveProfile<f64>>, KappaParams<f64>)> = OnceLock::new();
        S.get_or_init(|| {
            let g = bh();
            let p = Arc::new(compute_profile(2.5, &g, 0.0, &ProfileOptions::standard()).unwrap());
            let (gg, qg) = default_search_grids(1.0);
            let kp = estimate_kappa_params(&g, 0.0, &p, &gg, &qg).unwrap();
            (p, kp)
        })
    }

    #[test]
    fn kappa_params_for_beverton_holt() {
        let (p, kp) = setup();
        assert!(kp.gamma_star > 0.0);
        assert!(kp.q_star_minus < 1.0 && kp.q_star_plus <= 1.0);
        assert_abs_diff_eq!(p.eval(kp.b), 1.0 - kp.delta_star / 2.0, epsilon = 1e-12);
        let (m, pl) = kappa_box_margins(&bh(), 0.0, kp.delta_star, kp.q_star_minus, kp.q_star_plus, kp.gamma_star, 60);
        assert!(m >= -1e-12 && pl >= -1e-12);
    }

    #[test]
    fn zero_rate_admissible_when_slope_below_one() {
        // at γ = 0 the inequalities read g(u) - g(u - q) <= q, true for slopes < 1
        let g = bh();
        // g' < 1 above √2 - 1, so keep u - q above 1/2
        let (m, p) = kappa_box_margins(&g, 0.5, 0.25, 0.25, 1.0, 0.0, 80);
        assert!(m > 0.0 && p > 0.0, "{m} {p}");
    }

    #[test]
    fn unit_slope_at_kappa_has_no_parameters() {
        // g(u) = u + (1 - u)² u... has g(1) = 1 and g'(1) = 1
        let g = BirthFunction::custom("tangent", |u: f64| u + u * (1.0 - u).powi(2), 1.0);
        assert_abs_diff_eq!(g.gp_kappa, 1.0, epsilon = 1e-6);
        let (p, _) = setup();
        let (gg, qg) = default_search_grids(1.0);
        let r = estimate_kappa_params(&g, 0.0, p, &gg, &qg);
        assert!(matches!(r, Err(Error::NoAdmissibleParams(_))), "{r:?}");
    }

    #[test]
    fn two_sided_budget() {
        let g = bh();
        let (p, kp) = setup();
        let q = kp.q_budget();
        assert_abs_diff_eq!(crate::dispersion::gamma_max(2.5, 1.0, 0.0, 2.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(build_sttg_envelope(p.clone(), &g, 1.0, 0.25, kp, q, Weight::Eta).is_ok());
        assert!(matches!(
            build_sttg_envelope(p.clone(), &g, 1.0, 0.6, kp, q, Weight::Eta),
            Err(Error::ParameterOutOfBudget(_))
        ));
        assert!(build_sttg_envelope(p.clone(), &g, 0.5, 0.0, kp, q, Weight::Eta).is_ok());
        let big = 2.0 * kp.q_budget();
        assert!(matches!(
            build_sttg_envelope(p.clone(), &g, 1.0, 0.25, kp, big, Weight::Eta),
            Err(Error::ParameterOutOfBudget(_))
        ));
        assert!(build_sttg_envelope(p.clone(), &g, 1.0, 0.25, kp, big, Weight::Xi).is_ok());
        assert!(build_sttg_envelope(p.clone(), &g, 3.0, 0.1, kp, q, Weight::Eta).is_err());
    }

    #[test]
    fn shifted_envelope_shifts() {
        let g = bh();
        let (p, kp) = setup();
        let env = build_uls_envelope(p.clone(), &g, kp, 0.01, None).unwrap();
        let EnvelopeKind::Shifted { q, gamma, alpha, d, .. } = env.kind else {
            panic!("expected a shifted envelope")
        };
        assert!(d > 0.0);
        let h = p.h;
        assert_abs_diff_eq!(env.eps_minus(0.0), -alpha * q / gamma, epsilon = 1e-12);
        assert_abs_diff_eq!(env.eps_plus(1e4), alpha * q * (gamma * h).exp() / gamma, epsilon = 1e-9);
        assert_abs_diff_eq!(env.eps_plus(-h), 0.0, epsilon = 1e-12);
        let bound = alpha * q * (gamma * h).exp() / gamma;
        let ts: Vec<f64> = (0..200).map(|k| 0.25 * k as f64).collect();
        for w in ts.windows(2) {
            assert!(env.eps_plus(w[1]) > env.eps_plus(w[0]));
            assert!(env.eps_minus(w[1]) > env.eps_minus(w[0]));
            assert!(env.eps_minus(w[1]) < 0.0);
            assert!(env.eps_plus(w[1]) <= bound && -env.eps_minus(w[1]) <= bound);
        }
    }

    #[test]
    fn certificates() {
        let g = bh();
        let (p, kp) = setup();
        let ts: Vec<f64> = (0..6).map(|k| 2.0 * k as f64).collect();
        let zs = interior_samples(p, 10.0, 2);
        let good = build_sttg_envelope(p.clone(), &g, 1.0, 0.25, kp, kp.q_budget(), Weight::Eta).unwrap();
        let cert = certify(&good, &g, &ts, &zs, None);
        assert!(cert.pass(), "{cert}");
        let flat = unchecked_sttg(p.clone(), 1.0, 0.0, kp.b, 0.0, Weight::Eta);
        let cert = certify(&flat, &g, &ts, &zs, None);
        assert!(cert.min_plus.0.abs() < 1e-10 && cert.max_minus.0.abs() < 1e-10, "{cert}");
        let uls = build_uls_envelope(p.clone(), &g, kp, 0.01, None).unwrap();
        assert!(certify(&uls, &g, &ts, &zs, None).pass());
    }

    #[test]
    fn inadmissible_rate_fails_left_of_b() {
        let g = bh();
        let (p, kp) = setup();
        let q = kp.q_budget();
        // close to λ₁ the budget is small, so a rate below γ* still exceeds it
        let lambda = 0.52;
        let gm = crate::dispersion::gamma_max(2.5, lambda, 0.0, 2.0).unwrap();
        let gamma = 0.1;
        assert!(gm < gamma && gamma < kp.gamma_star);
        let bad = unchecked_sttg(p.clone(), lambda, gamma, kp.b, q, Weight::Eta);
        let ts = [0.0, 1.0, 2.0];
        let zs = interior_samples(p, 10.0, 4);
        let cert = certify(&bad, &g, &ts, &zs, None);
        assert!(!cert.plus_ok());
        assert!(cert.min_plus.2 < kp.b - 10.0, "{cert}");
        // left of b the residual is w (margin + g'(0) - (g(φ + w) - g(φ)) / w)
        // with w = q e^{-γt} e^{λ(z-b)}
        let margin = gamma_margin(2.5, lambda, gamma, 0.0, 2.0);
        assert!(margin < 0.0);
        for s in cert.samples.iter().filter(|s| s.side == Side::Plus && s.z < kp.b - 1.0) {
            let w = q * (-gamma * s.t).exp() * (lambda * (s.z - kp.b)).exp();
            if w < 1e-8 {
                continue;
            }
            let phi = p.eval(s.z);
            let oracle = margin + g.gp0 - (g.eval(phi + w) - g.eval(phi)) / w;
            // centered differences of e^{λz} are off by O(λ³dz²)
            assert_abs_diff_eq!(s.residual / w, oracle, epsilon = 5e-4);
        }
    }

    #[test]
    fn squeeze_cases() {
        let g = bh();
        let (p, kp) = setup();
        let q = kp.q_budget();
        let env = build_sttg_envelope(p.clone(), &g, 1.0, 0.25, kp, q, Weight::Eta).unwrap();
        let run = |pert: Perturbation<f64>| {
            let spec = InitialCondition::ProfilePlus {
                profile: p.clone(),
                shift: 0.0,
                perturbation: pert,
            };
            let buf = init_history(&spec, &p.grid, Frame::CoMoving(2.5), 0.0, 0.01).unwrap();
            let cfg = SolverConfig::new(Frame::CoMoving(2.5), 0.01, 10.0, p.boundary()).snapshot_every(50);
            simulate(&p.grid, buf, &cfg, &g, &mut []).unwrap()
        };
        let still = squeeze_check(&run(Perturbation::None), &env).unwrap();
        assert!(still.pass() && still.max_violation < 1e-12);
        let bump = squeeze_check(&run(Perturbation::Eta { q: 0.5 * q, lambda: 1.0, b: kp.b }), &env).unwrap();
        assert!(bump.pass(), "{bump:?}");
        let out = squeeze_check(&run(Perturbation::Eta { q: 2.0 * q, lambda: 1.0, b: kp.b }), &env);
        assert!(matches!(out, Err(Error::InitialDataOutsideEnvelope { .. })));
    }

    #[test]
    fn monotone_cases() {
        let g = bh();
        let (p, _) = setup();
        let n = p.grid.n;
        let high = monotone_evolution_check(&vec![1.5; n], StaticKind::Super, &p.grid, 2.5, 0.0, &g, 10.0).unwrap();
        assert!(high.pass());
        let mid = n / 2;
        assert!(high.final_field[mid] < 1.5 && high.final_field[mid] > 1.0);
        let zero = monotone_evolution_check(&vec![0.0; n], StaticKind::Sub, &p.grid, 2.5, 0.0, &g, 5.0).unwrap();
        assert!(zero.final_field.iter().all(|&v| v == 0.0));
        let plateau = plateau_field(p, 1.0, 0.05, 1.0, 1.5);
        let r = monotone_evolution_check(&plateau, StaticKind::Super, &p.grid, 2.5, 0.0, &g, 5.0).unwrap();
        assert!(r.pass(), "{r:?}");
        // half the profile is a strict sub-solution since g is concave
        let low: Vec<f64> = p.values.iter().map(|v| 0.5 * v).collect();
        assert!(matches!(
            monotone_evolution_check(&low, StaticKind::Super, &p.grid, 2.5, 0.0, &g, 1.0),
            Err(Error::CertificationFailed(_))
        ));
    }

    #[test]
    fn stability_radius_shape() {
        let g = bh();
        let (p, kp) = setup();
        let env = build_uls_envelope(p.clone(), &g, kp, 0.01, None).unwrap();
        let EnvelopeKind::Shifted { gamma, alpha, lambda1, .. } = env.kind else {
            panic!("expected a shifted envelope")
        };
        let mut prev = 0.0;
        for eps in [1e-6, 1e-3, 1.0, 1e3, 1e300] {
            let r = stability_radius(eps, gamma, alpha, lambda1, kp, p);
            assert!(r.varsigma <= r.varsigma0);
            assert!(r.varsigma >= prev);
            prev = r.varsigma;
        }
        assert_eq!(prev, stability_radius(1e300, gamma, alpha, lambda1, kp, p).varsigma0);
    }

    #[test]
    fn near_kappa_preconditions() {
        let g = bh();
        let (p, kp) = setup();
        let field = p.values.clone();
        // the band has to contain φ(b) = κ - δ*/2
        let rho = 2.0 * kp.delta_star;
        let r = near_kappa_check(&[field], &p.grid, p, &g, rho, p.lambda1, kp.b, 0.1);
        assert!(r.holds(), "{r:?}");
        assert_abs_diff_eq!(r.m_g, g.derivative(1.0 - rho), epsilon = 1e-12);
        let far = vec![0.0; p.grid.n];
        assert!(!near_kappa_check(&[far], &p.grid, p, &g, rho, p.lambda1, kp.b, 0.1).holds());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn corner_jump_signs(q in 1e-4f64..1.0, gamma in 0.0f64..0.5, t in 0.0f64..50.0, lambda in 0.6f64..1.9) {
            let (p, kp) = setup();
            let env = unchecked_sttg(p.clone(), lambda, gamma, kp.b, q, Weight::Eta);
            let (jp, jm) = env.corner_jump(t).unwrap();
            let expect = q * lambda * (-gamma * t).exp();
            prop_assert!(jp > 0.0 && jm < 0.0);
            prop_assert!((jp - expect).abs() <= 1e-15 * expect && (jm + expect).abs() <= 1e-15 * expect);
        }

        #[test]
        fn margin_vanishes_at_gamma_max(c in 2.05f64..4.0, h in 0.0f64..1.5, gp0 in 1.5f64..4.0, s in 0.05f64..0.95) {
            let cs = crate::dispersion::critical_speed(h, gp0).unwrap().0;
            let c = c / 2.0 * cs;
            prop_assume!(c > 1.02 * cs);
            let r = crate::dispersion::char_roots(c, h, gp0).unwrap();
            let lambda = r.lambda1 + s * (r.lambda2 - r.lambda1);
            let gm = crate::dispersion::gamma_max(c, lambda, h, gp0).unwrap();
            prop_assert!(gamma_margin(c, lambda, gm, h, gp0).abs() <= 1e-12 * (1.0 + gp0 * (gm * h).exp()));
            prop_assert!(gamma_margin(c, lambda, 0.0, h, gp0) == -char_function(lambda, c, h, gp0));
        }
    }
}
