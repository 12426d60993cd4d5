//! Birth functions `g` of the delayed monostable equation
//! `u_t = u_xx - u + g(u(t - h, x))` and checkers for the standing
//! structural assumptions on `g` and on initial data.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::linear_fit;
use crate::scalar::Scalar;

/// Location of the unique interior maximum of a unimodal `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unimodal<S> {
    pub x_m: S,
}

/// Near-zero Hölder bound `|g'(u) - g'(0)| <= C u^theta` on `(0, delta0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holder<S> {
    pub c: S,
    pub theta: S,
    pub delta0: S,
}

#[derive(Clone)]
enum Kind<S> {
    Nicholson { ratio: S },
    BevertonHolt { r: S, k: S },
    Pushed { r: S, s: S, k: S },
    Custom(Arc<dyn Fn(S) -> S + Send + Sync>),
}

/// A reaction term together with its structural metadata.
///
/// For `u < 0` the function is extended linearly, `g(u) = g'(0) u`.
#[derive(Clone)]
pub struct BirthFunction<S> {
    kind: Kind<S>,
    pub gp0: S,
    pub lg: S,
    pub kappa: S,
    pub gp_kappa: S,
    pub monotone: bool,
    pub unimodal: Option<Unimodal<S>>,
    pub holder: Option<Holder<S>>,
    pub name: String,
}

impl<S: Scalar> fmt::Debug for BirthFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BirthFunction")
            .field("name", &self.name)
            .field("gp0", &self.gp0)
            .field("lg", &self.lg)
            .field("kappa", &self.kappa)
            .field("gp_kappa", &self.gp_kappa)
            .field("monotone", &self.monotone)
            .field("unimodal", &self.unimodal)
            .finish()
    }
}

/// Number of samples used when metadata has to be estimated.
const META_SAMPLES: usize = 4000;

fn fd_step<S: Scalar>(u: S) -> S {
    S::lit(1e-6) * u.abs().max(S::one())
}

impl<S: Scalar> BirthFunction<S> {
    #[inline]
    pub fn eval(&self, u: S) -> S {
        if u < S::zero() {
            return self.gp0 * u;
        }
        match &self.kind {
            Kind::Nicholson { ratio } => *ratio * u * (-u).exp(),
            Kind::BevertonHolt { r, k } => *r * u / (S::one() + *k * u),
            Kind::Pushed { r, s, k } => u * (*r + *s * u) / (S::one() + *k * u),
            Kind::Custom(f) => f(u),
        }
    }

    /// `g'(u)`, in closed form for the presets and by central differences
    /// (step `1e-6 * max(1, |u|)`) otherwise.
    pub fn derivative(&self, u: S) -> S {
        if u < S::zero() {
            return self.gp0;
        }
        match &self.kind {
            Kind::Nicholson { ratio } => *ratio * (-u).exp() * (S::one() - u),
            Kind::BevertonHolt { r, k } => {
                let d = S::one() + *k * u;
                *r / (d * d)
            }
            Kind::Pushed { r, s, k } => {
                let d = S::one() + *k * u;
                (*r + S::lit(2.0) * *s * u + *s * *k * u * u) / (d * d)
            }
            Kind::Custom(_) => {
                let step = fd_step(u);
                let lo = (u - step).max(S::zero());
                (self.eval(u + step) - self.eval(lo)) / (u + step - lo)
            }
        }
    }

    /// Nicholson's blowflies nonlinearity `(p/δ) u e^{-u}`.
    pub fn nicholson(p_over_delta: S) -> Result<Self> {
        if !(p_over_delta > S::one()) || !p_over_delta.is_finite() {
            return Err(Error::Domain(format!(
                "Nicholson requires p/delta > 1, got {p_over_delta}"
            )));
        }
        let kappa = p_over_delta.ln();
        let monotone = p_over_delta <= S::E();
        Ok(Self {
            kind: Kind::Nicholson {
                ratio: p_over_delta,
            },
            gp0: p_over_delta,
            lg: p_over_delta,
            kappa,
            gp_kappa: S::one() - kappa,
            monotone,
            unimodal: (!monotone).then_some(Unimodal { x_m: S::one() }),
            // |p(e^{-u}(1-u) - 1)| <= 2pu
            holder: Some(Holder {
                c: S::lit(2.0) * p_over_delta,
                theta: S::one(),
                delta0: kappa,
            }),
            name: format!("nicholson(p/delta={p_over_delta})"),
        })
    }

    /// Beverton–Holt type `r u / (1 + ((r - 1)/κ) u)`.
    pub fn beverton_holt(r: S, kappa: S) -> Result<Self> {
        if !(r > S::one()) || !(kappa > S::zero()) || !r.is_finite() || !kappa.is_finite() {
            return Err(Error::Domain(format!(
                "Beverton-Holt requires r > 1, kappa > 0, got r = {r}, kappa = {kappa}"
            )));
        }
        let k = (r - S::one()) / kappa;
        Ok(Self {
            kind: Kind::BevertonHolt { r, k },
            gp0: r,
            lg: r,
            kappa,
            gp_kappa: S::one() / r,
            monotone: true,
            unimodal: None,
            // |r/(1+ku)^2 - r| <= 2rku
            holder: Some(Holder {
                c: S::lit(2.0) * r * k,
                theta: S::one(),
                delta0: kappa,
            }),
            name: format!("beverton-holt(r={r},kappa={kappa})"),
        })
    }

    /// `u (r + s u) / (1 + (r + sκ - 1) u / κ)`, strictly increasing with
    /// fixed points 0 and κ.
    ///
    /// Note that `g(u)/u` is decreasing for every admissible parameter set
    /// (its derivative has the sign of `sκ(1 - r) - r(r - 1)`), so this family
    /// stays subtangential and its fronts are pulled; `s` only reshapes `g`.
    pub fn pushed_candidate(r: S, s: S, kappa: S) -> Result<Self> {
        if !(r > S::one()) || !(s >= S::zero()) || !(kappa > S::zero()) {
            return Err(Error::Domain(format!(
                "pushed candidate requires r > 1, s >= 0, kappa > 0, got ({r}, {s}, {kappa})"
            )));
        }
        let k = (r + s * kappa - S::one()) / kappa;
        let mut g = Self {
            kind: Kind::Pushed { r, s, k },
            gp0: r,
            lg: r,
            kappa,
            gp_kappa: S::zero(),
            monotone: true,
            unimodal: None,
            holder: None,
            name: format!("pushed(r={r},s={s},kappa={kappa})"),
        };
        g.gp_kappa = g.derivative(kappa);
        let report = verify_hypothesis_h(&g, META_SAMPLES);
        if !report.monotone_on_kappa || !report.strictly_increasing_2kappa {
            return Err(Error::Domain(format!(
                "pushed candidate ({r}, {s}, {kappa}) is not strictly increasing on [0, 2 kappa]"
            )));
        }
        if !report.fixed_points_ok || report.g_kappa_residual > S::lit(1e-12) * kappa.max(S::one())
        {
            return Err(Error::Domain(format!(
                "pushed candidate ({r}, {s}, {kappa}) fails the fixed-point check"
            )));
        }
        g.lg = report.lipschitz_estimate.max(r) * S::lit(1.0 + 1e-9);
        g.holder = Some(estimate_holder(&g));
        Ok(g)
    }

    /// Wraps an arbitrary callable. Metadata is estimated numerically and no
    /// hypothesis is enforced; run [`verify_hypothesis_h`] on the result.
    pub fn custom<F>(name: impl Into<String>, f: F, kappa: S) -> Self
    where
        F: Fn(S) -> S + Send + Sync + 'static,
    {
        let mut g = Self {
            kind: Kind::Custom(Arc::new(f)),
            gp0: S::zero(),
            lg: S::zero(),
            kappa,
            gp_kappa: S::zero(),
            monotone: false,
            unimodal: None,
            holder: None,
            name: name.into(),
        };
        // one-sided at zero, the extension below zero needs gp0 itself
        let step = fd_step(S::zero());
        g.gp0 = (g.eval(step) - g.eval(S::zero())) / step;
        g.gp_kappa = g.derivative(kappa);
        let report = verify_hypothesis_h(&g, META_SAMPLES);
        g.lg = report.lipschitz_estimate * S::lit(1.0 + 1e-9);
        g.monotone = report.strictly_increasing_2kappa;
        g
    }

    /// Whether the Lipschitz constant equals `g'(0)`, in which case the
    /// minimal speed is the linear one.
    pub fn lipschitz_is_gp0(&self) -> bool {
        (self.lg - self.gp0).abs() <= S::lit(1e-9) * self.gp0
    }
}

fn estimate_holder<S: Scalar>(g: &BirthFunction<S>) -> Holder<S> {
    let delta0 = g.kappa;
    let mut c = S::zero();
    for i in 1..=400 {
        let u = delta0 * S::from_usize_lossy(i) / S::lit(400.0);
        c = c.max((g.derivative(u) - g.gp0).abs() / u);
    }
    Holder {
        c,
        theta: S::one(),
        delta0,
    }
}

/// Outcome of the sampling-based check of the monostable hypothesis:
/// `g(0) = 0`, `g(κ) = κ`, no other nonnegative fixed point, `g'(0) > 1`,
/// `g'(κ) < 1`, Lipschitz bound `lg`.
///
/// Each flag means "no counterexample found on the sampling grid".
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport<S> {
    pub g0_residual: S,
    pub g_kappa_residual: S,
    /// `g(u) > u` on `(0, κ)` and `g(u) < u` on `(κ, 2κ]`.
    pub fixed_points_ok: bool,
    pub gp0_gt_one: bool,
    pub gp_kappa_lt_one: bool,
    pub lipschitz_estimate: S,
    pub lipschitz_ok: bool,
    /// Strictly increasing on `[0, κ]`.
    pub monotone_on_kappa: bool,
    /// Strictly increasing on `[0, 2κ]`.
    pub strictly_increasing_2kappa: bool,
    /// `g(u) <= g'(0) u` on the grid.
    pub subtangential: bool,
    /// Largest sampled difference quotient `(g(v) - g(u)) / (v - u)` on `[0, 2κ]`.
    pub max_difference_quotient: S,
}

impl<S: Scalar> HypothesisReport<S> {
    /// All clauses; the monotone clause is included on request.
    pub fn passes(&self, require_monotone: bool) -> bool {
        let tol = S::lit(1e-12);
        self.g0_residual <= tol
            && self.g_kappa_residual <= tol
            && self.fixed_points_ok
            && self.gp0_gt_one
            && self.gp_kappa_lt_one
            && self.lipschitz_ok
            && (!require_monotone || self.monotone_on_kappa)
    }
}

/// Samples `g` on `[0, 2κ]` with `grid_n + 1` points and reports every
/// clause.
pub fn verify_hypothesis_h<S: Scalar>(g: &BirthFunction<S>, grid_n: usize) -> HypothesisReport<S> {
    let n = grid_n.max(100);
    let kappa = g.kappa;
    let two_kappa = S::lit(2.0) * kappa;
    let us: Vec<S> = (0..=n)
        .map(|i| two_kappa * S::from_usize_lossy(i) / S::from_usize_lossy(n))
        .collect();
    let vals: Vec<S> = us.iter().map(|&u| g.eval(u)).collect();

    let mut fixed_points_ok = true;
    let mut monotone_on_kappa = true;
    let mut strictly_inc = true;
    let mut subtangential = true;
    let mut max_q = S::neg_infinity();
    let mut max_abs_q = S::zero();
    let rel = S::lit(1e-9);
    for i in 0..us.len() {
        let (u, gu) = (us[i], vals[i]);
        if u > S::zero() {
            let gap = gu - u;
            let near_kappa = (u - kappa).abs() <= rel * kappa;
            if !near_kappa && ((u < kappa && gap <= S::zero()) || (u > kappa && gap >= S::zero())) {
                fixed_points_ok = false;
            }
            if gu > g.gp0 * u * (S::one() + rel) {
                subtangential = false;
            }
        }
        if i > 0 {
            let q = (gu - vals[i - 1]) / (u - us[i - 1]);
            max_q = max_q.max(q);
            max_abs_q = max_abs_q.max(q.abs());
            if gu <= vals[i - 1] {
                strictly_inc = false;
                if u <= kappa {
                    monotone_on_kappa = false;
                }
            }
        }
    }
    HypothesisReport {
        g0_residual: g.eval(S::zero()).abs(),
        g_kappa_residual: (g.eval(kappa) - kappa).abs(),
        fixed_points_ok,
        gp0_gt_one: g.gp0 > S::one(),
        gp_kappa_lt_one: g.gp_kappa < S::one(),
        lipschitz_estimate: max_abs_q,
        lipschitz_ok: max_abs_q <= g.lg * (S::one() + rel),
        monotone_on_kappa,
        strictly_increasing_2kappa: strictly_inc,
        subtangential,
        max_difference_quotient: max_q,
    }
}

/// Contraction of a unimodal `g` on `[g(g(x_m)), g(x_m)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport<S> {
    pub interval: (S, S),
    pub max_abs_derivative: S,
    pub contracting: bool,
}

/// Samples `|g'|` on `[g(g(x_m)), g(x_m)]`; `None` when `g` is not flagged
/// unimodal.
pub fn unimodal_contraction<S: Scalar>(
    g: &BirthFunction<S>,
    grid_n: usize,
) -> Option<ContractionReport<S>> {
    let x_m = g.unimodal?.x_m;
    let hi = g.eval(x_m);
    let lo = g.eval(hi);
    let n = grid_n.max(100);
    let max_abs = (0..=n)
        .map(|i| lo + (hi - lo) * S::from_usize_lossy(i) / S::from_usize_lossy(n))
        .map(|u| g.derivative(u).abs())
        .fold(S::zero(), S::max);
    Some(ContractionReport {
        interval: (lo, hi),
        max_abs_derivative: max_abs,
        contracting: max_abs < S::one(),
    })
}

/// Diagnostics for an initial history sampled on `[-h, 0] x grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditionReport<S> {
    pub sup: S,
    pub nonnegative: bool,
    /// Minimum over all history slices on the rightmost decile of the grid.
    pub separation: S,
    pub separated: bool,
    /// `(lambda_est, A_est)` of the left tail of the newest slice.
    pub tail_fit: Option<(S, S)>,
}

/// Boundedness, sign and right-side separation of a sampled history. `slices` are ordered oldest
/// first, each of length `xs.len()`. The tail fit regresses `ln u` on `x`
/// where `u` lies in `[1e-8 κ, 1e-3 κ]`.
pub fn check_initial_condition<S: Scalar>(
    slices: &[Vec<S>],
    xs: &[S],
    kappa: S,
    fit_tail: bool,
) -> InitialConditionReport<S> {
    let n = xs.len();
    let mut sup = S::zero();
    let mut nonnegative = true;
    let mut separation = S::infinity();
    let start = n - (n / 10).max(1);
    for slice in slices {
        for (i, &v) in slice.iter().enumerate() {
            sup = sup.max(v.abs());
            if v < S::zero() {
                nonnegative = false;
            }
            if i >= start {
                separation = separation.min(v);
            }
        }
    }
    let tail_fit = if fit_tail {
        slices.last().and_then(|u| {
            let (lo, hi) = (S::lit(1e-8) * kappa, S::lit(1e-3) * kappa);
            let (x, y): (Vec<S>, Vec<S>) = xs
                .iter()
                .zip(u)
                .filter(|(_, &v)| v >= lo && v <= hi)
                .map(|(&x, &v)| (x, v.ln()))
                .unzip();
            linear_fit(&x, &y).map(|f| (f.slope, f.intercept.exp()))
        })
    } else {
        None
    };
    InitialConditionReport {
        sup,
        nonnegative,
        separation,
        separated: separation > S::lit(1e-12) * kappa,
        tail_fit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nicholson_presets() {
        let g = BirthFunction::<f64>::nicholson(std::f64::consts::E).unwrap();
        assert_abs_diff_eq!(g.kappa, 1.0, epsilon = 1e-15);
        assert!(g.monotone);
        let g = BirthFunction::<f64>::nicholson(2.0).unwrap();
        assert_abs_diff_eq!(g.kappa, std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(g.monotone && g.unimodal.is_none());
        let g = BirthFunction::<f64>::nicholson(1.5f64.exp()).unwrap();
        assert!(!g.monotone);
        assert_eq!(g.unimodal.unwrap().x_m, 1.0);
        assert!(g.derivative(1.0).abs() <= 1e-10);
        assert!(matches!(
            BirthFunction::<f64>::nicholson(1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fixed_points_exact() {
        for g in [
            BirthFunction::<f64>::nicholson(2.0).unwrap(),
            BirthFunction::nicholson(5.0).unwrap(),
            BirthFunction::beverton_holt(2.0, 1.0).unwrap(),
            BirthFunction::beverton_holt(3.5, 0.4).unwrap(),
            BirthFunction::pushed_candidate(1.5, 6.0, 1.0).unwrap(),
        ] {
            assert_eq!(g.eval(0.0), 0.0);
            assert!((g.eval(g.kappa) - g.kappa).abs() <= 1e-12, "{}", g.name);
        }
    }

    #[test]
    fn beverton_holt_values() {
        let g = BirthFunction::<f64>::beverton_holt(2.0, 1.0).unwrap();
        assert_eq!(g.eval(1.0), 1.0);
        assert_eq!(g.gp0, 2.0);
        assert_abs_diff_eq!(g.eval(0.5), 2.0 / 3.0, epsilon = 1e-15);
        assert!(verify_hypothesis_h(&g, 1000).passes(true));
        for i in 0..=200 {
            let u = 4.0 * i as f64 / 200.0;
            assert!(g.eval(u) <= g.gp0 * u + 1e-15);
        }
        assert!(BirthFunction::<f64>::beverton_holt(1.0, 1.0).is_err());
        assert!(BirthFunction::<f64>::beverton_holt(2.0, 0.0).is_err());
    }

    #[test]
    fn linear_extension_below_zero() {
        let g = BirthFunction::<f64>::nicholson(3.0).unwrap();
        assert_eq!(g.eval(-0.5), -1.5);
        assert_eq!(g.derivative(-0.5), 3.0);
    }

    #[test]
    fn pushed_candidate_family() {
        let a = BirthFunction::<f64>::pushed_candidate(2.0, 0.0, 1.0).unwrap();
        let b = BirthFunction::<f64>::beverton_holt(2.0, 1.0).unwrap();
        for i in 0..50 {
            let u = i as f64 * 0.04;
            assert_abs_diff_eq!(a.eval(u), b.eval(u), epsilon = 1e-15);
        }
        let p = BirthFunction::<f64>::pushed_candidate(1.5, 6.0, 1.0).unwrap();
        let rep = verify_hypothesis_h(&p, 2000);
        assert!(rep.passes(true));
        // g(u)/u = (r + su)/(1 + ku) with k = r + s - 1 decreases since s < kr
        assert!(rep.subtangential);
        assert!(rep.max_difference_quotient <= 1.5 * (1.0 + 1e-12));
        for i in 1..200 {
            let (u, v) = (i as f64 * 0.01, (i + 1) as f64 * 0.01);
            assert!(p.eval(v) / v < p.eval(u) / u);
        }
        assert!(BirthFunction::<f64>::pushed_candidate(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn hypothesis_checker_clauses() {
        let g = BirthFunction::<f64>::nicholson(2.0).unwrap();
        assert!(verify_hypothesis_h(&g, 1000).passes(true));

        let g = BirthFunction::<f64>::nicholson(1.5f64.exp()).unwrap();
        let rep = verify_hypothesis_h(&g, 1000);
        assert!(!rep.monotone_on_kappa);
        assert!(rep.passes(false));
        assert!(!rep.passes(true));

        let id = BirthFunction::<f64>::custom("identity", |u| u, 1.0);
        let rep = verify_hypothesis_h(&id, 1000);
        assert!(!rep.gp0_gt_one);
        assert!(!rep.fixed_points_ok);
        assert!(!rep.passes(false));
    }

    #[test]
    fn custom_matches_closed_form_metadata() {
        let custom = BirthFunction::<f64>::custom("bh", |u| 2.0 * u / (1.0 + u), 1.0);
        assert_abs_diff_eq!(custom.gp0, 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(custom.gp_kappa, 0.5, epsilon = 1e-6);
        assert!(custom.monotone);
        assert!(custom.lg >= 2.0 * (1.0 - 1e-3));
    }

    #[test]
    fn unimodal_contraction_nicholson() {
        let g = BirthFunction::<f64>::nicholson(5.0).unwrap();
        let rep = unimodal_contraction(&g, 2000).unwrap();
        assert_abs_diff_eq!(rep.interval.1, 5.0 / std::f64::consts::E, epsilon = 1e-12);
        assert!(rep.contracting);
        assert!(unimodal_contraction(&BirthFunction::<f64>::nicholson(2.0).unwrap(), 100).is_none());
    }

    #[test]
    fn initial_condition_classes() {
        let xs: Vec<f64> = (0..=400).map(|i| -60.0 + 0.2 * i as f64).collect();
        let kappa = 1.0;
        let flat = vec![vec![kappa; xs.len()]; 3];
        let rep = check_initial_condition(&flat, &xs, kappa, false);
        assert!(rep.nonnegative && rep.separated);
        assert_eq!(rep.sup, kappa);

        let (lam, c) = (0.5, 2.5);
        let slices: Vec<Vec<f64>> = [-0.5, -0.25, 0.0]
            .iter()
            .map(|&s| xs.iter().map(|&x| (lam * (x + c * s)).exp().min(kappa)).collect())
            .collect();
        let rep = check_initial_condition(&slices, &xs, kappa, true);
        assert_abs_diff_eq!(rep.separation, kappa, epsilon = 1e-12);
        let (l, a) = rep.tail_fit.unwrap();
        assert_abs_diff_eq!(l, lam, epsilon = 1e-10);
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-8);

        let bump: Vec<Vec<f64>> =
            vec![xs.iter().map(|&x| (-(x * x)).exp()).collect()];
        assert!(!check_initial_condition(&bump, &xs, kappa, false).separated);
    }
}
