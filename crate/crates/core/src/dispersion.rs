//! The characteristic function at the zero equilibrium,
//! `χ₀(λ) = λ² - cλ - 1 + g'(0) e^{-λch}`, and everything derived from it:
//! the two positive roots, the critical speed, the speed selected by
//! exponentially decaying data and the admissible decay rates `γ`.
//!
//! All scalar searches are bracketing bisections; `χ₀` is strictly convex
//! in `λ`, which is what makes the brackets valid.

use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::scalar::Scalar;

/// Speeds this far below the critical speed still return a (double) root.
pub const CRITICAL_SPEED_TOL: f64 = 1e-9;

const REL_TOL: f64 = 1e-14;

#[inline]
pub fn char_function<S: Scalar>(lambda: S, c: S, h: S, gp0: S) -> S {
    lambda * lambda - c * lambda - S::one() + gp0 * (-lambda * c * h).exp()
}

#[inline]
fn char_derivative<S: Scalar>(lambda: S, c: S, h: S, gp0: S) -> S {
    S::lit(2.0) * lambda - c - gp0 * c * h * (-lambda * c * h).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRoots<S> {
    pub c: S,
    pub lambda1: S,
    pub lambda2: S,
    pub residuals: (S, S),
    /// Set when the roots are closer than `1e-6`; conditioning is poor and
    /// downstream tolerances should be widened by [`CharRoots::tol_factor`].
    pub near_critical: bool,
}

impl<S: Scalar> CharRoots<S> {
    pub fn tol_factor(&self) -> S {
        if self.near_critical {
            S::lit(10.0)
        } else {
            S::one()
        }
    }
}

/// Grows `start` geometrically until `pred` holds.
fn grow_until<S: Scalar>(start: S, pred: impl Fn(S) -> bool) -> S {
    let mut x = start.max(S::one());
    for _ in 0..200 {
        if pred(x) {
            return x;
        }
        x = x * S::lit(2.0);
    }
    x
}

/// Minimizer `λ_m > 0` of `χ₀` and the minimum value.
pub fn char_minimum<S: Scalar>(c: S, h: S, gp0: S) -> (S, S) {
    if char_derivative(S::zero(), c, h, gp0) >= S::zero() {
        return (S::zero(), char_function(S::zero(), c, h, gp0));
    }
    let hi = grow_until(c, |l| char_derivative(l, c, h, gp0) > S::zero());
    let lm = bisect(|l| char_derivative(l, c, h, gp0), S::zero(), hi, S::tol(REL_TOL))
        .unwrap_or(hi);
    (lm, char_function(lm, c, h, gp0))
}

pub fn char_roots<S: Scalar>(c: S, h: S, gp0: S) -> Result<CharRoots<S>> {
    if !(gp0 > S::one()) || h < S::zero() {
        return Err(Error::Domain(format!(
            "need g'(0) > 1 and h >= 0, got g'(0) = {gp0}, h = {h}"
        )));
    }
    let (lm, m) = char_minimum(c, h, gp0);
    let slack = S::lit(CRITICAL_SPEED_TOL)
        * lm
        * (S::one() + gp0 * h * (-lm * c * h).exp());
    if m > S::zero() {
        if m > slack || lm <= S::zero() {
            return Err(Error::NoRealRoots {
                c: c.to_f64_lossy(),
                min_value: m.to_f64_lossy(),
            });
        }
        return Ok(CharRoots {
            c,
            lambda1: lm,
            lambda2: lm,
            residuals: (m, m),
            near_critical: true,
        });
    }
    let f = |l: S| char_function(l, c, h, gp0);
    let tol = S::tol(REL_TOL);
    let l1 = bisect(f, S::zero(), lm, tol).unwrap_or(lm);
    let hi = grow_until(lm * S::lit(2.0), |l| l > lm && f(l) > S::zero());
    let l2 = bisect(f, lm, hi, tol).unwrap_or(lm);
    Ok(CharRoots {
        c,
        lambda1: l1,
        lambda2: l2,
        residuals: (f(l1), f(l2)),
        near_critical: l2 - l1 < S::lit(1e-6),
    })
}

/// The speed `c_#` at which `χ₀` has a double positive zero, and that zero.
pub fn critical_speed<S: Scalar>(h: S, gp0: S) -> Result<(S, S)> {
    if !(gp0 > S::one()) || h < S::zero() {
        return Err(Error::Domain(format!(
            "need g'(0) > 1 and h >= 0, got g'(0) = {gp0}, h = {h}"
        )));
    }
    // the undelayed speed bounds c_# from above
    let c0 = S::lit(2.0) * (gp0 - S::one()).sqrt();
    let hi = c0 * S::lit(1.001) + S::lit(1e-3);
    let m = |c: S| char_minimum(c, h, gp0).1;
    let c = bisect(m, S::zero(), hi, S::tol(REL_TOL)).ok_or_else(|| {
        Error::Domain("critical speed bracket has no sign change".into())
    })?;
    Ok((c, char_minimum(c, h, gp0).0))
}

/// The positive root of `λ² - μ - 1 + g'(0) e^{-μh} = 0`.
pub fn select_mu<S: Scalar>(lambda: S, h: S, gp0: S) -> S {
    let top = lambda * lambda - S::one() + gp0;
    if h == S::zero() {
        return top;
    }
    let f = |mu: S| lambda * lambda - mu - S::one() + gp0 * (-mu * h).exp();
    bisect(f, S::zero(), top, S::tol(REL_TOL)).unwrap_or(top)
}

/// `c(λ) = μ(λ)/λ`.
pub fn speed_of_decay<S: Scalar>(lambda: S, h: S, gp0: S) -> S {
    select_mu(lambda, h, gp0) / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Selected,
    Saturated,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Selected => "selected",
            Regime::Saturated => "saturated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedSelection<S> {
    pub lambda: S,
    pub mu: S,
    pub c_selected: S,
    pub regime: Regime,
    pub lambda_star: S,
}

/// Asymptotic speed of solutions whose data decay like `e^{λx}` at `-∞`.
///
/// `c_star` is the minimal front speed. It equals `c_#` when `L_g = g'(0)`
/// and otherwise has to be measured; it is never computed here.
pub fn select_speed<S: Scalar>(lambda: S, h: S, gp0: S, c_star: S) -> Result<SpeedSelection<S>> {
    if !(lambda > S::zero()) {
        return Err(Error::Domain(format!("decay rate must be positive, got {lambda}")));
    }
    let (c_sharp, _) = critical_speed(h, gp0)?;
    if c_star < c_sharp - S::lit(CRITICAL_SPEED_TOL) {
        return Err(Error::Domain(format!(
            "c_* = {c_star} is below the critical speed {c_sharp}"
        )));
    }
    let lambda_star = char_roots(c_star, h, gp0)?.lambda1;
    let mu = select_mu(lambda, h, gp0);
    let (c_selected, regime) = if lambda < lambda_star {
        (mu / lambda, Regime::Selected)
    } else {
        (c_star, Regime::Saturated)
    };
    Ok(SpeedSelection {
        lambda,
        mu,
        c_selected,
        regime,
        lambda_star,
    })
}

/// `-γ + cλ - λ² + 1 - g'(0) e^{γh} e^{-λch}`; nonnegative exactly for the
/// admissible `γ`.
#[inline]
pub fn gamma_margin<S: Scalar>(c: S, lambda: S, gamma: S, h: S, gp0: S) -> S {
    -gamma + c * lambda - lambda * lambda + S::one()
        - gp0 * (gamma * h).exp() * (-lambda * c * h).exp()
}

/// Largest `γ >= 0` with nonnegative [`gamma_margin`].
pub fn gamma_max<S: Scalar>(c: S, lambda: S, h: S, gp0: S) -> Result<S> {
    let roots = char_roots(c, h, gp0)?;
    let slack = S::lit(1e-12) * roots.lambda2.max(S::one());
    if lambda < roots.lambda1 - slack || lambda > roots.lambda2 + slack {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside [{}, {}]",
            roots.lambda1, roots.lambda2
        )));
    }
    let top = -char_function(lambda, c, h, gp0);
    if top <= S::zero() {
        return Ok(S::zero());
    }
    if h == S::zero() {
        return Ok(top);
    }
    let f = |g: S| gamma_margin(c, lambda, g, h, gp0);
    Ok(bisect(f, S::zero(), top, S::tol(REL_TOL))
        .map(|g| if f(g) < S::zero() { g * (S::one() - S::epsilon()) } else { g })
        .unwrap_or(S::zero()))
}

/// `(a₋, a₊) = (1/λ) ln [min, max of A(s) e^{-μs} over s ∈ [-h, 0]]`,
/// sampled on `samples + 1` points.
pub fn shift_bounds<S: Scalar>(
    a_fn: impl Fn(S) -> S,
    lambda: S,
    mu: S,
    h: S,
    samples: usize,
) -> (S, S) {
    let n = if h == S::zero() { 0 } else { samples.max(1) };
    let (mut lo, mut hi) = (S::infinity(), S::neg_infinity());
    for i in 0..=n {
        let s = if n == 0 {
            S::zero()
        } else {
            -h + h * S::from_usize_lossy(i) / S::from_usize_lossy(n)
        };
        let v = a_fn(s) * (-mu * s).exp();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo.ln() / lambda, hi.ln() / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn char_function_values() {
        assert_eq!(char_function(0.0, 3.0, 0.7, 2.0), 1.0);
        assert_eq!(char_function(1.0, 2.0, 0.0, 2.0), 0.0);
        let oracle = -2.0 + 2.0 * (-1.0f64).exp();
        assert_abs_diff_eq!(char_function(1.0, 2.0, 0.5, 2.0), oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle, -1.26424, epsilon = 1e-5);
    }

    #[test]
    fn undelayed_roots() {
        let r = char_roots(2.5, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(r.lambda1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lambda2, 2.0, epsilon = 1e-12);
        assert!(!r.near_critical);
        let r = char_roots(2.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(r.lambda1, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(r.lambda2, 1.0, epsilon = 1e-7);
        assert!(r.near_critical);
        assert!(matches!(char_roots(1.0, 0.0, 2.0), Err(Error::NoRealRoots { .. })));
    }

    #[test]
    fn delayed_roots_regression() {
        // two roots of λ² - 2λ - 1 + 2e^{-λ}, by an independent bisection
        let f = |l: f64| l * l - 2.0 * l - 1.0 + 2.0 * (-l).exp();
        let plain = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a).signum() == f(m).signum() {
                    a = m
                } else {
                    b = m
                }
            }
            0.5 * (a + b)
        };
        let (o1, o2) = (plain(0.0, 1.0), plain(1.0, 4.0));
        let r = char_roots(2.0, 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(r.lambda1, o1, epsilon = 1e-13);
        assert_abs_diff_eq!(r.lambda2, o2, epsilon = 1e-13);
        assert_abs_diff_eq!(r.lambda1, 0.290_215_055_777_297_2, epsilon = 1e-13);
        assert_abs_diff_eq!(r.lambda2, 2.344_712_006_748_615_4, epsilon = 1e-13);
    }

    #[test]
    fn critical_speeds() {
        let (c, l) = critical_speed(0.0, 2.0).unwrap();
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-7);
        let (c, _) = critical_speed(0.0, 5.0).unwrap();
        assert_abs_diff_eq!(c, 4.0, epsilon = 1e-12);
        let (c1, _) = critical_speed(1.0, 2.0).unwrap();
        assert!(c1 < 2.0);
    }

    #[test]
    fn mu_and_selection() {
        assert_abs_diff_eq!(select_mu(0.5, 0.0, 2.0), 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(speed_of_decay(0.5, 0.0, 2.0), 2.5, epsilon = 1e-15);
        let mu1: f64 = select_mu(0.5, 1.0, 2.0);
        assert!(mu1 < 1.25 && mu1 > 0.0);
        let f = 0.25 - mu1 - 1.0 + 2.0 * (-mu1).exp();
        assert!(f.abs() <= 1e-13 * 3.0);

        let s = select_speed(0.5f64, 0.0, 2.0, 2.0).unwrap();
        assert_eq!(s.regime, Regime::Selected);
        assert_abs_diff_eq!(s.c_selected, 2.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.lambda_star, 1.0, epsilon = 1e-7);
        let s = select_speed(3.0, 0.0, 2.0, 2.0).unwrap();
        assert_eq!(s.regime, Regime::Saturated);
        assert_eq!(s.c_selected, 2.0);
    }

    #[test]
    fn selection_continuous_at_junction() {
        let (c_sharp, _) = critical_speed(0.5, 2.0).unwrap();
        let star = select_speed(0.1, 0.5, 2.0, 2.4).unwrap().lambda_star;
        let below = select_speed::<f64>(star - 1e-12, 0.5, 2.0, 2.4).unwrap();
        assert_eq!(below.regime, Regime::Selected);
        assert!((below.c_selected - 2.4).abs() < 1e-8);
        assert!(c_sharp < 2.4);
    }

    #[test]
    fn gamma_budget() {
        assert_abs_diff_eq!(gamma_max(2.5, 1.0, 0.0, 2.0).unwrap(), 0.5, epsilon = 1e-15);
        let r = char_roots(2.5, 0.3, 2.0).unwrap();
        assert!(gamma_max(2.5, r.lambda1, 0.3, 2.0).unwrap() <= 1e-12);
        assert!(gamma_max(2.5, r.lambda2, 0.3, 2.0).unwrap() <= 1e-12);
        let g = gamma_max(2.5, 1.0, 0.3, 2.0).unwrap();
        assert!(g > 0.0);
        assert!(gamma_margin(2.5, 1.0, g, 0.3, 2.0) >= 0.0);
        assert!(gamma_margin(2.5, 1.0, g * (1.0 + 1e-9), 0.3, 2.0) < 0.0);
        assert!(matches!(gamma_max(2.5, 3.0, 0.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn shift_bound_cases() {
        let (lam, c, a) = (0.5, 2.5, 3.0);
        let mu = lam * c;
        let (lo, hi) = shift_bounds(|s: f64| a * (lam * c * s).exp(), lam, mu, 0.7, 500);
        assert_abs_diff_eq!(lo, a.ln() / lam, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, a.ln() / lam, epsilon = 1e-12);
        let (lo, hi) = shift_bounds(|_| a, lam, mu, 0.7, 500);
        assert_abs_diff_eq!(lo, a.ln() / lam, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, (a.ln() + mu * 0.7) / lam, epsilon = 1e-12);
        assert_eq!(shift_bounds(|_| 1.0, lam, mu, 0.0, 10), (0.0, 0.0));
    }

    #[test]
    fn single_precision_roots() {
        let r = char_roots(2.5f32, 0.0, 2.0).unwrap();
        assert!((r.lambda1 - 0.5).abs() < 1e-5);
        assert!((r.lambda2 - 2.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn roots_are_roots(gp0 in 1.1f64..6.0, h in 0.0f64..2.0, dc in 0.0f64..3.0) {
            let (cs, _) = critical_speed(h, gp0).unwrap();
            let r = char_roots(cs + dc, h, gp0).unwrap();
            prop_assert!(r.lambda1 <= r.lambda2 && r.lambda1 > 0.0);
            prop_assert!(r.residuals.0.abs() <= 1e-12 * (1.0 + gp0));
            prop_assert!(r.residuals.1.abs() <= 1e-12 * (1.0 + gp0));
        }

        #[test]
        fn slow_root_of_selected_speed(gp0 in 1.1f64..6.0, h in 0.0f64..2.0, frac in 0.05f64..0.95) {
            let (cs, ls) = critical_speed(h, gp0).unwrap();
            let lam = ls * frac;
            let c = speed_of_decay(lam, h, gp0);
            prop_assert!(c >= cs);
            let r = char_roots(c, h, gp0).unwrap();
            prop_assert!((r.lambda1 - lam).abs() <= 1e-9);
        }

        #[test]
        fn gamma_positive_inside(gp0 in 1.1f64..6.0, h in 0.0f64..2.0, dc in 0.05f64..3.0, t in 0.05f64..0.95) {
            let (cs, _) = critical_speed(h, gp0).unwrap();
            let c = cs + dc;
            let r = char_roots(c, h, gp0).unwrap();
            let lam = r.lambda1 + t * (r.lambda2 - r.lambda1);
            let g = gamma_max(c, lam, h, gp0).unwrap();
            prop_assert!(g > 0.0);
            prop_assert!(gamma_margin(c, lam, g, h, gp0) >= -1e-12);
        }
    }
}
