//! Small numerical kernels: bracketing bisection, golden-section search,
//! ordinary least squares, a prefactored tridiagonal solver and a banded
//! elimination.

// index loops follow the recurrences as written
#![allow(clippy::needless_range_loop)]

use crate::scalar::Scalar;

const MAX_BISECT: usize = 400;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `rel_tol * max(|lo|, |hi|, 1)` or
/// cannot be split further, and returns whichever endpoint has the smaller
/// residual. Returns `None` if `f(lo)` and `f(hi)` share a strict sign.
pub fn bisect<S: Scalar, F: Fn(S) -> S>(f: F, lo: S, hi: S, rel_tol: S) -> Option<S> {
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == S::zero() {
        return Some(lo);
    }
    if fhi == S::zero() {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let two = S::lit(2.0);
    for _ in 0..MAX_BISECT {
        let scale = lo.abs().max(hi.abs()).max(S::one());
        if hi - lo <= rel_tol * scale {
            break;
        }
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == S::zero() {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Some(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]` to absolute
/// tolerance `tol` in the argument.
pub fn golden_section<S: Scalar, F: FnMut(S) -> S>(mut f: F, lo: S, hi: S, tol: S) -> (S, S) {
    let inv_phi = (S::lit(5.0).sqrt() - S::one()) / S::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<S> {
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
    pub n: usize,
}

/// Ordinary least squares `y = slope * x + intercept`. `None` for fewer than
/// two points or zero spread in `x`.
pub fn linear_fit<S: Scalar>(xs: &[S], ys: &[S]) -> Option<LinearFit<S>> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = S::from_usize_lossy(n);
    let mx = xs[..n].iter().copied().sum::<S>() / nf;
    let my = ys[..n].iter().copied().sum::<S>() / nf;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    let mut syy = S::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx <= S::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= S::zero() {
        S::one()
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        n,
    })
}

/// Tridiagonal matrix with the forward sweep of the Thomas algorithm done
/// once. Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
#[derive(Debug, Clone)]
pub struct Tridiagonal<S> {
    lower: Vec<S>,
    upper_mod: Vec<S>,
    denom: Vec<S>,
}

impl<S: Scalar> Tridiagonal<S> {
    /// Factors the matrix. Fails on a zero pivot.
    pub fn factor(lower: &[S], diag: &[S], upper: &[S]) -> Option<Self> {
        let n = diag.len();
        assert!(lower.len() == n && upper.len() == n, "band lengths differ");
        let mut upper_mod = vec![S::zero(); n];
        let mut denom = vec![S::zero(); n];
        let mut prev = S::zero();
        for i in 0..n {
            let l = if i == 0 { S::zero() } else { lower[i] };
            let d = diag[i] - l * prev;
            if d == S::zero() || !d.is_finite() {
                return None;
            }
            denom[i] = d;
            upper_mod[i] = if i + 1 < n { upper[i] / d } else { S::zero() };
            prev = upper_mod[i];
        }
        Some(Self {
            lower: lower.to_vec(),
            upper_mod,
            denom,
        })
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    /// Solves in place: `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [S]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        let mut prev = S::zero();
        for i in 0..n {
            let l = if i == 0 { S::zero() } else { self.lower[i] };
            let v = (rhs[i] - l * prev) / self.denom[i];
            rhs[i] = v;
            prev = v;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] = rhs[i] - self.upper_mod[i] * rhs[i + 1];
        }
    }
}

/// Square banded matrix with `kl` sub- and `ku` superdiagonals, solved by
/// Gaussian elimination without pivoting. Meant for the diagonally heavy
/// Jacobians of discretized second-order operators.
#[derive(Debug, Clone)]
pub struct Banded<S> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<S>,
}

impl<S: Scalar> Banded<S> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![S::zero(); n * (kl + ku + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: S) {
        let k = self.slot(i, j);
        self.data[k] = self.data[k] + v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        if j + self.kl < i || j > i + self.ku {
            S::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Solves `A x = rhs` in place, consuming the matrix. `None` on a zero
    /// pivot.
    pub fn solve(mut self, rhs: &mut [S]) -> Option<()> {
        let n = self.n;
        for p in 0..n {
            let piv = self.data[self.slot(p, p)];
            if piv == S::zero() || !piv.is_finite() {
                return None;
            }
            let last_row = (p + self.kl).min(n - 1);
            let last_col = (p + self.ku).min(n - 1);
            for r in p + 1..=last_row {
                let f = self.data[self.slot(r, p)] / piv;
                if f == S::zero() {
                    continue;
                }
                for col in p..=last_col {
                    let a = self.data[self.slot(p, col)];
                    let k = self.slot(r, col);
                    self.data[k] = self.data[k] - f * a;
                }
                rhs[r] = rhs[r] - f * rhs[p];
            }
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for j in i + 1..=(i + self.ku).min(n - 1) {
                v = v - self.data[self.slot(i, j)] * rhs[j];
            }
            rhs[i] = v / self.data[self.slot(i, i)];
        }
        Some(())
    }
}
