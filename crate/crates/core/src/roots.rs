//! Scalar root finding: a bracketed Newton iteration that falls back to
//! bisection, plus Brent's method for derivative-free problems.
//!
//! Every time equation in this crate (Kepler-type phase equations, the
//! retarded-time condition, the light-time condition) is strictly monotone on
//! its bracket, so a sign change on the bracket guarantees a unique root.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("bracket [{lo}, {hi}] does not enclose a sign change (f(lo)={f_lo}, f(hi)={f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function returned a non-finite value at x={x}")]
    NonFinite { x: f64 },
    #[error("no convergence after {iterations} iterations (bracket width {width})")]
    NoConvergence { iterations: usize, width: f64 },
}

/// A converged root together with some diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    /// True when the bisection fallback had to take over.
    pub used_fallback: bool,
}

/// Settings for [`newton_bracketed`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Absolute tolerance on the step / bracket width.
    pub x_tol: f64,
    /// Newton iterations allowed before switching to pure bisection.
    pub max_newton: usize,
    /// Hard cap on bisection iterations after the switch.
    pub max_bisection: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { x_tol: 1e-13, max_newton: 50, max_bisection: 200 }
    }
}

/// Newton iteration kept inside a sign-changing bracket.
///
/// `f` returns `(value, derivative)`. A Newton step that leaves the bracket or
/// fails to shrink it fast enough is replaced by a bisection step. After
/// `max_newton` iterations the remaining work is plain bisection.
pub fn newton_bracketed<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    x0: f64,
    settings: NewtonSettings,
) -> Result<Root, RootError>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if !f_lo.is_finite() {
        return Err(RootError::NonFinite { x: lo });
    }
    if !f_hi.is_finite() {
        return Err(RootError::NonFinite { x: hi });
    }
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    // orient so that f(lo) < 0 < f(hi)
    let increasing = f_lo < 0.0;

    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut dx_old = hi - lo;
    let mut dx = dx_old;
    let (mut fx, mut dfx) = f(x);
    let mut used_fallback = false;

    for it in 1..=settings.max_newton {
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x });
        }
        if fx == 0.0 {
            return Ok(Root { x, residual: 0.0, iterations: it, used_fallback });
        }
        let newton_out = {
            let a = (x - hi) * dfx - fx;
            let b = (x - lo) * dfx - fx;
            a * b > 0.0 || dfx == 0.0
        };
        if newton_out || (2.0 * fx).abs() > (dx_old * dfx).abs() {
            dx_old = dx;
            dx = 0.5 * (hi - lo);
            x = lo + dx;
            used_fallback = true;
        } else {
            dx_old = dx;
            dx = fx / dfx;
            x -= dx;
        }
        if dx.abs() <= settings.x_tol {
            let (fr, _) = f(x);
            return Ok(Root { x, residual: fr, iterations: it, used_fallback });
        }
        let eval = f(x);
        fx = eval.0;
        dfx = eval.1;
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
    }

    // plain bisection on what is left of the bracket
    used_fallback = true;
    for it in 0..settings.max_bisection {
        let mid = 0.5 * (lo + hi);
        let (fm, _) = f(mid);
        if !fm.is_finite() {
            return Err(RootError::NonFinite { x: mid });
        }
        let stalled = mid == lo || mid == hi;
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= settings.x_tol || fm == 0.0 || stalled {
            return Ok(Root {
                x: mid,
                residual: fm,
                iterations: settings.max_newton + it + 1,
                used_fallback,
            });
        }
    }
    Err(RootError::NoConvergence {
        iterations: settings.max_newton + settings.max_bisection,
        width: hi - lo,
    })
}

/// Plain bisection to absolute tolerance `x_tol`.
pub fn bisection<F>(mut f: F, lo: f64, hi: f64, x_tol: f64, max_iter: usize) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let increasing = f_lo < 0.0;
    for it in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(RootError::NonFinite { x: mid });
        }
        if fm == 0.0 || hi - lo <= x_tol || mid == lo || mid == hi {
            return Ok(Root { x: mid, residual: fm, iterations: it, used_fallback: false });
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(RootError::NoConvergence { iterations: max_iter, width: hi - lo })
}

/// Brent's method (inverse quadratic interpolation with bisection safeguard).
pub fn brent<F>(mut f: F, lo: f64, hi: f64, x_tol: f64, max_iter: usize) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0, used_fallback: false });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { lo, hi, f_lo: fa, f_hi: fb });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root { x: b, residual: fb, iterations: it, used_fallback: false });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(RootError::NonFinite { x: b });
        }
    }
    Err(RootError::NoConvergence { iterations: max_iter, width: (c - b).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_sqrt2() {
        let r = newton_bracketed(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1.0, NewtonSettings::default()).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
        assert!(!r.used_fallback);
    }

    #[test]
    fn newton_survives_flat_start() {
        // derivative vanishes at the initial guess
        let r = newton_bracketed(|x| (x.powi(3) - 0.001, 3.0 * x * x), -1.0, 1.0, 0.0, NewtonSettings::default())
            .unwrap();
        assert!((r.x - 0.1).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn newton_falls_back_to_bisection() {
        // a deliberately wrong derivative keeps Newton from converging
        let settings = NewtonSettings { x_tol: 1e-12, max_newton: 3, max_bisection: 200 };
        let r = newton_bracketed(|x| (x - 0.3, 1e-6), 0.0, 1.0, 0.9, settings).unwrap();
        assert!(r.used_fallback);
        assert!((r.x - 0.3).abs() < 1e-11, "{r:?}");
    }

    #[test]
    fn no_sign_change_is_reported() {
        let err = newton_bracketed(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 0.0, NewtonSettings::default());
        assert!(matches!(err, Err(RootError::NoSignChange { .. })));
        assert!(matches!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100), Err(RootError::NoSignChange { .. })));
    }

    #[test]
    fn brent_and_bisection_agree() {
        let f = |x: f64| x.cos() - x;
        let a = brent(f, 0.0, 1.0, 1e-14, 100).unwrap();
        let b = bisection(f, 0.0, 1.0, 1e-14, 200).unwrap();
        assert!((a.x - 0.739_085_133_215_160_6).abs() < 1e-13);
        assert!((a.x - b.x).abs() < 1e-13);
        assert!(a.iterations < b.iterations);
    }
}
