//! Bracketed scalar root finding (Brent's method).

use crate::error::{PfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    /// Final bracket, `lo <= x <= hi`.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Find a root of `f` in `[lo, hi]`, stopping once the bracket is narrower
/// than `xtol` or `|f| <= ftol`. `f(lo)` and `f(hi)` must differ in sign.
pub fn brent(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Root> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, lo: a, hi: a, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, lo: b, hi: b, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(PfiError::Bracket(format!(
            "f({a}) = {fa:e} and f({b}) = {fb:e} have the same sign"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=max_iter {
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
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb.abs() <= ftol {
            let (l, h) = if b < c { (b, c) } else { (c, b) };
            return Ok(Root { x: b, fx: fb, lo: l, hi: h, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
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
        fb = f(b)?;
    }
    Err(PfiError::Numerical(format!(
        "root finder did not converge in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_roots() {
        let r = brent(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, 0.0, 100).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
        assert!(r.lo <= r.x && r.x <= r.hi);
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-12, 0.0, 100).unwrap();
        assert!((r.x - 0.739_085_133_215_160_6).abs() < 1e-11);
    }

    #[test]
    fn step_function_is_bisected() {
        let r = brent(|x| Ok(if x < 0.3 { -1.0 } else { 1.0 }), 0.0, 1.0, 1e-9, 0.0, 200).unwrap();
        assert!((r.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn same_sign_is_bracket_error() {
        assert!(matches!(
            brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-9, 0.0, 100),
            Err(PfiError::Bracket(_))
        ));
    }
}
