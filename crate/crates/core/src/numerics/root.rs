use crate::{Error, Result};

const MAX_ITER: usize = 500;

/// Bracketed root of `f` on `[lo, hi]`.
///
/// Safeguarded secant: a secant step is taken whenever it lands strictly
/// inside the bracket and the previous step at least halved the bracket,
/// otherwise the bracket is bisected. Stops once the bracket is no wider
/// than `tol` and returns its midpoint (or an exact zero if one is hit).
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("root tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut last_width = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let width = b - a;
        if width <= tol {
            break;
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let use_secant = width <= 0.5 * last_width && secant > a && secant < b;
        let x = if use_secant { secant } else { a + 0.5 * width };
        last_width = width;

        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // A secant step that barely moves one side is followed by bisection.
        if use_secant && (b - a) > 0.5 * width {
            last_width = 0.0;
        }
    }
    Ok(0.5 * (a + b))
}

/// Widen `[lo, hi]` geometrically around its centre until `f` changes sign.
pub fn expand_bracket<F>(mut f: F, lo: f64, hi: f64, max_steps: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    for _ in 0..=max_steps {
        let (fa, fb) = (f(a), f(b));
        if fa.is_finite() && fb.is_finite() && (fa == 0.0 || fb == 0.0 || fa.signum() != fb.signum())
        {
            return Ok((a, b));
        }
        let centre = 0.5 * (a + b);
        let half = b - a;
        a = centre - half;
        b = centre + half;
    }
    Err(Error::NoSignChange {
        lo: a,
        hi: b,
        f_lo: f(a),
        f_hi: f(b),
    })
}
