//! Small numerical helpers: adaptive 1-D quadrature and bisection.

use crate::error::{Error, Result};

/// Adaptive Simpson integration of `f` on `[a, b]` to relative tolerance
/// `rel_tol`.
///
/// A composite pre-pass over 64 panels sets the absolute error budget, so
/// integrands whose mass sits in a small corner of a long interval (radial
/// tails cut off far out) are calibrated sensibly. Each panel is then
/// refined adaptively.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(b >= a) {
        return Err(Error::InvalidArgument(format!(
            "bad integration interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut panels = Vec::with_capacity(PANELS);
    let mut scale = 0.0;
    let mut fa = f(a);
    for i in 0..PANELS {
        let x0 = a + i as f64 * h;
        let x1 = if i + 1 == PANELS { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let fm = f(xm);
        let fb = f(x1);
        let est = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
        scale += est.abs();
        panels.push((x0, x1, fa, fm, fb, est));
        fa = fb;
    }
    let scale = scale.max(1e-300);
    let abs_tol = rel_tol * scale;
    // Increments below this are rounding noise, not signal.
    let floor = 1e-16 * scale;

    let mut total = 0.0;
    for (x0, x1, fa, fm, fb, est) in panels {
        total += simpson_recurse(
            f,
            x0,
            x1,
            fa,
            fm,
            fb,
            est,
            abs_tol / PANELS as f64,
            floor,
            55,
        )?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    tol_floor: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol.max(tol_floor) || lm <= a || rm >= b {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "adaptive quadrature did not converge on [{a}, {b}]; last increment {:.3e} vs tolerance {:.3e}",
            delta.abs(),
            15.0 * tol
        )));
    }
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, tol_floor, depth - 1)?;
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, tol_floor, depth - 1)?;
    Ok(l + r)
}

/// Bisection for the root of a continuous `f` on `[lo, hi]` given
/// `f(lo)` and `f(hi)` of opposite sign, to absolute tolerance `tol` on
/// the abscissa.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numeric(format!(
            "bisection bracket [{lo}, {hi}] does not change sign"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break; // interval at floating point resolution
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomials_and_exponentials() {
        let f = |x: f64| x * x;
        assert_relative_eq!(
            adaptive_simpson(&f, 0.0, 1.0, 1e-10).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-10
        );
        let g = |x: f64| (-x).exp();
        assert_relative_eq!(
            adaptive_simpson(&g, 0.0, 30.0, 1e-10).unwrap(),
            1.0 - (-30.0f64).exp(),
            max_relative = 1e-9
        );
        // Mildly singular derivative at 0, as for the Matern nu=1/4 radial
        // integrand.
        let h = |x: f64| x.sqrt();
        assert_relative_eq!(
            adaptive_simpson(&h, 0.0, 1.0, 1e-9).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn bisect_finds_roots() {
        let f = |x: f64| x * x - 2.0;
        let r = bisect(&f, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(r, 2.0f64.sqrt(), epsilon = 1e-11);
        assert!(bisect(&f, 3.0, 4.0, 1e-12).is_err());
    }
}
