//! Adaptive quadrature over the real line for the smoothing-kernel moments.
//!
//! Integrands here are smooth away from a kink at the origin and decay at
//! least exponentially. The line is split at zero and each half mapped onto
//! the unit interval by `x = t / (1 - t)`; an adaptive Simpson rule with
//! Richardson error control then drives the absolute error below the
//! requested tolerance.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadError {
    #[error("quadrature failed to reach tolerance {tol:.1e} (best error {best:.1e})")]
    NoConvergence { tol: f64, best: f64 },
}

const MAX_DEPTH: u32 = 60;

/// Integrate `f` over the whole real line to absolute tolerance `abs_tol`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Result<f64, QuadError> {
    let pos = integrate_half_line(|x| f(x), abs_tol / 2.0)?;
    let neg = integrate_half_line(|x| f(-x), abs_tol / 2.0)?;
    Ok(pos + neg)
}

/// Integrate `f` over `[0, inf)` to absolute tolerance `abs_tol`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Result<f64, QuadError> {
    // x = t / (1 - t) maps [0, 1) onto [0, inf); the Jacobian is (1 - t)^-2.
    let g = |t: f64| {
        if t >= 1.0 - 1e-14 {
            return 0.0;
        }
        let om = 1.0 - t;
        f(t / om) / (om * om)
    };
    adaptive_simpson(&g, 0.0, 1.0, abs_tol)
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, abs_tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = (left + right - whole) / 15.0;
    if err.abs() <= tol {
        return Ok(left + right + err);
    }
    if depth == 0 {
        return Err(QuadError::NoConvergence {
            tol,
            best: err.abs(),
        });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}
