//! Adaptive Simpson quadrature with interval halving and a Richardson
//! correction on accepted panels.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;
const SEED_PANELS: usize = 64;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidParameter(format!(
            "bad integration interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    // a coarse pass sets the absolute tolerance and seeds the recursion, so
    // narrow features cannot hide between the first three nodes
    let h = (b - a) / SEED_PANELS as f64;
    let nodes: Vec<f64> = (0..=2 * SEED_PANELS).map(|i| f(a + 0.5 * h * i as f64)).collect();
    let coarse: f64 = (0..SEED_PANELS)
        .map(|i| simpson(0.0, h, nodes[2 * i], nodes[2 * i + 1], nodes[2 * i + 2]).abs())
        .sum();
    let tol = rel_tol * coarse.max(f64::MIN_POSITIVE) / SEED_PANELS as f64;
    let value: f64 = (0..SEED_PANELS)
        .map(|i| {
            let (lo, hi) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (fa, fc, fb) = (nodes[2 * i], nodes[2 * i + 1], nodes[2 * i + 2]);
            recurse(&f, lo, hi, fa, fc, fb, simpson(lo, hi, fa, fc, fb), tol, MAX_DEPTH)
        })
        .sum();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter("integrand is not finite".into()))
    }
}

/// Integrates over a union of consecutive intervals given by `breaks`.
pub fn integrate_pieces<F>(f: F, breaks: &[f64], rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    breaks
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], rel_tol))
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fc: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fc + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(f: &F, a: f64, b: f64, fa: f64, fc: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = simpson(a, c, fa, fd, fc);
    let right = simpson(c, b, fc, fe, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, c, fa, fd, fc, left, 0.5 * tol, depth - 1)
        + recurse(f, c, b, fc, fe, fb, right, 0.5 * tol, depth - 1)
}
