//! Tanh-sinh (double exponential) quadrature on a finite interval.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Truncation of the transformed variable; weights beyond it are below 1e-95.
const T_MAX: f64 = 5.0;
const MIN_LEVEL: u32 = 3;
const MAX_LEVEL: u32 = 12;

/// Relative (to the L1 mass) change between successive levels accepted as converged.
pub const DEFAULT_TOL: f64 = 1e-13;

/// A quadrature node on `[0, len]`: the point, its log and its distance to `len`.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub ln_x: f64,
    pub to_end: f64,
}

fn node(len: f64, ln_len: f64, t: f64) -> (Node, f64) {
    let u = FRAC_PI_2 * t.sinh();
    let e = (-2.0 * u.abs()).exp();
    let dxdt = len * FRAC_PI_2 * t.cosh() * 2.0 * e / ((1.0 + e) * (1.0 + e));
    let n = if u >= 0.0 {
        Node {
            x: len / (1.0 + e),
            ln_x: ln_len - e.ln_1p(),
            to_end: len * e / (1.0 + e),
        }
    } else {
        Node {
            x: len * e / (1.0 + e),
            ln_x: ln_len - 2.0 * u.abs() - e.ln_1p(),
            to_end: len / (1.0 + e),
        }
    };
    (n, dxdt)
}

/// `int_0^len f(node) dx`. The node carries `ln x` computed without
/// underflow, so integrands with log singularities at 0 can use it directly.
pub fn tanh_sinh<F: Fn(Node) -> f64>(len: f64, tol: f64, f: F) -> Result<f64> {
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::Quadrature(format!(
            "interval length must be positive, got {len}"
        )));
    }
    let ln_len = len.ln();
    let eval = |t: f64| -> f64 {
        let (n, w) = node(len, ln_len, t);
        if w == 0.0 {
            return 0.0;
        }
        let v = f(n) * w;
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut abs_sum = sum.abs();
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        let t = k as f64 * h;
        for v in [eval(t), eval(-t)] {
            sum += v;
            abs_sum += v.abs();
        }
        k += 1;
    }
    let mut prev = sum * h;
    for level in 1..=MAX_LEVEL {
        h /= 2.0;
        let mut k = 1;
        while k as f64 * h <= T_MAX {
            let t = k as f64 * h;
            for v in [eval(t), eval(-t)] {
                sum += v;
                abs_sum += v.abs();
            }
            k += 2;
        }
        let est = sum * h;
        if !est.is_finite() {
            return Err(Error::Quadrature("non-finite integrand value".into()));
        }
        if level >= MIN_LEVEL && (est - prev).abs() <= tol * (abs_sum * h).max(f64::MIN_POSITIVE) {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::Quadrature(format!(
        "no convergence after {MAX_LEVEL} levels"
    )))
}
