//! Gamma-family special functions and the truncated harmonic sums
//! `h_i(n, d) = sum_{k=0}^{n-1} (k + d)^{-i}` that every weight formula uses.
//!
//! Digamma and polygamma shift the argument upward with the recurrence
//! `psi^{(j)}(x + 1) = psi^{(j)}(x) + (-1)^j j! x^{-j-1}` and finish with the
//! Bernoulli asymptotic series.

use crate::error::{domain, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Above this many terms harmonic sums switch to compensated accumulation.
pub const COMPENSATION_THRESHOLD: usize = 10_000_000;

/// B_2, B_4, ..., B_20.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

fn check_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x <= 0.0 {
        return domain(format!("argument must be finite and positive, got {x}"));
    }
    Ok(())
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// psi(x) = D log Gamma(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_arg(x)?;
    let mut shift = 0.0;
    let mut z = x;
    while z < 8.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut pow = inv2;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        series += b / (2.0 * (k + 1) as f64) * pow;
        pow *= inv2;
    }
    Ok(shift + z.ln() - 0.5 / z - series)
}

/// psi^{(j)}(x), the j-th derivative of digamma, for j >= 1 and x > 0.
pub fn polygamma(order: u32, x: f64) -> Result<f64> {
    if order < 1 {
        return domain("polygamma order must be >= 1 (use digamma for order 0)");
    }
    check_arg(x)?;
    let j = order;
    let jf = factorial(j);
    let sign_shift = if j.is_multiple_of(2) { 1.0 } else { -1.0 }; // (-1)^j
                                                                   // higher orders need a larger argument for the asymptotic tail to be negligible
    let threshold = 8.0 + j as f64;

    let mut shift = 0.0;
    let mut z = x;
    while z < threshold {
        shift -= sign_shift * jf * z.powi(-(j as i32) - 1);
        z += 1.0;
    }

    let mut series = factorial(j - 1) / z.powi(j as i32) + jf / (2.0 * z.powi(j as i32 + 1));
    // (2k + j - 1)! / (2k)! tracked incrementally
    let mut ratio = factorial(j - 1);
    let inv2 = 1.0 / (z * z);
    let mut pow = z.powi(-(j as i32)) * inv2;
    for (k0, b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = (k0 + 1) as f64;
        let top = 2.0 * k + j as f64 - 1.0;
        ratio *= top * (top - 1.0) / ((2.0 * k) * (2.0 * k - 1.0));
        series += b * ratio * pow;
        pow *= inv2;
    }
    let outer = if j % 2 == 1 { 1.0 } else { -1.0 }; // (-1)^{j+1}
    Ok(shift + outer * series)
}

fn check_offset(offset: f64) -> Result<()> {
    if !offset.is_finite() || offset <= 0.0 {
        return domain(format!(
            "harmonic offset must be finite and positive, got {offset}"
        ));
    }
    Ok(())
}

/// `sum_{k=0}^{n-1} (k + offset)^{-order}` accumulated in increasing k.
pub fn harmonic_sum(order: u32, n: usize, offset: f64) -> Result<f64> {
    if order < 1 {
        return domain("harmonic sum order must be >= 1");
    }
    check_offset(offset)?;
    let term = |k: usize| (k as f64 + offset).powi(-(order as i32));
    if n <= COMPENSATION_THRESHOLD {
        Ok((0..n).fold(0.0, |acc, k| acc + term(k)))
    } else {
        Ok(neumaier((0..n).map(term)))
    }
}

fn neumaier(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// Prefix table of `h_i(n, d)` for n = 0..=n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTable {
    order: u32,
    offset: f64,
    values: Vec<f64>,
}

impl HarmonicTable {
    pub fn new(order: u32, n_max: usize, offset: f64) -> Result<Self> {
        if order < 1 {
            return domain("harmonic table order must be >= 1");
        }
        check_offset(offset)?;
        let mut values = Vec::with_capacity(n_max + 1);
        values.push(0.0);
        let compensated = n_max > COMPENSATION_THRESHOLD;
        let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
        for k in 0..n_max {
            let t = (k as f64 + offset).powi(-(order as i32));
            if compensated {
                let s = sum + t;
                if sum.abs() >= t.abs() {
                    comp += (sum - s) + t;
                } else {
                    comp += (t - s) + sum;
                }
                sum = s;
                values.push(sum + comp);
            } else {
                sum += t;
                values.push(sum);
            }
        }
        Ok(Self {
            order,
            offset,
            values,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// h_i(n, d); panics if n exceeds the table.
    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `s[n] = sum_{k=n}^{upper} (k + offset)^{-order}` for n = 0..=upper + 1,
/// accumulated downward from k = upper so that the short tails are exact.
pub fn harmonic_suffix(order: u32, upper: usize, offset: f64) -> Result<Vec<f64>> {
    if order < 1 {
        return domain("harmonic suffix order must be >= 1");
    }
    check_offset(offset)?;
    let mut out = vec![0.0; upper + 2];
    let mut acc = 0.0;
    for k in (0..=upper).rev() {
        acc += (k as f64 + offset).powi(-(order as i32));
        out[k] = acc;
    }
    Ok(out)
}
