//! Fractional coefficients `pi_n(d)` and the weight sequences that turn them
//! into d-derivatives.
//!
//! `D_d^m (T^{1/2-d} pi_n(d)) = T^{1/2-d} pi_n(d) R_{T,n}^{(m)}(d)` with
//! `R^{(1)} = -log T + h_1(n, d)` and `R^{(m+1)} = D_d R^{(m)} + R^{(1)} R^{(m)}`.
//! Two independent evaluation routes are provided: the recursion expanded
//! symbolically over `{R^{(1)}, h_2, h_3, ...}` ([`weights_recursive`]) and the
//! Faà di Bruno closed form over set-partition tuples ([`weights_closed_form`]).

use std::collections::BTreeMap;

use crate::error::{domain, Error, Result};
use crate::specfun::{digamma, polygamma, HarmonicTable};

/// Highest derivative order accepted when building weight tables.
pub const MAX_VALIDATED_ORDER: u32 = 10;
/// Largest memory parameter accepted when building weight tables.
pub const MAX_VALIDATED_D: f64 = 3.0;
/// Practical cap for partition enumeration (coefficients stay within u64).
pub const MAX_PARTITION_ORDER: u32 = 20;

/// pi_0(d), ..., pi_{n_max}(d) by `pi_n = pi_{n-1} (d + n - 1) / n`.
pub fn pi_coeffs(d: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for n in 1..=n_max {
        let prev = out[n - 1];
        out.push(prev * (d + n as f64 - 1.0) / n as f64);
    }
    out
}

/// `D_d^m pi_n(d)`, computed as `pi_n(d) * rho_n^{(m)}(d)` where rho is the
/// weight with the `-log T` term removed.
pub fn dpi(m: u32, n: usize, d: f64) -> Result<f64> {
    if !d.is_finite() || d <= 0.0 {
        return domain(format!("dpi needs d > 0, got {d}"));
    }
    if m > MAX_PARTITION_ORDER {
        return domain(format!("dpi order {m} exceeds cap {MAX_PARTITION_ORDER}"));
    }
    let pi = pi_coeffs(d, n)[n];
    if m == 0 {
        return Ok(pi);
    }
    let mut h = vec![0.0; m as usize + 1];
    for (i, slot) in h.iter_mut().enumerate().skip(1) {
        *slot = crate::specfun::harmonic_sum(i as u32, n, d)?;
    }
    let tuples = faa_di_bruno_partitions(m)?;
    Ok(pi * closed_form_value(&tuples, h[1], &derivative_terms_finite(&h)))
}

/// An m-tuple `(j_1, ..., j_m)` with `sum i j_i = m` and its Faà di Bruno
/// coefficient `m! / prod(j_i! (i!)^{j_i})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionTuple {
    pub m: u32,
    pub j: Vec<u32>,
    pub coefficient: u64,
}

impl PartitionTuple {
    /// Number of blocks, `j_1 + ... + j_m`.
    pub fn blocks(&self) -> u32 {
        self.j.iter().sum()
    }
}

fn factorial_u128(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// Every tuple with `sum i j_i = m`, in ascending lexicographic order of `j`.
pub fn faa_di_bruno_partitions(m: u32) -> Result<Vec<PartitionTuple>> {
    if !(1..=MAX_PARTITION_ORDER).contains(&m) {
        return domain(format!(
            "partition order must lie in 1..={MAX_PARTITION_ORDER}, got {m}"
        ));
    }
    let mut out = Vec::new();
    let mut current = vec![0u32; m as usize];
    enumerate_tuples(m, 1, m, &mut current, &mut out);
    Ok(out)
}

fn enumerate_tuples(
    m: u32,
    i: u32,
    remaining: u32,
    current: &mut Vec<u32>,
    out: &mut Vec<PartitionTuple>,
) {
    if i == m {
        if remaining.is_multiple_of(m) {
            current[(i - 1) as usize] = remaining / m;
            out.push(PartitionTuple {
                m,
                j: current.clone(),
                coefficient: partition_coefficient(m, current),
            });
            current[(i - 1) as usize] = 0;
        }
        return;
    }
    for j in 0..=remaining / i {
        current[(i - 1) as usize] = j;
        enumerate_tuples(m, i + 1, remaining - i * j, current, out);
    }
    current[(i - 1) as usize] = 0;
}

fn partition_coefficient(m: u32, j: &[u32]) -> u64 {
    let mut denom: u128 = 1;
    for (idx, &ji) in j.iter().enumerate() {
        let i = idx as u32 + 1;
        denom *= factorial_u128(ji) * factorial_u128(i).pow(ji);
    }
    let num = factorial_u128(m);
    debug_assert_eq!(num % denom, 0);
    (num / denom) as u64
}

/// Evaluates `sum c prod g_i^{j_i}` given `g_1` and `g[i] = D^{i-1} R^{(1)}` for i >= 2.
fn closed_form_value(tuples: &[PartitionTuple], g1: f64, g: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in tuples {
        let mut prod = t.coefficient as f64;
        for (idx, &ji) in t.j.iter().enumerate() {
            if ji == 0 {
                continue;
            }
            let i = idx + 1;
            let base = if i == 1 { g1 } else { g[i] };
            prod *= base.powi(ji as i32);
        }
        total += prod;
    }
    total
}

/// `D^{i-1} R^{(1)} = (-1)^{i-1} (i-1)! h_i` for the finite-sample weights.
fn derivative_terms_finite(h: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; h.len()];
    let mut fact = 1.0;
    for i in 2..h.len() {
        fact *= (i - 1) as f64;
        let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
        g[i] = sign * fact * h[i];
    }
    g
}

/// Polynomial in `x = R^{(1)}` and the harmonic sums `h_2, h_3, ...` with
/// integer coefficients. Exponent slot 0 is `x`, slot k >= 1 is `h_{k+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeightPolynomial {
    terms: BTreeMap<Vec<u32>, i64>,
}

impl WeightPolynomial {
    fn unit_x(slots: usize) -> Self {
        let mut e = vec![0; slots];
        e[0] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, 1);
        Self { terms }
    }

    fn add(&mut self, key: Vec<u32>, coef: i64) {
        let entry = self.terms.entry(key.clone()).or_insert(0);
        *entry += coef;
        if *entry == 0 {
            self.terms.remove(&key);
        }
    }

    /// `D p + x p` using `D x = -h_2` and `D h_i = -i h_{i+1}`.
    fn step(&self) -> Self {
        let mut next = Self::default();
        for (exps, &c) in &self.terms {
            for slot in 0..exps.len() {
                let power = exps[slot];
                if power == 0 {
                    continue;
                }
                // slot 0 is x (D x = -h_2); slot k is h_{k+1} (D h_{k+1} = -(k+1) h_{k+2})
                let factor = if slot == 0 { -1 } else { -((slot + 1) as i64) };
                let mut e = exps.clone();
                e[slot] -= 1;
                e[slot + 1] += 1;
                next.add(e, c * power as i64 * factor);
            }
            let mut e = exps.clone();
            e[0] += 1;
            next.add(e, c);
        }
        next
    }

    /// Terms as `(coefficient, exponents)`.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &[u32])> {
        self.terms.iter().map(|(e, &c)| (c, e.as_slice()))
    }

    /// Coefficient of `x^a prod h_i^{b_i}`; `h_powers[k]` is the power of `h_{k+2}`.
    pub fn coefficient(&self, x_power: u32, h_powers: &[u32]) -> i64 {
        let slots = self.terms.keys().next().map_or(0, Vec::len);
        let mut key = vec![0; slots];
        key[0] = x_power;
        for (k, &b) in h_powers.iter().enumerate() {
            if b > 0 {
                if k + 1 >= slots {
                    return 0;
                }
                key[k + 1] = b;
            }
        }
        self.terms.get(&key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates with `x` and `h[i]` holding `h_i` for i >= 2 (h[0], h[1] unused).
    pub fn eval(&self, x: f64, h: &[f64]) -> f64 {
        let mut total = 0.0;
        for (exps, &c) in &self.terms {
            let mut prod = c as f64;
            for (slot, &p) in exps.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let base = if slot == 0 { x } else { h[slot + 1] };
                prod *= base.powi(p as i32);
            }
            total += prod;
        }
        total
    }
}

/// Symbolic expansions of `R^{(1)}, ..., R^{(max_order)}`.
pub fn weight_polynomials(max_order: u32) -> Vec<WeightPolynomial> {
    let slots = max_order as usize + 1;
    let mut out = Vec::with_capacity(max_order as usize);
    if max_order == 0 {
        return out;
    }
    let mut p = WeightPolynomial::unit_x(slots);
    out.push(p.clone());
    for _ in 1..max_order {
        p = p.step();
        out.push(p.clone());
    }
    out
}

/// Precomputed `pi_n(d)` and `R_{T,n}^{(m)}(d)`, m = 1..=M, n = 0..T-1.
#[derive(Debug, Clone, PartialEq)]
pub struct FracWeights {
    sample_size: usize,
    d: f64,
    max_order: u32,
    pi: Vec<f64>,
    r: Vec<Vec<f64>>,
}

impl FracWeights {
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// `R^{(m)}_{T,n}` for n = 0..T-1; m = 0 is the constant 1 and is not stored.
    pub fn r(&self, m: u32) -> &[f64] {
        assert!(m >= 1 && m <= self.max_order, "order {m} not in table");
        &self.r[m as usize - 1]
    }

    /// Filter weights `T^{1/2-d} pi_n(d) R^{(m)}_{T,n}(d)` of `D^m Z`.
    pub fn derivative_filter(&self, m: u32) -> Vec<f64> {
        let scale = (self.sample_size as f64).powf(0.5 - self.d);
        if m == 0 {
            return self.pi.iter().map(|p| scale * p).collect();
        }
        self.pi
            .iter()
            .zip(self.r(m))
            .map(|(p, r)| scale * p * r)
            .collect()
    }
}

/// Checks the (T, d, M) domain shared by every weight-table constructor.
pub fn validate_weight_domain(t: usize, d: f64, max_order: u32) -> Result<()> {
    if t < 2 {
        return Err(Error::DegenerateSample(t));
    }
    if !d.is_finite() || d <= 0.5 || d > MAX_VALIDATED_D {
        return Err(Error::TheoremDomain(d));
    }
    if !(1..=MAX_VALIDATED_ORDER).contains(&max_order) {
        return domain(format!(
            "max order must lie in 1..={MAX_VALIDATED_ORDER}, got {max_order}"
        ));
    }
    Ok(())
}

struct Bases {
    pi: Vec<f64>,
    x: Vec<f64>,
    /// h[i][n] for i = 2..=M
    h: Vec<Vec<f64>>,
}

fn bases(t: usize, d: f64, max_order: u32) -> Result<Bases> {
    validate_weight_domain(t, d, max_order)?;
    let log_t = (t as f64).ln();
    let h1 = HarmonicTable::new(1, t - 1, d)?;
    let x = h1.values().iter().map(|h| -log_t + h).collect();
    let mut h = vec![Vec::new(); max_order as usize + 1];
    for (i, slot) in h.iter_mut().enumerate().skip(2) {
        *slot = HarmonicTable::new(i as u32, t - 1, d)?.values().to_vec();
    }
    Ok(Bases {
        pi: pi_coeffs(d, t - 1),
        x,
        h,
    })
}

/// Weight table by the symbolically expanded recursion.
pub fn weights_recursive(t: usize, d: f64, max_order: u32) -> Result<FracWeights> {
    let b = bases(t, d, max_order)?;
    let polys = weight_polynomials(max_order);
    let mut hn = vec![0.0; max_order as usize + 2];
    let mut r = vec![vec![0.0; t]; max_order as usize];
    for n in 0..t {
        for i in 2..=max_order as usize {
            hn[i] = b.h[i][n];
        }
        for (m, poly) in polys.iter().enumerate() {
            r[m][n] = poly.eval(b.x[n], &hn);
        }
    }
    Ok(FracWeights {
        sample_size: t,
        d,
        max_order,
        pi: b.pi,
        r,
    })
}

/// Weight table by the Faà di Bruno closed form.
pub fn weights_closed_form(t: usize, d: f64, max_order: u32) -> Result<FracWeights> {
    let b = bases(t, d, max_order)?;
    let tuples: Vec<Vec<PartitionTuple>> = (1..=max_order)
        .map(faa_di_bruno_partitions)
        .collect::<Result<_>>()?;
    let mut hn = vec![0.0; max_order as usize + 1];
    let mut r = vec![vec![0.0; t]; max_order as usize];
    for n in 0..t {
        for i in 2..=max_order as usize {
            hn[i] = b.h[i][n];
        }
        let g = derivative_terms_finite(&hn);
        for (m, tup) in tuples.iter().enumerate() {
            r[m][n] = closed_form_value(tup, b.x[n], &g);
        }
    }
    Ok(FracWeights {
        sample_size: t,
        d,
        max_order,
        pi: b.pi,
        r,
    })
}

/// Limit weights `R^{(m)}(d)` as functions of `log(r - s)` for one d.
#[derive(Debug, Clone)]
pub struct LimitWeights {
    d: f64,
    psi: f64,
    /// g[i] = -psi^{(i-1)}(d) for i >= 2
    g: Vec<f64>,
    tuples: Vec<Vec<PartitionTuple>>,
}

impl LimitWeights {
    pub fn new(d: f64, max_order: u32) -> Result<Self> {
        if !d.is_finite() || d <= 0.5 {
            return Err(Error::TheoremDomain(d));
        }
        if max_order > MAX_PARTITION_ORDER {
            return domain(format!("limit weight order {max_order} exceeds cap"));
        }
        let psi = digamma(d)?;
        let mut g = vec![0.0; max_order as usize + 1];
        for (i, slot) in g.iter_mut().enumerate().skip(2) {
            *slot = -polygamma(i as u32 - 1, d)?;
        }
        let tuples = (1..=max_order)
            .map(faa_di_bruno_partitions)
            .collect::<Result<_>>()?;
        Ok(Self { d, psi, g, tuples })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn max_order(&self) -> u32 {
        self.tuples.len() as u32
    }

    /// `R^{(m)}(d)` at `log(r - s) = log_gap`; m = 0 gives 1.
    pub fn eval(&self, m: u32, log_gap: f64) -> f64 {
        if m == 0 {
            return 1.0;
        }
        closed_form_value(&self.tuples[m as usize - 1], -self.psi + log_gap, &self.g)
    }
}

/// `R^{(m)}(d)` with `R^{(1)} = -psi(d) + log_gap`.
pub fn limit_weight(m: u32, d: f64, log_gap: f64) -> Result<f64> {
    if !log_gap.is_finite() {
        return domain(format!("log_gap must be finite, got {log_gap}"));
    }
    Ok(LimitWeights::new(d, m)?.eval(m, log_gap))
}

/// Values `h_i` that map the finite-sample polynomial onto the limit weight:
/// `h_i -> (-1)^i psi^{(i-1)}(d) / (i-1)!`, so `(-1)^{i-1}(i-1)! h_i = -psi^{(i-1)}`.
pub fn limit_substitution(d: f64, max_order: u32) -> Result<Vec<f64>> {
    let mut h = vec![0.0; max_order as usize + 2];
    let mut fact = 1.0;
    for i in 2..=max_order as usize {
        fact *= (i - 1) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        h[i] = sign * polygamma(i as u32 - 1, d)? / fact;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{gamma, EULER_GAMMA};
    use approx::assert_relative_eq;

    #[test]
    fn pi_examples() {
        assert_eq!(pi_coeffs(0.7, 0), vec![1.0]);
        assert_eq!(pi_coeffs(1.0, 5), vec![1.0; 6]);
        assert_eq!(pi_coeffs(0.5, 2)[2], 0.375);
        // d = 0 is the identity filter, d = -1 is first differencing
        assert_eq!(pi_coeffs(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(pi_coeffs(-1.0, 3), vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn dpi_examples() {
        for &d in &[0.3, 0.75, 2.0] {
            assert_relative_eq!(dpi(1, 1, d).unwrap(), 1.0, max_relative = 1e-14);
        }
        assert_relative_eq!(dpi(1, 2, 0.5).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(dpi(0, 4, 0.8).unwrap(), pi_coeffs(0.8, 4)[4]);
        assert_eq!(dpi(3, 0, 0.8).unwrap(), 0.0);

        let h = 1e-4;
        let d = 0.75;
        let f = |x: f64| pi_coeffs(x, 3)[3];
        let fd = (f(d + h) - 2.0 * f(d) + f(d - h)) / (h * h);
        assert_relative_eq!(dpi(2, 3, d).unwrap(), fd, max_relative = 1e-5);
        assert!(dpi(1, 2, 0.0).is_err());
    }

    #[test]
    fn recursive_examples() {
        let w = weights_recursive(16, 0.8, 1).unwrap();
        assert_eq!(w.r(1)[0], -(16f64).ln());
        let w = weights_recursive(4, 1.0, 1).unwrap();
        assert_relative_eq!(w.r(1)[2], -(4f64).ln() + 1.5, max_relative = 1e-14);
        let w = weights_recursive(2, 1.0, 2).unwrap();
        let expected = -1.0 + (1.0 - 2f64.ln()).powi(2);
        assert_relative_eq!(w.r(2)[1], expected, max_relative = 1e-14);
        assert_relative_eq!(w.r(2)[1], -0.905_841_6, max_relative = 1e-6);
    }

    #[test]
    fn closed_form_examples() {
        let a = weights_recursive(2, 1.0, 2).unwrap();
        let b = weights_closed_form(2, 1.0, 2).unwrap();
        assert_eq!(a.r(1), b.r(1));
        assert_relative_eq!(a.r(2)[1], b.r(2)[1], max_relative = 1e-14);

        // R^(3) display at (T, d, n) = (8, 0.8, 5)
        let (t, d, n) = (8usize, 0.8, 5usize);
        let h = |i: i32| (0..n).map(|k| (k as f64 + d).powi(-i)).sum::<f64>();
        let x = -(t as f64).ln() + h(1);
        let display = 2.0 * h(3) - 3.0 * x * h(2) + x.powi(3);
        let w = weights_closed_form(t, d, 3).unwrap();
        assert_relative_eq!(w.r(3)[n], display, max_relative = 1e-13);
    }

    #[test]
    fn weight_domain_errors() {
        assert!(matches!(
            weights_recursive(1, 0.75, 1),
            Err(Error::DegenerateSample(1))
        ));
        assert!(matches!(
            weights_closed_form(8, 0.5, 1),
            Err(Error::TheoremDomain(_))
        ));
        assert!(matches!(
            weights_closed_form(8, 3.5, 1),
            Err(Error::TheoremDomain(_))
        ));
        assert!(weights_recursive(8, 0.75, 0).is_err());
        assert!(weights_recursive(8, 0.75, 11).is_err());
    }

    #[test]
    fn symbolic_polynomials_match_displays() {
        let polys = weight_polynomials(3);
        // R^(2) = -h_2 + x^2
        assert_eq!(polys[1].len(), 2);
        assert_eq!(polys[1].coefficient(2, &[]), 1);
        assert_eq!(polys[1].coefficient(0, &[1]), -1);
        // R^(3) = 2 h_3 - 3 x h_2 + x^3
        assert_eq!(polys[2].len(), 3);
        assert_eq!(polys[2].coefficient(0, &[0, 1]), 2);
        assert_eq!(polys[2].coefficient(1, &[1]), -3);
        assert_eq!(polys[2].coefficient(3, &[]), 1);
    }

    #[test]
    fn partition_examples() {
        let p1 = faa_di_bruno_partitions(1).unwrap();
        assert_eq!(
            p1,
            vec![PartitionTuple {
                m: 1,
                j: vec![1],
                coefficient: 1
            }]
        );
        let p3 = faa_di_bruno_partitions(3).unwrap();
        let js: Vec<_> = p3.iter().map(|t| t.j.clone()).collect();
        assert_eq!(js, vec![vec![0, 0, 1], vec![1, 1, 0], vec![3, 0, 0]]);
        assert_eq!(p3[1].coefficient, 3);
        let p2 = faa_di_bruno_partitions(2).unwrap();
        assert!(p2.iter().all(|t| t.coefficient == 1));
        assert_eq!(p2.len(), 2);
        assert!(faa_di_bruno_partitions(0).is_err());
        assert!(faa_di_bruno_partitions(21).is_err());
    }

    /// Number of set partitions of {0..m-1} by brute-force restricted growth strings.
    fn brute_force_set_partitions(m: usize) -> u64 {
        fn rec(pos: usize, m: usize, max_block: usize) -> u64 {
            if pos == m {
                return 1;
            }
            (0..=max_block + 1)
                .map(|b| rec(pos + 1, m, max_block.max(b)))
                .sum()
        }
        if m == 0 {
            1
        } else {
            rec(1, m, 0)
        }
    }

    #[test]
    fn coefficient_sums_are_bell_numbers() {
        for m in 1..=8u32 {
            let total: u64 = faa_di_bruno_partitions(m)
                .unwrap()
                .iter()
                .map(|t| t.coefficient)
                .sum();
            assert_eq!(total, brute_force_set_partitions(m as usize), "m = {m}");
            for t in faa_di_bruno_partitions(m).unwrap() {
                let s: u32 =
                    t.j.iter()
                        .enumerate()
                        .map(|(i, &j)| (i as u32 + 1) * j)
                        .sum();
                assert_eq!(s, m);
                assert!(t.coefficient >= 1);
            }
        }
        assert_eq!(faa_di_bruno_partitions(20).unwrap().len(), 627);
    }

    #[test]
    fn limit_weight_examples() {
        let d = 0.9;
        assert_relative_eq!(
            limit_weight(1, d, digamma(d).unwrap()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            limit_weight(1, 1.0, 0.0).unwrap(),
            EULER_GAMMA,
            max_relative = 1e-13
        );
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert_relative_eq!(
            limit_weight(2, 1.0, 0.0).unwrap(),
            EULER_GAMMA.powi(2) - pi2_6,
            max_relative = 1e-12
        );
        assert_eq!(limit_weight(0, 0.7, -3.0).unwrap(), 1.0);
        assert!(limit_weight(1, 0.7, f64::NEG_INFINITY).is_err());
        assert!(limit_weight(1, 0.4, 0.0).is_err());
    }

    #[test]
    fn limit_weight_matches_recursion_under_substitution() {
        let polys = weight_polynomials(6);
        for &d in &[0.6, 0.75, 1.3] {
            let h = limit_substitution(d, 6).unwrap();
            for &lg in &[-4.0, -0.7, 0.0] {
                let x = -digamma(d).unwrap() + lg;
                for m in 1..=6u32 {
                    let rec = polys[m as usize - 1].eval(x, &h);
                    let closed = limit_weight(m, d, lg).unwrap();
                    assert_relative_eq!(rec, closed, max_relative = 1e-11, epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn derivative_consistency_against_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let step = 1e-5;
        for _ in 0..50 {
            let t: usize = rng.random_range(2..400);
            let n: usize = rng.random_range(0..t);
            let d: f64 = rng.random_range(0.6..2.5);
            let f = |x: f64| (t as f64).powf(0.5 - x) * pi_coeffs(x, n)[n];
            let fd = (f(d + step) - f(d - step)) / (2.0 * step);
            let w = weights_recursive(t, d, 1).unwrap();
            let analytic = f(d) * w.r(1)[n];
            assert_relative_eq!(analytic, fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn finite_weight_converges_to_limit_weight() {
        let (r, s, d) = (0.9_f64, 0.4, 0.75);
        let target = limit_weight(1, d, (r - s).ln()).unwrap();
        let mut errs = Vec::new();
        for &t in &[1_000usize, 10_000, 100_000] {
            let n = (t as f64 * r).floor() as usize - (t as f64 * s).floor() as usize;
            let w = weights_recursive(t, d, 1).unwrap();
            let err = (w.r(1)[n] - target).abs();
            assert!(
                err <= 1.0 / (t as f64 * (r - s)) + 2.0 / t as f64,
                "T={t} err={err}"
            );
            errs.push(err);
        }
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn pi_asymptotics() {
        for &d in &[0.6, 0.75, 1.25] {
            let n = 1_000_000usize;
            let pi = pi_coeffs(d, n)[n];
            let ratio = pi / ((n as f64).powf(d - 1.0) / gamma(d));
            assert!((0.99..=1.01).contains(&ratio), "d={d} ratio={ratio}");
        }
    }
}
