use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::quad::{tanh_sinh, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::fraccoef::{LimitWeights, MAX_PARTITION_ORDER};
use crate::specfun::{digamma, gamma};

/// Which pair of limit processes a covariance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// `A_m` against `A_{m'}`.
    APair,
    /// `D^m W` against `D^{m'} W`.
    DwPair,
    /// `W` against `D^{m'} W`; the first order must be 0.
    WDwCross,
}

impl CovKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CovKind::APair => "A_pair",
            CovKind::DwPair => "DW_pair",
            CovKind::WDwCross => "W_DW_cross",
        }
    }
}

/// Kernel multiplying `x^{d-1}` in a stochastic integral against dW, as a
/// function of `log x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kernel {
    /// `(log x)^m`
    Log(u32),
    /// `R^{(m)}(d; log x)`
    Weight(u32),
}

impl Kernel {
    pub fn order(&self) -> u32 {
        match self {
            Kernel::Log(m) | Kernel::Weight(m) => *m,
        }
    }

    pub fn eval(&self, lw: &LimitWeights, log_x: f64) -> f64 {
        match *self {
            Kernel::Log(m) => log_x.powi(m as i32),
            Kernel::Weight(m) => lw.eval(m, log_x),
        }
    }
}

/// One factor `(v + gap)^power K(log(v + gap))` of an integrand on `[0, a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub kernel: Kernel,
    pub gap: f64,
    pub power: f64,
}

/// `int_0^a prod_i (v + gap_i)^{p_i} K_i(log(v + gap_i)) dv`.
///
/// The power singularity of the zero-gap factors is removed by `v = w^q`,
/// `q = 1/(1 + e)`, leaving at most log singularities for the tanh-sinh rule.
pub fn integrate_factors(lw: &LimitWeights, factors: &[Factor], a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Quadrature(format!(
            "upper limit must be positive, got {a}"
        )));
    }
    for f in factors {
        if !(f.gap >= 0.0 && f.gap.is_finite() && f.power.is_finite()) {
            return Err(Error::Quadrature(format!("bad factor {f:?}")));
        }
        if let Kernel::Weight(m) = f.kernel {
            if m > lw.max_order() {
                return Err(Error::Domain(format!(
                    "weight order {m} exceeds table order {}",
                    lw.max_order()
                )));
            }
        }
    }
    let e: f64 = factors
        .iter()
        .filter(|f| f.gap == 0.0)
        .map(|f| f.power)
        .sum();
    if e <= -1.0 {
        return Err(Error::Quadrature(format!(
            "non-integrable singularity, exponent {e}"
        )));
    }
    let q = 1.0 / (1.0 + e);
    let len = ((1.0 + e) * a.ln()).exp();
    let integral = tanh_sinh(len, DEFAULT_TOL, |n| {
        let log_v = q * n.ln_x;
        let v = log_v.exp();
        let mut acc = q;
        for f in factors {
            if f.gap == 0.0 {
                acc *= f.kernel.eval(lw, log_v);
            } else {
                let x = v + f.gap;
                let lx = x.ln();
                acc *= (f.power * lx).exp() * f.kernel.eval(lw, lx);
            }
        }
        acc
    })?;
    Ok(integral)
}

fn check_point(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain(format!("time point {r} outside (0, 1]")));
    }
    Ok(())
}

fn check_d(d: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.5) {
        return Err(Error::TheoremDomain(d));
    }
    Ok(())
}

/// `Gamma(d)^{-2} int_0^{min(r,s)} K1(log(r-u)) K2(log(s-u)) (r-u)^{d-1} (s-u)^{d-1} du`.
///
/// The arguments are put in canonical order first, so swapping `(r, k1)` with
/// `(s, k2)` runs the identical computation.
pub fn kappa_kernels(d: f64, k1: Kernel, k2: Kernel, r: f64, s: f64) -> Result<f64> {
    check_d(d)?;
    check_point(r)?;
    check_point(s)?;
    let (k1, k2, r, s) = if (r, k1) <= (s, k2) {
        (k1, k2, r, s)
    } else {
        (k2, k1, s, r)
    };
    let max_order = k1.order().max(k2.order());
    if max_order > MAX_PARTITION_ORDER {
        return Err(Error::Domain(format!(
            "order {max_order} exceeds cap {MAX_PARTITION_ORDER}"
        )));
    }
    let lw = LimitWeights::new(d, max_order)?;
    let a = r.min(s);
    let factors = [
        Factor {
            kernel: k1,
            gap: r - a,
            power: d - 1.0,
        },
        Factor {
            kernel: k2,
            gap: s - a,
            power: d - 1.0,
        },
    ];
    let g = gamma(d);
    Ok(integrate_factors(&lw, &factors, a)? / (g * g))
}

/// Specification of a scalar-factored covariance `kappa * Omega_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovKernelSpec {
    d: f64,
    m: u32,
    m2: u32,
    kind: CovKind,
    omega: DMatrix<f64>,
}

impl CovKernelSpec {
    pub fn new(d: f64, m: u32, m2: u32, kind: CovKind, omega: DMatrix<f64>) -> Result<Self> {
        check_d(d)?;
        if m.max(m2) > MAX_PARTITION_ORDER {
            return Err(Error::Domain(format!(
                "order exceeds cap {MAX_PARTITION_ORDER}"
            )));
        }
        if kind == CovKind::WDwCross && m != 0 {
            return Err(Error::InvalidSpec(
                "W_DW_cross takes m = 0 for the W side".into(),
            ));
        }
        let p = omega.nrows();
        if p == 0 || omega.ncols() != p {
            return Err(Error::InvalidSpec(
                "Omega_W must be square and non-empty".into(),
            ));
        }
        if (&omega - omega.transpose()).amax() > 1e-12 * omega.amax().max(1.0) {
            return Err(Error::InvalidSpec("Omega_W must be symmetric".into()));
        }
        if omega.clone().cholesky().is_none() {
            return Err(Error::InvalidSpec(
                "Omega_W must be positive definite".into(),
            ));
        }
        Ok(Self {
            d,
            m,
            m2,
            kind,
            omega,
        })
    }

    /// Scalar case `Omega_W = 1`.
    pub fn scalar(d: f64, m: u32, m2: u32, kind: CovKind) -> Result<Self> {
        Self::new(d, m, m2, kind, DMatrix::identity(1, 1))
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn orders(&self) -> (u32, u32) {
        (self.m, self.m2)
    }

    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn kernels(&self) -> (Kernel, Kernel) {
        match self.kind {
            CovKind::APair => (Kernel::Log(self.m), Kernel::Log(self.m2)),
            CovKind::DwPair | CovKind::WDwCross => {
                (Kernel::Weight(self.m), Kernel::Weight(self.m2))
            }
        }
    }

    /// The scalar factor kappa at (r, s).
    pub fn kappa(&self, r: f64, s: f64) -> Result<f64> {
        let (k1, k2) = self.kernels();
        kappa_kernels(self.d, k1, k2, r, s)
    }
}

/// Covariance of `A_m(r)` and `A_{m'}(s)`.
pub fn cov_a(spec: &CovKernelSpec, r: f64, s: f64) -> Result<DMatrix<f64>> {
    if spec.kind != CovKind::APair {
        return Err(Error::InvalidSpec(format!(
            "cov_A needs kind A_pair, got {}",
            spec.kind.tag()
        )));
    }
    Ok(&spec.omega * spec.kappa(r, s)?)
}

/// Covariance of `D^m W(r)` and `D^{m'} W(s)`.
pub fn cov_dw(spec: &CovKernelSpec, r: f64, s: f64) -> Result<DMatrix<f64>> {
    if spec.kind == CovKind::APair {
        return Err(Error::InvalidSpec(
            "cov_DW needs kind DW_pair or W_DW_cross".into(),
        ));
    }
    Ok(&spec.omega * spec.kappa(r, s)?)
}

/// `int_0^1 (log u)^k u^{2d-2} du = (-1)^k k! / (2d-1)^{k+1}`.
pub fn log_moment(k: u32, d: f64) -> f64 {
    let fact: f64 = (1..=k).map(f64::from).product();
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * fact / (2.0 * d - 1.0).powi(k as i32 + 1)
}

/// The same integral by quadrature.
pub fn log_moment_quadrature(k: u32, d: f64) -> Result<f64> {
    check_d(d)?;
    let lw = LimitWeights::new(d, 0)?;
    integrate_factors(
        &lw,
        &[Factor {
            kernel: Kernel::Log(k),
            gap: 0.0,
            power: 2.0 * d - 2.0,
        }],
        1.0,
    )
}

/// `Var A_m(1; d) = (2m)! / (Gamma(d)^2 (2d-1)^{2m+1})`.
pub fn a_variance(m: u32, d: f64) -> f64 {
    let g = gamma(d);
    log_moment(2 * m, d) / (g * g)
}

/// Closed-form `kappa` of `A_m(1)` against `A_{m'}(1)`.
pub fn a_covariance_unit(m: u32, m2: u32, d: f64) -> f64 {
    let g = gamma(d);
    log_moment(m + m2, d) / (g * g)
}

/// `Var D W(1; d) = Gamma(d)^{-2}[psi^2/(2d-1) + 2 psi/(2d-1)^2 + 2/(2d-1)^3]`.
pub fn dw1_variance(d: f64) -> Result<f64> {
    check_d(d)?;
    let psi = digamma(d)?;
    let c = 2.0 * d - 1.0;
    let g = gamma(d);
    Ok((psi * psi / c + 2.0 * psi / (c * c) + 2.0 / (c * c * c)) / (g * g))
}

/// Variance of `W(r; d)`: `r^{2d-1} / (Gamma(d)^2 (2d-1))`.
pub fn w_variance(d: f64, r: f64) -> f64 {
    let g = gamma(d);
    r.powf(2.0 * d - 1.0) / (g * g * (2.0 * d - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::EULER_GAMMA;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;

    fn a(d: f64, m: u32, m2: u32) -> CovKernelSpec {
        CovKernelSpec::scalar(d, m, m2, CovKind::APair).unwrap()
    }

    fn dw(d: f64, m: u32, m2: u32) -> CovKernelSpec {
        CovKernelSpec::scalar(d, m, m2, CovKind::DwPair).unwrap()
    }

    #[test]
    fn brownian_and_log_squared() {
        assert_relative_eq!(
            a(1.0, 0, 0).kappa(1.0, 1.0).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            a(1.0, 1, 1).kappa(1.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        let g = gamma(0.75);
        let want = -1.0 / (g * g * 0.25);
        assert_relative_eq!(
            a(0.75, 0, 1).kappa(1.0, 1.0).unwrap(),
            want,
            max_relative = 1e-10
        );
        assert!((want + 2.664).abs() < 1e-3);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &d in &[0.6, 0.75, 1.0, 1.5] {
            for m in 0..=3 {
                let q = a(d, m, m).kappa(1.0, 1.0).unwrap();
                assert_relative_eq!(q, a_variance(m, d), max_relative = 1e-8);
                let lm = log_moment_quadrature(m, d).unwrap();
                assert_relative_eq!(lm, log_moment(m, d), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn dw_examples() {
        assert_relative_eq!(
            dw(0.8, 0, 0).kappa(0.7, 1.0).unwrap(),
            a(0.8, 0, 0).kappa(0.7, 1.0).unwrap()
        );
        let g = EULER_GAMMA;
        assert_relative_eq!(
            dw(1.0, 1, 1).kappa(1.0, 1.0).unwrap(),
            g * g - 2.0 * g + 2.0,
            max_relative = 1e-10
        );
        for &d in &[0.6, 0.75, 1.3] {
            assert_relative_eq!(
                dw(d, 1, 1).kappa(1.0, 1.0).unwrap(),
                dw1_variance(d).unwrap(),
                max_relative = 1e-9
            );
        }
        // D W = -psi W + A_1, so kappa_DW(0,1) = -psi kappa_W + kappa_{W,A1}
        for &(d, r, s) in &[(0.75, 1.0, 1.0), (0.9, 0.4, 0.8), (1.4, 0.9, 0.3)] {
            let psi = digamma(d).unwrap();
            let lhs = dw(d, 0, 1).kappa(r, s).unwrap();
            let rhs = -psi * a(d, 0, 0).kappa(r, s).unwrap() + a(d, 0, 1).kappa(r, s).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn cross_kind_and_matrix_scaling() {
        let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let spec = CovKernelSpec::new(0.75, 0, 2, CovKind::WDwCross, omega.clone()).unwrap();
        let k = dw(0.75, 0, 2).kappa(0.6, 0.9).unwrap();
        assert_relative_eq!(cov_dw(&spec, 0.6, 0.9).unwrap(), omega * k);
        assert!(cov_a(&spec, 0.5, 0.5).is_err());
        assert!(CovKernelSpec::scalar(0.75, 1, 1, CovKind::WDwCross).is_err());
        assert!(cov_dw(&a(0.75, 0, 0), 0.5, 0.5).is_err());
    }

    #[test]
    fn errors() {
        assert!(a(0.75, 0, 0).kappa(0.0, 1.0).is_err());
        assert!(a(0.75, 0, 0).kappa(0.5, 1.1).is_err());
        assert!(CovKernelSpec::scalar(0.5, 0, 0, CovKind::APair).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CovKernelSpec::new(0.75, 0, 0, CovKind::APair, bad).is_err());
    }

    #[test]
    fn symmetric_in_arguments() {
        for &(r, s) in &[(0.3, 0.9), (1.0, 0.25), (0.5, 0.5)] {
            for (m, m2) in [(0, 2), (1, 3), (2, 2)] {
                for kind in [CovKind::APair, CovKind::DwPair] {
                    let x = CovKernelSpec::scalar(0.8, m, m2, kind)
                        .unwrap()
                        .kappa(r, s)
                        .unwrap();
                    let y = CovKernelSpec::scalar(0.8, m2, m, kind)
                        .unwrap()
                        .kappa(s, r)
                        .unwrap();
                    assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn gram_matrix_is_psd() {
        let rs = [0.25, 0.5, 0.75, 1.0];
        for &d in &[0.6, 0.75, 1.2] {
            let items: Vec<(u32, f64)> = (0..=2)
                .flat_map(|m| rs.iter().map(move |&r| (m, r)))
                .collect();
            let n = items.len();
            let g = DMatrix::from_fn(n, n, |i, j| {
                let (m, r) = items[i];
                let (m2, s) = items[j];
                a(d, m, m2).kappa(r, s).unwrap()
            });
            let min = SymmetricEigen::new(g).eigenvalues.min();
            assert!(min >= -1e-9, "d={d} min eig {min}");
        }
    }

    #[test]
    fn continuous_in_d() {
        for &d in &[0.6, 0.75, 1.0, 1.5] {
            for (m, m2) in [(0, 0), (1, 1), (2, 2), (0, 1)] {
                for kind in [CovKind::APair, CovKind::DwPair] {
                    let k0 = CovKernelSpec::scalar(d, m, m2, kind)
                        .unwrap()
                        .kappa(1.0, 0.7)
                        .unwrap();
                    let k1 = CovKernelSpec::scalar(d + 1e-6, m, m2, kind)
                        .unwrap()
                        .kappa(1.0, 0.7)
                        .unwrap();
                    assert!((k1 - k0).abs() <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn w_variance_matches_kappa() {
        for &r in &[0.2, 0.5, 1.0] {
            assert_relative_eq!(
                a(0.7, 0, 0).kappa(r, r).unwrap(),
                w_variance(0.7, r),
                max_relative = 1e-10
            );
        }
    }
}
