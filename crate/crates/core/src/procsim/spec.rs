use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the standardized innovation components. The innovation itself is
/// `eps = L u` with `L L' = Sigma` and `u` i.i.d. with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InnovationLaw {
    Gaussian,
    /// Student-t with `nu` degrees of freedom rescaled to unit variance.
    StudentT {
        nu: f64,
    },
    Rademacher,
}

impl InnovationLaw {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, InnovationLaw::Gaussian)
    }

    /// Supremum of the finite absolute moment orders.
    pub fn moment_order(&self) -> f64 {
        match self {
            InnovationLaw::Gaussian | InnovationLaw::Rademacher => f64::INFINITY,
            InnovationLaw::StudentT { nu } => *nu,
        }
    }

    fn draw_standardized<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InnovationLaw::Gaussian => StandardNormal.sample(rng),
            InnovationLaw::StudentT { nu } => {
                let t: f64 = StudentT::new(*nu).expect("validated nu").sample(rng);
                t * ((nu - 2.0) / nu).sqrt()
            }
            InnovationLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// One coefficient matrix `C_j` of the two-sided filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCoefficient {
    pub lag: i64,
    pub matrix: Vec<Vec<f64>>,
}

/// Serialized form of [`LinearProcessSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProcessConfig {
    pub dim: usize,
    pub coefficients: Vec<LagCoefficient>,
    pub innovation: InnovationLaw,
    pub sigma: Vec<Vec<f64>>,
}

/// `xi_t = sum_{j=-J}^{J} C_j eps_{t-j}` with i.i.d. innovations of variance Sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearProcessConfig", into = "LinearProcessConfig")]
pub struct LinearProcessSpec {
    dim: usize,
    lags: Vec<(i64, DMatrix<f64>)>,
    innovation: InnovationLaw,
    sigma: DMatrix<f64>,
    sigma_chol: DMatrix<f64>,
}

fn to_matrix(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidSpec(format!("{what} must be {dim}x{dim}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<LinearProcessConfig> for LinearProcessSpec {
    type Error = Error;

    fn try_from(cfg: LinearProcessConfig) -> Result<Self> {
        let lags = cfg
            .coefficients
            .iter()
            .map(|c| Ok((c.lag, to_matrix(&c.matrix, cfg.dim, "coefficient matrix")?)))
            .collect::<Result<Vec<_>>>()?;
        let sigma = to_matrix(&cfg.sigma, cfg.dim, "sigma")?;
        Self::new(cfg.dim, lags, cfg.innovation, sigma)
    }
}

impl From<LinearProcessSpec> for LinearProcessConfig {
    fn from(spec: LinearProcessSpec) -> Self {
        LinearProcessConfig {
            dim: spec.dim,
            coefficients: spec
                .lags
                .iter()
                .map(|(lag, m)| LagCoefficient {
                    lag: *lag,
                    matrix: from_matrix(m),
                })
                .collect(),
            innovation: spec.innovation,
            sigma: from_matrix(&spec.sigma),
        }
    }
}

impl LinearProcessSpec {
    pub fn new(
        dim: usize,
        lags: Vec<(i64, DMatrix<f64>)>,
        innovation: InnovationLaw,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if lags.is_empty() {
            return Err(Error::InvalidSpec(
                "at least one coefficient matrix is required".into(),
            ));
        }
        for (lag, m) in &lags {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidSpec(format!("C_{lag} must be {dim}x{dim}")));
            }
        }
        let mut seen: Vec<i64> = lags.iter().map(|(l, _)| *l).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != lags.len() {
            return Err(Error::InvalidSpec(
                "duplicate lag in coefficient list".into(),
            ));
        }
        if let InnovationLaw::StudentT { nu } = innovation {
            if !(nu.is_finite() && nu > 2.0) {
                return Err(Error::InvalidSpec(format!(
                    "Student-t needs nu > 2, got {nu}"
                )));
            }
        }
        if sigma.nrows() != dim || sigma.ncols() != dim {
            return Err(Error::InvalidSpec(format!("sigma must be {dim}x{dim}")));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::InvalidSpec("sigma must be symmetric".into()));
        }
        let sigma_chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidSpec("sigma must be positive definite".into()))?
            .l();
        let spec = Self {
            dim,
            lags,
            innovation,
            sigma,
            sigma_chol,
        };
        let c1 = spec.long_run_matrix();
        if c1.rank(1e-10 * c1.amax().max(1.0)) < dim {
            return Err(Error::InvalidSpec(
                "C(1) = sum C_j must have full rank".into(),
            ));
        }
        Ok(spec)
    }

    /// i.i.d. standard Gaussian innovations, `C(L) = I_p`.
    pub fn iid_gaussian(dim: usize) -> Self {
        Self::new(
            dim,
            vec![(0, DMatrix::identity(dim, dim))],
            InnovationLaw::Gaussian,
            DMatrix::identity(dim, dim),
        )
        .expect("identity spec is valid")
    }

    /// Scalar process with coefficients `(lag, c_j)`, law and innovation variance.
    pub fn scalar(coefs: &[(i64, f64)], innovation: InnovationLaw, variance: f64) -> Result<Self> {
        Self::new(
            1,
            coefs
                .iter()
                .map(|&(l, c)| (l, DMatrix::from_element(1, 1, c)))
                .collect(),
            innovation,
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn innovation(&self) -> InnovationLaw {
        self.innovation
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn lags(&self) -> &[(i64, DMatrix<f64>)] {
        &self.lags
    }

    /// J = max |j| over the stored lags.
    pub fn max_lag(&self) -> usize {
        self.lags
            .iter()
            .map(|(l, _)| l.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// C(1) = sum_j C_j.
    pub fn long_run_matrix(&self) -> DMatrix<f64> {
        self.lags
            .iter()
            .fold(DMatrix::zeros(self.dim, self.dim), |acc, (_, m)| acc + m)
    }

    /// Omega_W = C(1) Sigma C(1)', the variance of the limiting Brownian motion.
    pub fn long_run_variance(&self) -> DMatrix<f64> {
        let c1 = self.long_run_matrix();
        &c1 * &self.sigma * c1.transpose()
    }

    /// Var(xi_t) = sum_j C_j Sigma C_j'.
    pub fn lag0_covariance(&self) -> DMatrix<f64> {
        self.lags
            .iter()
            .fold(DMatrix::zeros(self.dim, self.dim), |acc, (_, c)| {
                acc + c * &self.sigma * c.transpose()
            })
    }

    /// The innovation moment order must exceed max{2, 2/(2d-1)}.
    pub fn validate_moments(&self, d: f64) -> Result<()> {
        if d <= 0.5 {
            return Err(Error::TheoremDomain(d));
        }
        let needed = 2.0_f64.max(2.0 / (2.0 * d - 1.0));
        let q = self.innovation.moment_order();
        if q <= needed {
            return Err(Error::InvalidSpec(format!(
                "innovation moments up to order {q} do not exceed max(2, 2/(2d-1)) = {needed} at d = {d}"
            )));
        }
        Ok(())
    }

    /// Draws `rows` innovation vectors; row i is eps at time `1 - J + i`.
    pub fn draw_innovations<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        let p = self.dim;
        let mut out = Array2::zeros((rows, p));
        let mut u = vec![0.0; p];
        for i in 0..rows {
            for slot in u.iter_mut() {
                *slot = self.innovation.draw_standardized(rng);
            }
            for a in 0..p {
                let mut acc = 0.0;
                for (b, ub) in u.iter().enumerate().take(a + 1) {
                    acc += self.sigma_chol[(a, b)] * ub;
                }
                out[(i, a)] = acc;
            }
        }
        out
    }

    /// Number of innovation rows needed for a sample of length T.
    pub fn innovation_rows(&self, t: usize) -> usize {
        t + 2 * self.max_lag()
    }

    /// Applies the two-sided filter to innovations covering times 1-J..T+J.
    pub fn apply_filter(&self, eps: &Array2<f64>, t: usize) -> Result<Array2<f64>> {
        let j_max = self.max_lag() as i64;
        if eps.nrows() != self.innovation_rows(t) || eps.ncols() != self.dim {
            return Err(Error::InvalidSpec(format!(
                "innovation array must be {}x{}",
                self.innovation_rows(t),
                self.dim
            )));
        }
        let mut xi = Array2::zeros((t, self.dim));
        for ti in 0..t as i64 {
            for (lag, c) in &self.lags {
                // eps_{t - lag} sits at row (t - lag) - (1 - J) with 0-based t = ti + 1
                let row = (ti - lag + j_max) as usize;
                for a in 0..self.dim {
                    let mut acc = 0.0;
                    for b in 0..self.dim {
                        acc += c[(a, b)] * eps[(row, b)];
                    }
                    xi[(ti as usize, a)] += acc;
                }
            }
        }
        Ok(xi)
    }
}
