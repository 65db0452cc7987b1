//! Grid simulation of `D^m W(r; d)` on `r_j = j / grid`.
//!
//! Cells further than `exact_cells` from the evaluation point use the midpoint
//! rule `K(r_j - s_l) dW_l`. The nearest cells, where the kernel is singular,
//! use the exact stochastic integral over the cell, drawn jointly with the cell
//! increment from its Gaussian law.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array1, Array2, Array3};
use rand_distr::{Distribution, StandardNormal};

use super::cov::{integrate_factors, Factor, Kernel};
use crate::error::{Error, Result};
use crate::exec::{domain, map_replications, stream_rng};
use crate::fraccoef::LimitWeights;
use crate::procsim::{Convolver, PathEnsemble, ProcessKind, SeedRecord};
use crate::specfun::gamma;

pub const MIN_GRID: usize = 16;
pub const DEFAULT_EXACT_CELLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSimConfig {
    pub d: f64,
    pub grid: usize,
    pub orders: Vec<u32>,
    pub omega: DMatrix<f64>,
    /// Number of cells nearest each evaluation point integrated exactly; 0 gives
    /// the plain midpoint rule.
    pub exact_cells: usize,
}

impl LimitSimConfig {
    pub fn scalar(d: f64, grid: usize, orders: &[u32]) -> Self {
        Self {
            d,
            grid,
            orders: orders.to_vec(),
            omega: DMatrix::identity(1, 1),
            exact_cells: DEFAULT_EXACT_CELLS,
        }
    }

    pub fn midpoint(mut self) -> Self {
        self.exact_cells = 0;
        self
    }
}

#[derive(Debug)]
pub struct LimitSimulator {
    cfg: LimitSimConfig,
    omega_chol: DMatrix<f64>,
    /// Maps i.i.d. normals to (dW, I_{k,m}) for one cell.
    cell_factor: DMatrix<f64>,
    far: Convolver,
}

impl LimitSimulator {
    pub fn new(cfg: LimitSimConfig) -> Result<Self> {
        if !(cfg.d.is_finite() && cfg.d > 0.5) {
            return Err(Error::TheoremDomain(cfg.d));
        }
        if cfg.grid < MIN_GRID {
            return Err(Error::InvalidConfig(format!(
                "grid size {} below minimum {MIN_GRID}",
                cfg.grid
            )));
        }
        if cfg.orders.is_empty() {
            return Err(Error::InvalidConfig("no orders requested".into()));
        }
        if cfg.exact_cells >= cfg.grid {
            return Err(Error::InvalidConfig(
                "exact_cells must be below the grid size".into(),
            ));
        }
        let p = cfg.omega.nrows();
        if p == 0 || cfg.omega.ncols() != p {
            return Err(Error::InvalidSpec(
                "Omega_W must be square and non-empty".into(),
            ));
        }
        let omega_chol = cfg
            .omega
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidSpec("Omega_W must be positive definite".into()))?
            .l();
        let max_order = *cfg.orders.iter().max().expect("non-empty");
        let lw = LimitWeights::new(cfg.d, max_order)?;
        let g = gamma(cfg.d);
        let n = cfg.grid as f64;

        let filters: Vec<Vec<f64>> = cfg
            .orders
            .iter()
            .map(|&m| {
                (0..cfg.grid)
                    .map(|k| {
                        if k < cfg.exact_cells {
                            return 0.0;
                        }
                        let x = (k as f64 + 0.5) / n;
                        lw.eval(m, x.ln()) * x.powf(cfg.d - 1.0) / g
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = filters.iter().map(Vec::as_slice).collect();
        let far = Convolver::new(cfg.grid, &refs);
        let cell_factor = cell_factor(&cfg, &lw)?;
        Ok(Self {
            cfg,
            omega_chol,
            cell_factor,
            far,
        })
    }

    pub fn config(&self) -> &LimitSimConfig {
        &self.cfg
    }

    fn cell_dim(&self) -> usize {
        1 + self.cfg.exact_cells * self.cfg.orders.len()
    }

    /// One replication: per order, a grid x p array of values at r_1..r_grid.
    pub fn replicate(&self, master_seed: u64, rep: usize) -> Vec<Array2<f64>> {
        let mut rng = stream_rng(
            master_seed,
            &[domain::LIMIT_INCREMENTS, self.cfg.grid as u64, rep as u64],
        );
        let n = self.cfg.grid;
        let p = self.omega_chol.nrows();
        let nm = self.cfg.orders.len();
        let kappa = self.cfg.exact_cells;
        let dim = self.cell_dim();
        let mut scalar = vec![Array2::<f64>::zeros((n, p)); nm];
        let mut z = DVector::zeros(dim);
        for c in 0..p {
            let mut cells = Array2::<f64>::zeros((n, dim));
            for l in 0..n {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let v = &self.cell_factor * &z;
                for (slot, val) in cells.row_mut(l).iter_mut().zip(v.iter()) {
                    *slot = *val;
                }
            }
            let dw: Array1<f64> = cells.column(0).to_owned();
            let far = self.far.apply(dw.view());
            for (mi, col) in far.into_iter().enumerate() {
                for j in 1..=n {
                    let mut acc = col[j - 1];
                    for k in 0..kappa.min(j) {
                        acc += cells[(j - 1 - k, 1 + k * nm + mi)];
                    }
                    scalar[mi][(j - 1, c)] = acc;
                }
            }
        }
        scalar
            .into_iter()
            .map(|s| {
                let mut out = Array2::zeros((n, p));
                for j in 0..n {
                    for a in 0..p {
                        out[(j, a)] = (0..=a).map(|b| self.omega_chol[(a, b)] * s[(j, b)]).sum();
                    }
                }
                out
            })
            .collect()
    }

    /// Ensembles per order; the kind is reported as `DmZ(m)` for the limit of `D^m Z`.
    pub fn ensemble(
        &self,
        master_seed: u64,
        reps: usize,
        threads: Option<usize>,
    ) -> Result<Vec<PathEnsemble>> {
        if reps == 0 {
            return Err(Error::InvalidConfig(
                "replication count must be positive".into(),
            ));
        }
        let per_rep = map_replications(reps, threads, |rep| self.replicate(master_seed, rep))?;
        let (n, p) = (self.cfg.grid, self.omega_chol.nrows());
        Ok(self
            .cfg
            .orders
            .iter()
            .enumerate()
            .map(|(mi, &m)| {
                let mut data = Array3::zeros((reps, n, p));
                for (rep, paths) in per_rep.iter().enumerate() {
                    data.slice_mut(s![rep, .., ..]).assign(&paths[mi]);
                }
                PathEnsemble {
                    kind: ProcessKind::DmZ(m),
                    sample_size: n,
                    d: self.cfg.d,
                    seed: SeedRecord::Stream { master_seed },
                    data,
                }
            })
            .collect())
    }
}

/// Covariance of `(dW, I_{k,m})` within one cell, factored as `F F'`.
fn cell_factor(cfg: &LimitSimConfig, lw: &LimitWeights) -> Result<DMatrix<f64>> {
    let nm = cfg.orders.len();
    let dim = 1 + cfg.exact_cells * nm;
    let h = 1.0 / cfg.grid as f64;
    let g = gamma(cfg.d);
    let pw = cfg.d - 1.0;
    let idx = |k: usize, mi: usize| 1 + k * nm + mi;
    let mut cov = DMatrix::zeros(dim, dim);
    cov[(0, 0)] = h;
    for k in 0..cfg.exact_cells {
        for (mi, &m) in cfg.orders.iter().enumerate() {
            let f = Factor {
                kernel: Kernel::Weight(m),
                gap: k as f64 * h,
                power: pw,
            };
            let c = integrate_factors(lw, &[f], h)? / g;
            cov[(0, idx(k, mi))] = c;
            cov[(idx(k, mi), 0)] = c;
            for k2 in 0..cfg.exact_cells {
                for (mi2, &m2) in cfg.orders.iter().enumerate() {
                    let (a, b) = (idx(k, mi), idx(k2, mi2));
                    if b < a {
                        continue;
                    }
                    let f2 = Factor {
                        kernel: Kernel::Weight(m2),
                        gap: k2 as f64 * h,
                        power: pw,
                    };
                    let c = integrate_factors(lw, &[f, f2], h)? / (g * g);
                    cov[(a, b)] = c;
                    cov[(b, a)] = c;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(eig.eigenvectors * scale)
}

/// Simulates `D^m W` for every requested order from shared increments.
pub fn simulate_limit(
    cfg: LimitSimConfig,
    master_seed: u64,
    reps: usize,
    threads: Option<usize>,
) -> Result<Vec<PathEnsemble>> {
    LimitSimulator::new(cfg)?.ensemble(master_seed, reps, threads)
}
