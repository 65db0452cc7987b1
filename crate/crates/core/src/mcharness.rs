//! Monte Carlo experiments comparing simulated second moments with the limit oracles.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exec::{map_replications, DEFAULT_SEED};
use crate::fraccoef::MAX_VALIDATED_ORDER;
use crate::limitoracle::{kappa_kernels, Kernel};
use crate::procsim::{
    fmt_f64, grid_index, LinearProcessConfig, LinearProcessSpec, PathEnsemble, PathSimulator,
    ProcessKind,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_REPLICATIONS: usize = 100;
/// Kolmogorov-Smirnov critical value at the 1% level is `KS_CRITICAL_1PCT / sqrt(N)`.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    #[serde(default = "default_se_multiplier")]
    pub se_multiplier: f64,
    #[serde(default = "default_allowance")]
    pub discretization_allowance: f64,
}

fn default_se_multiplier() -> f64 {
    3.0
}

fn default_allowance() -> f64 {
    0.05
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            se_multiplier: default_se_multiplier(),
            discretization_allowance: default_allowance(),
        }
    }
}

impl TolerancePolicy {
    pub fn accepts(&self, empirical: f64, se: f64, oracle: f64) -> bool {
        (empirical - oracle).abs()
            <= self.se_multiplier * se + self.discretization_allowance * oracle.abs()
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_true() -> bool {
    true
}

/// JSON experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub process: Vec<ProcessKind>,
    /// Defaults to i.i.d. standard Gaussian scalar innovations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<LinearProcessConfig>,
    #[serde(rename = "T")]
    pub sample_sizes: Vec<usize>,
    pub d: f64,
    #[serde(rename = "N")]
    pub replications: usize,
    pub grid: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: TolerancePolicy,
    /// Also report cross-covariances between distinct processes.
    #[serde(default = "default_true")]
    pub cross: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn scalar(
        process: &[ProcessKind],
        sample_sizes: &[usize],
        d: f64,
        replications: usize,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            process: process.to_vec(),
            spec: None,
            sample_sizes: sample_sizes.to_vec(),
            d,
            replications,
            grid: vec![1.0],
            seed: DEFAULT_SEED,
            tolerance: TolerancePolicy::default(),
            cross: true,
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn linear_spec(&self) -> Result<LinearProcessSpec> {
        match &self.spec {
            Some(c) => LinearProcessSpec::try_from(c.clone()),
            None => Ok(LinearProcessSpec::iid_gaussian(1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.process.is_empty() {
            return bad("process list is empty".into());
        }
        for k in &self.process {
            if *k == ProcessKind::Raw {
                return bad("process raw has no limit oracle".into());
            }
            if k.order().is_some_and(|m| m > MAX_VALIDATED_ORDER) {
                return bad(format!("order of {k} exceeds {MAX_VALIDATED_ORDER}"));
            }
        }
        if self.sample_sizes.is_empty() {
            return bad("T list is empty".into());
        }
        if let Some(&t) = self.sample_sizes.iter().find(|&&t| t < 2) {
            return Err(Error::DegenerateSample(t));
        }
        if self.replications < MIN_REPLICATIONS {
            return bad(format!(
                "N = {} below minimum {MIN_REPLICATIONS}",
                self.replications
            ));
        }
        if self.grid.is_empty() || self.grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad("grid values must lie in (0, 1]".into());
        }
        if !(self.tolerance.se_multiplier > 0.0 && self.tolerance.discretization_allowance >= 0.0) {
            return bad(
                "tolerance needs se_multiplier > 0 and discretization_allowance >= 0".into(),
            );
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        if !(self.d.is_finite() && self.d > 0.5 && self.d <= crate::fraccoef::MAX_VALIDATED_D) {
            return Err(Error::TheoremDomain(self.d));
        }
        self.linear_spec()?.validate_moments(self.d)
    }
}

/// Limit kernel of each simulated process; `Z*` shares the limit of `Z`.
pub fn limit_kernel(kind: ProcessKind) -> Result<Kernel> {
    match kind {
        ProcessKind::Z | ProcessKind::Zstar => Ok(Kernel::Weight(0)),
        ProcessKind::H(m) => Ok(Kernel::Log(m)),
        ProcessKind::DmZ(m) => Ok(Kernel::Weight(m)),
        ProcessKind::Raw => Err(Error::InvalidConfig(
            "process raw has no limit oracle".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub r: f64,
    pub process_a: String,
    pub process_b: String,
    pub comp_a: usize,
    pub comp_b: usize,
    pub replications: usize,
    pub empirical: f64,
    pub se: f64,
    pub oracle: f64,
    pub z_score: f64,
    pub pass: bool,
}

impl MomentRow {
    pub fn is_variance(&self) -> bool {
        self.process_a == self.process_b && self.comp_a == self.comp_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub d: f64,
    pub seed: u64,
    pub tolerance: TolerancePolicy,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn find(&self, t: usize, r: f64, a: ProcessKind, b: ProcessKind) -> Option<&MomentRow> {
        let (a, b) = (a.to_string(), b.to_string());
        self.rows
            .iter()
            .find(|row| row.t == t && row.r == r && row.process_a == a && row.process_b == b)
    }

    /// The same report judged against oracles moved by `se_units` standard errors.
    pub fn with_oracle_shift(&self, se_units: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.oracle += se_units * row.se;
            row.z_score = (row.empirical - row.oracle) / row.se;
            row.pass = self.tolerance.accepts(row.empirical, row.se, row.oracle);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "T,r,process_a,process_b,comp_a,comp_b,N,empirical,se,oracle,z_score,pass"
        )?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                row.t,
                fmt_f64(row.r),
                row.process_a,
                row.process_b,
                row.comp_a,
                row.comp_b,
                row.replications,
                fmt_f64(row.empirical),
                fmt_f64(row.se),
                fmt_f64(row.oracle),
                fmt_f64(row.z_score),
                if row.pass { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Mean of `x y` and its standard error `sd(x y) / sqrt(N)`.
pub fn product_moment(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mean = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Values at the grid points: `[process][grid point][component][replication]`.
type Samples = Vec<Vec<Vec<Vec<f64>>>>;

fn sample_grid(cfg: &ExperimentConfig, spec: &LinearProcessSpec, t: usize) -> Result<Samples> {
    let sim = PathSimulator::new(spec, t, cfg.d, &cfg.process)?;
    let p = spec.dim();
    let rows: Vec<usize> = cfg.grid.iter().map(|&r| grid_index(t, r) - 1).collect();
    let per_rep = map_replications(cfg.replications, cfg.threads, |rep| -> Result<Vec<f64>> {
        let paths = sim.replicate(cfg.seed, rep)?;
        let mut v = Vec::with_capacity(paths.len() * rows.len() * p);
        for path in &paths {
            for &row in &rows {
                v.extend(path.row(row).iter().copied());
            }
        }
        Ok(v)
    })?;
    let mut out =
        vec![vec![vec![Vec::with_capacity(cfg.replications); p]; rows.len()]; cfg.process.len()];
    for v in per_rep {
        let v = v?;
        let mut it = v.into_iter();
        for proc_slot in out.iter_mut() {
            for grid_slot in proc_slot.iter_mut() {
                for comp in grid_slot.iter_mut() {
                    comp.push(it.next().expect("sized"));
                }
            }
        }
    }
    Ok(out)
}

/// Empirical second moments at every (T, r) against `kappa * Omega_W`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MomentReport> {
    cfg.validate()?;
    let spec = cfg.linear_spec()?;
    let omega: DMatrix<f64> = spec.long_run_variance();
    let p = spec.dim();
    let kernels: Vec<Kernel> = cfg
        .process
        .iter()
        .map(|k| limit_kernel(*k))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &t in &cfg.sample_sizes {
        let samples = sample_grid(cfg, &spec, t)?;
        for (gi, &r) in cfg.grid.iter().enumerate() {
            for a in 0..cfg.process.len() {
                for b in a..cfg.process.len() {
                    if a != b && !cfg.cross {
                        continue;
                    }
                    let kappa = kappa_kernels(cfg.d, kernels[a], kernels[b], r, r)?;
                    for i in 0..p {
                        for j in 0..p {
                            if a == b && j < i {
                                continue;
                            }
                            let (emp, se) = product_moment(&samples[a][gi][i], &samples[b][gi][j]);
                            let oracle = kappa * omega[(i, j)];
                            rows.push(MomentRow {
                                t,
                                r,
                                process_a: cfg.process[a].to_string(),
                                process_b: cfg.process[b].to_string(),
                                comp_a: i,
                                comp_b: j,
                                replications: cfg.replications,
                                empirical: emp,
                                se,
                                oracle,
                                z_score: (emp - oracle) / se,
                                pass: cfg.tolerance.accepts(emp, se, oracle),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(MomentReport {
        d: cfg.d,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub process: String,
    pub r: f64,
    pub sample_sizes: Vec<usize>,
    pub deviations: Vec<f64>,
    pub inversions: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report: MomentReport,
    pub trends: Vec<TrendVerdict>,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.trends.iter().all(|t| t.pass)
    }
}

/// Variance deviations `|empirical - oracle|` across increasing T; the trend
/// passes when the sequence decreases with at most one inversion.
pub fn convergence_sweep(cfg: &ExperimentConfig, sample_sizes: &[usize]) -> Result<SweepReport> {
    if sample_sizes.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "a sweep needs at least 3 values of T, got {}",
            sample_sizes.len()
        )));
    }
    let mut ts = sample_sizes.to_vec();
    ts.sort_unstable();
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::InvalidConfig(
            "a sweep needs at least 3 distinct values of T".into(),
        ));
    }
    let swept = ExperimentConfig {
        sample_sizes: ts.clone(),
        cross: false,
        ..cfg.clone()
    };
    let report = run_experiment(&swept)?;
    let mut trends = Vec::new();
    for k in &cfg.process {
        for &r in &cfg.grid {
            let deviations: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    let row = report.find(t, r, *k, *k).expect("row present");
                    (row.empirical - row.oracle).abs()
                })
                .collect();
            let inversions = deviations.windows(2).filter(|w| w[1] > w[0]).count();
            trends.push(TrendVerdict {
                process: k.to_string(),
                r,
                sample_sizes: ts.clone(),
                deviations,
                inversions,
                pass: inversions <= 1,
            });
        }
    }
    Ok(SweepReport { report, trends })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
    /// Set when the innovations are not Gaussian, so normality holds only in the limit.
    pub advisory: bool,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the standardized draws and N(0, 1).
pub fn ks_normal_distance(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidConfig("need at least two draws".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidConfig("draws have zero spread".into()));
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let nf = n as f64;
    Ok(z.iter().enumerate().fold(0.0_f64, |acc, (i, &x)| {
        let f = std_normal_cdf(x);
        acc.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf)
    }))
}

/// KS check of the marginal at `floor(T r)`.
pub fn marginal_normality(
    ens: &PathEnsemble,
    r: f64,
    component: usize,
    gaussian_innovations: bool,
) -> Result<NormalityResult> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidConfig(format!("r = {r} outside (0, 1]")));
    }
    if component >= ens.dim() {
        return Err(Error::InvalidConfig(format!(
            "component {component} out of range"
        )));
    }
    let x = ens.marginal(grid_index(ens.sample_size, r), component);
    let statistic = ks_normal_distance(&x)?;
    let critical = KS_CRITICAL_1PCT / (x.len() as f64).sqrt();
    Ok(NormalityResult {
        statistic,
        critical,
        pass: statistic <= critical,
        advisory: !gaussian_innovations,
    })
}
