use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::filter::Convolver;
use super::spec::LinearProcessSpec;
use crate::error::{Error, Result};
use crate::exec::{domain, map_replications, stream_rng};
use crate::fraccoef::{
    pi_coeffs, validate_weight_domain, weights_closed_form, weights_recursive, FracWeights,
    MAX_VALIDATED_ORDER,
};
use crate::specfun::{harmonic_suffix, HarmonicTable};

/// The normalized processes that can be simulated on t = 1..T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "tag", content = "m")]
pub enum ProcessKind {
    /// `T^{1/2-d} Delta_+^{-d} xi`.
    Z,
    /// `T^{1/2-d} (log T)^{-1} D_d Delta_+^{-d} xi`.
    Zstar,
    /// Weights `pi_n(d) (-sum_{k=n}^{T} (k+d)^{-1})^m`.
    H(u32),
    /// `D_d^m Z`.
    DmZ(u32),
    /// The linear process xi itself.
    Raw,
}

impl ProcessKind {
    pub fn order(&self) -> Option<u32> {
        match self {
            ProcessKind::H(m) | ProcessKind::DmZ(m) => Some(*m),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ProcessKind::Z => "Z",
            ProcessKind::Zstar => "Zstar",
            ProcessKind::H(_) => "H",
            ProcessKind::DmZ(_) => "DmZ",
            ProcessKind::Raw => "raw",
        }
    }

    /// Builds a kind from a tag and an optional order.
    pub fn from_tag(tag: &str, m: Option<u32>) -> Result<Self> {
        let need_m =
            || m.ok_or_else(|| Error::InvalidConfig(format!("process {tag} needs an order m")));
        match tag {
            "Z" => Ok(ProcessKind::Z),
            "Zstar" => Ok(ProcessKind::Zstar),
            "H" => Ok(ProcessKind::H(need_m()?)),
            "DmZ" | "DZ" => Ok(ProcessKind::DmZ(need_m()?)),
            "raw" => Ok(ProcessKind::Raw),
            other => Err(Error::InvalidConfig(format!(
                "unknown process tag {other:?}"
            ))),
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.order() {
            Some(m) => write!(f, "{}{}", self.tag(), m),
            None => f.write_str(self.tag()),
        }
    }
}

impl FromStr for ProcessKind {
    type Err = Error;

    /// Accepts `Z`, `Zstar`, `raw`, `H<m>`, `DmZ<m>`.
    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (tag, digits) = s.split_at(split);
        let m = if digits.is_empty() {
            None
        } else {
            Some(
                digits
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad order in {s:?}")))?,
            )
        };
        ProcessKind::from_tag(tag, m)
    }
}

/// Where the replication innovations came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedRecord {
    /// `ChaCha8(stream_seed(master, [INNOVATIONS, T, rep]))` per replication.
    Stream { master_seed: u64 },
    /// Deterministic unit impulse in `eps` at time `time`, coordinate `component`.
    Impulse { time: usize, component: usize },
}

/// Which analytic route produces the `D^m Z` weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WeightRoute {
    #[default]
    Recursive,
    ClosedForm,
}

/// A batch of sample paths of one process on t = 1..T.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub kind: ProcessKind,
    pub sample_size: usize,
    pub d: f64,
    pub seed: SeedRecord,
    /// Shape (replications, T, p).
    pub data: Array3<f64>,
}

impl PathEnsemble {
    pub fn replications(&self) -> usize {
        self.data.dim().0
    }

    pub fn dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn order(&self) -> Option<u32> {
        self.kind.order()
    }

    /// Values at time t (1-based) of one coordinate, across replications.
    pub fn marginal(&self, t: usize, component: usize) -> Vec<f64> {
        self.data.slice(s![.., t - 1, component]).to_vec()
    }

    /// Replication `rep` as a T x p array.
    pub fn path(&self, rep: usize) -> Array2<f64> {
        self.data.slice(s![rep, .., ..]).to_owned()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The time index `floor(T r)` clamped to 1..=T.
pub fn grid_index(t: usize, r: f64) -> usize {
    ((t as f64 * r).floor() as usize).clamp(1, t)
}

/// Draws xi_1..xi_T for one replication stream.
pub fn simulate_xi(
    spec: &LinearProcessSpec,
    t: usize,
    master_seed: u64,
    rep: usize,
) -> Result<Array2<f64>> {
    if t < 1 {
        return Err(Error::DegenerateSample(t));
    }
    let mut rng = stream_rng(master_seed, &[domain::INNOVATIONS, t as u64, rep as u64]);
    let eps = spec.draw_innovations(spec.innovation_rows(t), &mut rng);
    spec.apply_filter(&eps, t)
}

/// xi when eps is a unit impulse at `time` (1-based) in coordinate `component`.
pub fn impulse_xi(
    spec: &LinearProcessSpec,
    t: usize,
    time: usize,
    component: usize,
) -> Result<Array2<f64>> {
    if component >= spec.dim() || time < 1 || time > t {
        return Err(Error::InvalidSpec(format!(
            "impulse at t={time}, component={component} out of range"
        )));
    }
    let mut eps = Array2::zeros((spec.innovation_rows(t), spec.dim()));
    eps[(time - 1 + spec.max_lag(), component)] = 1.0;
    spec.apply_filter(&eps, t)
}

/// Precomputed filters for a set of processes sharing (spec, T, d); produces
/// every requested process from the same xi draw, so their joint law is kept.
#[derive(Debug)]
pub struct PathSimulator {
    spec: LinearProcessSpec,
    t: usize,
    d: f64,
    kinds: Vec<ProcessKind>,
    filters: Vec<Vec<f64>>,
    convolver: Convolver,
}

impl PathSimulator {
    pub fn new(spec: &LinearProcessSpec, t: usize, d: f64, kinds: &[ProcessKind]) -> Result<Self> {
        Self::with_route(spec, t, d, kinds, WeightRoute::Recursive)
    }

    pub fn with_route(
        spec: &LinearProcessSpec,
        t: usize,
        d: f64,
        kinds: &[ProcessKind],
        route: WeightRoute,
    ) -> Result<Self> {
        validate_weight_domain(t, d, 1)?;
        spec.validate_moments(d)?;
        if kinds.is_empty() {
            return Err(Error::InvalidConfig("no processes requested".into()));
        }
        for k in kinds {
            if let Some(m) = k.order() {
                if m > MAX_VALIDATED_ORDER {
                    return Err(Error::Domain(format!(
                        "order {m} exceeds cap {MAX_VALIDATED_ORDER}"
                    )));
                }
            }
        }
        let max_dm = kinds
            .iter()
            .filter_map(|k| match k {
                ProcessKind::DmZ(m) if *m > 0 => Some(*m),
                _ => None,
            })
            .max();
        let weights = match max_dm {
            Some(m) => Some(match route {
                WeightRoute::Recursive => weights_recursive(t, d, m)?,
                WeightRoute::ClosedForm => weights_closed_form(t, d, m)?,
            }),
            None => None,
        };
        let filters = kinds
            .iter()
            .map(|k| process_filter(*k, t, d, weights.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = filters.iter().map(Vec::as_slice).collect();
        let convolver = Convolver::new(t, &refs);
        Ok(Self {
            spec: spec.clone(),
            t,
            d,
            kinds: kinds.to_vec(),
            filters,
            convolver,
        })
    }

    pub fn kinds(&self) -> &[ProcessKind] {
        &self.kinds
    }

    pub fn sample_size(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn spec(&self) -> &LinearProcessSpec {
        &self.spec
    }

    /// Filter weights w_0..w_{T-1} of process `k` (the order in `kinds`).
    pub fn filter(&self, k: usize) -> &[f64] {
        &self.filters[k]
    }

    /// Every requested process driven by the given xi (T x p).
    pub fn paths_from_xi(&self, xi: &Array2<f64>) -> Vec<Array2<f64>> {
        let p = xi.ncols();
        let mut out = vec![Array2::zeros((self.t, p)); self.kinds.len()];
        for c in 0..p {
            let filtered = self.convolver.apply(xi.column(c));
            for (k, col) in filtered.into_iter().enumerate() {
                if self.kinds[k] == ProcessKind::Raw {
                    out[k].column_mut(c).assign(&xi.column(c));
                } else {
                    for (ti, v) in col.into_iter().enumerate() {
                        out[k][(ti, c)] = v;
                    }
                }
            }
        }
        out
    }

    /// Every requested process for replication `rep` of stream `master_seed`.
    pub fn replicate(&self, master_seed: u64, rep: usize) -> Result<Vec<Array2<f64>>> {
        let xi = simulate_xi(&self.spec, self.t, master_seed, rep)?;
        Ok(self.paths_from_xi(&xi))
    }

    /// Full path ensembles, one per requested process.
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
        let per_rep = map_replications(reps, threads, |rep| self.replicate(master_seed, rep))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let p = self.spec.dim();
        Ok(self
            .kinds
            .iter()
            .enumerate()
            .map(|(k, kind)| {
                let mut data = Array3::zeros((reps, self.t, p));
                for (rep, paths) in per_rep.iter().enumerate() {
                    data.slice_mut(s![rep, .., ..]).assign(&paths[k]);
                }
                PathEnsemble {
                    kind: *kind,
                    sample_size: self.t,
                    d: self.d,
                    seed: SeedRecord::Stream { master_seed },
                    data,
                }
            })
            .collect())
    }

    /// Single-replication ensembles driven by a unit impulse in eps.
    pub fn impulse_ensemble(&self, time: usize, component: usize) -> Result<Vec<PathEnsemble>> {
        let xi = impulse_xi(&self.spec, self.t, time, component)?;
        let paths = self.paths_from_xi(&xi);
        Ok(self
            .kinds
            .iter()
            .zip(paths)
            .map(|(kind, path)| {
                let (t, p) = path.dim();
                PathEnsemble {
                    kind: *kind,
                    sample_size: self.t,
                    d: self.d,
                    seed: SeedRecord::Impulse { time, component },
                    data: path.into_shape_with_order((1, t, p)).expect("contiguous"),
                }
            })
            .collect())
    }
}

/// Filter weights for one process.
pub fn process_filter(
    kind: ProcessKind,
    t: usize,
    d: f64,
    weights: Option<&FracWeights>,
) -> Result<Vec<f64>> {
    let scale = (t as f64).powf(0.5 - d);
    let pi = pi_coeffs(d, t - 1);
    let w = match kind {
        ProcessKind::Raw => {
            let mut w = vec![0.0; t];
            w[0] = 1.0;
            w
        }
        ProcessKind::Z | ProcessKind::H(0) | ProcessKind::DmZ(0) => {
            pi.iter().map(|p| scale * p).collect()
        }
        ProcessKind::Zstar => {
            let h1 = HarmonicTable::new(1, t - 1, d)?;
            let norm = scale / (t as f64).ln();
            pi.iter()
                .zip(h1.values())
                .map(|(p, h)| norm * p * h)
                .collect()
        }
        ProcessKind::H(m) => {
            let suffix = harmonic_suffix(1, t, d)?;
            pi.iter()
                .zip(&suffix)
                .map(|(p, sfx)| scale * p * (-sfx).powi(m as i32))
                .collect()
        }
        ProcessKind::DmZ(m) => match weights {
            Some(w) if w.max_order() >= m => w.derivative_filter(m),
            _ => weights_recursive(t, d, m)?.derivative_filter(m),
        },
    };
    Ok(w)
}

fn single(
    spec: &LinearProcessSpec,
    t: usize,
    d: f64,
    kind: ProcessKind,
    master_seed: u64,
    reps: usize,
) -> Result<PathEnsemble> {
    let sim = PathSimulator::new(spec, t, d, &[kind])?;
    Ok(sim.ensemble(master_seed, reps, None)?.remove(0))
}

/// Z_t = T^{1/2-d} (Delta_+^{-d} xi)_t.
pub fn path_z(
    spec: &LinearProcessSpec,
    t: usize,
    d: f64,
    master_seed: u64,
    reps: usize,
) -> Result<PathEnsemble> {
    single(spec, t, d, ProcessKind::Z, master_seed, reps)
}

pub fn path_zstar(
    spec: &LinearProcessSpec,
    t: usize,
    d: f64,
    master_seed: u64,
    reps: usize,
) -> Result<PathEnsemble> {
    single(spec, t, d, ProcessKind::Zstar, master_seed, reps)
}

pub fn path_hm(
    spec: &LinearProcessSpec,
    t: usize,
    d: f64,
    m: u32,
    master_seed: u64,
    reps: usize,
) -> Result<PathEnsemble> {
    single(spec, t, d, ProcessKind::H(m), master_seed, reps)
}

pub fn path_dmz(
    spec: &LinearProcessSpec,
    t: usize,
    d: f64,
    m: u32,
    master_seed: u64,
    reps: usize,
) -> Result<PathEnsemble> {
    single(spec, t, d, ProcessKind::DmZ(m), master_seed, reps)
}
