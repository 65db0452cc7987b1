//! Truncated (Type-II) causal filters `y_t = sum_{n=0}^{t-1} w_n x_{t-n}`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fraccoef::pi_coeffs;

/// Sample lengths at or below this use the direct sum in [`frac_filter`].
pub const DIRECT_CUTOFF: usize = 64;

/// Direct O(T^2) evaluation, column by column.
pub fn filter_direct(weights: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let (t, p) = x.dim();
    assert!(
        weights.len() >= t,
        "need {t} weights, got {}",
        weights.len()
    );
    let mut out = Array2::zeros((t, p));
    for c in 0..p {
        for ti in 0..t {
            let mut acc = 0.0;
            for n in 0..=ti {
                acc += weights[n] * x[(ti - n, c)];
            }
            out[(ti, c)] = acc;
        }
    }
    out
}

/// Fast convolution: one length-2T circular convolution per column.
pub fn filter_fft(weights: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let t = x.nrows();
    let conv = Convolver::new(t, &[&weights[..t]]);
    let mut out = Array2::zeros(x.dim());
    for c in 0..x.ncols() {
        let col = conv.apply(x.column(c));
        for (ti, v) in col.into_iter().next().unwrap().into_iter().enumerate() {
            out[(ti, c)] = v;
        }
    }
    out
}

/// `Delta_+^{-d} x`: the Type-II fractional filter with weights pi_n(d).
pub fn frac_filter(x: &Array2<f64>, d: f64) -> Array2<f64> {
    let w = pi_coeffs(d, x.nrows().saturating_sub(1));
    if x.nrows() <= DIRECT_CUTOFF {
        filter_direct(&w, x)
    } else {
        filter_fft(&w, x)
    }
}

pub fn frac_filter_direct(x: &Array2<f64>, d: f64) -> Array2<f64> {
    filter_direct(&pi_coeffs(d, x.nrows().saturating_sub(1)), x)
}

pub fn frac_filter_fft(x: &Array2<f64>, d: f64) -> Array2<f64> {
    filter_fft(&pi_coeffs(d, x.nrows().saturating_sub(1)), x)
}

/// Planned FFTs of length 2T and the spectra of a fixed set of filters, so one
/// forward transform of the input serves every filter.
pub struct Convolver {
    len: usize,
    t: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("t", &self.t)
            .field("filters", &self.spectra.len())
            .finish()
    }
}

impl Convolver {
    pub fn new(t: usize, filters: &[&[f64]]) -> Self {
        let len = 2 * t.max(1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let spectra = filters
            .iter()
            .map(|w| {
                let mut buf = vec![Complex64::new(0.0, 0.0); len];
                for (slot, &v) in buf.iter_mut().zip(w.iter().take(t)) {
                    slot.re = v;
                }
                forward.process(&mut buf);
                buf
            })
            .collect();
        Self {
            len,
            t,
            forward,
            inverse,
            spectra,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.t
    }

    pub fn filter_count(&self) -> usize {
        self.spectra.len()
    }

    /// Filters one series with every stored filter; output[k] has length T.
    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.t);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (slot, &v) in buf.iter_mut().zip(x.iter()) {
            slot.re = v;
        }
        self.forward.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        self.spectra
            .iter()
            .map(|spec| {
                let mut prod: Vec<Complex64> = buf.iter().zip(spec).map(|(a, b)| a * b).collect();
                self.inverse.process(&mut prod);
                prod[..self.t].iter().map(|c| c.re * scale).collect()
            })
            .collect()
    }
}
