//! Linear-process innovations, fractional filters and normalized paths.

mod filter;
mod io;
mod paths;
mod spec;

pub use filter::{
    filter_direct, filter_fft, frac_filter, frac_filter_direct, frac_filter_fft, Convolver,
    DIRECT_CUTOFF,
};
pub use io::{fmt_f64, read_binary, write_binary, write_csv, BINARY_VERSION, MAGIC};
pub use paths::{
    grid_index, impulse_xi, path_dmz, path_hm, path_z, path_zstar, process_filter, simulate_xi,
    PathEnsemble, PathSimulator, ProcessKind, SeedRecord, WeightRoute,
};
pub use spec::{InnovationLaw, LagCoefficient, LinearProcessConfig, LinearProcessSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::fraccoef::pi_coeffs;
    use crate::specfun::{harmonic_sum, HarmonicTable};
    use ndarray::Array2;

    fn max_abs<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
        it.fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn impulse_z_is_scaled_pi() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        let sim = PathSimulator::new(&spec, 4, 0.75, &[ProcessKind::Z]).unwrap();
        let z = sim.impulse_ensemble(1, 0).unwrap().remove(0);
        let pi = pi_coeffs(0.75, 3);
        for t in 1..=4 {
            let want = 4f64.powf(-0.25) * pi[t - 1];
            assert!((z.data[(0, t - 1, 0)] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_zstar_matches_harmonic() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        let sim = PathSimulator::new(&spec, 4, 1.0, &[ProcessKind::Zstar]).unwrap();
        let zs = sim.impulse_ensemble(1, 0).unwrap().remove(0);
        assert_eq!(zs.data[(0, 0, 0)], 0.0);
        for t in 2..=4 {
            let want = 0.5 / 4f64.ln() * harmonic_sum(1, t - 1, 1.0).unwrap();
            assert!((zs.data[(0, t - 1, 0)] - want).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn zero_order_processes_equal_z() {
        let spec = LinearProcessSpec::iid_gaussian(2);
        let kinds = [ProcessKind::Z, ProcessKind::H(0), ProcessKind::DmZ(0)];
        let sim = PathSimulator::new(&spec, 100, 0.8, &kinds).unwrap();
        let paths = sim.replicate(3, 0).unwrap();
        assert_eq!(paths[0], paths[1]);
        assert_eq!(paths[0], paths[2]);
    }

    #[test]
    fn derivative_identities_hold() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        let kinds = [
            ProcessKind::Z,
            ProcessKind::Zstar,
            ProcessKind::H(1),
            ProcessKind::DmZ(1),
        ];
        for &t in &[64usize, 512, 2048] {
            for &d in &[0.6, 0.75, 1.1] {
                let sim = PathSimulator::new(&spec, t, d, &kinds).unwrap();
                let log_t = (t as f64).ln();
                let coef = -log_t + harmonic_sum(1, t + 1, d).unwrap();
                for rep in 0..3 {
                    let p = sim.replicate(11, rep).unwrap();
                    let (z, zs, h1, dz) = (&p[0], &p[1], &p[2], &p[3]);
                    let scale = max_abs(dz.iter());
                    let a = (dz - &((zs - z) * log_t)).mapv(f64::abs);
                    let b = (dz - &(z * coef + h1)).mapv(f64::abs);
                    assert!(max_abs(a.iter()) <= 1e-10 * scale, "log form t={t} d={d}");
                    assert!(
                        max_abs(b.iter()) <= 1e-10 * scale,
                        "suffix form t={t} d={d}"
                    );
                }
            }
        }
    }

    #[test]
    fn weight_routes_agree() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        let kinds: Vec<_> = (2..=4).map(ProcessKind::DmZ).collect();
        for &d in &[0.6, 1.3] {
            let a =
                PathSimulator::with_route(&spec, 512, d, &kinds, WeightRoute::Recursive).unwrap();
            let b =
                PathSimulator::with_route(&spec, 512, d, &kinds, WeightRoute::ClosedForm).unwrap();
            let pa = a.replicate(2, 0).unwrap();
            let pb = b.replicate(2, 0).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                let scale = max_abs(x.iter());
                assert!(max_abs((x - y).iter()) <= 1e-11 * scale);
            }
        }
    }

    #[test]
    fn hm_filter_uses_suffix_through_t() {
        let t = 10;
        let d = 0.9;
        let w = process_filter(ProcessKind::H(2), t, d, None).unwrap();
        let pi = pi_coeffs(d, t - 1);
        let scale = (t as f64).powf(0.5 - d);
        for n in 0..t {
            let tail: f64 = (n..=t).map(|k| 1.0 / (k as f64 + d)).sum();
            let want = scale * pi[n] * tail * tail;
            assert!((w[n] - want).abs() <= 1e-14 * want.abs());
        }
    }

    #[test]
    fn identity_filter_reproduces_eps() {
        let spec = LinearProcessSpec::iid_gaussian(2);
        let xi = simulate_xi(&spec, 50, 4, 0).unwrap();
        let mut rng = crate::exec::stream_rng(4, &[crate::exec::domain::INNOVATIONS, 50, 0]);
        let eps = spec.draw_innovations(spec.innovation_rows(50), &mut rng);
        assert_eq!(xi, eps);
    }

    #[test]
    fn ma1_impulse_response() {
        let spec =
            LinearProcessSpec::scalar(&[(0, 1.0), (1, 0.5)], InnovationLaw::Gaussian, 1.0).unwrap();
        let xi = impulse_xi(&spec, 5, 1, 0).unwrap();
        assert_eq!(xi.column(0).to_vec(), vec![1.0, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ensembles_reproducible_across_threads() {
        let spec = LinearProcessSpec::scalar(
            &[(-1, 0.3), (0, 1.0), (2, -0.2)],
            InnovationLaw::Gaussian,
            1.5,
        )
        .unwrap();
        let kinds = [ProcessKind::Z, ProcessKind::DmZ(2), ProcessKind::Raw];
        let sim = PathSimulator::new(&spec, 200, 0.7, &kinds).unwrap();
        let a = sim.ensemble(77, 20, Some(1)).unwrap();
        let b = sim.ensemble(77, 20, Some(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(PathEnsemble::all_finite));
        let c = sim.ensemble(78, 20, Some(1)).unwrap();
        assert_ne!(a[0].data, c[0].data);
    }

    #[test]
    fn near_half_variance_positive() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        let z = path_z(&spec, 256, 0.5 + 1e-3, 1, 400).unwrap();
        let x = z.marginal(256, 0);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(var.is_finite() && var > 0.0);
    }

    #[test]
    fn domain_errors() {
        let spec = LinearProcessSpec::iid_gaussian(1);
        assert!(matches!(
            path_z(&spec, 16, 0.5, 1, 2),
            Err(Error::TheoremDomain(_))
        ));
        assert!(matches!(
            path_zstar(&spec, 1, 0.75, 1, 2),
            Err(Error::DegenerateSample(1))
        ));
        assert!(path_dmz(&spec, 16, 0.75, 11, 1, 2).is_err());
        let heavy =
            LinearProcessSpec::scalar(&[(0, 1.0)], InnovationLaw::StudentT { nu: 3.0 }, 1.0)
                .unwrap();
        // q = 3 needs 2/(2d-1) < 3, i.e. d > 5/6.
        assert!(path_z(&heavy, 16, 0.8, 1, 2).is_err());
        assert!(path_z(&heavy, 16, 0.9, 1, 2).is_ok());
    }

    #[test]
    fn kind_parsing_round_trips() {
        for k in [
            ProcessKind::Z,
            ProcessKind::Zstar,
            ProcessKind::H(3),
            ProcessKind::DmZ(2),
            ProcessKind::Raw,
        ] {
            assert_eq!(k.to_string().parse::<ProcessKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<ProcessKind>(&json).unwrap(), k);
        }
        assert!("H".parse::<ProcessKind>().is_err());
        assert!("Q1".parse::<ProcessKind>().is_err());
    }

    #[test]
    fn binary_and_csv_output() {
        let spec = LinearProcessSpec::iid_gaussian(2);
        let ens = path_hm(&spec, 8, 0.75, 1, 5, 3).unwrap();
        let mut bin = Vec::new();
        write_binary(&ens, &mut bin).unwrap();
        assert_eq!(&bin[..4], b"FDRV");
        assert_eq!(u32::from_le_bytes(bin[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bin[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bin[12..16].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bin[16..20].try_into().unwrap()), 2);
        assert_eq!(bin.len(), 20 + 8 * 3 * 8 * 2);
        assert_eq!(read_binary(bin.as_slice()).unwrap(), ens.data);

        let mut csv = Vec::new();
        write_csv(&ens, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rep,t,component,value");
        assert_eq!(lines.len(), 1 + 3 * 8 * 2);
        let last: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(&last[..3], &["2", "8", "1"]);
        assert_eq!(last[3].parse::<f64>().unwrap(), ens.data[(2, 7, 1)]);
    }

    #[test]
    fn lag0_covariance_matches_sample() {
        use nalgebra::DMatrix;
        let c1 = DMatrix::from_row_slice(2, 2, &[0.4, -0.2, 0.1, 0.3]);
        let cm1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.25, -0.15, 0.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let spec = LinearProcessSpec::new(
            2,
            vec![(-1, cm1), (0, DMatrix::identity(2, 2)), (1, c1)],
            InnovationLaw::Gaussian,
            sigma,
        )
        .unwrap();
        let t = 100_000;
        let xi = simulate_xi(&spec, t, 21, 0).unwrap();
        let want = spec.lag0_covariance();
        for i in 0..2 {
            for j in 0..2 {
                let prods: Vec<f64> = (0..t).map(|k| xi[(k, i)] * xi[(k, j)]).collect();
                let mean = prods.iter().sum::<f64>() / t as f64;
                // MA(1) products are 2-dependent; inflate the iid SE generously.
                let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
                let se = (5.0 * var / t as f64).sqrt();
                assert!(
                    (mean - want[(i, j)]).abs() <= 3.0 * se,
                    "({i},{j}) {mean} vs {}",
                    want[(i, j)]
                );
            }
        }
    }

    #[test]
    fn raw_and_grid_helpers() {
        assert_eq!(grid_index(10, 0.0), 1);
        assert_eq!(grid_index(10, 0.55), 5);
        assert_eq!(grid_index(10, 1.0), 10);
        let h = HarmonicTable::new(1, 3, 0.5).unwrap();
        assert_eq!(h.get(0), 0.0);
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(frac_filter(&x, 0.0), x);
    }
}
