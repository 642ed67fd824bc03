use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use portcycle::beamspace::{enumerate_beamsets, steering_vector, AntennaConfig};
use portcycle::channel::WidebandCovariance;
use portcycle::codebook::{
    assemble_precoder, ground_truth_report, quantize_amplitude, quantize_coefficients, quantize_phase,
    unquantized_precoder, wideband_coefficients, QuantizationTables, TypeIIReport,
};
use portcycle::linalg::{dominant_eigenpair, hermitian_eigen};
use portcycle::metrics::{bf_gain, dominant_eigenvector, sgcs};

fn small_config() -> impl Strategy<Value = AntennaConfig> {
    (1usize..=4, 1usize..=4, 1usize..=4, 1usize..=4)
        .prop_map(|(nx, ny, o1, o2)| AntennaConfig::new(nx, ny, o1, o2).unwrap())
}

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| DMatrix::from_iterator(rows, cols, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

/// Config plus a random PSD covariance of matching size.
fn config_and_cov() -> impl Strategy<Value = (AntennaConfig, WidebandCovariance)> {
    (1usize..=3, 1usize..=3, 1usize..=3, 1usize..=3, 1usize..=4).prop_flat_map(|(nx, ny, o1, o2, rank)| {
        let cfg = AntennaConfig::new(nx, ny, o1, o2).unwrap();
        complex_matrix(cfg.n_t(), rank).prop_filter_map("zero matrix", move |a| {
            let r = &a * a.adjoint();
            let r = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
            (r.norm() > 1e-6).then(|| (cfg, WidebandCovariance::new(r).unwrap()))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beamsets_are_scaled_orthonormal(cfg in small_config()) {
        let grid = enumerate_beamsets(&cfg).unwrap();
        let n = cfg.n_elements() as f64;
        for v in grid.beamsets() {
            let gram = v.adjoint() * v;
            let err = (&gram - DMatrix::<Complex64>::identity(gram.nrows(), gram.ncols()) * Complex64::new(n, 0.0)).norm();
            prop_assert!(err <= 1e-10 * n * n);
            prop_assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn beamsets_tile_the_oversampled_grid(cfg in small_config()) {
        let grid = enumerate_beamsets(&cfg).unwrap();
        let mut seen = HashSet::new();
        for b in 0..grid.n_beamsets() {
            for i in 0..grid.n_beams() {
                let (l, m) = grid.grid_coordinates(b, i).unwrap();
                prop_assert!(seen.insert((l, m)));
                prop_assert_eq!(grid.locate(l, m).unwrap(), (b, i));
                let direct = steering_vector(l as f64, m as f64, &cfg);
                prop_assert!((direct - grid.beam(b, i).unwrap()).norm() < 1e-9);
            }
        }
        prop_assert_eq!(seen.len(), cfg.o1 * cfg.n_x * cfg.o2 * cfg.n_y);
    }

    #[test]
    fn report_ignores_eigenvector_phase((cfg, cov) in config_and_cov(), alpha in 0.0f64..(2.0 * PI)) {
        let grid = enumerate_beamsets(&cfg).unwrap();
        let tables = QuantizationTables::default();
        let l = cfg.n_elements().min(2);
        let sel = portcycle::codebook::select_beamset_and_indices(&cov, &grid, l).unwrap();
        let (_, e) = dominant_eigenpair(cov.matrix()).unwrap();
        let rotated = &e * Complex64::cis(alpha);
        let base = wideband_coefficients(&e, sel.beamset, &sel.beam_indices, &grid);
        let turned = wideband_coefficients(&rotated, sel.beamset, &sel.beam_indices, &grid);
        match (base, turned) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.strongest, b.strongest);
                for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
                let qa = quantize_coefficients(&a, &tables).unwrap();
                let qb = quantize_coefficients(&b, &tables).unwrap();
                // only slots sitting on a phase-decision boundary may differ
                for (k, (pa, pb)) in qa.phase_levels.iter().zip(&qb.phase_levels).enumerate() {
                    if pa != pb {
                        let step = 2.0 * PI / tables.n_psk() as f64;
                        let frac = (a.phases[k] / step).rem_euclid(1.0);
                        prop_assert!((frac - 0.5).abs() < 1e-6, "slot {} phase {}", k, a.phases[k]);
                    }
                }
                prop_assert_eq!(qa.amp_levels, qb.amp_levels);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "one side failed: {:?} / {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn report_is_scale_invariant((cfg, cov) in config_and_cov(), scale in 1e-3f64..1e3) {
        let grid = enumerate_beamsets(&cfg).unwrap();
        let tables = QuantizationTables::default();
        let l = cfg.n_elements().min(2);
        let scaled = WidebandCovariance::new(cov.matrix() * Complex64::new(scale, 0.0)).unwrap();
        let a = ground_truth_report(&cov, &grid, &tables, l);
        let b = ground_truth_report(&scaled, &grid, &tables, l);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.beamset, b.beamset);
            prop_assert_eq!(a.beam_indices, b.beam_indices);
        }
    }

    #[test]
    fn assembled_precoders_are_unit_norm_and_bounded((cfg, cov) in config_and_cov(), seed in any::<u64>()) {
        let grid = enumerate_beamsets(&cfg).unwrap();
        let tables = QuantizationTables::default();
        let n = cfg.n_elements();
        let l = n.min(2);
        // a random report from the seed
        let mut s = seed;
        let mut next = |m: usize| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % m as u64) as usize
        };
        let mut indices: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            indices.swap(i, next(i + 1));
        }
        let mut amp_levels: Vec<usize> = (0..2 * l).map(|_| next(8)).collect();
        let strongest = next(2 * l);
        amp_levels[strongest] = 7;
        let mut phase_levels: Vec<usize> = (0..2 * l).map(|_| next(8)).collect();
        phase_levels[strongest] = 0;
        let report = TypeIIReport {
            beamset: next(cfg.n_beamsets()),
            beam_indices: indices[..l].to_vec(),
            amp_levels,
            phase_levels,
            strongest,
        };
        report.validate_label(&cfg, &tables).unwrap();
        let w = assemble_precoder(&report, &grid, &tables).unwrap().w;
        prop_assert!((w.norm() - 1.0).abs() < 1e-9);
        let lambda = hermitian_eigen(cov.matrix()).unwrap().values[0];
        let rayleigh = w.dotc(&(cov.matrix() * &w)).re;
        prop_assert!(rayleigh <= lambda * (1.0 + 1e-9));
        let v = dominant_eigenvector(&cov).unwrap();
        let g = bf_gain(&w, &cov, &v).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&g));
        let s = sgcs(&v, &w).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&s));
    }

    #[test]
    fn dominant_pair_residual((_, cov) in config_and_cov()) {
        let (lambda, e) = dominant_eigenpair(cov.matrix()).unwrap();
        let residual = (cov.matrix() * &e - &e * Complex64::new(lambda, 0.0)).norm();
        prop_assert!(residual <= 1e-8 * lambda);
        let top = hermitian_eigen(cov.matrix()).unwrap().values[0];
        prop_assert!((lambda - top).abs() <= 1e-9 * top);
    }

    #[test]
    fn full_beam_unquantized_reconstruction_is_exact((cfg, cov) in config_and_cov()) {
        // with every beam of a beamset selected the codebook spans the eigenvector
        let grid = enumerate_beamsets(&cfg).unwrap();
        let v = dominant_eigenvector(&cov).unwrap();
        let (_, _, w) = unquantized_precoder(&cov, &grid, cfg.n_elements()).unwrap();
        prop_assert!((bf_gain(&w.w, &cov, &v).unwrap() - 1.0).abs() < 1e-6);
        prop_assert!((sgcs(&v, &w.w).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn amplitude_quantizer_is_nearest(a in 0.0f64..=1.0) {
        let tables = QuantizationTables::default();
        let level = quantize_amplitude(a, &tables).unwrap();
        let chosen = (tables.amplitude(level).unwrap() - a).abs();
        for k in 0..8 {
            prop_assert!(chosen <= (tables.amplitude(k).unwrap() - a).abs() + 1e-15);
        }
    }

    #[test]
    fn phase_quantizer_is_nearest_on_the_circle(theta in -10.0f64..10.0, n_psk in prop::sample::select(vec![4usize, 8, 16])) {
        let tables = QuantizationTables::new(n_psk).unwrap();
        let level = quantize_phase(theta, &tables).unwrap();
        let dist = |k: usize| {
            let d = (theta - tables.phase_angle(k).unwrap()).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        };
        for k in 0..n_psk {
            prop_assert!(dist(level) <= dist(k) + 1e-12);
        }
    }
}

#[test]
fn quantized_single_ray_meets_the_phase_cell_bound() {
    // one ray on the grid: both polarisations carry equal power and only the
    // relative polarisation phase is quantized
    let cfg = AntennaConfig::new(4, 4, 4, 4).unwrap();
    let grid = enumerate_beamsets(&cfg).unwrap();
    let tables = QuantizationTables::default();
    let bound = (PI / 16.0).cos().powi(2);
    for k in 0..64 {
        let phase = 2.0 * PI * k as f64 / 64.0 + 0.01;
        let a = steering_vector(5.0, 3.0, &cfg);
        let e = DVector::from_fn(cfg.n_t(), |i, _| {
            let n = cfg.n_elements();
            if i < n {
                a[i]
            } else {
                a[i - n] * Complex64::cis(phase)
            }
        });
        let cov = WidebandCovariance::new(&e * e.adjoint()).unwrap();
        let report = ground_truth_report(&cov, &grid, &tables, 2).unwrap();
        assert_eq!(report.beamset, 7);
        let w = assemble_precoder(&report, &grid, &tables).unwrap().w;
        let s = sgcs(&e, &w).unwrap();
        assert!(s >= bound - 1e-9, "phase {phase}: {s}");
    }
}
