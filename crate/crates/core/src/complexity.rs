//! Timing benchmark: full Hermitian EVD on the whole array against the
//! per-sample recurrent/head workload of a sub-panel predictor.
//!
//! The sub-panel workload takes `ρ` latent vectors of dimension `D` (one per
//! cycle), runs a GRU cell over them and evaluates the four output heads.
//! Its cost is `O(ρD²)` plus the head projections; only the beam-index head
//! grows with the array size.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codebook::AMPLITUDE_LEVELS;
use crate::error::{domain, Result};
use crate::linalg::hermitian_eigen;
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Total port counts `N_t` (both polarisations).
    pub sizes: Vec<usize>,
    pub rho: usize,
    pub latent_dim: usize,
    pub n_beams: usize,
    pub o1: usize,
    pub o2: usize,
    pub n_psk: usize,
    /// Timing repeats per size; the minimum is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![64, 128, 256, 512],
            rho: 4,
            latent_dim: 32,
            n_beams: 4,
            o1: 4,
            o2: 4,
            n_psk: 8,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n_t: usize,
    pub evd_s: f64,
    pub subpanel_s: f64,
}

/// Random Hermitian PSD matrix `A A^H / n`.
pub fn random_hermitian(n: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&a * a.adjoint()) / Complex64::new(n as f64, 0.0)
}

fn min_time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Wall time of one full eigendecomposition of an `n x n` Hermitian matrix.
pub fn time_full_evd(n: usize, repeats: usize, seed: u64) -> Result<f64> {
    let r = random_hermitian(n, seed);
    min_time(repeats, || {
        black_box(hermitian_eigen(black_box(&r))?);
        Ok(())
    })
}

fn dense(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inference-time recurrent aggregation and heads of a sub-panel predictor,
/// with fixed random weights.
#[derive(Debug, Clone)]
pub struct SubPanelWorkload {
    latent_dim: usize,
    // update, reset and candidate gates: input and recurrent weights
    w: [DMatrix<f64>; 3],
    u: [DMatrix<f64>; 3],
    refine: DMatrix<f64>,
    heads: Vec<DMatrix<f64>>,
}

impl SubPanelWorkload {
    /// Heads are sized for an array with `n_t` ports: beamset `o1·o2`, beam
    /// index `n_t/2` per slot, amplitude and phase alphabets per polarisation slot.
    pub fn new(n_t: usize, cfg: &BenchConfig) -> Result<Self> {
        if n_t < 2 || n_t % 2 != 0 {
            return Err(domain(format!("N_t = {n_t} must be a positive even number")));
        }
        let d = cfg.latent_dim;
        if d == 0 || cfg.n_beams == 0 {
            return Err(domain("latent dimension and L must be positive"));
        }
        let mut rng = rng_from_seed(derive_seed(cfg.seed, Stream::Evaluation, n_t as u64));
        let w = [dense(d, d, &mut rng), dense(d, d, &mut rng), dense(d, d, &mut rng)];
        let u = [dense(d, d, &mut rng), dense(d, d, &mut rng), dense(d, d, &mut rng)];
        let refine = dense(d, d, &mut rng);
        let l = cfg.n_beams;
        let heads = vec![
            dense(cfg.o1 * cfg.o2, d, &mut rng),
            dense(l * n_t / 2, d, &mut rng),
            dense(2 * l * AMPLITUDE_LEVELS.len(), d, &mut rng),
            dense(2 * l * cfg.n_psk, d, &mut rng),
        ];
        Ok(SubPanelWorkload {
            latent_dim: d,
            w,
            u,
            refine,
            heads,
        })
    }

    /// Runs the GRU over `latents` in order and returns the argmax of each head.
    pub fn run(&self, latents: &[DVector<f64>]) -> Vec<usize> {
        let mut h = DVector::zeros(self.latent_dim);
        for x in latents {
            let z = (&self.w[0] * x + &self.u[0] * &h).map(sigmoid);
            let r = (&self.w[1] * x + &self.u[1] * &h).map(sigmoid);
            let c = (&self.w[2] * x + &self.u[2] * r.component_mul(&h)).map(f64::tanh);
            h = z.map(|v| 1.0 - v).component_mul(&h) + z.component_mul(&c);
        }
        let shared = (&self.refine * &h).map(|v| v.max(0.0));
        self.heads.iter().map(|m| (m * &shared).argmax().0).collect()
    }
}

/// Wall time of one sub-panel inference pass for an `n_t`-port array.
pub fn time_subpanel(n_t: usize, cfg: &BenchConfig) -> Result<f64> {
    let work = SubPanelWorkload::new(n_t, cfg)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, Stream::Evaluation, u64::MAX - n_t as u64));
    let latents: Vec<DVector<f64>> = (0..cfg.rho)
        .map(|_| DVector::from_fn(cfg.latent_dim, |_, _| rng.sample(StandardNormal)))
        .collect();
    // a single pass takes microseconds; time batches and divide
    const BATCH: usize = 200;
    let t = min_time(cfg.repeats.max(5), || {
        for _ in 0..BATCH {
            black_box(work.run(black_box(&latents)));
        }
        Ok(())
    })?;
    Ok(t / BATCH as f64)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.sizes.is_empty() {
        return Err(domain("no sizes to benchmark"));
    }
    if cfg.rho == 0 {
        return Err(domain("rho must be positive"));
    }
    cfg.sizes
        .iter()
        .map(|&n_t| {
            if n_t == 0 {
                return Err(domain("N_t must be positive"));
            }
            Ok(BenchRow {
                n_t,
                evd_s: time_full_evd(n_t, cfg.repeats, derive_seed(cfg.seed, Stream::Evaluation, n_t as u64))?,
                subpanel_s: time_subpanel(n_t, cfg)?,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(domain("slope needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(domain("log-log slope needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(domain("all sizes are equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_t", "evd_s", "subpanel_s"])?;
    for r in rows {
        w.write_record(&[r.n_t.to_string(), format!("{:e}", r.evd_s), format!("{:e}", r.subpanel_s)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [64.0, 128.0, 256.0, 512.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3e-9 * x.powi(3)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn random_hermitian_is_hermitian() {
        let r = random_hermitian(5, 3);
        assert!((&r - r.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn workload_is_deterministic() {
        let cfg = BenchConfig::default();
        let w = SubPanelWorkload::new(64, &cfg).unwrap();
        let x = vec![DVector::from_element(32, 0.1); 4];
        let out = w.run(&x);
        assert_eq!(out.len(), 4);
        assert!(out[0] < 16 && out[1] < 4 * 32);
        assert_eq!(out, SubPanelWorkload::new(64, &cfg).unwrap().run(&x));
        assert!(SubPanelWorkload::new(63, &cfg).is_err());
    }

    #[test]
    fn small_bench_runs() {
        let cfg = BenchConfig {
            sizes: vec![8, 16],
            repeats: 1,
            ..BenchConfig::default()
        };
        let rows = run_bench(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.evd_s > 0.0 && r.subpanel_s > 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
