//! Oversampled 2D-DFT grid of beams for a dual-polarised uniform planar array.
//!
//! Element layout is horizontal-major: element `(p, q)` with `p < n_x`,
//! `q < n_y` sits at flat index `p * n_y + q`. A full-array port index is
//! `pol * n_x * n_y + p * n_y + q`, so the first half of the ports is
//! polarisation 0 and the second half polarisation 1.
//!
//! Beams are stored unnormalised: every coefficient has unit magnitude and a
//! beam has squared norm `n_x * n_y`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Polarisations per element. Fixed: the codebook is defined for cross-polarised arrays.
pub const N_POL: usize = 2;

/// Planar-array geometry and codebook oversampling factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntennaConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub n_pol: usize,
    pub o1: usize,
    pub o2: usize,
}

impl Default for AntennaConfig {
    /// 8 x 8 dual-polarised array (128 ports) with 4x oversampling in both dimensions.
    fn default() -> Self {
        AntennaConfig {
            n_x: 8,
            n_y: 8,
            n_pol: N_POL,
            o1: 4,
            o2: 4,
        }
    }
}

impl AntennaConfig {
    pub fn new(n_x: usize, n_y: usize, o1: usize, o2: usize) -> Result<Self> {
        let cfg = AntennaConfig {
            n_x,
            n_y,
            n_pol: N_POL,
            o1,
            o2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(config(format!(
                "array dimensions must be positive (n_x={}, n_y={})",
                self.n_x, self.n_y
            )));
        }
        if self.n_pol != N_POL {
            return Err(config(format!("n_pol must be 2, got {}", self.n_pol)));
        }
        if self.o1 == 0 || self.o2 == 0 {
            return Err(config(format!(
                "oversampling factors must be positive (o1={}, o2={})",
                self.o1, self.o2
            )));
        }
        Ok(())
    }

    /// Elements per polarisation, `n_x * n_y`. Also the number of beams in a beamset.
    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    /// Total transmit ports, `2 * n_x * n_y`.
    pub fn n_t(&self) -> usize {
        self.n_pol * self.n_elements()
    }

    pub fn n_beamsets(&self) -> usize {
        self.o1 * self.o2
    }

    /// Port index of element `(p, q)` on polarisation `pol`.
    pub fn port_index(&self, pol: usize, p: usize, q: usize) -> usize {
        pol * self.n_elements() + p * self.n_y + q
    }
}

/// A single DFT beam `v_l ⊗ u_m` with unit-magnitude coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub coefficients: DVector<Complex64>,
}

impl Beam {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Steering vector at (possibly fractional) grid frequencies.
///
/// `f_h` is measured in units of the horizontal oversampled grid (period
/// `o1 * n_x`), `f_v` likewise over `o2 * n_y`. Integer arguments give the
/// codebook beams exactly; the channel model evaluates the same formula at
/// fractional positions.
pub fn steering_vector(f_h: f64, f_v: f64, cfg: &AntennaConfig) -> DVector<Complex64> {
    let period_h = (cfg.o1 * cfg.n_x) as f64;
    let period_v = (cfg.o2 * cfg.n_y) as f64;
    let horiz: Vec<Complex64> = (0..cfg.n_x)
        .map(|p| Complex64::cis(2.0 * PI * f_h * p as f64 / period_h))
        .collect();
    let vert: Vec<Complex64> = (0..cfg.n_y)
        .map(|q| Complex64::cis(2.0 * PI * f_v * q as f64 / period_v))
        .collect();
    DVector::from_fn(cfg.n_elements(), |i, _| {
        horiz[i / cfg.n_y] * vert[i % cfg.n_y]
    })
}

/// Oversampled DFT beam with horizontal grid index `l` and vertical grid index `m`.
pub fn steering_beam(l: usize, m: usize, cfg: &AntennaConfig) -> Result<Beam> {
    cfg.validate()?;
    if l >= cfg.o1 * cfg.n_x || m >= cfg.o2 * cfg.n_y {
        return Err(domain(format!(
            "beam index ({l}, {m}) outside grid {} x {}",
            cfg.o1 * cfg.n_x,
            cfg.o2 * cfg.n_y
        )));
    }
    // Reduce the phase argument modulo the period so that integer beams are
    // evaluated at the smallest possible angle.
    let period_h = cfg.o1 * cfg.n_x;
    let period_v = cfg.o2 * cfg.n_y;
    let coefficients = DVector::from_fn(cfg.n_elements(), |i, _| {
        let p = i / cfg.n_y;
        let q = i % cfg.n_y;
        let kh = (l * p) % period_h;
        let kv = (m * q) % period_v;
        Complex64::cis(2.0 * PI * kh as f64 / period_h as f64)
            * Complex64::cis(2.0 * PI * kv as f64 / period_v as f64)
    });
    Ok(Beam { coefficients })
}

/// Matrix of the `n_x * n_y` orthogonal beams belonging to beamset `(q1, q2)`.
///
/// Column `n1 * n_y + n2` is `steering_beam(o1 * n1 + q1, o2 * n2 + q2)`.
pub fn build_beamset(q1: usize, q2: usize, cfg: &AntennaConfig) -> Result<DMatrix<Complex64>> {
    cfg.validate()?;
    if q1 >= cfg.o1 || q2 >= cfg.o2 {
        return Err(domain(format!(
            "beamset offset ({q1}, {q2}) outside {} x {}",
            cfg.o1, cfg.o2
        )));
    }
    let n = cfg.n_elements();
    let mut mat = DMatrix::zeros(n, n);
    for n1 in 0..cfg.n_x {
        for n2 in 0..cfg.n_y {
            let beam = steering_beam(cfg.o1 * n1 + q1, cfg.o2 * n2 + q2, cfg)?;
            mat.set_column(n1 * cfg.n_y + n2, &beam.coefficients);
        }
    }
    Ok(mat)
}

/// All `o1 * o2` beamsets of an array, indexed by `b = q1 * o2 + q2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceGrid {
    cfg: AntennaConfig,
    beamsets: Vec<DMatrix<Complex64>>,
}

impl BeamspaceGrid {
    pub fn config(&self) -> &AntennaConfig {
        &self.cfg
    }

    pub fn n_beamsets(&self) -> usize {
        self.beamsets.len()
    }

    pub fn n_beams(&self) -> usize {
        self.cfg.n_elements()
    }

    pub fn beamset(&self, b: usize) -> Result<&DMatrix<Complex64>> {
        self.beamsets
            .get(b)
            .ok_or_else(|| domain(format!("beamset {b} outside 0..{}", self.beamsets.len())))
    }

    pub fn beamsets(&self) -> &[DMatrix<Complex64>] {
        &self.beamsets
    }

    /// Column `i` of beamset `b`.
    pub fn beam(&self, b: usize, i: usize) -> Result<DVector<Complex64>> {
        let set = self.beamset(b)?;
        if i >= set.ncols() {
            return Err(domain(format!("beam {i} outside 0..{}", set.ncols())));
        }
        Ok(set.column(i).into_owned())
    }

    pub fn flat_index(&self, q1: usize, q2: usize) -> Result<usize> {
        if q1 >= self.cfg.o1 || q2 >= self.cfg.o2 {
            return Err(domain(format!("beamset offset ({q1}, {q2}) out of range")));
        }
        Ok(q1 * self.cfg.o2 + q2)
    }

    pub fn offsets(&self, b: usize) -> Result<(usize, usize)> {
        if b >= self.beamsets.len() {
            return Err(domain(format!("beamset {b} outside 0..{}", self.beamsets.len())));
        }
        Ok((b / self.cfg.o2, b % self.cfg.o2))
    }

    /// Oversampled grid coordinates `(l, m)` of beam `i` in beamset `b`.
    pub fn grid_coordinates(&self, b: usize, i: usize) -> Result<(usize, usize)> {
        let (q1, q2) = self.offsets(b)?;
        if i >= self.n_beams() {
            return Err(domain(format!("beam {i} outside 0..{}", self.n_beams())));
        }
        let n1 = i / self.cfg.n_y;
        let n2 = i % self.cfg.n_y;
        Ok((self.cfg.o1 * n1 + q1, self.cfg.o2 * n2 + q2))
    }

    /// Beamset and in-set beam index of oversampled grid beam `(l, m)`.
    pub fn locate(&self, l: usize, m: usize) -> Result<(usize, usize)> {
        if l >= self.cfg.o1 * self.cfg.n_x || m >= self.cfg.o2 * self.cfg.n_y {
            return Err(domain(format!("grid beam ({l}, {m}) out of range")));
        }
        let b = (l % self.cfg.o1) * self.cfg.o2 + (m % self.cfg.o2);
        let i = (l / self.cfg.o1) * self.cfg.n_y + (m / self.cfg.o2);
        Ok((b, i))
    }
}

/// Builds every beamset of `cfg` in flat-index order.
pub fn enumerate_beamsets(cfg: &AntennaConfig) -> Result<BeamspaceGrid> {
    cfg.validate()?;
    let mut beamsets = Vec::with_capacity(cfg.n_beamsets());
    for q1 in 0..cfg.o1 {
        for q2 in 0..cfg.o2 {
            beamsets.push(build_beamset(q1, q2, cfg)?);
        }
    }
    Ok(BeamspaceGrid {
        cfg: *cfg,
        beamsets,
    })
}
