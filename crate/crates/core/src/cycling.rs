//! Sub-panel partitioning and port-cycled sounding.
//!
//! The `n_x x n_y` array is split into `rho_x x rho_y` contiguous rectangular
//! sub-panels. Panel `px * rho_y + py` covers elements
//! `px*n'_x .. (px+1)*n'_x` horizontally and `py*n'_y .. (py+1)*n'_y`
//! vertically, on both polarisations. One panel is sounded per CSI-RS
//! occasion; after `rho` occasions every port has been observed once.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::beamspace::{AntennaConfig, BeamspaceGrid, N_POL};
use crate::channel::{
    add_measurement_noise, covariance_from_matrices, snapshot_at, ChannelRealization,
    ChannelSnapshot, SnrDb,
};
use crate::codebook::select_beamset_and_indices;
use crate::error::{config, domain, Result};
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubPanelPartition {
    antenna: AntennaConfig,
    rho_x: usize,
    rho_y: usize,
    panel_nx: usize,
    panel_ny: usize,
    /// Full-array port indices per panel, ordered `(pol, x', y')` with `y'` fastest.
    panels: Vec<Vec<usize>>,
}

impl SubPanelPartition {
    pub fn rho(&self) -> usize {
        self.rho_x * self.rho_y
    }

    pub fn rho_x(&self) -> usize {
        self.rho_x
    }

    pub fn rho_y(&self) -> usize {
        self.rho_y
    }

    pub fn panel_dims(&self) -> (usize, usize) {
        (self.panel_nx, self.panel_ny)
    }

    /// Ports per panel, `2 * n'_x * n'_y`.
    pub fn ports_per_panel(&self) -> usize {
        N_POL * self.panel_nx * self.panel_ny
    }

    pub fn antenna(&self) -> &AntennaConfig {
        &self.antenna
    }

    /// Geometry of one sub-panel, with the full array's oversampling factors.
    pub fn panel_antenna(&self) -> AntennaConfig {
        AntennaConfig {
            n_x: self.panel_nx,
            n_y: self.panel_ny,
            ..self.antenna
        }
    }

    pub fn ports(&self, panel_id: usize) -> Result<&[usize]> {
        self.panels
            .get(panel_id)
            .map(Vec::as_slice)
            .ok_or_else(|| domain(format!("panel {panel_id} outside 0..{}", self.panels.len())))
    }
}

/// Splits the array into `rho_x * rho_y` sub-panels.
pub fn partition(cfg: &AntennaConfig, rho_x: usize, rho_y: usize) -> Result<SubPanelPartition> {
    cfg.validate()?;
    if rho_x == 0 || rho_y == 0 {
        return Err(config(format!(
            "partition factors must be positive (rho_x={rho_x}, rho_y={rho_y})"
        )));
    }
    if cfg.n_x % rho_x != 0 {
        return Err(config(format!(
            "rho_x = {rho_x} does not divide n_x = {}",
            cfg.n_x
        )));
    }
    if cfg.n_y % rho_y != 0 {
        return Err(config(format!(
            "rho_y = {rho_y} does not divide n_y = {}",
            cfg.n_y
        )));
    }
    let panel_nx = cfg.n_x / rho_x;
    let panel_ny = cfg.n_y / rho_y;
    let mut panels = Vec::with_capacity(rho_x * rho_y);
    for px in 0..rho_x {
        for py in 0..rho_y {
            let mut ports = Vec::with_capacity(N_POL * panel_nx * panel_ny);
            for pol in 0..N_POL {
                for x in 0..panel_nx {
                    for y in 0..panel_ny {
                        ports.push(cfg.port_index(pol, px * panel_nx + x, py * panel_ny + y));
                    }
                }
            }
            panels.push(ports);
        }
    }
    Ok(SubPanelPartition {
        antenna: *cfg,
        rho_x,
        rho_y,
        panel_nx,
        panel_ny,
        panels,
    })
}

/// One sub-panel's CSI at one occasion, shaped `n'_x x n'_y x n_rx x K x 2`
/// (row-major, polarisation fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMeasurement {
    pub panel_id: usize,
    pub time_s: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl CycleMeasurement {
    pub fn shape(&self) -> [usize; 5] {
        [self.n_x, self.n_y, self.n_rx, self.n_subcarriers, N_POL]
    }

    fn offset(&self, x: usize, y: usize, rx: usize, k: usize, pol: usize) -> usize {
        (((x * self.n_y + y) * self.n_rx + rx) * self.n_subcarriers + k) * N_POL + pol
    }

    pub fn get(&self, x: usize, y: usize, rx: usize, k: usize, pol: usize) -> Complex64 {
        self.data[self.offset(x, y, rx, k, pol)]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Per-tone `n_rx x n'_t` matrices with the sub-panel's own port layout.
    pub fn to_matrices(&self) -> Vec<DMatrix<Complex64>> {
        let ne = self.n_x * self.n_y;
        (0..self.n_subcarriers)
            .map(|k| {
                DMatrix::from_fn(self.n_rx, N_POL * ne, |rx, port| {
                    let pol = port / ne;
                    let e = port % ne;
                    self.get(e / self.n_y, e % self.n_y, rx, k, pol)
                })
            })
            .collect()
    }
}

/// Selects one panel's ports from a full-array snapshot.
pub fn extract_subpanel(
    s: &ChannelSnapshot,
    part: &SubPanelPartition,
    panel_id: usize,
) -> Result<CycleMeasurement> {
    let ports = part.ports(panel_id)?;
    if s.n_t() != part.antenna.n_t() {
        return Err(domain(format!(
            "snapshot has {} ports, partition expects {}",
            s.n_t(),
            part.antenna.n_t()
        )));
    }
    let (nx, ny) = part.panel_dims();
    let ne = nx * ny;
    let n_rx = s.n_rx();
    let n_sc = s.n_subcarriers();
    let mut data = vec![Complex64::new(0.0, 0.0); ne * n_rx * n_sc * N_POL];
    for x in 0..nx {
        for y in 0..ny {
            for rx in 0..n_rx {
                for (k, hk) in s.h.iter().enumerate() {
                    for pol in 0..N_POL {
                        let port = ports[pol * ne + x * ny + y];
                        let idx = (((x * ny + y) * n_rx + rx) * n_sc + k) * N_POL + pol;
                        data[idx] = hk[(rx, port)];
                    }
                }
            }
        }
    }
    Ok(CycleMeasurement {
        panel_id,
        time_s: s.time_s,
        n_x: nx,
        n_y: ny,
        n_rx,
        n_subcarriers: n_sc,
        data,
    })
}

/// Stitches one measurement per panel back into full-array per-tone matrices.
/// Each panel contributes the CSI from its own occasion.
pub fn assemble_full(
    measurements: &[CycleMeasurement],
    part: &SubPanelPartition,
) -> Result<Vec<DMatrix<Complex64>>> {
    let first = measurements.first().ok_or_else(|| domain("no measurements"))?;
    let mut seen = vec![false; part.rho()];
    let (n_rx, n_sc) = (first.n_rx, first.n_subcarriers);
    let mut h = vec![DMatrix::<Complex64>::zeros(n_rx, part.antenna.n_t()); n_sc];
    let (nx, ny) = part.panel_dims();
    for m in measurements {
        let ports = part.ports(m.panel_id)?;
        if seen[m.panel_id] {
            return Err(domain(format!("panel {} measured twice", m.panel_id)));
        }
        seen[m.panel_id] = true;
        if m.shape() != [nx, ny, n_rx, n_sc, N_POL] {
            return Err(domain("measurement shapes differ from the partition"));
        }
        for (k, hk) in h.iter_mut().enumerate() {
            for rx in 0..n_rx {
                for x in 0..nx {
                    for y in 0..ny {
                        for pol in 0..N_POL {
                            hk[(rx, ports[pol * nx * ny + x * ny + y])] = m.get(x, y, rx, k, pol);
                        }
                    }
                }
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(domain(format!("panel {missing} was never measured")));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occasion {
    pub index: usize,
    pub time_s: f64,
    pub panel_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSchedule {
    pub occasions: Vec<Occasion>,
}

impl CycleSchedule {
    pub fn panel_order(&self) -> Vec<usize> {
        self.occasions.iter().map(|o| o.panel_id).collect()
    }

    pub fn last_time(&self) -> f64 {
        self.occasions.last().map_or(0.0, |o| o.time_s)
    }
}

fn check_permutation(perm: &[usize], rho: usize) -> Result<()> {
    if perm.len() != rho {
        return Err(domain(format!("permutation has {} entries, expected {rho}", perm.len())));
    }
    let mut seen = vec![false; rho];
    for &p in perm {
        if p >= rho || seen[p] {
            return Err(domain(format!("{perm:?} is not a permutation of 0..{rho}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Occasion `i` at `t0 + i * t_csi` sounds panel `perm[i]`.
pub fn make_schedule(
    part: &SubPanelPartition,
    t0: f64,
    t_csi: f64,
    perm: &[usize],
) -> Result<CycleSchedule> {
    check_permutation(perm, part.rho())?;
    if !(t0.is_finite() && t0 >= 0.0 && t_csi.is_finite() && t_csi > 0.0) {
        return Err(domain(format!("invalid schedule timing t0={t0}, t_csi={t_csi}")));
    }
    let occasions = perm
        .iter()
        .enumerate()
        .map(|(i, &panel_id)| Occasion {
            index: i,
            time_s: t0 + i as f64 * t_csi,
            panel_id,
        })
        .collect();
    Ok(CycleSchedule { occasions })
}

/// Sounds each scheduled panel at its occasion time with independent noise.
pub fn sound_cycle(
    real: &ChannelRealization,
    sched: &CycleSchedule,
    part: &SubPanelPartition,
    snr: SnrDb,
    seed: u64,
) -> Result<Vec<CycleMeasurement>> {
    sched
        .occasions
        .iter()
        .map(|occ| {
            let clean = snapshot_at(real, occ.time_s)?;
            let noisy =
                add_measurement_noise(&clean, snr, derive_seed(seed, Stream::Noise, occ.index as u64))?;
            extract_subpanel(&noisy, part, occ.panel_id)
        })
        .collect()
}

/// Beam quantities observed on one sub-panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleQuantity {
    pub beamset: usize,
    pub dominant_beam: usize,
}

/// Runs beam selection on a single sub-panel measurement against the sub-panel grid.
pub fn per_cycle_quantity(
    m: &CycleMeasurement,
    subgrid: &BeamspaceGrid,
    l: usize,
) -> Result<CycleQuantity> {
    let cfg = subgrid.config();
    if (cfg.n_x, cfg.n_y) != (m.n_x, m.n_y) {
        return Err(domain(format!(
            "grid is {}x{}, measurement is {}x{}",
            cfg.n_x, cfg.n_y, m.n_x, m.n_y
        )));
    }
    let cov = covariance_from_matrices(&m.to_matrices())?;
    let sel = select_beamset_and_indices(&cov, subgrid, l)?;
    Ok(CycleQuantity {
        beamset: sel.beamset,
        dominant_beam: sel.beam_indices[0],
    })
}

/// How successive per-cycle quantities are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariationMode {
    /// Mean absolute difference of the index values.
    #[default]
    IndexDiff,
    /// Fraction of successive pairs that differ.
    ChangeIndicator,
}

/// Mean absolute successive difference `(1/(ρ-1)) Σ |M_{i+1} - M_i|`.
pub fn variation_score(values: &[f64]) -> Result<f64> {
    variation_score_with(values, VariationMode::IndexDiff)
}

pub fn variation_score_with(values: &[f64], mode: VariationMode) -> Result<f64> {
    if values.len() < 2 {
        return Err(domain(format!(
            "variation score needs at least 2 cycles, got {}",
            values.len()
        )));
    }
    let total: f64 = values
        .windows(2)
        .map(|w| match mode {
            VariationMode::IndexDiff => (w[1] - w[0]).abs(),
            VariationMode::ChangeIndicator => {
                if w[1] != w[0] {
                    1.0
                } else {
                    0.0
                }
            }
        })
        .sum();
    Ok(total / (values.len() - 1) as f64)
}

/// Which sounding orders a dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationPolicy {
    /// Panels in index order for every sample.
    Identity,
    /// Sample `i` uses the `i mod ρ!`-th permutation in lexicographic order.
    #[default]
    All,
    /// A uniformly random permutation per sample.
    Random,
}

/// `k`-th permutation of `0..n` in lexicographic order (`k` taken modulo `n!`).
pub fn nth_permutation(n: usize, k: u64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut factorials = vec![1u64; n + 1];
    for i in 1..=n {
        factorials[i] = factorials[i - 1].saturating_mul(i as u64);
    }
    let mut k = k % factorials[n];
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let idx = (k / factorials[i]) as usize;
        k %= factorials[i];
        out.push(pool.remove(idx));
    }
    out
}

/// Sounding order for sample `index` under `policy`.
pub fn permutation_for_sample(policy: PermutationPolicy, rho: usize, index: u64, seed: u64) -> Vec<usize> {
    match policy {
        PermutationPolicy::Identity => (0..rho).collect(),
        PermutationPolicy::All => nth_permutation(rho, index),
        PermutationPolicy::Random => {
            let mut rng = rng_from_seed(derive_seed(seed, Stream::Permutation, index));
            let mut perm: Vec<usize> = (0..rho).collect();
            perm.shuffle(&mut rng);
            perm
        }
    }
}
