//! Rel-15 style Type-II codebook: beam selection, wideband amplitude/phase
//! quantization and precoder reconstruction for a single layer.
//!
//! A report carries `2L` coefficient slots: slots `0..L` belong to
//! polarisation 0 and slots `L..2L` to polarisation 1, both over the same `L`
//! beams. The strongest slot is pinned to amplitude 1 and phase 0, leaving
//! `2L - 1` informative amplitude/phase pairs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamspace::{AntennaConfig, BeamspaceGrid};
use crate::channel::WidebandCovariance;
use crate::error::{domain, Error, Result};
use crate::linalg::dominant_eigenpair;

/// Wideband amplitude alphabet, ascending.
pub const AMPLITUDE_LEVELS: [f64; 8] = [
    0.0,
    0.125,                              // sqrt(1/64)
    0.176_776_695_296_636_9,            // sqrt(1/32)
    0.25,                               // sqrt(1/16)
    0.353_553_390_593_273_8,            // sqrt(1/8)
    0.5,                                // sqrt(1/4)
    std::f64::consts::FRAC_1_SQRT_2,    // sqrt(1/2)
    1.0,
];

/// Relative tolerance under which two scores count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Relative tolerance for picking the strongest coefficient slot.
const STRONGEST_RTOL: f64 = 1e-9;

/// Admissible numbers of reported beams.
pub const BEAM_COUNTS: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationTables {
    amplitudes: Vec<f64>,
    n_psk: usize,
}

impl Default for QuantizationTables {
    fn default() -> Self {
        QuantizationTables::new(8).expect("8-PSK is valid")
    }
}

impl QuantizationTables {
    pub fn new(n_psk: usize) -> Result<Self> {
        if n_psk < 2 {
            return Err(Error::Config(format!("n_psk must be at least 2, got {n_psk}")));
        }
        Ok(QuantizationTables {
            amplitudes: AMPLITUDE_LEVELS.to_vec(),
            n_psk,
        })
    }

    pub fn n_psk(&self) -> usize {
        self.n_psk
    }

    pub fn n_amplitude_levels(&self) -> usize {
        self.amplitudes.len()
    }

    /// Level index of amplitude 1.
    pub fn unit_amplitude_level(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, level: usize) -> Result<f64> {
        self.amplitudes
            .get(level)
            .copied()
            .ok_or_else(|| domain(format!("amplitude level {level} outside 0..{}", self.amplitudes.len())))
    }

    pub fn phase_angle(&self, level: usize) -> Result<f64> {
        if level >= self.n_psk {
            return Err(domain(format!("phase level {level} outside 0..{}", self.n_psk)));
        }
        Ok(2.0 * PI * level as f64 / self.n_psk as f64)
    }

    pub fn phase(&self, level: usize) -> Result<Complex64> {
        Ok(Complex64::cis(self.phase_angle(level)?))
    }
}

/// Nearest amplitude level; exact ties go to the larger level.
pub fn quantize_amplitude(a: f64, tables: &QuantizationTables) -> Result<usize> {
    if !a.is_finite() || a < 0.0 {
        return Err(domain(format!("amplitude must be finite and non-negative, got {a}")));
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &p) in tables.amplitudes.iter().enumerate() {
        let d = (p - a).abs();
        if d <= best_dist + 1e-15 {
            best = i;
            best_dist = d.min(best_dist);
        }
    }
    Ok(best)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Nearest PSK level by circular distance; exact ties go to the smaller index.
pub fn quantize_phase(theta: f64, tables: &QuantizationTables) -> Result<usize> {
    if !theta.is_finite() {
        return Err(domain(format!("phase must be finite, got {theta}")));
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for n in 0..tables.n_psk {
        let d = wrap_angle(theta - 2.0 * PI * n as f64 / tables.n_psk as f64).abs();
        if d < best_dist - 1e-12 {
            best = n;
            best_dist = d;
        }
    }
    Ok(best)
}

/// The four quantized feedback quantities plus the strongest slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeIIReport {
    pub beamset: usize,
    /// Beam indices within the beamset, strongest first.
    pub beam_indices: Vec<usize>,
    /// `2L` indices into the amplitude alphabet.
    pub amp_levels: Vec<usize>,
    /// `2L` indices into the PSK alphabet.
    pub phase_levels: Vec<usize>,
    pub strongest: usize,
}

impl TypeIIReport {
    pub fn n_beams(&self) -> usize {
        self.beam_indices.len()
    }

    /// Alphabet ranges, slot counts and index distinctness.
    pub fn validate(&self, cfg: &AntennaConfig, tables: &QuantizationTables) -> Result<()> {
        let l = self.n_beams();
        if l == 0 || l > cfg.n_elements() {
            return Err(domain(format!(
                "report has {l} beams, expected 1..={}",
                cfg.n_elements()
            )));
        }
        if self.beamset >= cfg.n_beamsets() {
            return Err(domain(format!(
                "beamset {} outside 0..{}",
                self.beamset,
                cfg.n_beamsets()
            )));
        }
        for (pos, &i) in self.beam_indices.iter().enumerate() {
            if i >= cfg.n_elements() {
                return Err(domain(format!("beam index {i} outside 0..{}", cfg.n_elements())));
            }
            if self.beam_indices[..pos].contains(&i) {
                return Err(domain(format!("beam index {i} repeated")));
            }
        }
        if self.amp_levels.len() != 2 * l || self.phase_levels.len() != 2 * l {
            return Err(domain(format!(
                "expected {} amplitude and phase slots, got {} and {}",
                2 * l,
                self.amp_levels.len(),
                self.phase_levels.len()
            )));
        }
        if let Some(&a) = self.amp_levels.iter().find(|&&a| a >= tables.n_amplitude_levels()) {
            return Err(domain(format!("amplitude level {a} outside alphabet")));
        }
        if let Some(&p) = self.phase_levels.iter().find(|&&p| p >= tables.n_psk()) {
            return Err(domain(format!("phase level {p} outside alphabet")));
        }
        if self.strongest >= 2 * l {
            return Err(domain(format!("strongest slot {} outside 0..{}", self.strongest, 2 * l)));
        }
        Ok(())
    }

    /// Checks the pinned strongest slot (amplitude 1, phase 0) on top of [`validate`](Self::validate).
    pub fn validate_label(&self, cfg: &AntennaConfig, tables: &QuantizationTables) -> Result<()> {
        self.validate(cfg, tables)?;
        if self.amp_levels[self.strongest] != tables.unit_amplitude_level()
            || self.phase_levels[self.strongest] != 0
        {
            return Err(domain("strongest slot is not pinned to amplitude 1, phase 0"));
        }
        Ok(())
    }
}

/// Result of beam selection over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSelection {
    pub beamset: usize,
    /// Sorted by descending beam power.
    pub beam_indices: Vec<usize>,
    /// Sum of the selected beam powers.
    pub score: f64,
}

/// `|diag(V^H S V)|` for one beamset.
pub fn beam_powers(s: &DMatrix<Complex64>, beamset: &DMatrix<Complex64>) -> Vec<f64> {
    let sv = crate::linalg::matmul(s, beamset);
    (0..beamset.ncols())
        .map(|i| beamset.column(i).dotc(&sv.column(i)).norm())
        .collect()
}

/// Indices of the `l` largest values, largest first. Values within
/// [`TIE_RTOL`] of each other are treated as equal and the lower index wins.
pub fn top_l(values: &[f64], l: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    let mut out = Vec::with_capacity(l);
    for _ in 0..l.min(values.len()) {
        let max = values
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let pick = (0..values.len())
            .find(|&i| !taken[i] && values[i] >= max - TIE_RTOL * max.abs())
            .expect("an untaken value reaches the maximum");
        taken[pick] = true;
        out.push(pick);
    }
    out
}

fn check_dims(cov: &WidebandCovariance, grid: &BeamspaceGrid) -> Result<()> {
    let n_t = grid.config().n_t();
    if cov.dim() != n_t {
        return Err(domain(format!(
            "covariance dimension {} does not match {} ports",
            cov.dim(),
            n_t
        )));
    }
    Ok(())
}

/// Picks the beamset and the `l` strongest orthogonal beams in it.
///
/// Beam power is measured on the sum of the two co-polarised covariance
/// blocks. `l` may be any value in `1..=n_x*n_y`; reports use 2, 3 or 4.
pub fn select_beamset_and_indices(
    cov: &WidebandCovariance,
    grid: &BeamspaceGrid,
    l: usize,
) -> Result<BeamSelection> {
    check_dims(cov, grid)?;
    if l == 0 || l > grid.n_beams() {
        return Err(domain(format!("L = {l} outside 1..={}", grid.n_beams())));
    }
    let s = cov.copol_sum()?;
    let candidates: Vec<(Vec<usize>, f64)> = grid
        .beamsets()
        .iter()
        .map(|v| {
            let powers = beam_powers(&s, v);
            let idx = top_l(&powers, l);
            let score = idx.iter().map(|&i| powers[i]).sum();
            (idx, score)
        })
        .collect();
    let best = candidates
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let beamset = candidates
        .iter()
        .position(|(_, s)| *s >= best - TIE_RTOL * best.abs())
        .expect("some beamset attains the maximum");
    let (beam_indices, score) = candidates[beamset].clone();
    Ok(BeamSelection {
        beamset,
        beam_indices,
        score,
    })
}

/// Unquantized wideband coefficients, relative to the strongest slot.
#[derive(Debug, Clone, PartialEq)]
pub struct WidebandCoefficients {
    /// `2L` amplitudes in `[0, 1]`, normalised by the largest.
    pub amplitudes: Vec<f64>,
    /// `2L` phases in radians relative to the strongest slot.
    pub phases: Vec<f64>,
    pub strongest: usize,
}

/// Projects an eigenvector onto the selected beams of both polarisations.
///
/// Coefficient `c = v^H e_pol` is the weight of beam `v` in the expansion of
/// `e_pol`, so reconstructing with these phases points back at `e`.
pub fn wideband_coefficients(
    eigvec: &DVector<Complex64>,
    beamset: usize,
    beam_indices: &[usize],
    grid: &BeamspaceGrid,
) -> Result<WidebandCoefficients> {
    let n = grid.n_beams();
    if eigvec.len() != 2 * n {
        return Err(domain(format!(
            "eigenvector length {} does not match {} ports",
            eigvec.len(),
            2 * n
        )));
    }
    let set = grid.beamset(beamset)?;
    let halves = [eigvec.rows(0, n), eigvec.rows(n, n)];
    let mut coeffs = Vec::with_capacity(2 * beam_indices.len());
    for half in &halves {
        for &i in beam_indices {
            if i >= n {
                return Err(domain(format!("beam index {i} outside 0..{n}")));
            }
            coeffs.push(set.column(i).dotc(half));
        }
    }
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max <= 1e-12 * eigvec.norm() || max == 0.0 {
        return Err(Error::Degenerate(
            "dominant eigenvector has no energy on the selected beams".into(),
        ));
    }
    let strongest = coeffs
        .iter()
        .position(|c| c.norm() >= max * (1.0 - STRONGEST_RTOL))
        .expect("some slot attains the maximum");
    let reference = coeffs[strongest].arg();
    let amplitudes = coeffs.iter().map(|c| c.norm() / max).collect();
    let phases = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| if k == strongest { 0.0 } else { wrap_angle(c.arg() - reference) })
        .collect();
    Ok(WidebandCoefficients {
        amplitudes,
        phases,
        strongest,
    })
}

/// Quantized amplitude and phase levels for `2L` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidebandLevels {
    pub amp_levels: Vec<usize>,
    pub phase_levels: Vec<usize>,
    pub strongest: usize,
}

/// Quantizes coefficients. The strongest slot is pinned to (1, 0) and slots
/// quantized to zero amplitude get phase level 0.
pub fn quantize_coefficients(
    coeffs: &WidebandCoefficients,
    tables: &QuantizationTables,
) -> Result<WidebandLevels> {
    let mut amp_levels = Vec::with_capacity(coeffs.amplitudes.len());
    let mut phase_levels = Vec::with_capacity(coeffs.amplitudes.len());
    for (k, (&a, &theta)) in coeffs.amplitudes.iter().zip(&coeffs.phases).enumerate() {
        if k == coeffs.strongest {
            amp_levels.push(tables.unit_amplitude_level());
            phase_levels.push(0);
            continue;
        }
        let level = quantize_amplitude(a.min(1.0), tables)?;
        amp_levels.push(level);
        phase_levels.push(if level == 0 { 0 } else { quantize_phase(theta, tables)? });
    }
    Ok(WidebandLevels {
        amp_levels,
        phase_levels,
        strongest: coeffs.strongest,
    })
}

/// Wideband amplitude/phase selection from the dominant eigenvector of `cov`.
pub fn compute_wideband_amp_phase(
    cov: &WidebandCovariance,
    beamset: usize,
    beam_indices: &[usize],
    grid: &BeamspaceGrid,
    tables: &QuantizationTables,
) -> Result<WidebandLevels> {
    check_dims(cov, grid)?;
    let (_, e) = dominant_eigenpair(cov.matrix())?;
    let coeffs = wideband_coefficients(&e, beamset, beam_indices, grid)?;
    quantize_coefficients(&coeffs, tables)
}

/// Unit-norm single-layer precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: DVector<Complex64>,
}

/// Linear combination of beams from one beamset with explicit real
/// amplitudes and phases (radians), normalised by
/// `1 / sqrt(n_x n_y Σ p^2)`.
pub fn assemble_from_coefficients(
    beamset: usize,
    beam_indices: &[usize],
    amplitudes: &[f64],
    phases: &[f64],
    grid: &BeamspaceGrid,
) -> Result<Precoder> {
    let l = beam_indices.len();
    if amplitudes.len() != 2 * l || phases.len() != 2 * l {
        return Err(domain(format!("expected {} coefficients", 2 * l)));
    }
    for (pos, i) in beam_indices.iter().enumerate() {
        if beam_indices[..pos].contains(i) {
            return Err(domain(format!("beam index {i} repeated")));
        }
    }
    let power: f64 = amplitudes.iter().map(|p| p * p).sum();
    if power <= 0.0 || !power.is_finite() {
        return Err(Error::Degenerate("all coefficient amplitudes are zero".into()));
    }
    let n = grid.n_beams();
    let set = grid.beamset(beamset)?;
    let lambda = 1.0 / (n as f64 * power).sqrt();
    let mut w = DVector::<Complex64>::zeros(2 * n);
    for pol in 0..2 {
        for (slot, &i) in beam_indices.iter().enumerate() {
            if i >= n {
                return Err(domain(format!("beam index {i} outside 0..{n}")));
            }
            let k = pol * l + slot;
            let c = Complex64::from_polar(amplitudes[k] * lambda, phases[k]);
            let col = set.column(i);
            let mut part = w.rows_mut(pol * n, n);
            part.axpy(c, &col, Complex64::new(1.0, 0.0));
        }
    }
    Ok(Precoder { w })
}

/// Reconstructs the precoder described by a report.
pub fn assemble_precoder(
    report: &TypeIIReport,
    grid: &BeamspaceGrid,
    tables: &QuantizationTables,
) -> Result<Precoder> {
    report.validate(grid.config(), tables)?;
    let amplitudes = report
        .amp_levels
        .iter()
        .map(|&a| tables.amplitude(a))
        .collect::<Result<Vec<_>>>()?;
    let phases = report
        .phase_levels
        .iter()
        .map(|&p| tables.phase_angle(p))
        .collect::<Result<Vec<_>>>()?;
    assemble_from_coefficients(report.beamset, &report.beam_indices, &amplitudes, &phases, grid)
}

/// The Type-II report computed from a full-port covariance: beam selection
/// followed by wideband amplitude/phase quantization.
pub fn ground_truth_report(
    cov: &WidebandCovariance,
    grid: &BeamspaceGrid,
    tables: &QuantizationTables,
    l: usize,
) -> Result<TypeIIReport> {
    let sel = select_beamset_and_indices(cov, grid, l)?;
    let levels = compute_wideband_amp_phase(cov, sel.beamset, &sel.beam_indices, grid, tables)?;
    Ok(TypeIIReport {
        beamset: sel.beamset,
        beam_indices: sel.beam_indices,
        amp_levels: levels.amp_levels,
        phase_levels: levels.phase_levels,
        strongest: levels.strongest,
    })
}

/// Same pipeline as [`ground_truth_report`] but without quantization; the
/// returned precoder uses the exact normalised amplitudes and phases.
pub fn unquantized_precoder(
    cov: &WidebandCovariance,
    grid: &BeamspaceGrid,
    l: usize,
) -> Result<(BeamSelection, WidebandCoefficients, Precoder)> {
    let sel = select_beamset_and_indices(cov, grid, l)?;
    let (_, e) = dominant_eigenpair(cov.matrix())?;
    let coeffs = wideband_coefficients(&e, sel.beamset, &sel.beam_indices, grid)?;
    let w = assemble_from_coefficients(
        sel.beamset,
        &sel.beam_indices,
        &coeffs.amplitudes,
        &coeffs.phases,
        grid,
    )?;
    Ok((sel, coeffs, w))
}
