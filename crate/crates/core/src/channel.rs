//! Clustered-ray channel generator.
//!
//! A realization is one strong line-of-sight ray plus a few weak scattered
//! rays. Each ray has a departure direction on the transmit array (expressed
//! directly as fractional DFT grid frequencies), a receive-side array
//! signature, a complex gain, a delay and a Doppler shift. The channel at time
//! `t` on tone `k` is
//!
//! ```text
//! H_k(t) = Σ_p g_p · exp(j2π ν_p t) · exp(-j2π f_k τ_p) · r_p · a_p^H
//! ```
//!
//! where `a_p` is the dual-polarised transmit steering vector. Average channel
//! power per entry is one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::beamspace::{steering_vector, AntennaConfig, N_POL};
use crate::error::{config, domain, Error, Result};
use crate::linalg::gram;
use crate::rng::rng_from_seed;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Subcarriers per physical resource block; tones are placed one per PRB.
pub const SUBCARRIERS_PER_PRB: usize = 12;

/// Radio scenario. Defaults follow a 3.5 GHz, 10 MHz, 30 km/h urban macro LoS setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub ue_speed_mps: f64,
    pub csi_period_s: f64,
    pub n_rx: usize,
    /// Total rays including the line-of-sight ray.
    pub n_clusters: usize,
    pub los_k_factor_db: f64,
    /// Mean excess delay of the scattered rays.
    pub delay_spread_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            carrier_freq_hz: 3.5e9,
            bandwidth_hz: 10e6,
            subcarrier_spacing_hz: 15e3,
            n_subcarriers: 48,
            ue_speed_mps: 30.0 / 3.6,
            csi_period_s: 0.020,
            n_rx: 4,
            n_clusters: 5,
            los_k_factor_db: 13.0,
            delay_spread_s: 100e-9,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("csi_period_s", self.csi_period_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [
            ("ue_speed_mps", self.ue_speed_mps),
            ("delay_spread_s", self.delay_spread_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        if !self.los_k_factor_db.is_finite() {
            return Err(config("los_k_factor_db must be finite"));
        }
        if self.n_subcarriers == 0 || self.n_rx == 0 || self.n_clusters == 0 {
            return Err(config(format!(
                "n_subcarriers, n_rx and n_clusters must be at least 1 (got {}, {}, {})",
                self.n_subcarriers, self.n_rx, self.n_clusters
            )));
        }
        let span = self.n_subcarriers as f64 * self.tone_spacing_hz();
        if span > self.bandwidth_hz * (1.0 + 1e-12) {
            return Err(config(format!(
                "{} tones at {} Hz spacing span {span} Hz, more than the {} Hz bandwidth",
                self.n_subcarriers,
                self.tone_spacing_hz(),
                self.bandwidth_hz
            )));
        }
        Ok(())
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.ue_speed_mps * self.carrier_freq_hz / SPEED_OF_LIGHT
    }

    pub fn tone_spacing_hz(&self) -> f64 {
        SUBCARRIERS_PER_PRB as f64 * self.subcarrier_spacing_hz
    }

    /// Baseband offset of tone `k`, centred on the carrier.
    pub fn tone_offset_hz(&self, k: usize) -> f64 {
        (k as f64 - (self.n_subcarriers as f64 - 1.0) / 2.0) * self.tone_spacing_hz()
    }

    /// Fraction of power on the line-of-sight ray.
    pub fn los_power(&self) -> f64 {
        if self.n_clusters == 1 {
            return 1.0;
        }
        let k = 10f64.powf(self.los_k_factor_db / 10.0);
        k / (k + 1.0)
    }
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct RayCluster {
    /// Horizontal departure frequency in oversampled-grid units, in `[0, o1 * n_x)`.
    pub f_h: f64,
    /// Vertical departure frequency in oversampled-grid units, in `[0, o2 * n_y)`.
    pub f_v: f64,
    pub rx_signature: DVector<Complex64>,
    /// Per-polarisation transmit weights (unit magnitude).
    pub polarization: [Complex64; N_POL],
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

impl RayCluster {
    /// Dual-polarised transmit response `[pol0 * s; pol1 * s]`.
    pub fn tx_response(&self, antenna: &AntennaConfig) -> DVector<Complex64> {
        let s = steering_vector(self.f_h, self.f_v, antenna);
        let n = s.len();
        DVector::from_fn(N_POL * n, |i, _| self.polarization[i / n] * s[i % n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub clusters: Vec<RayCluster>,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub antenna: AntennaConfig,
}

impl ChannelRealization {
    /// Builds a realization from explicit rays. Rays must match the configs' dimensions.
    pub fn from_clusters(
        scenario: ScenarioConfig,
        antenna: AntennaConfig,
        clusters: Vec<RayCluster>,
    ) -> Result<Self> {
        scenario.validate()?;
        antenna.validate()?;
        if clusters.is_empty() {
            return Err(config("a realization needs at least one ray"));
        }
        if let Some(bad) = clusters.iter().find(|c| c.rx_signature.len() != scenario.n_rx) {
            return Err(config(format!(
                "rx signature length {} differs from n_rx {}",
                bad.rx_signature.len(),
                scenario.n_rx
            )));
        }
        Ok(ChannelRealization {
            clusters,
            seed: 0,
            scenario,
            antenna,
        })
    }

    /// Same realization with every Doppler shift set to zero.
    pub fn frozen(&self) -> Self {
        let mut out = self.clone();
        out.clusters.iter_mut().for_each(|c| c.doppler_hz = 0.0);
        out
    }
}

/// Draws a realization. Deterministic in `(scenario, antenna, seed)`.
pub fn generate_channel(
    scenario: &ScenarioConfig,
    antenna: &AntennaConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    scenario.validate()?;
    antenna.validate()?;
    let mut rng = rng_from_seed(seed);
    let n = scenario.n_clusters;
    let los = scenario.los_power();

    // scattered rays share the residual power with exponentially distributed weights
    let exp = Exp::new(1.0).expect("unit rate");
    let weights: Vec<f64> = (1..n).map(|_| exp.sample(&mut rng)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut powers = vec![los];
    powers.extend(weights.iter().map(|w| (1.0 - los) * w / weight_sum));

    let fd = scenario.max_doppler_hz();
    let grid_h = (antenna.o1 * antenna.n_x) as f64;
    let grid_v = (antenna.o2 * antenna.n_y) as f64;
    let delay_dist = if scenario.delay_spread_s > 0.0 {
        Some(Exp::new(1.0 / scenario.delay_spread_s).expect("positive rate"))
    } else {
        None
    };

    let clusters = powers
        .iter()
        .enumerate()
        .map(|(p, &power)| {
            let f_h = rng.random::<f64>() * grid_h;
            let f_v = rng.random::<f64>() * grid_v;
            let psi: f64 = rng.random();
            let rx_signature = DVector::from_fn(scenario.n_rx, |i, _| {
                Complex64::cis(2.0 * PI * psi * i as f64)
            });
            let polarization = [
                Complex64::cis(2.0 * PI * rng.random::<f64>()),
                Complex64::cis(2.0 * PI * rng.random::<f64>()),
            ];
            let gain = Complex64::from_polar(power.sqrt(), 2.0 * PI * rng.random::<f64>());
            let delay_s = match (&delay_dist, p) {
                (_, 0) | (None, _) => 0.0,
                (Some(d), _) => d.sample(&mut rng),
            };
            let doppler_hz = fd * (2.0 * PI * rng.random::<f64>()).cos();
            RayCluster {
                f_h,
                f_v,
                rx_signature,
                polarization,
                gain,
                delay_s,
                doppler_hz,
            }
        })
        .collect();

    Ok(ChannelRealization {
        clusters,
        seed,
        scenario: *scenario,
        antenna: *antenna,
    })
}

/// Per-tone channel matrices at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub time_s: f64,
    /// `K` matrices of shape `n_rx x n_t`.
    pub h: Vec<DMatrix<Complex64>>,
}

impl ChannelSnapshot {
    pub fn n_subcarriers(&self) -> usize {
        self.h.len()
    }

    pub fn n_rx(&self) -> usize {
        self.h.first().map_or(0, |m| m.nrows())
    }

    pub fn n_t(&self) -> usize {
        self.h.first().map_or(0, |m| m.ncols())
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().map(|m| m.norm_squared()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        let count = self.n_subcarriers() * self.n_rx() * self.n_t();
        if count == 0 {
            0.0
        } else {
            self.energy() / count as f64
        }
    }
}

pub fn snapshot_at(real: &ChannelRealization, t: f64) -> Result<ChannelSnapshot> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(domain(format!("snapshot time must be finite and >= 0, got {t}")));
    }
    let sc = &real.scenario;
    let n_t = real.antenna.n_t();
    let mut h = vec![DMatrix::<Complex64>::zeros(sc.n_rx, n_t); sc.n_subcarriers];
    for ray in &real.clusters {
        let a_h = ray.tx_response(&real.antenna).map(|z| z.conj());
        let outer = &ray.rx_signature * a_h.transpose();
        let temporal = ray.gain * Complex64::cis(2.0 * PI * ray.doppler_hz * t);
        for (k, hk) in h.iter_mut().enumerate() {
            let coeff = temporal * Complex64::cis(-2.0 * PI * sc.tone_offset_hz(k) * ray.delay_s);
            *hk += &outer * coeff;
        }
    }
    Ok(ChannelSnapshot { time_s: t, h })
}

/// Signal-to-noise ratio of a channel estimate, in dB. `+inf` means noiseless.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub const NOISELESS: SnrDb = SnrDb(f64::INFINITY);

    pub fn is_noiseless(&self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noiseless() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for SnrDb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") {
            return Ok(SnrDb::NOISELESS);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| config(format!("cannot parse SNR value `{s}`")))?;
        if !v.is_finite() {
            return Err(config(format!("SNR must be finite or `inf`, got `{s}`")));
        }
        Ok(SnrDb(v))
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_noiseless() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(SnrDb(v)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Adds circular complex Gaussian estimation noise with per-entry variance
/// `mean|H|^2 * 10^(-snr/10)`.
pub fn add_measurement_noise(s: &ChannelSnapshot, snr: SnrDb, seed: u64) -> Result<ChannelSnapshot> {
    if snr.is_noiseless() {
        return Ok(s.clone());
    }
    if !snr.0.is_finite() {
        return Err(domain(format!("SNR must be finite or +inf, got {}", snr.0)));
    }
    let variance = s.mean_power() * 10f64.powf(-snr.0 / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut out = s.clone();
    for hk in out.h.iter_mut() {
        for z in hk.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(out)
}

/// Subcarrier-averaged transmit covariance `R = (1/K) Σ_k H_k^H H_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WidebandCovariance {
    pub r: DMatrix<Complex64>,
}

impl WidebandCovariance {
    /// Wraps a matrix, checking it is square and Hermitian to `1e-10` relative.
    pub fn new(r: DMatrix<Complex64>) -> Result<Self> {
        if !r.is_square() {
            return Err(domain(format!("covariance is {}x{}, not square", r.nrows(), r.ncols())));
        }
        let skew = (&r - r.adjoint()).norm();
        if skew > 1e-10 * r.norm().max(f64::MIN_POSITIVE) {
            return Err(domain(format!("covariance is not Hermitian (skew norm {skew:e})")));
        }
        Ok(WidebandCovariance { r })
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.r
    }

    /// `R_11 + R_22`: sum of the two co-polarised diagonal blocks.
    pub fn copol_sum(&self) -> Result<DMatrix<Complex64>> {
        let n = self.dim();
        if n % 2 != 0 {
            return Err(domain(format!("covariance dimension {n} is odd")));
        }
        let half = n / 2;
        Ok(self.r.view((0, 0), (half, half)) + self.r.view((half, half), (half, half)))
    }
}

/// Covariance from a list of per-tone `n_rx x n_t` matrices.
pub fn covariance_from_matrices(h: &[DMatrix<Complex64>]) -> Result<WidebandCovariance> {
    let first = h.first().ok_or_else(|| domain("need at least one subcarrier"))?;
    let n_t = first.ncols();
    if h.iter().any(|hk| hk.ncols() != n_t) {
        return Err(domain("subcarrier matrices have inconsistent widths"));
    }
    // stack the tones row-wise: R = A^H A / K
    let rows: usize = h.iter().map(|hk| hk.nrows()).sum();
    let mut stacked = DMatrix::<Complex64>::zeros(rows, n_t);
    let mut at = 0;
    for hk in h {
        stacked.rows_mut(at, hk.nrows()).copy_from(hk);
        at += hk.nrows();
    }
    let mut r = gram(&stacked);
    r /= Complex64::new(h.len() as f64, 0.0);
    // exact Hermitian symmetry: mirror the upper triangle, real diagonal
    for i in 0..n_t {
        r[(i, i)] = Complex64::new(r[(i, i)].re, 0.0);
        for j in (i + 1)..n_t {
            let v = r[(i, j)];
            r[(j, i)] = v.conj();
        }
    }
    Ok(WidebandCovariance { r })
}

pub fn wideband_covariance(s: &ChannelSnapshot) -> Result<WidebandCovariance> {
    covariance_from_matrices(&s.h)
}
