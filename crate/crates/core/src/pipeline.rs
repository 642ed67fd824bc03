//! Per-sample simulation steps shared by the CLI commands: dataset sample
//! generation, evaluation of report sources, and per-cycle variation scores.
//!
//! Every step is a pure function of the configs, the base seed and the
//! sample index, so samples can be processed in any order or in parallel.

use crate::beamspace::{enumerate_beamsets, BeamspaceGrid};
use crate::channel::{
    add_measurement_noise, covariance_from_matrices, generate_channel, snapshot_at, wideband_covariance,
    ChannelRealization, SnrDb, WidebandCovariance,
};
use crate::codebook::{assemble_precoder, ground_truth_report, QuantizationTables, TypeIIReport};
use crate::cycling::{
    assemble_full, make_schedule, per_cycle_quantity, permutation_for_sample, sound_cycle, variation_score_with,
    SubPanelPartition, VariationMode,
};
use crate::dataset::{DatasetHeader, DatasetSample, SampleMeta};
use crate::error::{domain, Result};
use crate::metrics::{bf_gain, dominant_eigenvector, report_accuracy, sgcs, EvalRecord, Source};
use crate::rng::{derive_seed, Stream};

/// Validated configs plus the beam grids derived from them.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub header: DatasetHeader,
    pub part: SubPanelPartition,
    pub grid: BeamspaceGrid,
    pub subgrid: BeamspaceGrid,
    pub tables: QuantizationTables,
}

impl Pipeline {
    pub fn new(header: DatasetHeader) -> Result<Self> {
        let part = header.validate()?;
        let grid = enumerate_beamsets(&header.antenna)?;
        let subgrid = enumerate_beamsets(&part.panel_antenna())?;
        let tables = header.tables()?;
        Ok(Pipeline {
            header,
            part,
            grid,
            subgrid,
            tables,
        })
    }

    pub fn channel_seed(&self, index: u64) -> u64 {
        derive_seed(self.header.base_seed, Stream::Channel, index)
    }

    pub fn noise_seed(&self, index: u64) -> u64 {
        derive_seed(self.header.base_seed, Stream::Noise, index)
    }

    /// SNRs are assigned round-robin over the configured list.
    pub fn snr_for(&self, index: u64) -> SnrDb {
        let list = &self.header.snr_list;
        list[(index % list.len() as u64) as usize]
    }

    pub fn label_time(&self) -> f64 {
        self.header.cycle_time(self.header.label_cycle)
    }

    pub fn channel(&self, channel_seed: u64) -> Result<ChannelRealization> {
        generate_channel(&self.header.scenario, &self.header.antenna, channel_seed)
    }

    /// Noiseless full-port covariance at the label time.
    pub fn true_covariance(&self, real: &ChannelRealization) -> Result<WidebandCovariance> {
        wideband_covariance(&snapshot_at(real, self.label_time())?)
    }

    /// Channel, cycled measurements and label for sample `index`.
    pub fn generate_sample(&self, index: u64) -> Result<DatasetSample> {
        let h = &self.header;
        let meta = SampleMeta {
            id: index,
            snr_db: self.snr_for(index),
            channel_seed: self.channel_seed(index),
            noise_seed: self.noise_seed(index),
            panel_order: permutation_for_sample(h.permutation_policy, self.part.rho(), index, h.base_seed),
        };
        let real = self.channel(meta.channel_seed)?;
        let sched = make_schedule(&self.part, h.t0_s, h.scenario.csi_period_s, &meta.panel_order)?;
        let measurements = sound_cycle(&real, &sched, &self.part, meta.snr_db, meta.noise_seed)?;
        let label = ground_truth_report(&self.true_covariance(&real)?, &self.grid, &self.tables, h.n_beams)?;
        Ok(DatasetSample {
            meta,
            measurements,
            label,
        })
    }

    /// Report from instantaneous full-port CSI at the label time, with the
    /// sample's SNR and a noise draw independent of the cycled measurements.
    pub fn baseline_full_report(&self, real: &ChannelRealization, meta: &SampleMeta) -> Result<TypeIIReport> {
        let clean = snapshot_at(real, self.label_time())?;
        let noisy = add_measurement_noise(&clean, meta.snr_db, derive_seed(meta.noise_seed, Stream::Evaluation, 0))?;
        ground_truth_report(&wideband_covariance(&noisy)?, &self.grid, &self.tables, self.header.n_beams)
    }

    /// Report from the cycled sub-panel measurements stitched into one full-port estimate.
    pub fn baseline_cycled_report(&self, sample: &DatasetSample) -> Result<TypeIIReport> {
        let h = assemble_full(&sample.measurements, &self.part)?;
        ground_truth_report(&covariance_from_matrices(&h)?, &self.grid, &self.tables, self.header.n_beams)
    }

    /// Scores the baselines, and `predicted` when given, against the true
    /// channel at the label time.
    pub fn evaluate_sample(
        &self,
        sample: &DatasetSample,
        predicted: Option<&TypeIIReport>,
    ) -> Result<Vec<EvalRecord>> {
        let real = self.channel(sample.meta.channel_seed)?;
        let cov = self.true_covariance(&real)?;
        let v_eig = dominant_eigenvector(&cov)?;
        let mut sources = vec![
            (Source::BaselineFull, self.baseline_full_report(&real, &sample.meta)?),
            (Source::BaselineCycled, self.baseline_cycled_report(sample)?),
        ];
        if let Some(p) = predicted {
            sources.push((Source::Predicted, p.clone()));
        }
        sources
            .into_iter()
            .map(|(source, report)| {
                let w = assemble_precoder(&report, &self.grid, &self.tables)?.w;
                Ok(EvalRecord {
                    sample_id: sample.meta.id,
                    snr: sample.meta.snr_db,
                    source,
                    sgcs: sgcs(&v_eig, &w)?,
                    bf_gain: bf_gain(&w, &cov, &v_eig)?,
                    accuracy: report_accuracy(&report, &sample.label)?,
                })
            })
            .collect()
    }

    /// Per-cycle beam quantity along one identity-ordered sounding cycle.
    pub fn cycle_quantities(
        &self,
        real: &ChannelRealization,
        snr: SnrDb,
        noise_seed: u64,
        quantity: Quantity,
    ) -> Result<Vec<f64>> {
        let order: Vec<usize> = (0..self.part.rho()).collect();
        let sched = make_schedule(&self.part, self.header.t0_s, self.header.scenario.csi_period_s, &order)?;
        let meas = sound_cycle(real, &sched, &self.part, snr, noise_seed)?;
        meas.iter()
            .map(|m| {
                let q = per_cycle_quantity(m, &self.subgrid, self.header.n_beams)?;
                Ok(match quantity {
                    Quantity::Beamset => q.beamset as f64,
                    Quantity::DominantBeam => q.dominant_beam as f64,
                })
            })
            .collect()
    }

    /// Variation score of sample `index` at `snr`. The channel and the
    /// unit-variance noise draw depend on `index` only, so scores at
    /// different SNRs are directly comparable.
    pub fn variation_sample(&self, index: u64, snr: SnrDb, quantity: Quantity, mode: VariationMode) -> Result<f64> {
        if self.part.rho() < 2 {
            return Err(domain("variation score needs at least two sub-panels"));
        }
        let real = self.channel(self.channel_seed(index))?;
        let values = self.cycle_quantities(&real, snr, self.noise_seed(index), quantity)?;
        variation_score_with(&values, mode)
    }
}

/// Which beam quantity the variation score tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    #[default]
    Beamset,
    DominantBeam,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamspace::AntennaConfig;
    use crate::channel::ScenarioConfig;
    use crate::cycling::PermutationPolicy;
    use crate::dataset::PartitionSpec;

    pub(crate) fn small_header() -> DatasetHeader {
        DatasetHeader {
            antenna: AntennaConfig::new(4, 2, 2, 2).unwrap(),
            scenario: ScenarioConfig {
                n_subcarriers: 6,
                n_rx: 2,
                ..ScenarioConfig::default()
            },
            partition: PartitionSpec { rho_x: 2, rho_y: 1 },
            n_beams: 2,
            n_psk: 8,
            snr_list: vec![SnrDb::NOISELESS, SnrDb(0.0)],
            base_seed: 11,
            permutation_policy: PermutationPolicy::All,
            t0_s: 0.0,
            label_cycle: 1,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = Pipeline::new(small_header()).unwrap();
        let a = p.generate_sample(3).unwrap();
        let b = p.generate_sample(3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.snr_db, SnrDb(0.0));
        assert_eq!(a.meta.panel_order, vec![1, 0]);
        assert_eq!(a.measurements[0].panel_id, 1);
        a.label.validate_label(&p.header.antenna, &p.tables).unwrap();
    }

    #[test]
    fn noiseless_baselines() {
        let p = Pipeline::new(small_header()).unwrap();
        let s = p.generate_sample(0).unwrap();
        assert!(s.meta.snr_db.is_noiseless());
        let recs = p.evaluate_sample(&s, Some(&s.label)).unwrap();
        assert_eq!(recs.len(), 3);
        // noiseless instantaneous CSI at the label time reproduces the label
        let full = recs.iter().find(|r| r.source == Source::BaselineFull).unwrap();
        let pred = recs.iter().find(|r| r.source == Source::Predicted).unwrap();
        assert!(full.accuracy.amp_exact && full.accuracy.phase_exact);
        assert_eq!(full.sgcs, pred.sgcs);
        assert!(recs.iter().all(|r| r.bf_gain <= 1.0 + 1e-9));
    }

    #[test]
    fn static_single_ray_has_zero_variation() {
        let mut h = small_header();
        h.scenario.n_clusters = 1;
        h.scenario.ue_speed_mps = 0.0;
        let p = Pipeline::new(h).unwrap();
        for i in 0..10 {
            for q in [Quantity::Beamset, Quantity::DominantBeam] {
                let s = p.variation_sample(i, SnrDb::NOISELESS, q, VariationMode::IndexDiff).unwrap();
                assert_eq!(s, 0.0);
            }
        }
    }
}
