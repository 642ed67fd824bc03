//! Precoder quality metrics and per-quantity report accuracy.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{SnrDb, WidebandCovariance};
use crate::codebook::TypeIIReport;
use crate::error::{domain, Error, Result};
use crate::linalg::{dominant_eigenpair, quadratic_form};

/// Unit-norm eigenvector of the largest eigenvalue, first significant entry real-positive.
pub fn dominant_eigenvector(cov: &WidebandCovariance) -> Result<DVector<Complex64>> {
    dominant_eigenpair(cov.matrix()).map(|(_, v)| v)
}

/// Squared generalized cosine similarity `|v^H w|^2 / (|v|^2 |w|^2)`.
pub fn sgcs(v_eig: &DVector<Complex64>, w: &DVector<Complex64>) -> Result<f64> {
    if v_eig.len() != w.len() {
        return Err(domain(format!("length mismatch {} vs {}", v_eig.len(), w.len())));
    }
    let nv = v_eig.norm_squared();
    let nw = w.norm_squared();
    if nv == 0.0 || nw == 0.0 {
        return Err(domain("SGCS of a zero vector is undefined"));
    }
    Ok(v_eig.dotc(w).norm_sqr() / (nv * nw))
}

/// Beamforming gain `w^H R w / v^H R v` relative to the eigen-beamformer `v`.
pub fn bf_gain(
    w: &DVector<Complex64>,
    cov: &WidebandCovariance,
    v_eig: &DVector<Complex64>,
) -> Result<f64> {
    if w.len() != cov.dim() || v_eig.len() != cov.dim() {
        return Err(domain("precoder length does not match the covariance"));
    }
    let reference = quadratic_form(cov.matrix(), v_eig);
    if reference <= 0.0 {
        return Err(Error::Degenerate("eigen-beamformer captures no power".into()));
    }
    Ok(quadratic_form(cov.matrix(), w) / reference)
}

/// Per-quantity agreement between a predicted and a reference report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportAccuracy {
    pub beamset: bool,
    /// Same set of beam indices, in any order.
    pub indices: bool,
    pub amp_exact: bool,
    pub phase_exact: bool,
    pub amp_fraction: f64,
    pub phase_fraction: f64,
}

/// Compares two reports. Amplitude and phase slots are matched by
/// `(polarisation, beam index)`, so a prediction listing the right beams in a
/// different order is scored slot-for-slot against the right coefficients;
/// slots whose beam the prediction lacks count as wrong.
pub fn report_accuracy(pred: &TypeIIReport, truth: &TypeIIReport) -> Result<ReportAccuracy> {
    let l = truth.n_beams();
    if pred.n_beams() != l
        || pred.amp_levels.len() != 2 * l
        || pred.phase_levels.len() != 2 * l
        || truth.amp_levels.len() != 2 * l
        || truth.phase_levels.len() != 2 * l
    {
        return Err(domain(format!(
            "reports have different shapes (L = {} vs {l})",
            pred.n_beams()
        )));
    }
    let mut a = pred.beam_indices.clone();
    let mut b = truth.beam_indices.clone();
    a.sort_unstable();
    b.sort_unstable();
    let indices = a == b;

    let mut amp_hits = 0usize;
    let mut phase_hits = 0usize;
    for pol in 0..2 {
        for (slot, beam) in truth.beam_indices.iter().enumerate() {
            let t = pol * l + slot;
            if let Some(ps) = pred.beam_indices.iter().position(|x| x == beam) {
                let p = pol * l + ps;
                amp_hits += usize::from(pred.amp_levels[p] == truth.amp_levels[t]);
                phase_hits += usize::from(pred.phase_levels[p] == truth.phase_levels[t]);
            }
        }
    }
    let slots = (2 * l) as f64;
    Ok(ReportAccuracy {
        beamset: pred.beamset == truth.beamset,
        indices,
        amp_exact: amp_hits == 2 * l,
        phase_exact: phase_hits == 2 * l,
        amp_fraction: amp_hits as f64 / slots,
        phase_fraction: phase_hits as f64 / slots,
    })
}

/// Which precoder an evaluation record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Classical report from instantaneous, noisy, full-port CSI.
    BaselineFull,
    /// Classical report from the port-cycled sub-panel CSI stitched into a full-port estimate.
    BaselineCycled,
    /// Imported predictions.
    Predicted,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::BaselineFull => "baseline-full",
            Source::BaselineCycled => "baseline-cycled",
            Source::Predicted => "predicted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: u64,
    pub snr: SnrDb,
    pub source: Source,
    pub sgcs: f64,
    pub bf_gain: f64,
    pub accuracy: ReportAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Per-(source, SNR) means and population standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub source: Source,
    pub snr: SnrDb,
    pub count: usize,
    pub sgcs: MeanStd,
    pub bf_gain: MeanStd,
    pub acc_beamset: f64,
    pub acc_indices: f64,
    pub acc_amp: f64,
    pub acc_phase: f64,
    pub acc_amp_slot: f64,
    pub acc_phase_slot: f64,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Groups records by SNR (ascending, noiseless last) and source.
pub fn aggregate(records: &[EvalRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(domain("no records to aggregate"));
    }
    let mut keys: Vec<(SnrDb, Source)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, src)| *s == r.snr && *src == r.source) {
            keys.push((r.snr, r.source));
        }
    }
    keys.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.1.cmp(&b.1)));
    Ok(keys
        .into_iter()
        .map(|(snr, source)| {
            let group: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.snr == snr && r.source == source)
                .collect();
            let it = group.iter();
            SummaryRow {
                source,
                snr,
                count: group.len(),
                sgcs: mean_std(it.clone().map(|r| r.sgcs)),
                bf_gain: mean_std(it.clone().map(|r| r.bf_gain)),
                acc_beamset: mean_std(it.clone().map(|r| flag(r.accuracy.beamset))).mean,
                acc_indices: mean_std(it.clone().map(|r| flag(r.accuracy.indices))).mean,
                acc_amp: mean_std(it.clone().map(|r| flag(r.accuracy.amp_exact))).mean,
                acc_phase: mean_std(it.clone().map(|r| flag(r.accuracy.phase_exact))).mean,
                acc_amp_slot: mean_std(it.clone().map(|r| r.accuracy.amp_fraction)).mean,
                acc_phase_slot: mean_std(it.clone().map(|r| r.accuracy.phase_fraction)).mean,
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: [&str; 13] = [
    "source",
    "snr_db",
    "count",
    "sgcs_mean",
    "sgcs_std",
    "bf_gain_mean",
    "bf_gain_std",
    "acc_beamset",
    "acc_indices",
    "acc_amp",
    "acc_phase",
    "acc_amp_slot",
    "acc_phase_slot",
];

/// Writes the summary as CSV with a header row.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(&[
            r.source.to_string(),
            r.snr.to_string(),
            r.count.to_string(),
            r.sgcs.mean.to_string(),
            r.sgcs.std.to_string(),
            r.bf_gain.mean.to_string(),
            r.bf_gain.std.to_string(),
            r.acc_beamset.to_string(),
            r.acc_indices.to_string(),
            r.acc_amp.to_string(),
            r.acc_phase.to_string(),
            r.acc_amp_slot.to_string(),
            r.acc_phase_slot.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn report() -> TypeIIReport {
        TypeIIReport {
            beamset: 2,
            beam_indices: vec![5, 1],
            amp_levels: vec![7, 3, 6, 0],
            phase_levels: vec![0, 2, 5, 0],
            strongest: 0,
        }
    }

    #[test]
    fn eigenvector_of_diagonal() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]));
        let v = dominant_eigenvector(&WidebandCovariance::new(r).unwrap()).unwrap();
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-12 && v[1].norm() < 1e-12);
        let zero = WidebandCovariance::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(dominant_eigenvector(&zero).is_err());
    }

    #[test]
    fn sgcs_basic_cases() {
        let v = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let w = DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 1.0)]);
        assert!((sgcs(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sgcs(&v, &w).unwrap(), 0.0);
        let u = DVector::from_vec(vec![c(0.3, -0.2), c(1.1, 0.4)]);
        let scaled = &u * c(-2.5, 0.7);
        assert!((sgcs(&v, &u).unwrap() - sgcs(&v, &scaled).unwrap()).abs() < 1e-14);
        assert!(sgcs(&v, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn gain_bounds() {
        let a = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]) / c(2f64.sqrt(), 0.0);
        let cov = WidebandCovariance::new(&a * a.adjoint()).unwrap();
        let v = dominant_eigenvector(&cov).unwrap();
        assert!((bf_gain(&v, &cov, &v).unwrap() - 1.0).abs() < 1e-12);
        let orth = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, -1.0)]) / c(2f64.sqrt(), 0.0);
        assert!(bf_gain(&orth, &cov, &v).unwrap().abs() < 1e-15);
        let zero = WidebandCovariance::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(bf_gain(&v, &zero, &v).is_err());
    }

    #[test]
    fn identical_reports_score_perfectly() {
        let acc = report_accuracy(&report(), &report()).unwrap();
        assert!(acc.beamset && acc.indices && acc.amp_exact && acc.phase_exact);
        assert_eq!((acc.amp_fraction, acc.phase_fraction), (1.0, 1.0));
    }

    #[test]
    fn index_order_does_not_matter() {
        let mut p = report();
        p.beam_indices = vec![1, 5];
        p.amp_levels = vec![3, 7, 0, 6];
        p.phase_levels = vec![2, 0, 0, 5];
        let acc = report_accuracy(&p, &report()).unwrap();
        assert!(acc.indices && acc.amp_exact && acc.phase_exact);
    }

    #[test]
    fn one_wrong_phase_slot() {
        let mut p = report();
        p.phase_levels[2] = 4;
        let acc = report_accuracy(&p, &report()).unwrap();
        assert!(!acc.phase_exact && acc.amp_exact);
        assert_eq!(acc.phase_fraction, 3.0 / 4.0);
    }

    #[test]
    fn wrong_beam_counts_against_its_slots() {
        let mut p = report();
        p.beam_indices = vec![5, 0];
        let acc = report_accuracy(&p, &report()).unwrap();
        assert!(!acc.indices);
        assert_eq!(acc.amp_fraction, 0.5);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = report();
        p.beam_indices.push(3);
        assert!(report_accuracy(&p, &report()).is_err());
    }

    fn record(snr: f64, source: Source, sgcs: f64, hit: bool) -> EvalRecord {
        EvalRecord {
            sample_id: 0,
            snr: SnrDb(snr),
            source,
            sgcs,
            bf_gain: sgcs,
            accuracy: ReportAccuracy {
                beamset: hit,
                indices: hit,
                amp_exact: hit,
                phase_exact: hit,
                amp_fraction: if hit { 1.0 } else { 0.0 },
                phase_fraction: if hit { 1.0 } else { 0.0 },
            },
        }
    }

    #[test]
    fn aggregation() {
        let one = aggregate(&[record(5.0, Source::BaselineFull, 0.8, true)]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].sgcs.mean, 0.8);
        assert_eq!(one[0].acc_beamset, 1.0);

        let dup = aggregate(&[
            record(5.0, Source::BaselineFull, 0.8, true),
            record(5.0, Source::BaselineFull, 0.8, true),
        ])
        .unwrap();
        assert_eq!(dup[0].sgcs.std, 0.0);

        let mixed = aggregate(&[
            record(10.0, Source::Predicted, 0.5, true),
            record(-5.0, Source::BaselineFull, 0.1, false),
            record(10.0, Source::Predicted, 0.7, false),
            record(10.0, Source::BaselineFull, 0.9, true),
        ])
        .unwrap();
        assert_eq!(mixed.len(), 3);
        assert_eq!(mixed[0].snr, SnrDb(-5.0));
        assert_eq!(mixed[1].source, Source::BaselineFull);
        assert_eq!(mixed[2].acc_beamset, 0.5);
        assert!((mixed[2].sgcs.mean - 0.6).abs() < 1e-15);

        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = aggregate(&[record(0.0, Source::BaselineCycled, 0.5, true)]).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("source,snr_db,count,sgcs_mean"));
        assert!(lines.next().unwrap().starts_with("baseline-cycled,0,1,0.5,0,"));
    }
}
