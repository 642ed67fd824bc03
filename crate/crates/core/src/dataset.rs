//! On-disk dataset of port-cycled measurements with Type-II labels, and the
//! prediction file format read back for evaluation.
//!
//! A dataset directory holds three files:
//!
//! * `measurements.f32` – little-endian `f32`, dimension order
//!   `[sample][cycle][x][y][rx][subcarrier][pol][re/im]`. Cycles are stored
//!   in sounding order; `samples[i].panel_order` in the manifest says which
//!   panel each cycle observed.
//! * `labels.i32` – little-endian `i32` records, one per sample:
//!   `beamset, strongest, beam_indices[L], amp_levels[2L], phase_levels[2L]`.
//! * `manifest.json` – configs, shapes, strides and per-sample metadata.
//!   Written last; its presence marks a complete dataset.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamspace::{AntennaConfig, N_POL};
use crate::channel::{ScenarioConfig, SnrDb};
use crate::codebook::{QuantizationTables, TypeIIReport, BEAM_COUNTS};
use crate::cycling::{partition, CycleMeasurement, PermutationPolicy, SubPanelPartition};
use crate::error::{domain, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MEASUREMENTS_FILE: &str = "measurements.f32";
pub const LABELS_FILE: &str = "labels.i32";
pub const PREDICTIONS_FORMAT_VERSION: u32 = 1;

pub const MEASUREMENT_DIMS: [&str; 8] = [
    "sample", "cycle", "x", "y", "rx", "subcarrier", "pol", "re_im",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub rho_x: usize,
    pub rho_y: usize,
}

/// Train/validation/test fractions; the split itself is done by consumers
/// with `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub file: String,
    pub dtype: String,
    pub dims: Vec<String>,
    pub shape: Vec<usize>,
    /// Byte stride of each dimension in `dims`.
    pub strides_bytes: Vec<u64>,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub offset_bytes: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub file: String,
    pub dtype: String,
    pub record_bytes: u64,
    pub fields: Vec<FieldSpec>,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: u64,
    pub snr_db: SnrDb,
    pub channel_seed: u64,
    pub noise_seed: u64,
    /// Panel sounded at each cycle, in sounding order.
    pub panel_order: Vec<usize>,
}

/// Everything needed to generate, interpret and label a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub antenna: AntennaConfig,
    pub scenario: ScenarioConfig,
    pub partition: PartitionSpec,
    /// Beams per report, `L`.
    pub n_beams: usize,
    pub n_psk: usize,
    pub snr_list: Vec<SnrDb>,
    pub base_seed: u64,
    pub permutation_policy: PermutationPolicy,
    /// Time of the first sounding occasion.
    pub t0_s: f64,
    /// Labels come from the noiseless full-port covariance at this cycle's occasion time.
    pub label_cycle: usize,
}

impl DatasetHeader {
    pub fn validate(&self) -> Result<SubPanelPartition> {
        self.antenna.validate()?;
        self.scenario.validate()?;
        let part = partition(&self.antenna, self.partition.rho_x, self.partition.rho_y)?;
        if !BEAM_COUNTS.contains(&self.n_beams) || self.n_beams > part.antenna().n_elements() {
            return Err(Error::Config(format!(
                "L = {} must be one of {BEAM_COUNTS:?} and at most n_x * n_y = {}",
                self.n_beams,
                part.antenna().n_elements()
            )));
        }
        QuantizationTables::new(self.n_psk)?;
        if self.label_cycle >= part.rho() {
            return Err(Error::Config(format!(
                "label cycle {} outside 0..{}",
                self.label_cycle,
                part.rho()
            )));
        }
        if self.snr_list.is_empty() {
            return Err(Error::Config("SNR list is empty".into()));
        }
        Ok(part)
    }

    pub fn tables(&self) -> Result<QuantizationTables> {
        QuantizationTables::new(self.n_psk)
    }

    /// Occasion time of cycle `i`.
    pub fn cycle_time(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.scenario.csi_period_s
    }

    fn cycle_shape(&self) -> [usize; 6] {
        let nx = self.antenna.n_x / self.partition.rho_x;
        let ny = self.antenna.n_y / self.partition.rho_y;
        [nx, ny, self.scenario.n_rx, self.scenario.n_subcarriers, N_POL, 2]
    }

    fn rho(&self) -> usize {
        self.partition.rho_x * self.partition.rho_y
    }

    fn label_ints(&self) -> usize {
        2 + 5 * self.n_beams
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub header: DatasetHeader,
    pub n_amplitude_levels: usize,
    pub sample_count: usize,
    pub split: SplitSpec,
    pub measurements: TensorSpec,
    pub labels: LabelSpec,
    pub samples: Vec<SampleMeta>,
}

impl DatasetManifest {
    fn build(header: &DatasetHeader, samples: Vec<SampleMeta>) -> Self {
        let cycle = header.cycle_shape();
        let mut shape = vec![samples.len(), header.rho()];
        shape.extend_from_slice(&cycle);
        let mut strides = vec![0u64; shape.len()];
        let mut acc = 4u64;
        for d in (0..shape.len()).rev() {
            strides[d] = acc;
            acc *= shape[d] as u64;
        }
        let l = header.n_beams;
        let fields = [
            ("beamset", 1),
            ("strongest", 1),
            ("beam_indices", l),
            ("amp_levels", 2 * l),
            ("phase_levels", 2 * l),
        ];
        let mut offset = 0u64;
        let fields = fields
            .iter()
            .map(|&(name, count)| {
                let f = FieldSpec {
                    name: name.to_string(),
                    offset_bytes: offset,
                    count,
                };
                offset += 4 * count as u64;
                f
            })
            .collect();
        let record_bytes = 4 * header.label_ints() as u64;
        DatasetManifest {
            format_version: FORMAT_VERSION,
            header: header.clone(),
            n_amplitude_levels: crate::codebook::AMPLITUDE_LEVELS.len(),
            sample_count: samples.len(),
            split: SplitSpec::standard(header.base_seed),
            measurements: TensorSpec {
                file: MEASUREMENTS_FILE.into(),
                dtype: "f32-le".into(),
                dims: MEASUREMENT_DIMS.iter().map(|s| s.to_string()).collect(),
                shape,
                strides_bytes: strides,
                total_bytes: acc,
            },
            labels: LabelSpec {
                file: LABELS_FILE.into(),
                dtype: "i32-le".into(),
                record_bytes,
                fields,
                total_bytes: record_bytes * samples.len() as u64,
            },
            samples,
        }
    }

    pub fn sample_bytes(&self) -> u64 {
        self.measurements.strides_bytes[0]
    }

    /// Checks that the manifest is internally consistent.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset format version {}",
                self.format_version
            )));
        }
        self.header.validate()?;
        if self.sample_count == 0 || self.samples.len() != self.sample_count {
            return Err(Error::Format(format!(
                "sample_count {} does not match {} sample entries",
                self.sample_count,
                self.samples.len()
            )));
        }
        let expected = DatasetManifest::build(&self.header, self.samples.clone());
        if expected.measurements != self.measurements || expected.labels != self.labels {
            return Err(Error::Format("tensor layout does not match the configs".into()));
        }
        let rho = self.header.rho();
        for s in &self.samples {
            let mut order = s.panel_order.clone();
            order.sort_unstable();
            if order != (0..rho).collect::<Vec<_>>() {
                return Err(Error::Format(format!(
                    "sample {} has an invalid panel order {:?}",
                    s.id, s.panel_order
                )));
            }
        }
        Ok(())
    }
}

/// One exported example: `rho` measurements in sounding order plus the label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub meta: SampleMeta,
    pub measurements: Vec<CycleMeasurement>,
    pub label: TypeIIReport,
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    let res = (|| -> Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

/// Streaming dataset writer. Samples must arrive in id order.
pub struct DatasetWriter {
    dir: PathBuf,
    header: DatasetHeader,
    part: SubPanelPartition,
    measurements: Option<BufWriter<File>>,
    labels: Option<BufWriter<File>>,
    samples: Vec<SampleMeta>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, header: DatasetHeader) -> Result<Self> {
        let part = header.validate()?;
        fs::create_dir_all(dir)?;
        let measurements = BufWriter::new(File::create(tmp_path(&dir.join(MEASUREMENTS_FILE)))?);
        let labels = BufWriter::new(File::create(tmp_path(&dir.join(LABELS_FILE)))?);
        Ok(DatasetWriter {
            dir: dir.to_path_buf(),
            header,
            part,
            measurements: Some(measurements),
            labels: Some(labels),
            samples: Vec::new(),
        })
    }

    fn check(&self, s: &DatasetSample) -> Result<()> {
        let rho = self.part.rho();
        if s.measurements.len() != rho || s.meta.panel_order.len() != rho {
            return Err(domain(format!(
                "sample {} has {} cycles, expected {rho}",
                s.meta.id,
                s.measurements.len()
            )));
        }
        let c = self.header.cycle_shape();
        let want = [c[0], c[1], c[2], c[3], c[4]];
        for (m, &panel) in s.measurements.iter().zip(&s.meta.panel_order) {
            if m.shape() != want {
                return Err(domain(format!(
                    "sample {} has measurement shape {:?}, expected {want:?}",
                    s.meta.id,
                    m.shape()
                )));
            }
            if m.panel_id != panel {
                return Err(domain(format!("sample {} panel order disagrees with measurements", s.meta.id)));
            }
        }
        if s.label.n_beams() != self.header.n_beams {
            return Err(domain(format!(
                "sample {} label has {} beams, expected {}",
                s.meta.id,
                s.label.n_beams(),
                self.header.n_beams
            )));
        }
        s.label.validate(&self.header.antenna, &self.header.tables()?)?;
        if s.meta.id != self.samples.len() as u64 {
            return Err(domain(format!(
                "sample id {} out of sequence (expected {})",
                s.meta.id,
                self.samples.len()
            )));
        }
        Ok(())
    }

    pub fn write_sample(&mut self, s: &DatasetSample) -> Result<()> {
        self.check(s)?;
        let out = self.measurements.as_mut().expect("writer is open");
        for m in &s.measurements {
            for z in &m.data {
                out.write_all(&(z.re as f32).to_le_bytes())?;
                out.write_all(&(z.im as f32).to_le_bytes())?;
            }
        }
        let labels = self.labels.as_mut().expect("writer is open");
        for v in label_record(&s.label) {
            labels.write_all(&v.to_le_bytes())?;
        }
        self.samples.push(s.meta.clone());
        Ok(())
    }

    /// Flushes the payloads, moves them into place and writes the manifest.
    pub fn finish(mut self) -> Result<DatasetManifest> {
        if self.samples.is_empty() {
            return Err(domain("cannot export an empty dataset"));
        }
        for (w, name) in [
            (self.measurements.take(), MEASUREMENTS_FILE),
            (self.labels.take(), LABELS_FILE),
        ] {
            let f = w.expect("writer is open").into_inner().map_err(|e| e.into_error())?;
            f.sync_all()?;
            let path = self.dir.join(name);
            fs::rename(tmp_path(&path), &path)?;
        }
        let manifest = DatasetManifest::build(&self.header, std::mem::take(&mut self.samples));
        let json = serde_json::to_vec_pretty(&manifest)?;
        write_atomic(&self.dir.join(MANIFEST_FILE), &json)?;
        Ok(manifest)
    }
}

impl Drop for DatasetWriter {
    fn drop(&mut self) {
        // an unfinished writer leaves no payload behind
        if self.measurements.is_some() || self.labels.is_some() {
            self.measurements.take();
            self.labels.take();
            for name in [MEASUREMENTS_FILE, LABELS_FILE] {
                let _ = fs::remove_file(tmp_path(&self.dir.join(name)));
            }
        }
    }
}

fn label_record(r: &TypeIIReport) -> Vec<i32> {
    let mut v = Vec::with_capacity(2 + 5 * r.n_beams());
    v.push(r.beamset as i32);
    v.push(r.strongest as i32);
    v.extend(r.beam_indices.iter().map(|&x| x as i32));
    v.extend(r.amp_levels.iter().map(|&x| x as i32));
    v.extend(r.phase_levels.iter().map(|&x| x as i32));
    v
}

/// Writes a complete dataset in one call.
pub fn export_dataset(
    samples: &[DatasetSample],
    header: &DatasetHeader,
    dir: &Path,
) -> Result<DatasetManifest> {
    if samples.is_empty() {
        return Err(domain("cannot export an empty dataset"));
    }
    let mut w = DatasetWriter::create(dir, header.clone())?;
    for s in samples {
        w.write_sample(s)?;
    }
    w.finish()
}

/// Random-access reader over a dataset directory.
pub struct DatasetReader {
    dir: PathBuf,
    manifest: DatasetManifest,
    part: SubPanelPartition,
}

impl DatasetReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read(dir.join(MANIFEST_FILE))?;
        let manifest: DatasetManifest = serde_json::from_slice(&text)?;
        manifest.validate()?;
        for (name, bytes) in [
            (&manifest.measurements.file, manifest.measurements.total_bytes),
            (&manifest.labels.file, manifest.labels.total_bytes),
        ] {
            let len = fs::metadata(dir.join(name))?.len();
            if len != bytes {
                return Err(Error::Format(format!(
                    "{name} is {len} bytes, manifest says {bytes}"
                )));
            }
        }
        let part = manifest.header.validate()?;
        Ok(DatasetReader {
            dir: dir.to_path_buf(),
            manifest,
            part,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn partition(&self) -> &SubPanelPartition {
        &self.part
    }

    pub fn len(&self) -> usize {
        self.manifest.sample_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.sample_count == 0
    }

    pub fn read_label(&self, index: usize) -> Result<TypeIIReport> {
        if index >= self.len() {
            return Err(domain(format!("sample {index} outside 0..{}", self.len())));
        }
        let rec = self.manifest.labels.record_bytes;
        let mut f = File::open(self.dir.join(&self.manifest.labels.file))?;
        f.seek(SeekFrom::Start(rec * index as u64))?;
        let mut buf = vec![0u8; rec as usize];
        f.read_exact(&mut buf)?;
        let ints: Vec<i32> = buf
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let l = self.manifest.header.n_beams;
        let id = self.manifest.samples[index].id;
        let to_usize = |field: &str, v: i32| {
            usize::try_from(v).map_err(|_| Error::Validation {
                sample: id,
                field: field.into(),
                message: format!("negative value {v}"),
            })
        };
        let collect = |field: &str, xs: &[i32]| xs.iter().map(|&v| to_usize(field, v)).collect::<Result<Vec<_>>>();
        let report = TypeIIReport {
            beamset: to_usize("beamset", ints[0])?,
            strongest: to_usize("strongest", ints[1])?,
            beam_indices: collect("beam_indices", &ints[2..2 + l])?,
            amp_levels: collect("amp_levels", &ints[2 + l..2 + 3 * l])?,
            phase_levels: collect("phase_levels", &ints[2 + 3 * l..2 + 5 * l])?,
        };
        Ok(report)
    }

    pub fn read_sample(&self, index: usize) -> Result<DatasetSample> {
        let label = self.read_label(index)?;
        let meta = self.manifest.samples[index].clone();
        let stride = self.sample_bytes();
        let mut f = BufReader::new(File::open(self.dir.join(&self.manifest.measurements.file))?);
        f.seek(SeekFrom::Start(stride * index as u64))?;
        let mut buf = vec![0u8; stride as usize];
        f.read_exact(&mut buf)?;
        let floats: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let [nx, ny, n_rx, n_sc, _, _] = self.manifest.header.cycle_shape();
        let per_cycle = nx * ny * n_rx * n_sc * N_POL;
        let measurements = meta
            .panel_order
            .iter()
            .enumerate()
            .map(|(i, &panel_id)| CycleMeasurement {
                panel_id,
                time_s: self.manifest.header.cycle_time(i),
                n_x: nx,
                n_y: ny,
                n_rx,
                n_subcarriers: n_sc,
                data: floats[2 * i * per_cycle..2 * (i + 1) * per_cycle]
                    .chunks_exact(2)
                    .map(|p| Complex64::new(p[0] as f64, p[1] as f64))
                    .collect(),
            })
            .collect();
        Ok(DatasetSample {
            meta,
            measurements,
            label,
        })
    }

    fn sample_bytes(&self) -> u64 {
        self.manifest.sample_bytes()
    }
}

/// One predicted report as written by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub sample_id: u64,
    pub beamset: i64,
    pub beam_indices: Vec<i64>,
    pub amp_levels: Vec<i64>,
    pub phase_levels: Vec<i64>,
    /// Optional; inferred as the first slot with the largest amplitude level when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strongest: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub format_version: u32,
    pub n_beams: usize,
    pub predictions: Vec<PredictionEntry>,
}

/// Reports aligned to manifest order. `reports[i]` is `None` for samples
/// the file does not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionImport {
    pub reports: Vec<Option<TypeIIReport>>,
    pub missing: Vec<u64>,
}

impl PredictionImport {
    pub fn is_partial(&self) -> bool {
        !self.missing.is_empty()
    }
}

/// Writes predictions in the exchange format.
pub fn write_predictions(path: &Path, n_beams: usize, reports: &[(u64, TypeIIReport)]) -> Result<()> {
    let file = PredictionFile {
        format_version: PREDICTIONS_FORMAT_VERSION,
        n_beams,
        predictions: reports
            .iter()
            .map(|(id, r)| PredictionEntry {
                sample_id: *id,
                beamset: r.beamset as i64,
                beam_indices: r.beam_indices.iter().map(|&x| x as i64).collect(),
                amp_levels: r.amp_levels.iter().map(|&x| x as i64).collect(),
                phase_levels: r.phase_levels.iter().map(|&x| x as i64).collect(),
                strongest: Some(r.strongest as i64),
            })
            .collect(),
    };
    write_atomic(path, &serde_json::to_vec_pretty(&file)?)
}

fn check_entry(e: &PredictionEntry, manifest: &DatasetManifest) -> Result<TypeIIReport> {
    let h = &manifest.header;
    let l = h.n_beams;
    let n_beams_in_set = h.antenna.n_elements();
    let bad = |field: &str, message: String| Error::Validation {
        sample: e.sample_id,
        field: field.into(),
        message,
    };
    let in_range = |field: &str, v: i64, bound: usize| -> Result<usize> {
        if v < 0 || v as u64 >= bound as u64 {
            Err(bad(field, format!("value {v} outside 0..{bound}")))
        } else {
            Ok(v as usize)
        }
    };
    let beamset = in_range("beamset", e.beamset, h.antenna.n_beamsets())?;
    if e.beam_indices.len() != l {
        return Err(bad("beam_indices", format!("{} entries, expected {l}", e.beam_indices.len())));
    }
    let beam_indices = e
        .beam_indices
        .iter()
        .map(|&v| in_range("beam_indices", v, n_beams_in_set))
        .collect::<Result<Vec<_>>>()?;
    for (pos, i) in beam_indices.iter().enumerate() {
        if beam_indices[..pos].contains(i) {
            return Err(bad("beam_indices", format!("index {i} repeated")));
        }
    }
    if e.amp_levels.len() != 2 * l {
        return Err(bad("amp_levels", format!("{} entries, expected {}", e.amp_levels.len(), 2 * l)));
    }
    if e.phase_levels.len() != 2 * l {
        return Err(bad("phase_levels", format!("{} entries, expected {}", e.phase_levels.len(), 2 * l)));
    }
    let amp_levels = e
        .amp_levels
        .iter()
        .map(|&v| in_range("amp_levels", v, manifest.n_amplitude_levels))
        .collect::<Result<Vec<_>>>()?;
    let phase_levels = e
        .phase_levels
        .iter()
        .map(|&v| in_range("phase_levels", v, h.n_psk))
        .collect::<Result<Vec<_>>>()?;
    let strongest = match e.strongest {
        Some(s) => in_range("strongest", s, 2 * l)?,
        None => {
            let top = *amp_levels.iter().max().expect("2L > 0 slots");
            amp_levels.iter().position(|&a| a == top).expect("max exists")
        }
    };
    Ok(TypeIIReport {
        beamset,
        beam_indices,
        amp_levels,
        phase_levels,
        strongest,
    })
}

/// Reads and validates a prediction file against a dataset manifest.
pub fn import_predictions(path: &Path, manifest: &DatasetManifest) -> Result<PredictionImport> {
    let bytes = fs::read(path)?;
    let file: PredictionFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Schema(format!("prediction file is not valid: {e}")))?;
    if file.format_version != PREDICTIONS_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported prediction format version {}",
            file.format_version
        )));
    }
    if file.n_beams != manifest.header.n_beams {
        return Err(Error::Schema(format!(
            "predictions use L = {}, dataset uses L = {}",
            file.n_beams, manifest.header.n_beams
        )));
    }
    let mut reports: Vec<Option<TypeIIReport>> = vec![None; manifest.sample_count];
    for e in &file.predictions {
        let pos = manifest
            .samples
            .iter()
            .position(|s| s.id == e.sample_id)
            .ok_or_else(|| Error::Validation {
                sample: e.sample_id,
                field: "sample_id".into(),
                message: "not present in the dataset".into(),
            })?;
        if reports[pos].is_some() {
            return Err(Error::Validation {
                sample: e.sample_id,
                field: "sample_id".into(),
                message: "predicted more than once".into(),
            });
        }
        reports[pos] = Some(check_entry(e, manifest)?);
    }
    let missing = manifest
        .samples
        .iter()
        .zip(&reports)
        .filter(|(_, r)| r.is_none())
        .map(|(s, _)| s.id)
        .collect();
    Ok(PredictionImport { reports, missing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> DatasetHeader {
        DatasetHeader {
            antenna: AntennaConfig::new(2, 2, 2, 2).unwrap(),
            scenario: ScenarioConfig {
                n_subcarriers: 3,
                n_rx: 2,
                ..ScenarioConfig::default()
            },
            partition: PartitionSpec { rho_x: 2, rho_y: 1 },
            n_beams: 2,
            n_psk: 8,
            snr_list: vec![SnrDb(0.0)],
            base_seed: 1,
            permutation_policy: PermutationPolicy::Identity,
            t0_s: 0.0,
            label_cycle: 1,
        }
    }

    fn sample(id: u64) -> DatasetSample {
        let measurements = (0..2)
            .map(|p| CycleMeasurement {
                panel_id: p,
                time_s: 0.02 * p as f64,
                n_x: 1,
                n_y: 2,
                n_rx: 2,
                n_subcarriers: 3,
                data: (0..24)
                    .map(|i| Complex64::new(i as f64 * 0.5 + id as f64, -(p as f64)))
                    .collect(),
            })
            .collect();
        DatasetSample {
            meta: SampleMeta {
                id,
                snr_db: SnrDb(0.0),
                channel_seed: 10 + id,
                noise_seed: 20 + id,
                panel_order: vec![0, 1],
            },
            measurements,
            label: TypeIIReport {
                beamset: 3,
                beam_indices: vec![2, 0],
                amp_levels: vec![7, 2, 5, 0],
                phase_levels: vec![0, 3, 6, 0],
                strongest: 0,
            },
        }
    }

    #[test]
    fn manifest_strides() {
        let m = DatasetManifest::build(&header(), vec![sample(0).meta]);
        assert_eq!(m.measurements.shape, vec![1, 2, 1, 2, 2, 3, 2, 2]);
        assert_eq!(m.measurements.strides_bytes[7], 4);
        assert_eq!(m.measurements.strides_bytes[0], 2 * 2 * 2 * 3 * 2 * 2 * 4);
        assert_eq!(m.labels.record_bytes, 4 * 12);
        assert_eq!(m.labels.fields[4].offset_bytes, 4 * (2 + 2 + 4));
    }

    #[test]
    fn empty_export_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_dataset(&[], &header(), dir.path()).is_err());
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn shape_mismatch_rejected_without_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = sample(0);
        bad.measurements[1].n_subcarriers = 2;
        assert!(export_dataset(&[bad], &header(), dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![sample(0), sample(1)];
        let manifest = export_dataset(&samples, &header(), dir.path()).unwrap();
        let reader = DatasetReader::open(dir.path()).unwrap();
        assert_eq!(reader.manifest(), &manifest);
        for s in &samples {
            let back = reader.read_sample(s.meta.id as usize).unwrap();
            assert_eq!(back.meta, s.meta);
            assert_eq!(back.label, s.label);
            for (a, b) in back.measurements.iter().zip(&s.measurements) {
                assert_eq!(a.data, b.data);
                assert_eq!(a.time_s, b.time_s);
            }
        }
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&[sample(0)], &header(), dir.path()).unwrap();
        let path = dir.path().join(MEASUREMENTS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(DatasetReader::open(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn predictions_validation() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_dataset(&[sample(0), sample(1)], &header(), dir.path()).unwrap();
        let path = dir.path().join("pred.json");

        write_predictions(&path, 2, &[(1, sample(1).label), (0, sample(0).label)]).unwrap();
        let imp = import_predictions(&path, &manifest).unwrap();
        assert!(!imp.is_partial());
        assert_eq!(imp.reports[0].as_ref().unwrap(), &sample(0).label);

        write_predictions(&path, 2, &[(1, sample(1).label)]).unwrap();
        let imp = import_predictions(&path, &manifest).unwrap();
        assert_eq!(imp.missing, vec![0]);

        let mut bad = sample(1).label;
        bad.amp_levels[1] = 9;
        write_predictions(&path, 2, &[(1, bad)]).unwrap();
        match import_predictions(&path, &manifest) {
            Err(Error::Validation { sample, field, .. }) => {
                assert_eq!(sample, 1);
                assert_eq!(field, "amp_levels");
            }
            other => panic!("unexpected {other:?}"),
        }

        write_predictions(&path, 2, &[(5, sample(0).label)]).unwrap();
        assert!(matches!(import_predictions(&path, &manifest), Err(Error::Validation { .. })));

        fs::write(&path, b"{not json").unwrap();
        assert!(matches!(import_predictions(&path, &manifest), Err(Error::Schema(_))));
    }

    #[test]
    fn strongest_inferred_when_absent() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_dataset(&[sample(0)], &header(), dir.path()).unwrap();
        let path = dir.path().join("pred.json");
        let json = r#"{"format_version":1,"n_beams":2,"predictions":[
            {"sample_id":0,"beamset":1,"beam_indices":[3,1],"amp_levels":[4,7,7,0],"phase_levels":[1,0,2,0]}]}"#;
        fs::write(&path, json).unwrap();
        let imp = import_predictions(&path, &manifest).unwrap();
        assert_eq!(imp.reports[0].as_ref().unwrap().strongest, 1);
    }
}
