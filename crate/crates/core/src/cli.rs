//! `portcycle` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or domain error, 3 I/O or dataset
//! format error, 4 prediction file schema error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::beamspace::AntennaConfig;
use crate::channel::{ScenarioConfig, SnrDb};
use crate::complexity::{run_bench, write_bench_csv, BenchConfig};
use crate::cycling::{PermutationPolicy, VariationMode};
use crate::dataset::{
    import_predictions, write_atomic, DatasetHeader, DatasetReader, DatasetWriter, PartitionSpec, MANIFEST_FILE,
};
use crate::error::{config, Error, Result};
use crate::metrics::{aggregate, write_summary_csv, EvalRecord};
use crate::pipeline::{Pipeline, Quantity};

pub const THREADS_ENV: &str = "PORTCYCLE_THREADS";

/// Samples generated in parallel before being written in order.
const GENERATE_CHUNK: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "portcycle", version, about = "Port-cycling CSI acquisition simulator")]
pub struct Cli {
    /// Worker threads (overrides PORTCYCLE_THREADS; default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate channels, sound them sub-panel by sub-panel and export a labelled dataset.
    Generate(GenerateArgs),
    /// Score baseline and predicted reports of a dataset per SNR.
    Evaluate(EvaluateArgs),
    /// Mean per-cycle variation score of a beam quantity per SNR.
    Variation(VariationArgs),
    /// Time a full eigendecomposition against the sub-panel inference workload.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ArrayArgs {
    #[arg(long, default_value_t = 8)]
    pub n_x: usize,
    #[arg(long, default_value_t = 8)]
    pub n_y: usize,
    #[arg(long, default_value_t = 4)]
    pub o1: usize,
    #[arg(long, default_value_t = 4)]
    pub o2: usize,
    #[arg(long, default_value_t = 2)]
    pub rho_x: usize,
    #[arg(long, default_value_t = 2)]
    pub rho_y: usize,
    /// Beams per report (L).
    #[arg(long, default_value_t = 4)]
    pub beams: usize,
    #[arg(long, default_value_t = 8)]
    pub n_psk: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 3.5)]
    pub carrier_ghz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub bandwidth_mhz: f64,
    #[arg(long, default_value_t = 15.0)]
    pub scs_khz: f64,
    #[arg(long, default_value_t = 48)]
    pub subcarriers: usize,
    #[arg(long, default_value_t = 30.0)]
    pub speed_kmh: f64,
    #[arg(long, default_value_t = 20.0)]
    pub csi_period_ms: f64,
    #[arg(long, default_value_t = 4)]
    pub rx: usize,
    /// Rays including the line-of-sight ray.
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 13.0, allow_hyphen_values = true)]
    pub k_factor_db: f64,
    #[arg(long, default_value_t = 100.0)]
    pub delay_spread_ns: f64,
}

impl ScenarioArgs {
    pub fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            carrier_freq_hz: self.carrier_ghz * 1e9,
            bandwidth_hz: self.bandwidth_mhz * 1e6,
            subcarrier_spacing_hz: self.scs_khz * 1e3,
            n_subcarriers: self.subcarriers,
            ue_speed_mps: self.speed_kmh / 3.6,
            csi_period_s: self.csi_period_ms * 1e-3,
            n_rx: self.rx,
            n_clusters: self.clusters,
            los_k_factor_db: self.k_factor_db,
            delay_spread_s: self.delay_spread_ns * 1e-9,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Comma-separated SNRs in dB; `inf` means noiseless. Assigned round-robin.
    #[arg(long, value_delimiter = ',', default_value = "-5,0,5,10,15", allow_hyphen_values = true)]
    pub snr_list: Vec<SnrDb>,
    #[arg(long, value_enum, default_value_t = PermutationPolicy::All)]
    pub perm_policy: PermutationPolicy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VariationArgs {
    #[arg(long, value_delimiter = ',', default_value = "-20,-10,0,10,20", allow_hyphen_values = true)]
    pub snr_list: Vec<SnrDb>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Quantity::Beamset)]
    pub quantity: Quantity,
    #[arg(long, value_enum, default_value_t = VariationMode::IndexDiff)]
    pub mode: VariationMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub rho: usize,
    #[arg(long, default_value_t = 32)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::Config(_) | Error::Degenerate(_) => 2,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => 3,
        Error::Validation { .. } | Error::Schema(_) => 4,
    }
}

fn header_from(
    array: &ArrayArgs,
    scenario: &ScenarioArgs,
    snr_list: Vec<SnrDb>,
    seed: u64,
    policy: PermutationPolicy,
) -> Result<DatasetHeader> {
    let antenna = AntennaConfig::new(array.n_x, array.n_y, array.o1, array.o2)?;
    let rho = array.rho_x * array.rho_y;
    let header = DatasetHeader {
        antenna,
        scenario: scenario.to_config(),
        partition: PartitionSpec {
            rho_x: array.rho_x,
            rho_y: array.rho_y,
        },
        n_beams: array.beams,
        n_psk: array.n_psk,
        snr_list,
        base_seed: seed,
        permutation_policy: policy,
        t0_s: 0.0,
        label_cycle: rho.saturating_sub(1),
    };
    header.validate()?;
    Ok(header)
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn emit_csv(out: Option<&Path>, bytes: Vec<u8>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, &bytes),
        None => Ok(io::stdout().write_all(&bytes)?),
    }
}

/// Parses `args` and runs the command, writing human-readable output to `stdout`.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        // --help and --version are not errors
        if !e.use_stderr() {
            let _ = e.print();
            std::process::exit(0);
        }
        Error::Config(e.to_string())
    })?;
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|p| println!("{}", p.display())),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Variation(a) => cmd_variation(a),
        Command::Bench(a) => cmd_bench(a),
    })
}

/// Writes the dataset and returns the manifest path.
pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    if args.samples == 0 {
        return Err(config("--samples must be positive"));
    }
    let header = header_from(&args.array, &args.scenario, args.snr_list.clone(), args.seed, args.perm_policy)?;
    let pipeline = Pipeline::new(header.clone())?;
    let created = !args.out.exists();
    let result = (|| {
        let mut writer = DatasetWriter::create(&args.out, header)?;
        let ids: Vec<u64> = (0..args.samples as u64).collect();
        for chunk in ids.chunks(GENERATE_CHUNK) {
            let samples = chunk
                .par_iter()
                .map(|&i| pipeline.generate_sample(i))
                .collect::<Result<Vec<_>>>()?;
            for s in &samples {
                writer.write_sample(s)?;
            }
        }
        writer.finish()
    })();
    match result {
        Ok(_) => Ok(args.out.join(MANIFEST_FILE)),
        Err(e) => {
            if created {
                let _ = fs::remove_dir_all(&args.out);
            }
            Err(e)
        }
    }
}

/// Per-sample records for every source; order follows the manifest.
pub fn evaluate_records(dataset: &Path, predictions: Option<&Path>) -> Result<Vec<EvalRecord>> {
    let reader = DatasetReader::open(dataset)?;
    let pipeline = Pipeline::new(reader.manifest().header.clone())?;
    let predicted = predictions
        .map(|p| import_predictions(p, reader.manifest()))
        .transpose()?;
    if let Some(imp) = &predicted {
        if imp.is_partial() {
            eprintln!(
                "warning: predictions cover {} of {} samples",
                reader.len() - imp.missing.len(),
                reader.len()
            );
        }
    }
    let per_sample = (0..reader.len())
        .into_par_iter()
        .map(|i| {
            let sample = reader.read_sample(i)?;
            let pred = predicted.as_ref().and_then(|imp| imp.reports[i].as_ref());
            pipeline.evaluate_sample(&sample, pred)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let records = evaluate_records(&args.dataset, args.predictions.as_deref())?;
    let rows = aggregate(&records)?;
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf)?;
    emit_csv(args.out.as_deref(), buf)
}

/// Per-SNR `(mean, population std)` of the variation score.
pub fn variation_table(args: &VariationArgs) -> Result<Vec<(SnrDb, f64, f64)>> {
    if args.samples == 0 {
        return Err(config("--samples must be positive"));
    }
    if args.snr_list.is_empty() {
        return Err(config("SNR list is empty"));
    }
    if args.array.rho_x * args.array.rho_y < 2 {
        return Err(config("variation score is undefined for a single sub-panel (rho = 1)"));
    }
    let header = header_from(
        &args.array,
        &args.scenario,
        args.snr_list.clone(),
        args.seed,
        PermutationPolicy::Identity,
    )?;
    let pipeline = Pipeline::new(header)?;
    args.snr_list
        .iter()
        .map(|&snr| {
            let scores = (0..args.samples as u64)
                .into_par_iter()
                .map(|i| pipeline.variation_sample(i, snr, args.quantity, args.mode))
                .collect::<Result<Vec<f64>>>()?;
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
            Ok((snr, mean, var.sqrt()))
        })
        .collect()
}

pub fn cmd_variation(args: &VariationArgs) -> Result<()> {
    let table = variation_table(args)?;
    let quantity = match args.quantity {
        Quantity::Beamset => "beamset",
        Quantity::DominantBeam => "dominant-beam",
    };
    let mode = match args.mode {
        VariationMode::IndexDiff => "index-diff",
        VariationMode::ChangeIndicator => "change-indicator",
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["snr_db", "quantity", "mode", "samples", "score_mean", "score_std"])?;
    for (snr, mean, std) in table {
        w.write_record(&[
            snr.to_string(),
            quantity.to_string(),
            mode.to_string(),
            args.samples.to_string(),
            mean.to_string(),
            std.to_string(),
        ])?;
    }
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    emit_csv(args.out.as_deref(), buf)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        rho: args.rho,
        latent_dim: args.latent_dim,
        repeats: args.repeats,
        ..BenchConfig::default()
    };
    let rows = run_bench(&cfg)?;
    let mut buf = Vec::new();
    write_bench_csv(&rows, &mut buf)?;
    emit_csv(args.out.as_deref(), buf)
}
