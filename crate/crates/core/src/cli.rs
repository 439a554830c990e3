//! Command-line surface of the `bcs` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{Algorithm, EngineOptions};
use crate::error::{BcsError, Result};
use crate::experiment::{self, DenoiseMode, ExperimentConfig, SignalSource};
use crate::io;
use crate::ipe::{InitialB0, IpeOptions};
use crate::metrics::{self, TopFraction};
use crate::oracle_check::{self, OracleConfig, Quantity};
use crate::parallel::Execution;
use crate::seeds::derive_seed;
use crate::sensing::{self, MeasurementNoise, ProjectionSetup, Provenance};
use crate::synth::SyntheticSpec;
use crate::wavelet::{self, SignalSegment, WaveletCoefficients};

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Exit status for an error surfaced by a command.
pub fn exit_code(err: &BcsError) -> i32 {
    match err {
        BcsError::Io { .. } | BcsError::Format { .. } => exit::IO,
        e if e.is_numerical() => exit::NUMERICAL,
        _ => exit::USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bcs", version, about = "Bayesian compressive sensing of wavelet-sparse signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic signal (time domain, one sample per line).
    Generate(GenerateArgs),
    /// Compress one segment of a signal with a seeded Gaussian projection.
    Compress(CompressArgs),
    /// Reconstruct a segment from measurements and a projection matrix.
    Reconstruct(ReconstructArgs),
    /// Acceptance rates versus compression ratio.
    SweepCr(SweepCrArgs),
    /// Acceptance rates versus lost packets of an uncompressed transmission.
    SweepLoss(SweepLossArgs),
    /// Compare the incremental engines with dense recomputation.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// sparse:T, approx:T:SIGMA or shm.
    #[arg(long)]
    pub spec: SyntheticSpec,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub segments: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Text or binary-vector signal file.
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Zero-based segment of the signal to compress.
    #[arg(long, default_value_t = 0)]
    pub segment: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    /// Use this projection matrix instead of generating one.
    #[arg(long)]
    pub phi_in: Option<PathBuf>,
    #[arg(long)]
    pub out_y: PathBuf,
    #[arg(long)]
    pub out_phi: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    #[arg(long, default_value = "ipe")]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = 0.1)]
    pub outer_tolerance: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub inner_log_alpha_tolerance: f64,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_inner: usize,
    /// Gamma-prior shape of the marginalized-noise engine.
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
}

impl EngineArgs {
    fn engine(&self) -> EngineOptions {
        EngineOptions {
            outer_tolerance: self.outer_tolerance,
            inner_log_alpha_tolerance: self.inner_log_alpha_tolerance,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            record_actions: false,
        }
    }

    fn ipe(&self) -> IpeOptions {
        IpeOptions { a0: self.a0, initial_b0: InitialB0::Zero }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Ground-truth signal segment; adds the strict error to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Segment of the truth file to compare against.
    #[arg(long, default_value_t = 0)]
    pub truth_segment: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// Signal file; segmented consecutively.
    #[arg(long, conflicts_with = "synthetic")]
    pub signal: Option<PathBuf>,
    /// Synthetic source: sparse:T, approx:T:SIGMA or shm.
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub segments: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub denoise_fraction: f64,
    #[arg(long, default_value = "record")]
    pub denoise_mode: DenoiseMode,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2")]
    pub thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1/16,1/4")]
    pub effective_fractions: Vec<TopFraction>,
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 4)]
    pub packet_size: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Add a wall-clock column (makes the report non-reproducible).
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value = "parallel")]
    pub execution: Execution,
    #[arg(long)]
    pub out: PathBuf,
}

impl SweepArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            algorithm: self.engine.algorithm,
            seed: self.seed,
            segments: self.segments,
            denoise_fraction: self.denoise_fraction,
            denoise_mode: self.denoise_mode,
            thresholds: self.thresholds.clone(),
            effective_fractions: self.effective_fractions.clone(),
            packet_size: self.packet_size,
            noise_std: self.noise_std,
            engine: self.engine.engine(),
            ipe: self.engine.ipe(),
            record_timing: self.timing,
        }
    }

    fn source(&self) -> Result<SignalSource> {
        match (&self.signal, self.synthetic) {
            (Some(path), _) => Ok(SignalSource::Samples {
                label: path.display().to_string(),
                samples: io::read_signal(path)?,
            }),
            (None, Some(spec)) => Ok(SignalSource::Synthetic(spec)),
            (None, None) => Err(BcsError::InvalidHyperparameter("give --signal FILE or --synthetic SPEC".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepCrArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Measurement counts; defaults to 170, 200, ..., 470.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SweepLossArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Numbers of lost packets; defaults to 1, 2, ..., 26.
    #[arg(long, value_delimiter = ',')]
    pub losses: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Problem sizes as KxN (K <= 24, N <= 32).
    #[arg(long, value_delimiter = ',', default_value = "16x32")]
    pub sizes: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 25)]
    pub actions: usize,
    /// Corrupt one cached value to demonstrate detection.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Runs a parsed command, writing human-readable progress to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a, out),
        Command::Compress(a) => compress(a, out),
        Command::Reconstruct(a) => reconstruct(a, out),
        Command::SweepCr(a) => sweep_cr(a, out),
        Command::SweepLoss(a) => sweep_loss(a, out),
        Command::OracleCheck(a) => oracle(a, out),
    }
}

fn say(out: &mut dyn std::io::Write, line: impl AsRef<str>) {
    // Progress output is best effort; a closed stdout must not fail the run.
    let _ = writeln!(out, "{}", line.as_ref());
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| BcsError::Io { path: path.to_path_buf(), source })
}

fn generate(a: GenerateArgs, out: &mut dyn std::io::Write) -> Result<()> {
    if a.n < 2 || !a.n.is_power_of_two() || a.segments == 0 {
        return Err(BcsError::InvalidSize("n must be a power of two and segments positive".into()));
    }
    let mut samples = Vec::with_capacity(a.n * a.segments);
    for i in 0..a.segments {
        let w = a.spec.generate(a.n, derive_seed(a.seed, &[1, i as u64]))?;
        samples.extend(wavelet::inverse(&WaveletCoefficients::new(w)?).into_inner());
    }
    io::write_text_signal(&a.out, &samples)?;
    say(out, format!("wrote {} segments of {} samples ({}) to {}", a.segments, a.n, a.spec, a.out.display()));
    Ok(())
}

fn load_segment(path: &Path, n: usize, index: usize) -> Result<SignalSegment> {
    let samples = io::read_signal(path)?;
    let segs = io::segment_record(&samples, n);
    let seg = segs.into_iter().nth(index).ok_or_else(|| {
        BcsError::InvalidSize(format!(
            "{} holds {} samples; segment {index} of length {n} does not exist",
            path.display(),
            samples.len()
        ))
    })?;
    SignalSegment::new(seg)
}

fn compress(a: CompressArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let x = load_segment(&a.signal, a.n, a.segment)?;
    let setup = match &a.phi_in {
        Some(p) => ProjectionSetup::from_matrix(io::read_matrix(p)?, Provenance::File(p.clone()))?,
        None => sensing::generate_projection(a.k, a.n, a.seed)?,
    };
    if setup.k() != a.k {
        return Err(BcsError::Shape(format!("projection has {} rows, --k is {}", setup.k(), a.k)));
    }
    let noise = MeasurementNoise { std: a.noise_std, seed: derive_seed(a.seed, &[2]) };
    let y = sensing::compress(&setup, &x, noise)?;
    io::write_vector(&a.out_y, y.values())?;
    io::write_matrix(&a.out_phi, setup.phi())?;
    say(out, format!("K={} N={} CR={}", setup.k(), setup.n(), setup.n() as f64 / setup.k() as f64));
    Ok(())
}

fn reconstruct(a: ReconstructArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let y = io::read_vector(&a.y)?;
    let phi = io::read_matrix(&a.phi)?;
    let setup = ProjectionSetup::from_matrix(phi, Provenance::File(a.phi.clone()))?;
    if y.len() != setup.k() {
        return Err(BcsError::Shape(format!("{} values in y but Phi has {} rows", y.len(), setup.k())));
    }
    let dict = sensing::build_dictionary(&setup)?;
    let cfg = ExperimentConfig {
        n: setup.n(),
        algorithm: a.engine.algorithm,
        engine: a.engine.engine(),
        ipe: a.engine.ipe(),
        ..Default::default()
    };
    let result = experiment::reconstruct_with(&cfg, &dict, &y)?;
    let mut text = io::format_result(&result, a.engine.algorithm, setup.k());
    if let Some(truth) = &a.truth {
        let x = load_segment(truth, setup.n(), a.truth_segment)?;
        let re = metrics::strict_re(x.samples(), &result.mean_signal)?;
        text.push_str(&format!("strict_re,{re}\n"));
        say(out, format!("strict RE = {re:e}"));
    }
    write_text(&a.out, &text)?;
    say(
        out,
        format!(
            "{}: {} active terms, {} outer iterations, converged={}",
            a.engine.algorithm.label(),
            result.active_count(),
            result.outer_iterations,
            result.converged
        ),
    );
    Ok(())
}

fn sweep_cr(a: SweepCrArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = a.sweep.config();
    let data = experiment::prepare_dataset(&cfg, &a.sweep.source()?)?;
    let ks = if a.k_list.is_empty() { experiment::default_k_list() } else { a.k_list };
    let report = experiment::sweep_cr(&cfg, &data, &ks, a.sweep.execution)?;
    write_text(&a.sweep.out, &report.render())?;
    say(out, format!("{} records over {} segments written to {}", report.records.len(), data.len(), a.sweep.out.display()));
    Ok(())
}

fn sweep_loss(a: SweepLossArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = a.sweep.config();
    let data = experiment::prepare_dataset(&cfg, &a.sweep.source()?)?;
    let losses = if a.losses.is_empty() { experiment::default_loss_list() } else { a.losses };
    let report = experiment::sweep_loss(&cfg, &data, &losses, a.runs, a.sweep.execution)?;
    write_text(&a.sweep.out, &report.render())?;
    say(out, format!("{} records over {} runs written to {}", report.records.len(), a.runs, a.sweep.out.display()));
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || BcsError::InvalidSize(format!("size '{s}' must look like KxN"));
    let (k, n) = s.trim().split_once('x').ok_or_else(bad)?;
    let (k, n) = (k.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?);
    if !(3..=24).contains(&k) || !(2..=32).contains(&n) {
        return Err(BcsError::InvalidSize(format!("size {k}x{n} outside K in 3..=24, N in 2..=32")));
    }
    Ok((k, n))
}

fn oracle(a: OracleArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let sizes: Vec<(usize, usize)> =
        a.sizes.iter().filter(|s| !s.trim().is_empty()).map(|s| parse_size(s)).collect::<Result<_>>()?;
    if sizes.is_empty() || a.seeds.is_empty() {
        return Err(BcsError::InvalidSize("oracle check needs at least one size and one seed".into()));
    }
    let mut breaches = Vec::new();
    for &(k, n) in &sizes {
        for &seed in &a.seeds {
            let cfg = OracleConfig {
                k,
                n,
                instances: a.instances,
                actions_per_instance: a.actions,
                seed,
                inject_fault: a.inject_fault,
            };
            for alg in [Algorithm::Mpe, Algorithm::Ipe] {
                let report = oracle_check::run_suite(&cfg, alg)?;
                say(out, format!("{} K={k} N={n} seed={seed}: {} actions", alg.label(), report.actions));
                for q in Quantity::ALL {
                    say(out, format!("  max deviation {:<36} {:.3e}", q.label(), report.deviation(q)));
                }
                say(out, format!("  min evidence change {:.3e}", report.min_evidence_change));
                breaches.extend(report.failures.iter().cloned());
            }
        }
    }
    if breaches.is_empty() {
        say(out, "oracle check passed");
        Ok(())
    } else {
        for b in &breaches {
            say(out, format!("FAIL {b}"));
        }
        Err(BcsError::NumericalBreakdown(format!("oracle check failed: {}", breaches[0])))
    }
}
