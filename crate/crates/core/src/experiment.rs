//! Experiment harness: dataset preparation (segmentation and energy
//! denoising), compression-ratio and packet-loss sweeps, and the
//! line-oriented sweep report.

use std::fmt::Write as _;
use std::time::Instant;

use crate::engine::{Algorithm, EngineOptions, ReconstructionResult};
use crate::error::{BcsError, Result};
use crate::ipe::{self, IpeOptions};
use crate::metrics::{self, ErrorReport, TopFraction};
use crate::mpe;
use crate::parallel::Execution;
use crate::seeds::derive_seed;
use crate::sensing::{self, Dictionary, MeasurementNoise, PacketLossPattern, ProjectionSetup};
use crate::synth::SyntheticSpec;
use crate::wavelet::{self, SignalSegment};

/// Seed-stream identifiers under the master seed.
const STREAM_PROJECTION: u64 = 0;
const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_LOSS: u64 = 3;

/// Whether the energy threshold is chosen over the whole record or per
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiseMode {
    /// One threshold over all segments' coefficients together, which equals
    /// thresholding the multi-level Haar transform of the full record.
    #[default]
    Record,
    Segment,
}

impl DenoiseMode {
    pub fn label(self) -> &'static str {
        match self {
            DenoiseMode::Record => "record",
            DenoiseMode::Segment => "segment",
        }
    }
}

impl std::str::FromStr for DenoiseMode {
    type Err = BcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "record" => Ok(DenoiseMode::Record),
            "segment" => Ok(DenoiseMode::Segment),
            other => Err(BcsError::InvalidHyperparameter(format!(
                "unknown denoise mode '{other}' (expected record or segment)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Segment length; a power of two.
    pub n: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Number of segments to use (fewer if a signal file is shorter).
    pub segments: usize,
    /// Fraction of energy removed by hard thresholding before compression.
    pub denoise_fraction: f64,
    pub denoise_mode: DenoiseMode,
    pub thresholds: Vec<f64>,
    pub effective_fractions: Vec<TopFraction>,
    pub packet_size: usize,
    pub noise_std: f64,
    pub engine: EngineOptions,
    pub ipe: IpeOptions,
    /// Add a wall-clock column to the report. Timing varies between runs,
    /// so reports with it are not byte-reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 512,
            algorithm: Algorithm::Ipe,
            seed: 0,
            segments: 100,
            denoise_fraction: 0.0,
            denoise_mode: DenoiseMode::Record,
            thresholds: vec![0.01, 0.02, 0.05, 0.10, 0.20],
            effective_fractions: vec![TopFraction { numerator: 1, denominator: 16 }, TopFraction {
                numerator: 1,
                denominator: 4,
            }],
            packet_size: 4,
            noise_std: 0.0,
            engine: EngineOptions::default(),
            ipe: IpeOptions::default(),
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(BcsError::InvalidSize(format!("segment length {} must be a power of two >= 2", self.n)));
        }
        if self.segments == 0 {
            return Err(BcsError::InvalidSize("at least one segment is required".into()));
        }
        if !(0.0..1.0).contains(&self.denoise_fraction) {
            return Err(BcsError::InvalidFraction(self.denoise_fraction));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(BcsError::InvalidHyperparameter("thresholds must be a nonempty list of positive reals".into()));
        }
        if self.packet_size == 0 {
            return Err(BcsError::InvalidSize("packet size must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(BcsError::InvalidHyperparameter(format!("noise std {} must be >= 0", self.noise_std)));
        }
        self.engine.validate()
    }

    /// Metric labels in report order: strict first, then each top fraction.
    pub fn metric_labels(&self) -> Vec<String> {
        std::iter::once("strict".to_string())
            .chain(self.effective_fractions.iter().map(TopFraction::label))
            .collect()
    }

    fn header(&self, kind: &str, source: &str, segments: usize) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(";");
        vec![
            ("kind".into(), kind.into()),
            ("n".into(), self.n.to_string()),
            ("algorithm".into(), self.algorithm.label().into()),
            ("seed".into(), self.seed.to_string()),
            ("source".into(), source.into()),
            ("segments".into(), segments.to_string()),
            ("denoise_fraction".into(), self.denoise_fraction.to_string()),
            ("denoise_mode".into(), self.denoise_mode.label().into()),
            ("thresholds".into(), join(self.thresholds.iter().map(f64::to_string).collect())),
            (
                "effective_fractions".into(),
                join(self.effective_fractions.iter().map(|f| format!("{}/{}", f.numerator, f.denominator)).collect()),
            ),
            ("packet_size".into(), self.packet_size.to_string()),
            ("noise_std".into(), self.noise_std.to_string()),
            ("outer_tolerance".into(), self.engine.outer_tolerance.to_string()),
            ("inner_log_alpha_tolerance".into(), self.engine.inner_log_alpha_tolerance.to_string()),
            ("max_outer".into(), self.engine.max_outer.to_string()),
            ("max_inner".into(), self.engine.max_inner.to_string()),
            ("a0".into(), self.ipe.a0.to_string()),
        ]
    }
}

/// Where segment data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Synthetic(SyntheticSpec),
    /// A recorded signal, split into consecutive segments.
    Samples { label: String, samples: Vec<f64> },
}

impl SignalSource {
    pub fn label(&self) -> String {
        match self {
            SignalSource::Synthetic(spec) => format!("synthetic:{spec}"),
            SignalSource::Samples { label, .. } => format!("file:{label}"),
        }
    }
}

/// Ground truth for every segment: denoised coefficients and the matching
/// time-domain signal.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub source: String,
    pub truth_coeffs: Vec<Vec<f64>>,
    pub signals: Vec<SignalSegment>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }
}

pub fn prepare_dataset(cfg: &ExperimentConfig, source: &SignalSource) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n;
    let mut coeffs: Vec<Vec<f64>> = match source {
        SignalSource::Synthetic(spec) => (0..cfg.segments)
            .map(|i| spec.generate(n, derive_seed(cfg.seed, &[STREAM_SIGNAL, i as u64])))
            .collect::<Result<_>>()?,
        SignalSource::Samples { samples, .. } => {
            let mut segs = crate::io::segment_record(samples, n);
            if segs.is_empty() {
                return Err(BcsError::InvalidSize(format!(
                    "signal has {} samples, fewer than one segment of {n}",
                    samples.len()
                )));
            }
            segs.truncate(cfg.segments);
            for s in &mut segs {
                wavelet::forward_in_place(s)?;
            }
            segs
        }
    };

    if cfg.denoise_fraction > 0.0 {
        match cfg.denoise_mode {
            DenoiseMode::Record => {
                let flat: Vec<f64> = coeffs.concat();
                let denoised = metrics::denoise_by_energy(&flat, cfg.denoise_fraction)?;
                for (c, chunk) in coeffs.iter_mut().zip(denoised.chunks_exact(n)) {
                    c.copy_from_slice(chunk);
                }
            }
            DenoiseMode::Segment => {
                for c in &mut coeffs {
                    *c = metrics::denoise_by_energy(c, cfg.denoise_fraction)?;
                }
            }
        }
    }
    if let Some(i) = coeffs.iter().position(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(BcsError::DegenerateData(format!("segment {i} has no energy after preparation")));
    }
    let signals = coeffs
        .iter()
        .map(|c| {
            let mut x = c.clone();
            wavelet::inverse_in_place(&mut x)?;
            SignalSegment::new(x)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { source: source.label(), truth_coeffs: coeffs, signals })
}

/// Runs the configured engine on one measurement vector.
pub fn reconstruct_with(cfg: &ExperimentConfig, dict: &Dictionary, y: &[f64]) -> Result<ReconstructionResult> {
    match cfg.algorithm {
        Algorithm::Mpe => mpe::reconstruct(dict, y, &cfg.engine),
        Algorithm::Ipe => ipe::reconstruct_ipe(dict, y, &cfg.engine, &cfg.ipe),
    }
}

/// Per-segment outcome at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub segment: usize,
    /// Strict error followed by one effective error per top fraction;
    /// `+∞` for a failed reconstruction.
    pub errors: Vec<f64>,
    /// Mean posterior standard deviation over nonzero coefficients; NaN when
    /// the reconstruction failed.
    pub mean_nonzero_std: f64,
    pub active_count: usize,
    pub converged: bool,
    pub failure: Option<String>,
    pub seconds: f64,
}

impl SegmentOutcome {
    pub fn strict_re(&self) -> f64 {
        self.errors[0]
    }
}

fn evaluate_segment(
    cfg: &ExperimentConfig,
    segment: usize,
    truth: &[f64],
    dict: &Dictionary,
    y: &[f64],
) -> SegmentOutcome {
    let metrics_count = 1 + cfg.effective_fractions.len();
    let start = Instant::now();
    let result = reconstruct_with(cfg, dict, y);
    let seconds = start.elapsed().as_secs_f64();
    let report = result.and_then(|r| {
        let errs = ErrorReport::evaluate(truth, &r.mean_coeffs, &cfg.effective_fractions)?;
        Ok((r, errs))
    });
    match report {
        Ok((r, errs)) => SegmentOutcome {
            segment,
            errors: std::iter::once(errs.strict_re).chain(errs.effective_re.iter().map(|e| e.1)).collect(),
            mean_nonzero_std: r.mean_active_std(),
            active_count: r.active_count(),
            converged: r.converged,
            failure: None,
            seconds,
        },
        Err(e) => SegmentOutcome {
            segment,
            errors: vec![f64::INFINITY; metrics_count],
            mean_nonzero_std: f64::NAN,
            active_count: 0,
            converged: false,
            failure: Some(e.to_string()),
            seconds,
        },
    }
}

/// A sweep point: a measurement count, or a number of lost packets at
/// `K = N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    Cr { k: usize, n: usize },
    Loss { lost_packets: usize, packet_size: usize, k: usize },
}

impl SweepPoint {
    pub fn k(&self) -> usize {
        match *self {
            SweepPoint::Cr { k, .. } | SweepPoint::Loss { k, .. } => k,
        }
    }

    pub fn compression_ratio(&self) -> f64 {
        match *self {
            SweepPoint::Cr { k, n } => n as f64 / k as f64,
            SweepPoint::Loss { .. } => 1.0,
        }
    }

    pub fn loss_rate(&self) -> f64 {
        match *self {
            SweepPoint::Cr { .. } => 0.0,
            SweepPoint::Loss { lost_packets, packet_size, k } => (lost_packets * packet_size) as f64 / k as f64,
        }
    }

    fn label(&self) -> String {
        match *self {
            SweepPoint::Cr { k, .. } => k.to_string(),
            SweepPoint::Loss { lost_packets, .. } => lost_packets.to_string(),
        }
    }
}

/// One report line.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub point: SweepPoint,
    pub threshold: f64,
    pub metric: String,
    pub acceptance_rate: f64,
    pub mean_nonzero_std: f64,
    pub seconds_per_segment: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub point: SweepPoint,
    pub segments: Vec<SegmentOutcome>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub header: Vec<(String, String)>,
    pub records: Vec<PointRecord>,
    /// Per-segment detail behind the aggregated records.
    pub points: Vec<PointOutcome>,
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "point",
    "k",
    "cr",
    "loss_rate",
    "threshold",
    "metric",
    "acceptance_rate",
    "mean_nonzero_std",
    "segments",
];

impl SweepReport {
    fn build(cfg: &ExperimentConfig, header: Vec<(String, String)>, points: Vec<PointOutcome>) -> Result<Self> {
        let labels = cfg.metric_labels();
        let mut records = Vec::with_capacity(points.len() * labels.len() * cfg.thresholds.len());
        for p in &points {
            let ok: Vec<&SegmentOutcome> = p.segments.iter().filter(|s| s.failure.is_none()).collect();
            let mean_std = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|s| s.mean_nonzero_std).sum::<f64>() / ok.len() as f64
            };
            let seconds = cfg
                .record_timing
                .then(|| p.segments.iter().map(|s| s.seconds).sum::<f64>() / p.segments.len() as f64);
            for &threshold in &cfg.thresholds {
                for (m, label) in labels.iter().enumerate() {
                    let errs: Vec<f64> = p.segments.iter().map(|s| s.errors[m]).collect();
                    records.push(PointRecord {
                        point: p.point,
                        threshold,
                        metric: label.clone(),
                        acceptance_rate: metrics::acceptance_rate(&errs, threshold)?,
                        mean_nonzero_std: mean_std,
                        seconds_per_segment: seconds,
                    });
                }
            }
        }
        Ok(Self { header, records, points })
    }

    /// Acceptance rate for one (point index, threshold, metric) triple.
    pub fn acceptance(&self, point: usize, threshold: f64, metric: &str) -> Option<f64> {
        let p = self.points.get(point)?.point;
        self.records
            .iter()
            .find(|r| r.point == p && r.threshold == threshold && r.metric == metric)
            .map(|r| r.acceptance_rate)
    }

    /// The report as text: `# key=value` header lines, a `# columns=` line,
    /// then one comma-separated record per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# robust-bcs sweep report").unwrap();
        for (k, v) in &self.header {
            writeln!(s, "# {k}={v}").unwrap();
        }
        let timing = self.records.first().is_some_and(|r| r.seconds_per_segment.is_some());
        let mut cols = REPORT_COLUMNS.join(",");
        if timing {
            cols.push_str(",seconds_per_segment");
        }
        writeln!(s, "# columns={cols}").unwrap();
        for r in &self.records {
            let segments = self
                .points
                .iter()
                .find(|p| p.point == r.point)
                .map_or(0, |p| p.segments.len());
            write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.point.label(),
                r.point.k(),
                r.point.compression_ratio(),
                r.point.loss_rate(),
                r.threshold,
                r.metric,
                r.acceptance_rate,
                r.mean_nonzero_std,
                segments
            )
            .unwrap();
            if let Some(t) = r.seconds_per_segment {
                write!(s, ",{t}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// The default measurement counts of the compression sweep.
pub fn default_k_list() -> Vec<usize> {
    (170..=470).step_by(30).collect()
}

/// The default loss counts of the packet-loss sweep.
pub fn default_loss_list() -> Vec<usize> {
    (1..=26).collect()
}

fn shared_projection(cfg: &ExperimentConfig, k: usize) -> Result<ProjectionSetup> {
    sensing::generate_projection(k, cfg.n, derive_seed(cfg.seed, &[STREAM_PROJECTION]))
}

fn noise_for(cfg: &ExperimentConfig, k: usize, segment: usize) -> MeasurementNoise {
    MeasurementNoise { std: cfg.noise_std, seed: derive_seed(cfg.seed, &[STREAM_NOISE, k as u64, segment as u64]) }
}

/// Acceptance rates versus the number of measurements. All segments at a
/// given `K` share one projection; the projection for a smaller `K` is the
/// leading rows of the one for a larger `K`.
pub fn sweep_cr(cfg: &ExperimentConfig, data: &Dataset, ks: &[usize], exec: Execution) -> Result<SweepReport> {
    cfg.validate()?;
    if ks.is_empty() {
        return Err(BcsError::InvalidSize("empty measurement-count list".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k <= 2) {
        return Err(BcsError::InsufficientMeasurements { k, needed: 3 });
    }
    check_dataset(cfg, data)?;
    let kmax = *ks.iter().max().expect("nonempty");
    let base = shared_projection(cfg, kmax)?;
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let rows: Vec<usize> = (0..k).collect();
        let setup = base.select_rows(&rows, base.provenance().clone())?;
        let dict = sensing::build_dictionary(&setup)?;
        let segments = exec.map(&indices, |&i| {
            let y = sensing::compress(&setup, &data.signals[i], noise_for(cfg, k, i));
            match y {
                Ok(y) => evaluate_segment(cfg, i, &data.truth_coeffs[i], &dict, y.values()),
                Err(e) => failed(cfg, i, e),
            }
        });
        points.push(PointOutcome { point: SweepPoint::Cr { k, n: cfg.n }, segments });
    }
    let mut header = cfg.header("cr", &data.source, data.len());
    header.push(("k_list".into(), ks.iter().map(usize::to_string).collect::<Vec<_>>().join(";")));
    SweepReport::build(cfg, header, points)
}

/// Acceptance rates versus the number of lost packets of an uncompressed
/// (`K = N`) transmission. Run `r` reconstructs segment `r mod segments`
/// with its own random loss pattern.
pub fn sweep_loss(
    cfg: &ExperimentConfig,
    data: &Dataset,
    losses: &[usize],
    runs: usize,
    exec: Execution,
) -> Result<SweepReport> {
    cfg.validate()?;
    if losses.is_empty() || runs == 0 {
        return Err(BcsError::InvalidSize("loss sweep needs loss counts and at least one run".into()));
    }
    check_dataset(cfg, data)?;
    let k = cfg.n;
    if k % cfg.packet_size != 0 {
        return Err(BcsError::Shape(format!("packet size {} does not divide K = {k}", cfg.packet_size)));
    }
    let total_packets = k / cfg.packet_size;
    let setup = shared_projection(cfg, k)?;
    let full: Vec<_> = (0..data.len())
        .map(|i| sensing::compress(&setup, &data.signals[i], noise_for(cfg, k, i)))
        .collect::<Result<_>>()?;
    let run_ids: Vec<usize> = (0..runs).collect();
    let mut points = Vec::with_capacity(losses.len());
    for &lost in losses {
        let segments = exec.map(&run_ids, |&r| {
            let seg = r % data.len();
            let attempt = || -> Result<SegmentOutcome> {
                let seed = derive_seed(cfg.seed, &[STREAM_LOSS, lost as u64, r as u64]);
                let pattern = PacketLossPattern::random(cfg.packet_size, total_packets, lost, seed)?;
                let (y_l, phi_l) = sensing::apply_packet_loss(&full[seg], &setup, &pattern)?;
                let dict = sensing::build_dictionary(&phi_l)?;
                let mut out = evaluate_segment(cfg, seg, &data.truth_coeffs[seg], &dict, y_l.values());
                out.segment = r;
                Ok(out)
            };
            attempt().unwrap_or_else(|e| failed(cfg, r, e))
        });
        points.push(PointOutcome {
            point: SweepPoint::Loss { lost_packets: lost, packet_size: cfg.packet_size, k },
            segments,
        });
    }
    let mut header = cfg.header("loss", &data.source, data.len());
    header.push(("loss_list".into(), losses.iter().map(usize::to_string).collect::<Vec<_>>().join(";")));
    header.push(("runs".into(), runs.to_string()));
    SweepReport::build(cfg, header, points)
}

fn failed(cfg: &ExperimentConfig, segment: usize, e: BcsError) -> SegmentOutcome {
    SegmentOutcome {
        segment,
        errors: vec![f64::INFINITY; 1 + cfg.effective_fractions.len()],
        mean_nonzero_std: f64::NAN,
        active_count: 0,
        converged: false,
        failure: Some(e.to_string()),
        seconds: 0.0,
    }
}

fn check_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(BcsError::EmptySample);
    }
    if data.signals.iter().any(|s| s.len() != cfg.n) {
        return Err(BcsError::Shape(format!("dataset segments do not have length {}", cfg.n)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 64,
            segments: 6,
            seed: 11,
            engine: EngineOptions { outer_tolerance: 1e-3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig { n: 100, ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { thresholds: vec![0.0], ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { denoise_fraction: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn record_denoising_uses_one_threshold() {
        let cfg = ExperimentConfig { denoise_fraction: 0.4, ..small_cfg() };
        let data = prepare_dataset(&cfg, &SignalSource::Synthetic(SyntheticSpec::Shm)).unwrap();
        let raw = prepare_dataset(&small_cfg(), &SignalSource::Synthetic(SyntheticSpec::Shm)).unwrap();
        let flat_raw = raw.truth_coeffs.concat();
        let flat = data.truth_coeffs.concat();
        assert_eq!(flat, metrics::denoise_by_energy(&flat_raw, 0.4).unwrap());
        let seg = prepare_dataset(
            &ExperimentConfig { denoise_mode: DenoiseMode::Segment, ..cfg.clone() },
            &SignalSource::Synthetic(SyntheticSpec::Shm),
        )
        .unwrap();
        for (d, r) in seg.truth_coeffs.iter().zip(&raw.truth_coeffs) {
            assert_eq!(d, &metrics::denoise_by_energy(r, 0.4).unwrap());
        }
    }

    #[test]
    fn file_source_segments_consecutively() {
        let samples: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin()).collect();
        let cfg = ExperimentConfig { n: 64, segments: 10, ..Default::default() };
        let data = prepare_dataset(&cfg, &SignalSource::Samples { label: "x".into(), samples: samples.clone() }).unwrap();
        assert_eq!(data.len(), 3);
        for (i, s) in data.signals.iter().enumerate() {
            for (a, b) in s.samples().iter().zip(&samples[64 * i..64 * (i + 1)]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cr_report_is_complete_and_nested() {
        let cfg = small_cfg();
        let data = prepare_dataset(&cfg, &SignalSource::Synthetic(SyntheticSpec::Sparse { t: 4 })).unwrap();
        let report = sweep_cr(&cfg, &data, &[24, 40], Execution::Sequential).unwrap();
        assert_eq!(report.records.len(), 2 * 5 * 3);
        for p in 0..2 {
            for m in cfg.metric_labels() {
                let rates: Vec<f64> =
                    cfg.thresholds.iter().map(|&t| report.acceptance(p, t, &m).unwrap()).collect();
                assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
            }
        }
        assert_eq!(report.acceptance(1, 0.2, "strict"), Some(1.0));
        let text = report.render();
        assert!(text.contains("# k_list=24;40"));
        assert!(text.contains("# columns=point,k,cr,loss_rate,threshold,metric,acceptance_rate,mean_nonzero_std,segments\n"));
    }

    #[test]
    fn sweeps_are_execution_independent() {
        let cfg = small_cfg();
        let data = prepare_dataset(&cfg, &SignalSource::Synthetic(SyntheticSpec::Sparse { t: 4 })).unwrap();
        let a = sweep_cr(&cfg, &data, &[30], Execution::Sequential).unwrap().render();
        let b = sweep_cr(&cfg, &data, &[30], Execution::Parallel).unwrap().render();
        assert_eq!(a, b);
        let a = sweep_loss(&cfg, &data, &[0, 2], 4, Execution::Sequential).unwrap().render();
        let b = sweep_loss(&cfg, &data, &[0, 2], 4, Execution::Parallel).unwrap().render();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_segments_count_as_unacceptable() {
        let cfg = ExperimentConfig { n: 16, segments: 2, ..Default::default() };
        let data = prepare_dataset(&cfg, &SignalSource::Synthetic(SyntheticSpec::Sparse { t: 2 })).unwrap();
        let total = cfg.n / cfg.packet_size;
        // Losing all but one packet leaves K = 4 measurements; losing every
        // packet is an error recorded per run.
        let report = sweep_loss(&cfg, &data, &[total], 2, Execution::Sequential).unwrap();
        assert!(report.points[0].segments.iter().all(|s| s.failure.is_some() && s.strict_re().is_infinite()));
        assert_eq!(report.acceptance(0, 0.2, "strict"), Some(0.0));
    }

    #[test]
    fn loss_rate_of_packet_protocol() {
        let p = SweepPoint::Loss { lost_packets: 26, packet_size: 4, k: 512 };
        assert!((p.loss_rate() - 0.203125).abs() < 1e-15);
        assert_eq!(SweepPoint::Cr { k: 256, n: 512 }.compression_ratio(), 2.0);
    }
}
