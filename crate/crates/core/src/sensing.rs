//! Seeded Gaussian projection, compression, dictionary assembly and
//! packet-loss modeling.
//!
//! Projection entries are drawn row by row from a `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`, using `rand_distr::StandardNormal`. Because rows are
//! generated in order, the matrix for `(k, n, seed)` is exactly the first `k`
//! rows of the matrix for any larger `k` with the same `n` and seed.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BcsError, Result};
use crate::wavelet::{self, SignalSegment};

/// Where a projection matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Seed(u64),
    File(PathBuf),
    /// Rows surviving packet loss from a parent projection.
    RowSubset { parent: Box<Provenance>, lost_packets: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct ProjectionSetup {
    phi: DMatrix<f64>,
    provenance: Provenance,
}

impl ProjectionSetup {
    pub fn from_matrix(phi: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if phi.nrows() < 1 || phi.ncols() < 2 {
            return Err(BcsError::InvalidSize(format!(
                "projection must be at least 1x2, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(BcsError::InvalidSize("non-finite projection entry".into()));
        }
        Ok(Self { phi, provenance })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn k(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Copy of the rows at `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize], provenance: Provenance) -> Result<Self> {
        if rows.is_empty() {
            return Err(BcsError::EmptyMeasurement);
        }
        let phi = self.phi.select_rows(rows.iter());
        Self::from_matrix(phi, provenance)
    }
}

/// Compressed measurements `y` for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedVector(Vec<f64>);

impl CompressedVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(BcsError::InvalidSize("non-finite measurement".into()));
        }
        Ok(Self(y))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Additive Gaussian measurement noise with its own seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub std: f64,
    pub seed: u64,
}

impl MeasurementNoise {
    pub const NONE: MeasurementNoise = MeasurementNoise { std: 0.0, seed: 0 };
}

pub fn generate_projection(k: usize, n: usize, seed: u64) -> Result<ProjectionSetup> {
    if k < 1 || n < 2 {
        return Err(BcsError::InvalidSize(format!(
            "projection needs k >= 1 and n >= 2, got k = {k}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DMatrix::zeros(k, n);
    for i in 0..k {
        for j in 0..n {
            phi[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    ProjectionSetup::from_matrix(phi, Provenance::Seed(seed))
}

/// `y = Φx (+ r)`. Each entry is an explicit row dot product in column order,
/// so a row subset of `Φ` yields bit-identical entries.
pub fn compress(
    setup: &ProjectionSetup,
    x: &SignalSegment,
    noise: MeasurementNoise,
) -> Result<CompressedVector> {
    if setup.n() != x.len() {
        return Err(BcsError::Shape(format!(
            "projection has {} columns but segment has {} samples",
            setup.n(),
            x.len()
        )));
    }
    if !(noise.std >= 0.0) || !noise.std.is_finite() {
        return Err(BcsError::InvalidHyperparameter(format!(
            "noise standard deviation {} must be finite and nonnegative",
            noise.std
        )));
    }
    let samples = x.samples();
    let mut y: Vec<f64> = (0..setup.k())
        .map(|i| {
            let mut acc = 0.0;
            for (j, &xj) in samples.iter().enumerate() {
                acc += setup.phi[(i, j)] * xj;
            }
            acc
        })
        .collect();
    if noise.std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for v in &mut y {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise.std * z;
        }
    }
    CompressedVector::new(y)
}

/// The dictionary `Θ = ΦΨ` together with cached column norms and Gram matrix.
#[derive(Debug, Clone)]
pub struct Dictionary {
    theta: DMatrix<f64>,
    col_sq_norms: Vec<f64>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps an explicit `K x N` matrix (used by tests and oracles).
    pub fn from_theta(theta: DMatrix<f64>) -> Result<Self> {
        if theta.nrows() < 1 || theta.ncols() < 1 {
            return Err(BcsError::InvalidSize("empty dictionary".into()));
        }
        let gram = theta.tr_mul(&theta);
        let col_sq_norms = theta.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self { theta, col_sq_norms, gram })
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn k(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n(&self) -> usize {
        self.theta.ncols()
    }

    pub fn col_sq_norms(&self) -> &[f64] {
        &self.col_sq_norms
    }

    /// `ΘᵀΘ`, symmetric `N x N`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Θᵀv` for a length-`K` vector.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.theta
            .column_iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Builds `Θ = ΦΨ`. Row `i` of `Θ` is the Haar analysis of row `i` of `Φ`.
pub fn build_dictionary(setup: &ProjectionSetup) -> Result<Dictionary> {
    let (k, n) = (setup.k(), setup.n());
    if !n.is_power_of_two() {
        return Err(BcsError::InvalidSize(format!(
            "signal length {n} is not a power of two"
        )));
    }
    let mut theta = DMatrix::zeros(k, n);
    let mut row = vec![0.0; n];
    for i in 0..k {
        for (j, r) in row.iter_mut().enumerate() {
            *r = setup.phi[(i, j)];
        }
        wavelet::forward_in_place(&mut row)?;
        for (j, r) in row.iter().enumerate() {
            theta[(i, j)] = *r;
        }
    }
    Dictionary::from_theta(theta)
}

/// Lost transmission packets of a measurement vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketLossPattern {
    packet_size: usize,
    lost: BTreeSet<usize>,
}

impl PacketLossPattern {
    pub fn new(packet_size: usize, lost: impl IntoIterator<Item = usize>) -> Result<Self> {
        if packet_size == 0 {
            return Err(BcsError::InvalidSize("packet size must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for p in lost {
            if !set.insert(p) {
                return Err(BcsError::InvalidSize(format!("packet {p} listed twice")));
            }
        }
        Ok(Self { packet_size, lost: set })
    }

    /// `count` distinct packets chosen uniformly among `total_packets`.
    pub fn random(packet_size: usize, total_packets: usize, count: usize, seed: u64) -> Result<Self> {
        if count > total_packets {
            return Err(BcsError::InvalidSize(format!(
                "cannot lose {count} of {total_packets} packets"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = index::sample(&mut rng, total_packets, count).into_vec();
        Self::new(packet_size, picked)
    }

    pub fn packet_size(&self) -> usize {
        self.packet_size
    }

    pub fn lost_packets(&self) -> impl Iterator<Item = usize> + '_ {
        self.lost.iter().copied()
    }

    pub fn lost_count(&self) -> usize {
        self.lost.len()
    }

    /// Fraction of measurements lost for a vector of length `k`.
    pub fn loss_rate(&self, k: usize) -> f64 {
        (self.lost.len() * self.packet_size) as f64 / k as f64
    }

    fn validate(&self, k: usize) -> Result<usize> {
        if k % self.packet_size != 0 {
            return Err(BcsError::Shape(format!(
                "packet size {} does not divide K = {k}",
                self.packet_size
            )));
        }
        let packets = k / self.packet_size;
        if let Some(&last) = self.lost.iter().next_back() {
            if last >= packets {
                return Err(BcsError::Shape(format!(
                    "lost packet {last} out of range (only {packets} packets)"
                )));
            }
        }
        if self.lost.len() >= packets {
            return Err(BcsError::EmptyMeasurement);
        }
        Ok(packets)
    }

    /// Indices of the surviving measurements, in original order.
    pub fn surviving_rows(&self, k: usize) -> Result<Vec<usize>> {
        self.validate(k)?;
        Ok((0..k)
            .filter(|i| !self.lost.contains(&(i / self.packet_size)))
            .collect())
    }
}

/// Drops lost packets from `y` and the matching rows from `Φ`.
pub fn apply_packet_loss(
    y: &CompressedVector,
    setup: &ProjectionSetup,
    pattern: &PacketLossPattern,
) -> Result<(CompressedVector, ProjectionSetup)> {
    if y.k() != setup.k() {
        return Err(BcsError::Shape(format!(
            "measurement length {} does not match projection rows {}",
            y.k(),
            setup.k()
        )));
    }
    if pattern.lost_count() == 0 {
        pattern.validate(y.k())?;
        return Ok((y.clone(), setup.clone()));
    }
    let rows = pattern.surviving_rows(y.k())?;
    let y_l = CompressedVector::new(rows.iter().map(|&i| y.values()[i]).collect())?;
    let prov = Provenance::RowSubset {
        parent: Box::new(setup.provenance().clone()),
        lost_packets: pattern.lost_packets().collect(),
    };
    let phi_l = setup.select_rows(&rows, prov)?;
    Ok((y_l, phi_l))
}
