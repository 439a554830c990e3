//! Synthetic wavelet-coefficient generators standing in for recorded
//! structural-health-monitoring signals.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{BcsError, Result};

/// Log-scale spread of the heavy-tailed generator, chosen so that the
/// largest 7% of coefficients carry 60% of the energy: removing 40% of the
/// energy by hard thresholding leaves about 7% nonzero coefficients, and
/// removing 20% leaves about 19%.
pub const SHM_LOG_SPREAD: f64 = 0.8646;

/// A synthetic coefficient distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticSpec {
    /// Exactly `t` nonzero coefficients, unit-normal values at uniformly
    /// random positions.
    Sparse { t: usize },
    /// `t` unit-normal coefficients on top of a dense `N(0, floor_sigma²)`
    /// floor.
    Approx { t: usize, floor_sigma: f64 },
    /// Every coefficient nonzero with log-normal magnitude
    /// `exp(SHM_LOG_SPREAD · z)` and random sign: approximately sparse, like
    /// a measured vibration record.
    Shm,
}

impl SyntheticSpec {
    /// Draws one length-`n` coefficient vector.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            SyntheticSpec::Sparse { t } => {
                check_t(t, n)?;
                let mut w = vec![0.0; n];
                for i in index::sample(&mut rng, n, t) {
                    w[i] = StandardNormal.sample(&mut rng);
                }
                Ok(w)
            }
            SyntheticSpec::Approx { t, floor_sigma } => {
                check_t(t, n)?;
                let floor = Normal::new(0.0, floor_sigma).map_err(|_| {
                    BcsError::InvalidHyperparameter(format!("floor sigma {floor_sigma} must be finite and >= 0"))
                })?;
                let mut w: Vec<f64> = (0..n).map(|_| floor.sample(&mut rng)).collect();
                for i in index::sample(&mut rng, n, t) {
                    w[i] = StandardNormal.sample(&mut rng);
                }
                Ok(w)
            }
            SyntheticSpec::Shm => Ok((0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    sign * (SHM_LOG_SPREAD * z).exp()
                })
                .collect()),
        }
    }
}

fn check_t(t: usize, n: usize) -> Result<()> {
    if t == 0 || t > n {
        return Err(BcsError::InvalidSize(format!("sparsity {t} must lie in 1..={n}")));
    }
    Ok(())
}

impl std::fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SyntheticSpec::Sparse { t } => write!(f, "sparse:{t}"),
            SyntheticSpec::Approx { t, floor_sigma } => write!(f, "approx:{t}:{floor_sigma}"),
            SyntheticSpec::Shm => write!(f, "shm"),
        }
    }
}

impl std::str::FromStr for SyntheticSpec {
    type Err = BcsError;

    /// Parses `sparse:T`, `approx:T:SIGMA` or `shm`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || BcsError::InvalidHyperparameter(format!(
            "unknown synthetic spec '{s}' (expected sparse:T, approx:T:SIGMA or shm)"
        ));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["shm"] => Ok(SyntheticSpec::Shm),
            ["sparse", t] => Ok(SyntheticSpec::Sparse { t: t.parse().map_err(|_| bad())? }),
            ["approx", t, sigma] => {
                let floor_sigma: f64 = sigma.parse().map_err(|_| bad())?;
                if !(floor_sigma >= 0.0 && floor_sigma.is_finite()) {
                    return Err(bad());
                }
                Ok(SyntheticSpec::Approx { t: t.parse().map_err(|_| bad())?, floor_sigma })
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::denoise_by_energy;

    #[test]
    fn sparse_has_exact_support() {
        let w = SyntheticSpec::Sparse { t: 20 }.generate(512, 3).unwrap();
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 20);
        assert_eq!(w, SyntheticSpec::Sparse { t: 20 }.generate(512, 3).unwrap());
        assert_ne!(w, SyntheticSpec::Sparse { t: 20 }.generate(512, 4).unwrap());
        assert!(SyntheticSpec::Sparse { t: 0 }.generate(8, 0).is_err());
        assert!(SyntheticSpec::Sparse { t: 9 }.generate(8, 0).is_err());
    }

    #[test]
    fn approx_is_dense_with_large_terms() {
        let w = SyntheticSpec::Approx { t: 8, floor_sigma: 0.01 }.generate(256, 1).unwrap();
        assert!(w.iter().all(|v| *v != 0.0));
        assert!(w.iter().filter(|v| v.abs() > 0.1).count() <= 8);
    }

    #[test]
    fn shm_denoising_gives_expected_sparsity() {
        // Energy share of the top fraction p of log-normal magnitudes is
        // 1 − Φ(Φ⁻¹(1 − p) − 2σ); the constant solves it for p = 0.07 at 60%.
        use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
        let normal = StatNormal::standard();
        let share = 1.0 - normal.cdf(normal.inverse_cdf(0.93) - 2.0 * SHM_LOG_SPREAD);
        assert!((share - 0.6).abs() < 1e-4, "{share}");
        let mut all = Vec::new();
        for seed in 0..40 {
            all.extend(SyntheticSpec::Shm.generate(512, seed).unwrap());
        }
        let nonzero = |f: f64| {
            let d = denoise_by_energy(&all, f).unwrap();
            d.iter().filter(|v| **v != 0.0).count() as f64 / d.len() as f64
        };
        let case2 = nonzero(0.2);
        let case3 = nonzero(0.4);
        assert!((0.16..0.22).contains(&case2), "{case2}");
        assert!((0.06..0.08).contains(&case3), "{case3}");
    }

    #[test]
    fn parse_round_trip() {
        for s in ["sparse:20", "approx:32:0.01", "shm"] {
            let spec: SyntheticSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        for s in ["", "sparse", "sparse:x", "approx:3", "approx:3:-1", "gauss"] {
            assert!(s.parse::<SyntheticSpec>().is_err(), "{s}");
        }
    }
}
