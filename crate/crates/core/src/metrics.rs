//! Reconstruction-error measures, top-magnitude selection, energy-based
//! hard-threshold denoising and acceptance rates.

use crate::error::{BcsError, Result};

/// Sorted, distinct coefficient positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates `indices` against a vector of length `n`.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > n {
            return Err(BcsError::InvalidSize(format!(
                "index set of size {} invalid for N = {n}",
                indices.len()
            )));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(BcsError::InvalidSize("duplicate index in set".into()));
        }
        if indices[indices.len() - 1] >= n {
            return Err(BcsError::InvalidSize(format!("index out of range for N = {n}")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn t(&self) -> usize {
        self.0.len()
    }
}

fn check_lengths(truth: &[f64], estimate: &[f64]) -> Result<()> {
    if truth.len() != estimate.len() {
        return Err(BcsError::Shape(format!(
            "truth has {} entries, estimate {}",
            truth.len(),
            estimate.len()
        )));
    }
    Ok(())
}

/// `‖truth − estimate‖² / ‖truth‖²`.
pub fn strict_re(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    check_lengths(truth, estimate)?;
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(BcsError::UndefinedRatio);
    }
    let num: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(num / den)
}

/// Relative squared error restricted to the positions in `id`.
pub fn effective_re(truth: &[f64], estimate: &[f64], id: &IndexSet) -> Result<f64> {
    check_lengths(truth, estimate)?;
    if id.indices().last().is_some_and(|&i| i >= truth.len()) {
        return Err(BcsError::InvalidSize("index set exceeds vector length".into()));
    }
    let den: f64 = id.indices().iter().map(|&i| truth[i] * truth[i]).sum();
    if den == 0.0 {
        return Err(BcsError::UndefinedRatio);
    }
    let num: f64 = id.indices().iter().map(|&i| (truth[i] - estimate[i]).powi(2)).sum();
    Ok(num / den)
}

/// Positions of the `t` largest magnitudes; lower index wins ties.
pub fn top_indices(coeffs: &[f64], t: usize) -> Result<IndexSet> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order.truncate(t);
    IndexSet::new(order, coeffs.len())
}

/// Zeroes the smallest-magnitude coefficients whose combined energy is at
/// most `fraction` of the total. Ties in magnitude are zeroed lower index
/// first; retained coefficients are unchanged.
pub fn denoise_by_energy(coeffs: &[f64], fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(BcsError::InvalidFraction(fraction));
    }
    let mut out = coeffs.to_vec();
    let total: f64 = coeffs.iter().map(|v| v * v).sum();
    if fraction == 0.0 || total == 0.0 {
        return Ok(out);
    }
    let budget = fraction * total;
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[a].abs().total_cmp(&coeffs[b].abs()).then(a.cmp(&b)));
    let mut discarded = 0.0;
    for i in order {
        let e = coeffs[i] * coeffs[i];
        if discarded + e > budget {
            break;
        }
        discarded += e;
        out[i] = 0.0;
    }
    Ok(out)
}

/// Fraction of `errors` strictly below `threshold`.
pub fn acceptance_rate(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(BcsError::EmptySample);
    }
    Ok(errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64)
}

/// An effective-error index set defined as a fraction of `N`, such as the
/// top 1/16 of coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopFraction {
    pub numerator: usize,
    pub denominator: usize,
}

impl TopFraction {
    pub fn new(numerator: usize, denominator: usize) -> Result<Self> {
        if numerator == 0 || denominator == 0 || numerator > denominator {
            return Err(BcsError::InvalidSize(format!(
                "fraction {numerator}/{denominator} must lie in (0, 1]"
            )));
        }
        Ok(Self { numerator, denominator })
    }

    /// Number of coefficients for a length-`n` vector (at least one).
    pub fn count(&self, n: usize) -> usize {
        (n * self.numerator / self.denominator).max(1)
    }

    pub fn label(&self) -> String {
        format!("top-{}/{}", self.numerator, self.denominator)
    }
}

impl std::str::FromStr for TopFraction {
    type Err = BcsError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BcsError::InvalidSize(format!("cannot parse fraction '{s}' (expected a/b)"));
        let (a, b) = s.trim().split_once('/').ok_or_else(bad)?;
        Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

/// Strict error plus one effective error per requested top fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub strict_re: f64,
    pub effective_re: Vec<(TopFraction, f64)>,
}

impl ErrorReport {
    pub fn evaluate(truth: &[f64], estimate: &[f64], fractions: &[TopFraction]) -> Result<Self> {
        let strict = strict_re(truth, estimate)?;
        let effective = fractions
            .iter()
            .map(|f| {
                let id = top_indices(truth, f.count(truth.len()))?;
                Ok((*f, effective_re(truth, estimate, &id)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { strict_re: strict, effective_re: effective })
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation of two equally long samples. Infinite values
/// rank above all finite ones; NaN is rejected.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(BcsError::Shape(format!("samples of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(BcsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(BcsError::InvalidHyperparameter("NaN in rank-correlation sample".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(BcsError::UndefinedRatio);
    }
    Ok(sab / (saa * sbb).sqrt())
}
