//! Orthonormal discrete Haar wavelet analysis and synthesis.
//!
//! Coefficients use the dyadic layout: the single approximation coefficient
//! first, then detail coefficients from the coarsest level (one coefficient)
//! to the finest level (`N/2` coefficients). Index `n >= 1` belongs to level
//! `j = floor(log2 n)` at shift `n - 2^j`, with support of length `N / 2^j`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{BcsError, Result};

fn check_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(BcsError::InvalidSize(format!(
            "length {n} is not a power of two >= 2"
        )));
    }
    Ok(())
}

/// A time-domain signal block whose length is a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment(Vec<f64>);

impl SignalSegment {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        check_len(samples.len())?;
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(BcsError::InvalidSize("non-finite sample".into()));
        }
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Haar coefficients in approximation-first dyadic order.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients(Vec<f64>);

impl WaveletCoefficients {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        check_len(coeffs.len())?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(BcsError::InvalidSize("non-finite coefficient".into()));
        }
        Ok(Self(coeffs))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Column `index` (zero-based) of the `n`-point orthonormal Haar matrix,
/// built directly from its closed form.
pub fn haar_basis_column(n: usize, index: usize) -> Result<Vec<f64>> {
    check_len(n)?;
    if index >= n {
        return Err(BcsError::InvalidSize(format!(
            "basis index {index} out of range for N = {n}"
        )));
    }
    let mut col = vec![0.0; n];
    if index == 0 {
        let v = (1.0 / n as f64).sqrt();
        col.iter_mut().for_each(|c| *c = v);
        return Ok(col);
    }
    let level = usize::BITS - 1 - index.leading_zeros();
    let shift = index - (1usize << level);
    let support = n >> level;
    let half = support / 2;
    let v = (1.0 / support as f64).sqrt();
    let start = shift * support;
    col[start..start + half].iter_mut().for_each(|c| *c = v);
    col[start + half..start + support]
        .iter_mut()
        .for_each(|c| *c = -v);
    Ok(col)
}

/// In-place analysis on a power-of-two slice: `w = Ψᵀx`.
pub fn forward_in_place(data: &mut [f64]) -> Result<()> {
    check_len(data.len())?;
    let mut scratch = vec![0.0; data.len()];
    let mut len = data.len();
    while len >= 2 {
        let half = len / 2;
        for i in 0..half {
            let a = data[2 * i];
            let b = data[2 * i + 1];
            scratch[i] = (a + b) * FRAC_1_SQRT_2;
            scratch[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
    Ok(())
}

/// In-place synthesis on a power-of-two slice: `x = Ψw`.
pub fn inverse_in_place(data: &mut [f64]) -> Result<()> {
    check_len(data.len())?;
    let mut scratch = vec![0.0; data.len()];
    let mut len = 2;
    while len <= data.len() {
        let half = len / 2;
        for i in 0..half {
            let a = data[i];
            let d = data[half + i];
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
    Ok(())
}

pub fn forward(x: &SignalSegment) -> WaveletCoefficients {
    let mut data = x.0.clone();
    forward_in_place(&mut data).expect("segment length validated on construction");
    WaveletCoefficients(data)
}

pub fn inverse(w: &WaveletCoefficients) -> SignalSegment {
    let mut data = w.0.clone();
    inverse_in_place(&mut data).expect("coefficient length validated on construction");
    SignalSegment(data)
}
