//! File formats: little-endian binary matrices and vectors, plain-text
//! signals, and the sectioned reconstruction result file.
//!
//! Binary matrix: three `u64` (magic, rows, cols) then `rows·cols` `f64` in
//! row-major order. Binary vector: two `u64` (magic, length) then the
//! values. All little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::engine::{Algorithm, ReconstructionResult};
use crate::error::{BcsError, Result};
use crate::sbl::NoiseParam;

pub const MAGIC: u64 = 0x4243_5331;

fn io_err(path: &Path, source: std::io::Error) -> BcsError {
    BcsError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, reason: impl Into<String>) -> BcsError {
    BcsError::Format { path: path.to_path_buf(), reason: reason.into() }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn u64_at(bytes: &[u8], i: usize) -> u64 {
    u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8-byte slice"))
}

fn f64s_from(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    for h in [MAGIC, m.nrows() as u64, m.ncols() as u64] {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn encode_vector(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * v.len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode_matrix(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < 24 || u64_at(bytes, 0) != MAGIC {
        return Err(format_err(path, "missing binary matrix header"));
    }
    let (rows, cols) = (u64_at(bytes, 1) as usize, u64_at(bytes, 2) as usize);
    let expected = rows.checked_mul(cols).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(24));
    if expected != Some(bytes.len()) {
        return Err(format_err(path, format!("header declares {rows}x{cols} but file has {} bytes", bytes.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &f64s_from(&bytes[24..])))
}

fn decode_vector(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.len() < 16 || u64_at(bytes, 0) != MAGIC {
        return Err(format_err(path, "missing binary vector header"));
    }
    let len = u64_at(bytes, 1) as usize;
    if len.checked_mul(8).and_then(|c| c.checked_add(16)) != Some(bytes.len()) {
        return Err(format_err(path, format!("header declares {len} values but file has {} bytes", bytes.len())));
    }
    Ok(f64s_from(&bytes[16..]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_bytes(path, &encode_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    decode_matrix(&read_bytes(path)?, path)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_bytes(path, &encode_vector(v))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    decode_vector(&read_bytes(path)?, path)
}

/// Reads a signal stored either as a binary vector or as text with one real
/// per line (blank lines and `#` comments ignored).
pub fn read_signal(path: &Path) -> Result<Vec<f64>> {
    let bytes = read_bytes(path)?;
    if bytes.len() >= 16 && u64_at(&bytes, 0) == MAGIC {
        return decode_vector(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| format_err(path, "neither a binary vector nor UTF-8 text"))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| format_err(path, format!("line {}: cannot parse '{line}' as a number", lineno + 1)))?;
        if !v.is_finite() {
            return Err(format_err(path, format!("line {}: non-finite value", lineno + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(format_err(path, "signal file holds no samples"));
    }
    Ok(out)
}

pub fn write_text_signal(path: &Path, samples: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(samples.len() * 24);
    for v in samples {
        writeln!(s, "{v}").expect("writing to a String");
    }
    write_bytes(path, s.as_bytes())
}

/// Splits a record into consecutive length-`n` segments, dropping a
/// trailing partial segment.
pub fn segment_record(samples: &[f64], n: usize) -> Vec<Vec<f64>> {
    samples.chunks_exact(n).map(<[f64]>::to_vec).collect()
}

/// Renders a reconstruction as the sectioned result file.
pub fn format_result(result: &ReconstructionResult, algorithm: Algorithm, k: usize) -> String {
    let mut s = String::new();
    let n = result.mean_coeffs.len();
    writeln!(s, "# robust-bcs reconstruction result").unwrap();
    writeln!(s, "# algorithm={}", algorithm.label()).unwrap();
    writeln!(s, "# k={k}").unwrap();
    writeln!(s, "# n={n}").unwrap();
    writeln!(s, "# rows: index,value").unwrap();
    for (label, values) in [
        ("MEAN_SIGNAL", &result.mean_signal),
        ("MEAN_COEFFS", &result.mean_coeffs),
        ("COEFF_STD", &result.coeff_std),
    ] {
        writeln!(s, "{label}").unwrap();
        for (i, v) in values.iter().enumerate() {
            writeln!(s, "{i},{v}").unwrap();
        }
    }
    writeln!(s, "DIAGNOSTICS").unwrap();
    let (noise_key, noise_value) = match result.final_noise {
        NoiseParam::Beta(beta) => ("beta", beta),
        NoiseParam::Gamma { b0, .. } => ("b0", b0),
    };
    let active: Vec<String> = result.active.iter().map(usize::to_string).collect();
    let rows: [(&str, String); 9] = [
        ("active_count", result.active_count().to_string()),
        ("active", active.join(" ")),
        ("outer_iterations", result.outer_iterations.to_string()),
        ("inner_iterations", result.inner_iterations_total.to_string()),
        ("converged", result.converged.to_string()),
        ("inner_exhausted", result.inner_exhausted.to_string()),
        ("breakdowns", result.breakdowns.to_string()),
        (noise_key, noise_value.to_string()),
        ("mean_nonzero_std", result.mean_active_std().to_string()),
    ];
    for (key, value) in rows {
        writeln!(s, "{key},{value}").unwrap();
    }
    s
}

/// One labeled section of a result file, as read back.
pub fn parse_result_section(text: &str, label: &str) -> Option<Vec<f64>> {
    let mut lines = text.lines().skip_while(|l| l.trim() != label);
    lines.next()?;
    let mut out = Vec::new();
    for line in lines {
        let Some((_, value)) = line.split_once(',') else { break };
        match value.parse() {
            Ok(v) => out.push(v),
            Err(_) => break,
        }
    }
    Some(out)
}
