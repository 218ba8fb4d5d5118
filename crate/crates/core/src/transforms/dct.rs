use std::f64::consts::PI;

use super::TransformError;

fn coefficient(row: &[f64], k: usize) -> f64 {
    let n = row.len() as f64;
    let c = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    let s: f64 = row
        .iter()
        .enumerate()
        .map(|(i, x)| x * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
        .sum();
    c * s
}

/// Coefficient `index` of the orthonormal DCT-II of `row`.
pub fn dct_component(row: &[f64], index: usize) -> Result<f64, TransformError> {
    if index >= row.len() {
        return Err(TransformError::IndexOutOfRange { index, len: row.len() });
    }
    Ok(coefficient(row, index))
}

/// Full orthonormal DCT-II.
pub fn dct_ii(row: &[f64]) -> Vec<f64> {
    (0..row.len()).map(|k| coefficient(row, k)).collect()
}
