//! Small dense vector kernels shared by the scoring functions.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Circular correlation `out[k] = sum_i a[i] * b[(i + k) mod d]`, evaluated
/// directly in O(d^2).
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "circular correlation of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d = a.len();
    let mut out = vec![0.0; d];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..d {
            acc += a[i] * b[(i + k) % d];
        }
        *o = acc;
    }
    Ok(out)
}

/// Row-major `m x n` matrix times a length-`n` vector.
pub fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols);
    (0..rows)
        .map(|r| dot(&m[r * cols..(r + 1) * cols], v))
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
