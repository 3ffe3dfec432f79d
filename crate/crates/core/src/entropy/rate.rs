use std::f64::consts::LN_2;

/// `-log2 p`.
#[inline]
pub fn bits(p: f64) -> f64 {
    -p.log2()
}

/// Bits per control point: `(1/nc) · Σ (-log2 p_y) + (1/nc) · Σ (-log2 p_z)`.
pub fn rate_loss(p_y: &[f64], p_z: &[f64], nc: usize) -> f64 {
    let total: f64 = p_y.iter().chain(p_z).map(|&p| bits(p)).sum();
    total / nc as f64
}

/// `d rate / d p` for one likelihood term.
#[inline]
pub fn rate_grad(p: f64, nc: usize) -> f64 {
    -1.0 / (p * LN_2 * nc as f64)
}
