use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive uniform noise in `[-q/2, q/2)`.
    Train,
    /// Rounding to the lattice, half-integers away from zero.
    Test,
}

#[inline]
pub fn quantize_test(y: f64, q: f64) -> f64 {
    (y / q).round() * q
}

pub fn quantize<R: Rng>(y: &[f64], q: f64, mode: QuantMode, rng: &mut R) -> Vec<f64> {
    match mode {
        QuantMode::Test => y.iter().map(|&v| quantize_test(v, q)).collect(),
        QuantMode::Train => y.iter().map(|&v| v + q * (rng.gen::<f64>() - 0.5)).collect(),
    }
}
