use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for a list of parameter blocks. Each block
/// keeps its own step counter so a block that starts training late gets the
/// usual warm-up correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub steps: Vec<u64>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64, block_sizes: &[usize]) -> Self {
        AdamState {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            m: block_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: block_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            steps: vec![0; block_sizes.len()],
        }
    }

    /// Updates one block in place.
    pub fn step_block(&mut self, block: usize, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m[block].len() {
            return Err(Error::Dimension(format!(
                "adam block {block}: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m[block].len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient block {block} element {i}")));
        }
        self.steps[block] += 1;
        let t = self.steps[block] as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        let m = &mut self.m[block];
        let v = &mut self.v[block];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }

    /// Updates every block. All gradients are checked before anything moves.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension("adam block count mismatch".into()));
        }
        for (b, g) in grads.iter().enumerate() {
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient block {b} element {i}")));
            }
        }
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.step_block(b, p, g)?;
        }
        Ok(())
    }
}
