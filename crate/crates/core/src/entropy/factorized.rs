//! Per-channel learned density from a monotone cumulative network.
//!
//! For channel `c` the cumulative logit is a chain of layers
//! `h ← softplus(H_k)·h + b_k`, each but the last followed by
//! `h ← h + tanh(a_k) ⊙ tanh(h)`. Positive matrices and factors bounded
//! below by -1 keep the chain monotone in its input.

use rand::Rng;

use super::gaussian::{sigmoid, softplus};
use super::{floor_pass, P_FLOOR};

pub const DEFAULT_FILTERS: [usize; 3] = [3, 3, 3];
pub const DEFAULT_INIT_SCALE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPrior {
    pub channels: usize,
    /// Layer widths including the scalar input and output, e.g. `[1, 3, 3, 3, 1]`.
    pub widths: Vec<usize>,
    /// Per layer: `channels × out × in` raw matrices (softplus applied on use).
    pub matrices: Vec<Vec<f64>>,
    /// Per layer: `channels × out`.
    pub biases: Vec<Vec<f64>>,
    /// Per layer except the last: `channels × out` raw factors (tanh applied on use).
    pub factors: Vec<Vec<f64>>,
}

/// Intermediate values of one cumulative evaluation.
struct Trace {
    /// Input of each layer, then the final logit.
    h: Vec<Vec<f64>>,
    /// Affine outputs before the gate, per gated layer.
    pre: Vec<Vec<f64>>,
}

impl FactorizedPrior {
    pub fn new<R: Rng>(channels: usize, filters: &[usize], init_scale: f64, rng: &mut R) -> Self {
        let mut widths = vec![1];
        widths.extend_from_slice(filters);
        widths.push(1);
        let layers = widths.len() - 1;
        let scale = init_scale.powf(1.0 / layers as f64);
        let mut matrices = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        let mut factors = Vec::with_capacity(layers - 1);
        for k in 0..layers {
            let init = (1.0 / scale / widths[k + 1] as f64).exp_m1().ln();
            matrices.push(vec![init; channels * widths[k + 1] * widths[k]]);
            biases.push((0..channels * widths[k + 1]).map(|_| rng.gen_range(-0.5..0.5)).collect());
            if k + 1 < layers {
                factors.push(vec![0.0; channels * widths[k + 1]]);
            }
        }
        FactorizedPrior { channels, widths, matrices, biases, factors }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<Vec<f64>>| v.iter().map(|b| vec![0.0; b.len()]).collect();
        FactorizedPrior {
            channels: self.channels,
            widths: self.widths.clone(),
            matrices: z(&self.matrices),
            biases: z(&self.biases),
            factors: z(&self.factors),
        }
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn trace(&self, x: f64, c: usize) -> Trace {
        let layers = self.layers();
        let mut h = vec![vec![x]];
        let mut pre = Vec::with_capacity(layers - 1);
        for k in 0..layers {
            let (fi, fo) = (self.widths[k], self.widths[k + 1]);
            let m = &self.matrices[k][c * fo * fi..(c + 1) * fo * fi];
            let b = &self.biases[k][c * fo..(c + 1) * fo];
            let input = &h[k];
            let mut out: Vec<f64> =
                (0..fo).map(|o| b[o] + (0..fi).map(|i| softplus(m[o * fi + i]) * input[i]).sum::<f64>()).collect();
            if k + 1 < layers {
                pre.push(out.clone());
                let a = &self.factors[k][c * fo..(c + 1) * fo];
                for (v, &ak) in out.iter_mut().zip(a) {
                    *v += ak.tanh() * v.tanh();
                }
            }
            h.push(out);
        }
        Trace { h, pre }
    }

    /// Cumulative logit of channel `c` at `x`.
    pub fn logit(&self, x: f64, c: usize) -> f64 {
        self.trace(x, c).h.last().expect("at least one layer")[0]
    }

    /// Cumulative distribution of channel `c` at `x`.
    pub fn cdf(&self, x: f64, c: usize) -> f64 {
        sigmoid(self.logit(x, c))
    }

    /// Backpropagates `g = dL/dlogit` to the input, accumulating parameter
    /// gradients into `grads`.
    fn logit_backward(&self, t: &Trace, c: usize, g: f64, grads: Option<&mut FactorizedPrior>) -> f64 {
        let layers = self.layers();
        let mut gh = vec![g];
        let mut grads = grads;
        for k in (0..layers).rev() {
            let (fi, fo) = (self.widths[k], self.widths[k + 1]);
            if k + 1 < layers {
                let a = &self.factors[k][c * fo..(c + 1) * fo];
                let pre = &t.pre[k];
                for o in 0..fo {
                    let ta = a[o].tanh();
                    let tp = pre[o].tanh();
                    if let Some(gr) = grads.as_deref_mut() {
                        gr.factors[k][c * fo + o] += gh[o] * (1.0 - ta * ta) * tp;
                    }
                    gh[o] *= 1.0 + ta * (1.0 - tp * tp);
                }
            }
            let m = &self.matrices[k][c * fo * fi..(c + 1) * fo * fi];
            let input = &t.h[k];
            let mut gin = vec![0.0; fi];
            for o in 0..fo {
                for i in 0..fi {
                    let raw = m[o * fi + i];
                    gin[i] += gh[o] * softplus(raw);
                    if let Some(gr) = grads.as_deref_mut() {
                        gr.matrices[k][c * fo * fi + o * fi + i] += gh[o] * input[i] * sigmoid(raw);
                    }
                }
                if let Some(gr) = grads.as_deref_mut() {
                    gr.biases[k][c * fo + o] += gh[o];
                }
            }
            gh = gin;
        }
        gh[0]
    }

    /// Unfloored interval mass `c(x + q/2) - c(x - q/2)`, computed on the
    /// side of the distribution where the sigmoids are far from saturation.
    pub fn interval(&self, x: f64, c: usize, q: f64) -> f64 {
        let u = self.logit(x + 0.5 * q, c);
        let l = self.logit(x - 0.5 * q, c);
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        (sigmoid(s * u) - sigmoid(s * l)).abs()
    }

    pub fn likelihood(&self, x: f64, c: usize, q: f64) -> f64 {
        self.interval(x, c, q).max(P_FLOOR)
    }

    /// Likelihood at `x` plus the chained gradient: given `grad_p = dL/dp`,
    /// returns `(p, dL/dx)` and accumulates parameter gradients.
    pub fn likelihood_backward(
        &self,
        x: f64,
        c: usize,
        q: f64,
        grad_p: impl FnOnce(f64) -> f64,
        grads: Option<&mut FactorizedPrior>,
    ) -> (f64, f64) {
        let tu = self.trace(x + 0.5 * q, c);
        let tl = self.trace(x - 0.5 * q, c);
        let u = tu.h.last().expect("layers")[0];
        let l = tl.h.last().expect("layers")[0];
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        let (su, sl) = (sigmoid(s * u), sigmoid(s * l));
        let p_raw = s * (su - sl);
        let p = p_raw.max(P_FLOOR);
        let g = grad_p(p);
        if !floor_pass(p_raw, g) {
            return (p, 0.0);
        }
        // d p / d u = σ'(s u), d p / d l = -σ'(s l)
        let gu = g * su * (1.0 - su);
        let gl = -g * sl * (1.0 - sl);
        let mut grads = grads;
        let dx_u = self.logit_backward(&tu, c, gu, grads.as_deref_mut());
        let dx_l = self.logit_backward(&tl, c, gl, grads);
        (p, dx_u + dx_l)
    }

    pub fn param_count(&self) -> usize {
        [&self.matrices, &self.biases, &self.factors].iter().flat_map(|v| v.iter().map(|b| b.len())).sum()
    }

    /// `(name, shape, data)` per tensor in canonical order.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for k in 0..self.layers() {
            let (fi, fo) = (self.widths[k], self.widths[k + 1]);
            out.push((format!("matrix{k}"), vec![self.channels, fo, fi], &self.matrices[k][..]));
            out.push((format!("bias{k}"), vec![self.channels, fo], &self.biases[k][..]));
            if k < self.factors.len() {
                out.push((format!("factor{k}"), vec![self.channels, fo], &self.factors[k][..]));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let channels = self.channels;
        let widths = self.widths.clone();
        let mut out = Vec::new();
        let mut factors = self.factors.iter_mut();
        for (k, (m, b)) in self.matrices.iter_mut().zip(self.biases.iter_mut()).enumerate() {
            let (fi, fo) = (widths[k], widths[k + 1]);
            out.push((format!("matrix{k}"), vec![channels, fo, fi], &mut m[..]));
            out.push((format!("bias{k}"), vec![channels, fo], &mut b[..]));
            if k + 2 < widths.len() {
                let f = factors.next().expect("one factor per gated layer");
                out.push((format!("factor{k}"), vec![channels, fo], &mut f[..]));
            }
        }
        out
    }
}
