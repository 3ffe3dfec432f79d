use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu => {
                let s = x * T::lit(LEAKY_SLOPE);
                if s > x {
                    s
                } else {
                    x
                }
            }
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu if x < T::zero() => T::lit(LEAKY_SLOPE),
            _ => T::one(),
        }
    }
}

/// Affine map followed by an activation. `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

/// A chain of dense layers evaluated row-wise on a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Per-layer inputs and pre-activations recorded by [`DenseNet::forward`].
#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    inputs: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> DenseNet<T> {
    /// Builds a net with layer widths `dims`; hidden layers use `hidden`, the
    /// last layer is linear. Weights and biases are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng>(dims: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "a dense net needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut draw = || T::lit(rng.gen_range(-bound..bound));
                let weight = Array2::from_shape_simple_fn((w[1], w[0]), &mut draw);
                let bias = Array1::from_shape_simple_fn(w[1], &mut draw);
                let activation = if l + 2 == dims.len() { Activation::Identity } else { hidden };
                DenseLayer { weight, bias, activation }
            })
            .collect();
        DenseNet { layers }
    }

    /// A single linear layer holding the identity map.
    pub fn identity(dim: usize) -> Self {
        DenseNet {
            layers: vec![DenseLayer {
                weight: Array2::eye(dim),
                bias: Array1::zeros(dim),
                activation: Activation::Identity,
            }],
        }
    }

    pub fn zeros_like(&self) -> Self {
        DenseNet {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Zeroes the output layer so the net starts out predicting zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty net");
        last.weight.fill(T::zero());
        last.bias.fill(T::zero());
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty net").weight.nrows()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "dense input has {} columns, net expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(layer: &DenseLayer<T>, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = Array2::zeros((x.nrows(), layer.weight.nrows()));
        z += &layer.bias;
        general_mat_mul(T::one(), x, &layer.weight.t(), T::one(), &mut z);
        z
    }

    /// Forward pass without recording activations.
    pub fn infer(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = Self::affine(layer, &h.view());
            if layer.activation != Activation::Identity {
                z.mapv_inplace(|v| layer.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, DenseCache<T>)> {
        self.check_input(&x)?;
        let mut cache =
            DenseCache { inputs: Vec::with_capacity(self.layers.len()), pre: Vec::with_capacity(self.layers.len()) };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let z = Self::affine(layer, &h.view());
            let out = z.mapv(|v| layer.activation.apply(v));
            cache.inputs.push(h);
            cache.pre.push(z);
            h = out;
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the forward input.
    pub fn backward(
        &self,
        cache: &DenseCache<T>,
        grad_out: ArrayView2<T>,
        grads: &mut DenseNet<T>,
    ) -> Result<Array2<T>> {
        if cache.pre.len() != self.layers.len()
            || grads.layers.len() != self.layers.len()
            || cache.pre.last().map(|p| p.dim()) != Some(grad_out.dim())
        {
            return Err(Error::Dimension("dense backward cache does not match net".into()));
        }
        let mut g = grad_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation != Activation::Identity {
                g.zip_mut_with(&cache.pre[l], |gv, &z| *gv *= layer.activation.derivative(z));
            }
            let gl = &mut grads.layers[l];
            general_mat_mul(T::one(), &g.t(), &cache.inputs[l], T::one(), &mut gl.weight);
            gl.bias += &g.sum_axis(Axis(0));
            let mut dx = Array2::zeros(cache.inputs[l].raw_dim());
            general_mat_mul(T::one(), &g, &layer.weight, T::zero(), &mut dx);
            g = dx;
        }
        Ok(g)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `(name, shape, data)` for every parameter tensor, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{i}.weight"),
                l.weight.shape().to_vec(),
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((format!("layer{i}.bias"), l.bias.shape().to_vec(), l.bias.as_slice().expect("standard layout")));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let ws = l.weight.shape().to_vec();
            let bs = l.bias.shape().to_vec();
            out.push((format!("layer{i}.weight"), ws, l.weight.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{i}.bias"), bs, l.bias.as_slice_mut().expect("standard layout")));
        }
        out
    }
}
