//! Quantization, the two likelihood models and the rate estimate.
//!
//! Latents are coded with a conditional Gaussian whose mean and scale come
//! from the fusion network; hyper-latents use a learned per-channel
//! factorized density. Both likelihoods are floored at [`P_FLOOR`], which
//! matches the 16-bit precision of the range coder.

mod context;
mod factorized;
mod gaussian;
mod quantize;
mod rate;

pub use context::{
    context_inputs, predict_params, predict_params_backward, predict_params_forward, spatial_temporal_context,
    spatial_temporal_context_backward, spatial_temporal_context_forward, ContextCache, EntropyParams,
};
pub use factorized::{FactorizedPrior, DEFAULT_FILTERS, DEFAULT_INIT_SCALE};
pub use gaussian::{
    gaussian_interval, gaussian_likelihood, gaussian_likelihood_grad, scale_from_raw, scale_from_raw_grad,
    GaussianGrad, SIGMA_MIN,
};
pub use quantize::{quantize, quantize_test, QuantMode};
pub use rate::{bits, rate_grad, rate_loss};

/// Smallest probability any likelihood reports.
pub const P_FLOOR: f64 = 1.0 / 65536.0;

/// Applies the floor, with the backward rule of a lower bound: the gradient
/// passes when the value is above the floor or when descent would raise it.
#[inline]
pub(crate) fn floor_pass(p_raw: f64, grad_p: f64) -> bool {
    p_raw >= P_FLOOR || grad_p < 0.0
}
