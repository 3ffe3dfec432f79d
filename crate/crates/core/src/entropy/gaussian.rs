use super::{floor_pass, P_FLOOR};

/// Lower clamp on predicted scales.
pub const SIGMA_MIN: f64 = 1e-4;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * INV_SQRT_2)
}

#[inline]
fn phi_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Unfloored mass of `N(mu, sigma)` on `[y - q/2, y + q/2]`. Evaluated on
/// the lower tail (`|y - mu|`) so far-off symbols keep relative precision.
#[inline]
pub fn gaussian_interval(y: f64, mu: f64, sigma: f64, q: f64) -> f64 {
    let v = (y - mu).abs();
    phi_cdf((0.5 * q - v) / sigma) - phi_cdf((-0.5 * q - v) / sigma)
}

pub fn gaussian_likelihood(y: f64, mu: f64, sigma: f64, q: f64) -> f64 {
    gaussian_interval(y, mu, sigma, q).max(P_FLOOR)
}

/// Floored likelihood and its partial derivatives. The derivatives are those
/// of the unfloored interval mass; callers apply the floor's backward rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianGrad {
    pub p: f64,
    pub p_raw: f64,
    pub d_y: f64,
    pub d_mu: f64,
    pub d_sigma: f64,
}

impl GaussianGrad {
    /// Chains `dL/dp` through the floor into `(dL/dy, dL/dmu, dL/dsigma)`.
    pub fn chain(&self, grad_p: f64) -> (f64, f64, f64) {
        if !floor_pass(self.p_raw, grad_p) {
            return (0.0, 0.0, 0.0);
        }
        (grad_p * self.d_y, grad_p * self.d_mu, grad_p * self.d_sigma)
    }
}

pub fn gaussian_likelihood_grad(y: f64, mu: f64, sigma: f64, q: f64) -> GaussianGrad {
    let diff = y - mu;
    let v = diff.abs();
    let u = (0.5 * q - v) / sigma;
    let l = (-0.5 * q - v) / sigma;
    let p_raw = phi_cdf(u) - phi_cdf(l);
    let (pu, pl) = (phi_pdf(u), phi_pdf(l));
    let d_v = -(pu - pl) / sigma;
    let d_sigma = -(u * pu - l * pl) / sigma;
    let s = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    GaussianGrad { p: p_raw.max(P_FLOOR), p_raw, d_y: d_v * s, d_mu: -d_v * s, d_sigma }
}

/// `max(softplus(r), SIGMA_MIN)`.
#[inline]
pub fn scale_from_raw(r: f64) -> f64 {
    softplus(r).max(SIGMA_MIN)
}

#[inline]
pub fn scale_from_raw_grad(r: f64) -> f64 {
    if softplus(r) > SIGMA_MIN {
        sigmoid(r)
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
