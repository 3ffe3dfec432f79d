//! Distortion and total loss.

use crate::error::{Error, Result};
use crate::frame::{GaussianFrame, SH_COEFFS};
use crate::render::metrics::{l1, l1_grad, ssim_grad};
use crate::render::raster::{render_backward, render_traced, Image};
use crate::render::Camera;

pub const POSITION_WEIGHT: f64 = 1.0;
pub const QUATERNION_WEIGHT: f64 = 0.5;
pub const DC_WEIGHT: f64 = 0.1;
/// D-SSIM share of the image loss.
pub const DSSIM_WEIGHT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DistortionMode {
    #[default]
    Parameter,
    Image,
}

/// Gradient of a scalar with respect to the parameters of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGrad {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub sh: Vec<[f64; SH_COEFFS]>,
}

impl FrameGrad {
    pub fn zeros(n: usize) -> Self {
        FrameGrad { positions: vec![[0.0; 3]; n], rotations: vec![[0.0; 4]; n], sh: vec![[0.0; SH_COEFFS]; n] }
    }
}

fn check_len(a: &GaussianFrame<f64>, b: &GaussianFrame<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidFrame(format!("reconstruction has {} Gaussians, target has {}", a.len(), b.len())));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over Gaussians of position L1, `1 - |<q, q̂>|` and DC L1, weighted
/// by [`POSITION_WEIGHT`], [`QUATERNION_WEIGHT`] and [`DC_WEIGHT`].
pub fn param_distortion(recon: &GaussianFrame<f64>, target: &GaussianFrame<f64>) -> Result<f64> {
    check_len(recon, target)?;
    let n = recon.len().max(1) as f64;
    let mut total = 0.0;
    for j in 0..recon.len() {
        let (p, t) = (recon.positions[j], target.positions[j]);
        let pos: f64 = (0..3).map(|a| (p[a] - t[a]).abs()).sum();
        let dot: f64 = (0..4).map(|a| recon.rotations[j][a] * target.rotations[j][a]).sum();
        let dc: f64 = (0..3).map(|c| (recon.sh[j][c] - target.sh[j][c]).abs()).sum();
        total += POSITION_WEIGHT * pos + QUATERNION_WEIGHT * (1.0 - dot.abs()) + DC_WEIGHT * dc;
    }
    Ok(total / n)
}

/// [`param_distortion`] and its gradient with respect to `recon`.
pub fn param_distortion_grad(recon: &GaussianFrame<f64>, target: &GaussianFrame<f64>) -> Result<(f64, FrameGrad)> {
    let value = param_distortion(recon, target)?;
    let inv = 1.0 / recon.len().max(1) as f64;
    let mut g = FrameGrad::zeros(recon.len());
    for j in 0..recon.len() {
        for a in 0..3 {
            g.positions[j][a] = POSITION_WEIGHT * inv * sign(recon.positions[j][a] - target.positions[j][a]);
            g.sh[j][a] = DC_WEIGHT * inv * sign(recon.sh[j][a] - target.sh[j][a]);
        }
        let t = target.rotations[j];
        let s = sign((0..4).map(|a| recon.rotations[j][a] * t[a]).sum());
        g.rotations[j] = t.map(|v| -QUATERNION_WEIGHT * inv * s * v);
    }
    Ok((value, g))
}

/// Targets of the image loss: one render of the target frame per camera.
pub fn target_images(target: &GaussianFrame<f64>, cameras: &[Camera]) -> Result<Vec<Image<f64>>> {
    cameras.iter().map(|c| Ok(render_traced(target, c)?.image())).collect()
}

/// `0.2 · (1 - SSIM) + 0.8 · L1`, averaged over cameras, with gradients for
/// positions and SH. Rotations get no gradient: covariances are frozen in
/// the differentiable renderer.
pub fn image_distortion_grad(
    recon: &GaussianFrame<f64>,
    targets: &[Image<f64>],
    cameras: &[Camera],
) -> Result<(f64, FrameGrad)> {
    if targets.len() != cameras.len() || cameras.is_empty() {
        return Err(Error::InvalidArgument(format!("{} target images for {} cameras", targets.len(), cameras.len())));
    }
    let share = 1.0 / cameras.len() as f64;
    let mut g = FrameGrad::zeros(recon.len());
    let mut value = 0.0;
    for (cam, target) in cameras.iter().zip(targets) {
        let trace = render_traced(recon, cam)?;
        let img = trace.image();
        let (s, sg) = ssim_grad(target, &img)?;
        let lg = l1_grad(target, &img)?;
        value += share * (DSSIM_WEIGHT * (1.0 - s) + (1.0 - DSSIM_WEIGHT) * l1(target, &img)?);
        let pixel_grad: Vec<[f64; 3]> = sg
            .iter()
            .zip(&lg)
            .map(|(a, b)| [0, 1, 2].map(|c| share * (-DSSIM_WEIGHT * a[c] + (1.0 - DSSIM_WEIGHT) * b[c])))
            .collect();
        let rg = render_backward(&trace, recon.len(), &pixel_grad)?;
        for j in 0..recon.len() {
            for a in 0..3 {
                g.positions[j][a] += rg.positions[j][a];
            }
            for k in 0..SH_COEFFS {
                g.sh[j][k] += rg.sh[j][k];
            }
        }
    }
    Ok((value, g))
}

/// `distortion + λ · rate`.
pub fn total_loss(distortion: f64, rate: f64, lambda_size: f64) -> f64 {
    distortion + lambda_size * rate
}
