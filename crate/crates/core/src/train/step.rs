//! Differentiable P-frame coding for training.
//!
//! Mirrors [`crate::pipeline::encode_p_frame`] with the rounding of `y` and
//! `z` replaced by additive noise, and adds the backward pass. The
//! reference frame is a constant: no gradient flows into it.

use ndarray::{Array2, Axis};
use rand::Rng;

use super::loss::{image_distortion_grad, param_distortion_grad, target_images, total_loss, DistortionMode, FrameGrad};
use crate::compensate::{
    apply_motion, displacements, displacements_backward, normalize_quat_backward, refine_colors, CompensationPlan,
};
use crate::entropy::{
    gaussian_likelihood_grad, predict_params_backward, predict_params_forward, quantize_test, rate_grad, rate_loss,
    spatial_temporal_context_backward, spatial_temporal_context_forward,
};
use crate::error::{Error, Result};
use crate::frame::GaussianFrame;
use crate::geometry::{Aabb, ControlPointSet};
use crate::model::CodecModel;
use crate::motion::{feature_inputs, rows_to_motions};
use crate::pipeline::control_plan;
use crate::render::raster::Image;
use crate::render::Camera;

/// Offsets added to `y` and `z` in place of rounding. `None` rounds, with a
/// straight-through gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNoise {
    pub y: Array2<f64>,
    pub z: Array2<f64>,
}

impl LatentNoise {
    /// Uniform on `[-q/2, q/2)`.
    pub fn sample<R: Rng>(rows: usize, latent: usize, q: f64, rng: &mut R) -> Self {
        let mut draw = || Array2::from_shape_simple_fn((rows, latent), || q * (rng.gen::<f64>() - 0.5));
        let y = draw();
        let z = draw();
        LatentNoise { y, z }
    }
}

/// What the distortion is measured against.
pub enum DistortionTarget<'a> {
    Parameter(&'a GaussianFrame<f64>),
    Image { frame: &'a GaussianFrame<f64>, cameras: &'a [Camera], images: &'a [Image<f64>] },
}

impl DistortionTarget<'_> {
    fn frame(&self) -> &GaussianFrame<f64> {
        match self {
            DistortionTarget::Parameter(f) => f,
            DistortionTarget::Image { frame, .. } => frame,
        }
    }

    fn evaluate(&self, recon: &GaussianFrame<f64>) -> Result<(f64, FrameGrad)> {
        match self {
            DistortionTarget::Parameter(t) => param_distortion_grad(recon, t),
            DistortionTarget::Image { cameras, images, .. } => image_distortion_grad(recon, images, cameras),
        }
    }
}

/// Renders the image-mode targets once per frame.
pub fn prepare_targets(
    mode: DistortionMode,
    frame: &GaussianFrame<f64>,
    cameras: &[Camera],
) -> Result<Vec<Image<f64>>> {
    match mode {
        DistortionMode::Parameter => Ok(Vec::new()),
        DistortionMode::Image => target_images(frame, cameras),
    }
}

/// Reference frame with its control points and compensation plan.
#[derive(Clone, Debug)]
pub struct TrainReference {
    pub frame: GaussianFrame<f64>,
    pub bbox: Aabb,
    pub control: ControlPointSet<f64>,
    pub plan: CompensationPlan,
}

impl TrainReference {
    pub fn new(model: &CodecModel, frame: GaussianFrame<f64>, bbox: Aabb) -> Result<Self> {
        let (control, plan) = control_plan(&model.config, &frame)?;
        Ok(TrainReference { frame, bbox, control, plan })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub distortion: f64,
    /// Rate term of the loss: bits of `ŷ` and `ẑ` per control point.
    pub rate: f64,
    pub total: f64,
    pub reconstruction: GaussianFrame<f64>,
}

/// Loss of coding `target` against `reference`. With `grads`, accumulates
/// `scale · d(total)/dθ` into it.
pub fn p_frame_step(
    model: &CodecModel,
    reference: &TrainReference,
    target: &DistortionTarget,
    noise: Option<&LatentNoise>,
    lambda_size: f64,
    scale: f64,
    grads: Option<&mut CodecModel>,
) -> Result<StepResult> {
    let cfg = &model.config;
    let q = cfg.quant_step;
    let current = target.frame();
    let r = &reference.frame;
    if current.len() != r.len() {
        return Err(Error::InvalidFrame(format!("frame has {} Gaussians, reference has {}", current.len(), r.len())));
    }
    let idx = &reference.control.indices;
    let nc = idx.len();
    let cur_attrs: Vec<[f64; 7]> = idx.iter().map(|&i| current.attributes(i)).collect();
    let x_cur = feature_inputs(&reference.bbox, &cur_attrs, cfg.freq_octaves);
    let x_ref = feature_inputs(&reference.bbox, &reference.control.attributes, cfg.freq_octaves);
    let (y_cur, c_feat_cur) = model.feature.forward(x_cur.view())?;
    let (y_ref, c_feat_ref) = model.feature.forward(x_ref.view())?;
    let (motion, c_conv) = model.converter.forward((&y_cur - &y_ref).view())?;
    let (y, c_an) = model.analysis.forward(motion.view())?;
    let (z, c_hy) = model.hyper.forward(y.view())?;
    let perturb = |v: &Array2<f64>, n: Option<&Array2<f64>>| -> Result<Array2<f64>> {
        match n {
            Some(n) if n.dim() == v.dim() => Ok(v + n),
            Some(n) => Err(Error::Dimension(format!("noise {:?} for latent {:?}", n.dim(), v.dim()))),
            None => Ok(v.mapv(|x| quantize_test(x, q))),
        }
    };
    let y_t = perturb(&y, noise.map(|n| &n.y))?;
    let z_t = perturb(&z, noise.map(|n| &n.z))?;

    let (ctx_all, c_ctx) = spatial_temporal_context_forward(
        &model.grid,
        &model.pos_ctx,
        &model.attr_ctx,
        &reference.bbox,
        &r.positions,
        &r.rotations,
    )?;
    let ctx_cp = ctx_all.select(Axis(0), idx);
    let (params, c_fu) = predict_params_forward(&model.fusion, ctx_cp.view(), z_t.view())?;
    let latent = y.ncols();
    let py: Vec<_> = y_t
        .iter()
        .zip(params.mu.iter())
        .zip(params.sigma.iter())
        .map(|((&v, &mu), &sigma)| gaussian_likelihood_grad(v, mu, sigma, q))
        .collect();
    let pz: Vec<f64> = z_t.iter().enumerate().map(|(i, &v)| model.prior.likelihood(v, i % latent, q)).collect();
    let py_vals: Vec<f64> = py.iter().map(|g| g.p).collect();
    let rate = rate_loss(&py_vals, &pz, nc);

    let (decoded, c_sy) = model.synthesis.forward(y_t.view())?;
    let (residuals, c_re) = model.refine.forward(ctx_all.view())?;
    let motions = rows_to_motions(&decoded);
    let moved = apply_motion(r, &reference.plan, &motions)?;
    let recon = refine_colors(&moved, residuals.view(), cfg.refine_target)?;
    let (distortion, g_recon) = target.evaluate(&recon)?;
    let total = total_loss(distortion, rate, lambda_size);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss {total} (distortion {distortion}, rate {rate})")));
    }
    let result = StepResult { distortion, rate, total, reconstruction: recon };
    let Some(grads) = grads else {
        return Ok(result);
    };

    // Colour refinement.
    let w = cfg.refine_target.width();
    let g_res = Array2::from_shape_fn((r.len(), w), |(j, c)| scale * g_recon.sh[j][c]);
    let mut g_ctx_all = model.refine.backward(&c_re, g_res.view(), &mut grads.refine)?;

    // Motion compensation.
    let delta = displacements(&reference.plan, &motions)?;
    let g_delta: Vec<[f64; 7]> = (0..r.len())
        .map(|j| {
            let mut g = [0.0; 7];
            for a in 0..3 {
                g[a] = scale * g_recon.positions[j][a];
            }
            let q_pre = [0, 1, 2, 3].map(|a| r.rotations[j][a] + delta[j][3 + a]);
            let gq = normalize_quat_backward(q_pre, g_recon.rotations[j].map(|v| scale * v));
            g[3..].copy_from_slice(&gq);
            g
        })
        .collect();
    let g_motion_rows = displacements_backward(&reference.plan, &g_delta);
    let g_decoded = Array2::from_shape_fn((nc, 7), |(i, c)| g_motion_rows[i][c]);
    let mut g_yt = model.synthesis.backward(&c_sy, g_decoded.view(), &mut grads.synthesis)?;
    let mut g_zt = Array2::zeros(z_t.dim());

    // Rate.
    if lambda_size != 0.0 {
        let k = scale * lambda_size;
        let mut g_mu = Array2::zeros(params.mu.dim());
        let mut g_sigma = Array2::zeros(params.sigma.dim());
        for (e, gg) in py.iter().enumerate() {
            let (dy, dmu, dsigma) = gg.chain(k * rate_grad(gg.p, nc));
            let (i, c) = (e / latent, e % latent);
            g_yt[[i, c]] += dy;
            g_mu[[i, c]] = dmu;
            g_sigma[[i, c]] = dsigma;
        }
        for (e, &v) in z_t.iter().enumerate() {
            let (_, dx) =
                model.prior.likelihood_backward(v, e % latent, q, |p| k * rate_grad(p, nc), Some(&mut grads.prior));
            g_zt[[e / latent, e % latent]] += dx;
        }
        let (g_ctx_cp, g_zhat) =
            predict_params_backward(&model.fusion, &c_fu, &params, g_mu.view(), g_sigma.view(), &mut grads.fusion)?;
        g_zt += &g_zhat;
        for (row, &j) in idx.iter().enumerate() {
            let mut dst = g_ctx_all.row_mut(j);
            dst += &g_ctx_cp.row(row);
        }
    }
    spatial_temporal_context_backward(
        &model.grid,
        &model.pos_ctx,
        &model.attr_ctx,
        &c_ctx,
        g_ctx_all.view(),
        &mut grads.grid.table,
        &mut grads.pos_ctx,
        &mut grads.attr_ctx,
    )?;

    // Motion analysis, back to the features.
    g_yt += &model.hyper.backward(&c_hy, g_zt.view(), &mut grads.hyper)?;
    let g_motion = model.analysis.backward(&c_an, g_yt.view(), &mut grads.analysis)?;
    let g_diff = model.converter.backward(&c_conv, g_motion.view(), &mut grads.converter)?;
    model.feature.backward(&c_feat_cur, g_diff.view(), &mut grads.feature)?;
    model.feature.backward(&c_feat_ref, (-&g_diff).view(), &mut grads.feature)?;
    Ok(result)
}
