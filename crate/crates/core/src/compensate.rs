//! Spreading control-point motion to the Gaussians around them, and the
//! bit-free colour refinement.

use ndarray::ArrayView2;

use crate::config::{CompensationMode, RefineTarget};
use crate::error::{Error, Result};
use crate::frame::GaussianFrame;
use crate::geometry::NeighborMap;
use crate::scalar::Scalar;

/// Neighbour lists of every control point with one weight per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct CompensationPlan {
    pub neighbors: NeighborMap,
    /// Aligned with `neighbors.indices`.
    pub weights: Vec<f64>,
    pub mode: CompensationMode,
    pub gaussians: usize,
}

impl CompensationPlan {
    pub fn control_points(&self) -> usize {
        self.neighbors.len()
    }

    pub fn weights_of(&self, cp: usize) -> &[f64] {
        let k = self.neighbors.k;
        &self.weights[cp * k..(cp + 1) * k]
    }
}

/// Softmax of `-scale · d` over each control point's neighbours, or over the
/// control points that list each Gaussian.
pub fn compensation_weights(
    neighbors: NeighborMap,
    gaussians: usize,
    mode: CompensationMode,
    distance_scale: f64,
) -> CompensationPlan {
    let k = neighbors.k;
    let raw: Vec<f64> = neighbors.distances.iter().map(|d| (-d * distance_scale).exp()).collect();
    let mut weights = vec![0.0; raw.len()];
    match mode {
        CompensationMode::PerControlPoint => {
            for (row_w, row_r) in weights.chunks_mut(k.max(1)).zip(raw.chunks(k.max(1))) {
                let sum: f64 = row_r.iter().sum();
                for (w, r) in row_w.iter_mut().zip(row_r) {
                    *w = r / sum;
                }
            }
        }
        CompensationMode::PerGaussian => {
            let mut sums = vec![0.0; gaussians];
            for (&j, r) in neighbors.indices.iter().zip(&raw) {
                sums[j] += r;
            }
            for ((w, &j), r) in weights.iter_mut().zip(&neighbors.indices).zip(&raw) {
                *w = r / sums[j];
            }
        }
    }
    CompensationPlan { neighbors, weights, mode, gaussians }
}

/// `Δ_j = Σ_i w_ij · m_i`, accumulated in control-point order.
pub fn displacements<T: Scalar>(plan: &CompensationPlan, motions: &[[T; 7]]) -> Result<Vec<[T; 7]>> {
    if motions.len() != plan.control_points() {
        return Err(Error::Dimension(format!(
            "{} motions for {} control points",
            motions.len(),
            plan.control_points()
        )));
    }
    let mut delta = vec![[T::zero(); 7]; plan.gaussians];
    for (i, m) in motions.iter().enumerate() {
        for (&j, &w) in plan.neighbors.neighbors(i).iter().zip(plan.weights_of(i)) {
            let w = T::lit(w);
            for c in 0..7 {
                delta[j][c] += w * m[c];
            }
        }
    }
    Ok(delta)
}

/// Adjoint of [`displacements`]: `dL/dm_i = Σ_j w_ij · dL/dΔ_j`.
pub fn displacements_backward(plan: &CompensationPlan, grad_delta: &[[f64; 7]]) -> Vec<[f64; 7]> {
    (0..plan.control_points())
        .map(|i| {
            let mut g = [0.0; 7];
            for (&j, &w) in plan.neighbors.neighbors(i).iter().zip(plan.weights_of(i)) {
                for c in 0..7 {
                    g[c] += w * grad_delta[j][c];
                }
            }
            g
        })
        .collect()
}

/// Adds decoded motion to the reference geometry. Quaternions are offset and
/// renormalized; scales, opacities and colours are copied.
pub fn apply_motion<T: Scalar>(
    reference: &GaussianFrame<T>,
    plan: &CompensationPlan,
    motions: &[[T; 7]],
) -> Result<GaussianFrame<T>> {
    if plan.gaussians != reference.len() {
        return Err(Error::Dimension(format!(
            "plan covers {} Gaussians, frame has {}",
            plan.gaussians,
            reference.len()
        )));
    }
    if let Some(i) = motions.iter().position(|m| m.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("motion of control point {i}")));
    }
    let delta = displacements(plan, motions)?;
    let mut out = reference.clone();
    for (j, d) in delta.iter().enumerate() {
        for a in 0..3 {
            out.positions[j][a] += d[a];
        }
        let q = &mut out.rotations[j];
        for a in 0..4 {
            q[a] += d[3 + a];
        }
        *q = normalize_quat(*q);
    }
    Ok(out)
}

#[inline]
pub fn normalize_quat<T: Scalar>(q: [T; 4]) -> [T; 4] {
    let n = q.iter().map(|&v| v * v).sum::<T>().sqrt();
    if n > T::zero() {
        q.map(|v| v / n)
    } else {
        [T::one(), T::zero(), T::zero(), T::zero()]
    }
}

/// Gradient through `q / |q|` given the gradient at the normalized output.
pub fn normalize_quat_backward(q: [f64; 4], grad: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return [0.0; 4];
    }
    let u = q.map(|v| v / n);
    let dot: f64 = u.iter().zip(&grad).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|a| (grad[a] - u[a] * dot) / n)
}

/// Adds per-Gaussian colour residuals (`N × target.width()`) to the
/// leading SH coefficients.
pub fn refine_colors<T: Scalar>(
    frame: &GaussianFrame<T>,
    residuals: ArrayView2<T>,
    target: RefineTarget,
) -> Result<GaussianFrame<T>> {
    let w = target.width();
    if residuals.dim() != (frame.len(), w) {
        return Err(Error::Dimension(format!("residuals {:?}, expected ({}, {w})", residuals.dim(), frame.len())));
    }
    let mut out = frame.clone();
    for (sh, r) in out.sh.iter_mut().zip(residuals.rows()) {
        for (c, &v) in sh.iter_mut().zip(r.iter()) {
            *c += v;
        }
    }
    Ok(out)
}
