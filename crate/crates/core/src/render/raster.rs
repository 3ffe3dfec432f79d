//! Naive splatting rasterizer.
//!
//! Gaussians are projected with the EWA approximation, sorted by view depth
//! (ties by index) and blended front to back per pixel. Pixel `(x, y)`
//! samples image coordinate `(x, y)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::camera::Camera;
use super::sh::{sh_basis, sh_eval_raw};
use crate::error::{Error, Result};
use crate::frame::GaussianFrame;
use crate::scalar::Scalar;

pub const NEAR_PLANE: f64 = 0.01;
/// Added to the diagonal of every projected covariance, in pixels².
pub const COV_BLUR: f64 = 0.3;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const ALPHA_MAX: f64 = 0.99;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Footprints end at this many standard deviations.
pub const CUTOFF_SIGMA: f64 = 3.0;
/// Largest image the differentiable path accepts per side.
pub const MAX_DIFF_SIZE: usize = 64;

/// RGB image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[T; 3]>,
}

impl<T: Scalar> Image<T> {
    pub fn black(width: usize, height: usize) -> Self {
        Image { width, height, pixels: vec![[T::zero(); 3]; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(crate::scalar::cast)).collect(),
        }
    }

    pub fn clamped(&self) -> Self {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|v| v.max(T::zero()).min(T::one()))).collect(),
        }
    }

    /// Binary PPM with 8-bit channels.
    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            for &v in p {
                let v = v.to_f64_lossy().clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

/// One projected Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat<T> {
    pub index: usize,
    pub depth: T,
    pub mean: [T; 2],
    /// Inverse 2D covariance `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [T; 3],
    pub radius: T,
    pub opacity: T,
    pub color: [T; 3],
    /// Colour before the clamp at zero.
    pub raw_color: [T; 3],
    /// Derivative of `mean` with respect to the world position.
    pub mean_jacobian: [[T; 3]; 2],
    pub view_dir: [T; 3],
}

pub fn quat_to_matrix<T: Scalar>(q: [T; 4]) -> [[T; 3]; 3] {
    let n = q.iter().map(|&v| v * v).sum::<T>().sqrt();
    let [w, x, y, z] = if n > T::zero() { q.map(|v| v / n) } else { [T::one(), T::zero(), T::zero(), T::zero()] };
    let two = T::lit(2.0);
    let one = T::one();
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

fn project_one<T: Scalar>(
    frame: &GaussianFrame<T>,
    geometry: &GaussianFrame<T>,
    i: usize,
    cam: &Camera,
) -> Option<Splat<T>> {
    let l = T::lit;
    let w: [[T; 3]; 3] = cam.rotation.map(|r| r.map(l));
    let t: [T; 3] = cam.translation.map(l);
    let to_cam = |p: &[T; 3]| [0, 1, 2].map(|r| w[r][0] * p[0] + w[r][1] * p[1] + w[r][2] * p[2] + t[r]);
    let pc = to_cam(&frame.positions[i]);
    let gc = to_cam(&geometry.positions[i]);
    if pc[2] <= l(NEAR_PLANE) || gc[2] <= l(NEAR_PLANE) {
        return None;
    }
    let (fx, fy) = (l(cam.fx), l(cam.fy));
    let mean = [fx * pc[0] / pc[2] + l(cam.cx), fy * pc[1] / pc[2] + l(cam.cy)];
    let jac = |c: [T; 3]| {
        [[fx / c[2], T::zero(), -fx * c[0] / (c[2] * c[2])], [T::zero(), fy / c[2], -fy * c[1] / (c[2] * c[2])]]
    };
    let jw =
        |j: [[T; 3]; 2]| [0, 1].map(|r| [0, 1, 2].map(|c| j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c]));
    let mean_jacobian = jw(jac(pc));
    let tm = jw(jac(gc));

    let rot = quat_to_matrix(geometry.rotations[i]);
    let s = geometry.scales[i];
    let m = [0, 1, 2].map(|r| [0, 1, 2].map(|c| rot[r][c] * s[c]));
    let sigma = [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[r][0] * m[c][0] + m[r][1] * m[c][1] + m[r][2] * m[c][2]));
    let mut cov = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = T::zero();
            for r in 0..3 {
                for c in 0..3 {
                    acc += tm[a][r] * sigma[r][c] * tm[b][c];
                }
            }
            cov[a][b] = acc;
        }
    }
    let (a, b, c) = (cov[0][0] + l(COV_BLUR), cov[0][1], cov[1][1] + l(COV_BLUR));
    let det = a * c - b * b;
    if det.is_nan() || det <= T::zero() {
        return None;
    }
    let mid = T::lit(0.5) * (a + c);
    let lambda = mid + (mid * mid - det).max(T::zero()).sqrt();
    let radius = l(CUTOFF_SIGMA) * lambda.sqrt();

    let center: [T; 3] = cam.center().map(l);
    let g = geometry.positions[i];
    let d = [g[0] - center[0], g[1] - center[1], g[2] - center[2]];
    let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let view_dir = if dn > T::zero() { d.map(|v| v / dn) } else { [T::zero(), T::zero(), T::one()] };
    let raw_color = sh_eval_raw(&frame.sh[i], view_dir);
    Some(Splat {
        index: i,
        depth: gc[2],
        mean,
        conic: [c / det, -b / det, a / det],
        radius,
        opacity: frame.opacities[i],
        color: raw_color.map(|v| v.max(T::zero())),
        raw_color,
        mean_jacobian,
        view_dir,
    })
}

fn sort_splats<T: Scalar>(splats: &mut [Splat<T>]) {
    splats
        .sort_by(|p, q| p.depth.partial_cmp(&q.depth).unwrap_or(std::cmp::Ordering::Equal).then(p.index.cmp(&q.index)));
}

/// Projects every visible Gaussian and sorts front to back.
pub fn project<T: Scalar>(frame: &GaussianFrame<T>, cam: &Camera) -> Vec<Splat<T>> {
    project_frozen(frame, frame, cam)
}

/// Like [`project`], but covariance, depth order and view direction come
/// from `geometry`; means, opacities and colours from `frame`.
pub fn project_frozen<T: Scalar>(frame: &GaussianFrame<T>, geometry: &GaussianFrame<T>, cam: &Camera) -> Vec<Splat<T>> {
    let mut splats: Vec<Splat<T>> = (0..frame.len()).filter_map(|i| project_one(frame, geometry, i, cam)).collect();
    sort_splats(&mut splats);
    splats
}

/// Footprint of a splat clipped to the image, as inclusive pixel ranges.
fn footprint<T: Scalar>(s: &Splat<T>, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    let r = s.radius.to_f64_lossy();
    let (mx, my) = (s.mean[0].to_f64_lossy(), s.mean[1].to_f64_lossy());
    let x0 = (mx - r).ceil().max(0.0);
    let x1 = (mx + r).floor().min(width as f64 - 1.0);
    let y0 = (my - r).ceil().max(0.0);
    let y1 = (my + r).floor().min(height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
}

/// `(alpha, gaussian)` of splat `s` at pixel `(x, y)`, or `None` outside
/// the cut-offs.
#[inline]
fn splat_alpha<T: Scalar>(s: &Splat<T>, x: usize, y: usize) -> Option<(T, T)> {
    let dx = T::lit(x as f64) - s.mean[0];
    let dy = T::lit(y as f64) - s.mean[1];
    let [a, b, c] = s.conic;
    let m = a * dx * dx + T::lit(2.0) * b * dx * dy + c * dy * dy;
    if m > T::lit(CUTOFF_SIGMA * CUTOFF_SIGMA) {
        return None;
    }
    let g = (T::lit(-0.5) * m).exp();
    let alpha = (s.opacity * g).min(T::lit(ALPHA_MAX));
    (alpha >= T::lit(ALPHA_MIN)).then_some((alpha, g))
}

/// Front-to-back blending of already sorted splats over a black
/// background, without clamping.
pub fn rasterize<T: Scalar>(splats: &[Splat<T>], width: usize, height: usize) -> Image<T> {
    blend(splats, width, height, |_, _, _, _| {}).0
}

fn blend<T: Scalar>(
    splats: &[Splat<T>],
    width: usize,
    height: usize,
    mut record: impl FnMut(usize, usize, T, T),
) -> (Image<T>, Vec<T>) {
    let mut img = Image::black(width, height);
    let mut trans = vec![T::one(); width * height];
    let mut done = vec![false; width * height];
    for (k, s) in splats.iter().enumerate() {
        let Some((x0, x1, y0, y1)) = footprint(s, width, height) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = y * width + x;
                if done[p] {
                    continue;
                }
                let Some((alpha, g)) = splat_alpha(s, x, y) else {
                    continue;
                };
                let t = trans[p];
                let next = t * (T::one() - alpha);
                if next < T::lit(TRANSMITTANCE_MIN) {
                    done[p] = true;
                    continue;
                }
                for c in 0..3 {
                    img.pixels[p][c] += s.color[c] * alpha * t;
                }
                trans[p] = next;
                record(p, k, alpha, g);
            }
        }
    }
    (img, trans)
}

/// Renders `frame` from `cam`, clamped to `[0, 1]`.
pub fn render<T: Scalar>(frame: &GaussianFrame<T>, cam: &Camera) -> Image<T> {
    rasterize(&project(frame, cam), cam.width, cam.height).clamped()
}

/// Forward pass of the differentiable renderer.
#[derive(Clone, Debug)]
pub struct RenderTrace {
    pub splats: Vec<Splat<f64>>,
    /// Unclamped image.
    pub raw: Image<f64>,
    /// Per pixel, the contributing splats in blending order with their
    /// `(alpha, gaussian)` values.
    contributions: Vec<Vec<(u32, f64, f64)>>,
    final_transmittance: Vec<f64>,
}

impl RenderTrace {
    pub fn image(&self) -> Image<f64> {
        self.raw.clamped()
    }
}

/// Gradients of the differentiable renderer. Covariances and view
/// directions are treated as constants.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGrad {
    pub positions: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
    pub sh: Vec<[f64; 48]>,
}

impl RenderGrad {
    pub fn zeros(n: usize) -> Self {
        RenderGrad { positions: vec![[0.0; 3]; n], opacities: vec![0.0; n], sh: vec![[0.0; 48]; n] }
    }
}

fn check_diff_size(cam: &Camera) -> Result<()> {
    if cam.width > MAX_DIFF_SIZE || cam.height > MAX_DIFF_SIZE {
        return Err(Error::InvalidArgument(format!(
            "differentiable rendering is limited to {MAX_DIFF_SIZE}x{MAX_DIFF_SIZE}, camera is {}x{}",
            cam.width, cam.height
        )));
    }
    Ok(())
}

pub fn render_traced(frame: &GaussianFrame<f64>, cam: &Camera) -> Result<RenderTrace> {
    render_traced_frozen(frame, frame, cam)
}

/// Differentiable render with covariances, order and view directions taken
/// from `geometry`.
pub fn render_traced_frozen(
    frame: &GaussianFrame<f64>,
    geometry: &GaussianFrame<f64>,
    cam: &Camera,
) -> Result<RenderTrace> {
    check_diff_size(cam)?;
    let splats = project_frozen(frame, geometry, cam);
    let mut contributions = vec![Vec::new(); cam.width * cam.height];
    let (raw, final_transmittance) = blend(&splats, cam.width, cam.height, |p, k, a, g| {
        contributions[p].push((k as u32, a, g));
    });
    Ok(RenderTrace { splats, raw, contributions, final_transmittance })
}

/// Backpropagates `grad` (with respect to the clamped image) into the frame.
pub fn render_backward(trace: &RenderTrace, frame_len: usize, grad: &[[f64; 3]]) -> Result<RenderGrad> {
    if grad.len() != trace.raw.pixels.len() {
        return Err(Error::Dimension(format!(
            "{} gradient pixels for a {}-pixel image",
            grad.len(),
            trace.raw.pixels.len()
        )));
    }
    let width = trace.raw.width;
    let mut out = RenderGrad::zeros(frame_len);
    let mut d_color = vec![[0.0f64; 3]; trace.splats.len()];
    let mut d_mean = vec![[0.0f64; 2]; trace.splats.len()];
    for (p, list) in trace.contributions.iter().enumerate() {
        let raw = trace.raw.pixels[p];
        let g = [0, 1, 2].map(|c| if (0.0..=1.0).contains(&raw[c]) { grad[p][c] } else { 0.0 });
        if g == [0.0; 3] {
            continue;
        }
        let (x, y) = ((p % width) as f64, (p / width) as f64);
        let mut t = trace.final_transmittance[p];
        let mut behind = [0.0f64; 3];
        for &(k, alpha, gauss) in list.iter().rev() {
            let s = &trace.splats[k as usize];
            t /= 1.0 - alpha;
            let mut d_alpha = 0.0;
            for c in 0..3 {
                d_color[k as usize][c] += g[c] * alpha * t;
                d_alpha += g[c] * t * (s.color[c] - behind[c]);
                behind[c] = s.color[c] * alpha + (1.0 - alpha) * behind[c];
            }
            if s.opacity * gauss > ALPHA_MAX {
                continue;
            }
            out.opacities[s.index] += d_alpha * gauss;
            let (dx, dy) = (x - s.mean[0], y - s.mean[1]);
            let [a, b, cc] = s.conic;
            let dm = &mut d_mean[k as usize];
            dm[0] += d_alpha * alpha * (a * dx + b * dy);
            dm[1] += d_alpha * alpha * (b * dx + cc * dy);
        }
    }
    for (k, s) in trace.splats.iter().enumerate() {
        let j = &s.mean_jacobian;
        for a in 0..3 {
            out.positions[s.index][a] += d_mean[k][0] * j[0][a] + d_mean[k][1] * j[1][a];
        }
        let basis = sh_basis(s.view_dir);
        for c in 0..3 {
            if s.raw_color[c] <= 0.0 {
                continue;
            }
            for (kk, &bv) in basis.iter().enumerate() {
                out.sh[s.index][3 * kk + c] += d_color[k][c] * bv;
            }
        }
    }
    Ok(out)
}
