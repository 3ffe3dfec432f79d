//! Image quality metrics.

use super::raster::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_dims<T, U>(a: &Image<T>, b: &Image<U>) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Dimension(format!("images are {}x{} and {}x{}", a.width, a.height, b.width, b.height)));
    }
    Ok(())
}

pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_dims(a, b)?;
    let n = (a.pixels.len() * 3).max(1) as f64;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c].to_f64_lossy() - q[c].to_f64_lossy()).powi(2)))
        .sum();
    Ok(sum / n)
}

/// `10 · log10(1 / MSE)` for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 11×11 Gaussian window.
pub fn ssim_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = g[i] * g[j] / (s * s);
        }
    }
    w
}

struct WindowStats {
    mu_x: f64,
    mu_y: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn stats(
    x: &[f64],
    y: &[f64],
    width: usize,
    ox: usize,
    oy: usize,
    w: &[[f64; SSIM_WINDOW]; SSIM_WINDOW],
) -> WindowStats {
    let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, row) in w.iter().enumerate() {
        for (j, &wv) in row.iter().enumerate() {
            let p = (oy + i) * width + ox + j;
            let (a, b) = (x[p], y[p]);
            mx += wv * a;
            my += wv * b;
            exx += wv * a * a;
            eyy += wv * b * b;
            exy += wv * a * b;
        }
    }
    WindowStats { mu_x: mx, mu_y: my, sxx: exx - mx * mx, syy: eyy - my * my, sxy: exy - mx * my }
}

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

fn channel(img: &Image<impl Scalar>, c: usize) -> Vec<f64> {
    img.pixels.iter().map(|p| p[c].to_f64_lossy()).collect()
}

fn ssim_dims<T, U>(a: &Image<T>, b: &Image<U>) -> Result<()> {
    check_dims(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, images are {}x{}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Mean SSIM over all full windows and the three channels.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    ssim_dims(a, b)?;
    let w = ssim_window();
    let (nx, ny) = (a.width - SSIM_WINDOW + 1, a.height - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..3 {
        let (x, y) = (channel(a, c), channel(b, c));
        for oy in 0..ny {
            for ox in 0..nx {
                let s = stats(&x, &y, a.width, ox, oy, &w);
                total += ((2.0 * s.mu_x * s.mu_y + C1) * (2.0 * s.sxy + C2))
                    / ((s.mu_x * s.mu_x + s.mu_y * s.mu_y + C1) * (s.sxx + s.syy + C2));
            }
        }
    }
    Ok(total / (3 * nx * ny) as f64)
}

/// SSIM of `target` against `image` and its gradient with respect to
/// `image`.
pub fn ssim_grad(target: &Image<f64>, image: &Image<f64>) -> Result<(f64, Vec<[f64; 3]>)> {
    ssim_dims(target, image)?;
    let w = ssim_window();
    let width = image.width;
    let (nx, ny) = (image.width - SSIM_WINDOW + 1, image.height - SSIM_WINDOW + 1);
    let scale = 1.0 / (3 * nx * ny) as f64;
    let mut grad = vec![[0.0; 3]; image.pixels.len()];
    let mut total = 0.0;
    for c in 0..3 {
        let (x, y) = (channel(target, c), channel(image, c));
        for oy in 0..ny {
            for ox in 0..nx {
                let s = stats(&x, &y, width, ox, oy, &w);
                let a1 = 2.0 * s.mu_x * s.mu_y + C1;
                let a2 = 2.0 * s.sxy + C2;
                let b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + C1;
                let b2 = s.sxx + s.syy + C2;
                let v = a1 * a2 / (b1 * b2);
                total += v;
                // v as a function of mu_y, E[y²] and E[xy]
                let d_mu = 2.0 * s.mu_x * (a2 - a1) / (b1 * b2) - v * 2.0 * s.mu_y * (1.0 / b1 - 1.0 / b2);
                let d_eyy = -v / b2;
                let d_exy = 2.0 * a1 / (b1 * b2);
                for (i, row) in w.iter().enumerate() {
                    for (j, &wv) in row.iter().enumerate() {
                        let p = (oy + i) * width + ox + j;
                        grad[p][c] += scale * wv * (d_mu + 2.0 * y[p] * d_eyy + x[p] * d_exy);
                    }
                }
            }
        }
    }
    Ok((total * scale, grad))
}

/// Mean absolute difference over pixels and channels.
pub fn l1(a: &Image<f64>, b: &Image<f64>) -> Result<f64> {
    check_dims(a, b)?;
    let n = (a.pixels.len() * 3).max(1) as f64;
    Ok(a.pixels.iter().zip(&b.pixels).flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs())).sum::<f64>() / n)
}

/// Gradient of [`l1`] with respect to `image`.
pub fn l1_grad(target: &Image<f64>, image: &Image<f64>) -> Result<Vec<[f64; 3]>> {
    check_dims(target, image)?;
    let n = (image.pixels.len() * 3).max(1) as f64;
    Ok(image
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(p, q)| [0, 1, 2].map(|c| (p[c] - q[c]).signum() * if p[c] == q[c] { 0.0 } else { 1.0 } / n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image<f64> {
        Image { width: w, height: h, pixels: (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect() }
    }

    fn constant(w: usize, h: usize, v: f64) -> Image<f64> {
        Image { width: w, height: h, pixels: vec![[v; 3]; w * h] }
    }

    #[test]
    fn psnr_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(8, 8, &mut rng);
        let b = random(8, 8, &mut rng);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&constant(4, 4, 0.0), &constant(4, 4, 0.5)).unwrap() - 6.0206).abs() < 1e-4);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(psnr(&a, &constant(4, 4, 0.0)).is_err());
    }

    /// Independent per-pixel implementation: window statistics written out
    /// as explicit sums with a separately built kernel.
    fn ssim_oracle(a: &Image<f64>, b: &Image<f64>) -> f64 {
        let g: Vec<f64> = (-5i32..=5).map(|i| (-(i * i) as f64 / 4.5).exp()).collect();
        let gs: f64 = g.iter().sum();
        let (c1, c2) = (0.0001, 0.0009);
        let mut acc = 0.0;
        let mut count = 0;
        for c in 0..3 {
            for oy in 0..=a.height - 11 {
                for ox in 0..=a.width - 11 {
                    let mut m = [0.0; 5];
                    for i in 0..11 {
                        for j in 0..11 {
                            let wv = g[i] * g[j] / (gs * gs);
                            let x = a.get(ox + j, oy + i)[c];
                            let y = b.get(ox + j, oy + i)[c];
                            m[0] += wv * x;
                            m[1] += wv * y;
                            m[2] += wv * x * x;
                            m[3] += wv * y * y;
                            m[4] += wv * x * y;
                        }
                    }
                    let (vx, vy, cxy) = (m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1]);
                    acc += (2.0 * m[0] * m[1] + c1) * (2.0 * cxy + c2)
                        / ((m[0] * m[0] + m[1] * m[1] + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(16, 16, &mut rng);
        let b = random(16, 16, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg = Image { pixels: a.pixels.iter().map(|p| p.map(|v| 1.0 - v)).collect(), ..a.clone() };
        assert!(ssim(&a, &neg).unwrap() < 1.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-14);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-9);
        assert!((ssim(&a, &b.cast::<f32>().cast::<f64>()).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-6);
        assert!(ssim(&random(10, 16, &mut rng), &random(10, 16, &mut rng)).is_err());
    }

    #[test]
    fn ssim_and_l1_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let t = random(13, 12, &mut rng);
            let img = random(13, 12, &mut rng);
            let (v, g) = ssim_grad(&t, &img).unwrap();
            assert!((v - ssim(&t, &img).unwrap()).abs() < 1e-12);
            let lg = l1_grad(&t, &img).unwrap();
            let h = 1e-6;
            for _ in 0..20 {
                let p = rng.gen_range(0..img.pixels.len());
                let c = rng.gen_range(0..3);
                let (mut up, mut dn) = (img.clone(), img.clone());
                up.pixels[p][c] += h;
                dn.pixels[p][c] -= h;
                let num = (ssim(&t, &up).unwrap() - ssim(&t, &dn).unwrap()) / (2.0 * h);
                let rel = (num - g[p][c]).abs() / num.abs().max(g[p][c].abs()).max(1e-6);
                assert!(rel < 1e-4, "ssim: {num} vs {}", g[p][c]);
                let num = (l1(&t, &up).unwrap() - l1(&t, &dn).unwrap()) / (2.0 * h);
                assert!((num - lg[p][c]).abs() < 1e-8);
            }
        }
    }
}
