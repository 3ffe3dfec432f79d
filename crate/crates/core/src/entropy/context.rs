//! Spatial-temporal context from the decoded reference frame, and the
//! fusion of context and hyper-latent into Gaussian parameters.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::gaussian::{scale_from_raw, scale_from_raw_grad};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::nn::{DenseCache, DenseNet, HashCache, HashGrid};

const CHUNK: usize = 256;

/// Hash-grid query points and attribute-branch inputs: positions mapped to
/// the unit box, followed by the raw quaternion.
pub fn context_inputs(bbox: &Aabb, positions: &[[f64; 3]], rotations: &[[f64; 4]]) -> (Vec<[f64; 3]>, Array2<f64>) {
    let unit: Vec<[f64; 3]> = positions.iter().map(|p| bbox.to_unit(p)).collect();
    let attr =
        Array2::from_shape_fn((positions.len(), 7), |(i, c)| if c < 3 { unit[i][c] } else { rotations[i][c - 3] });
    (unit, attr)
}

/// `pos(hashgrid(p)) + attr(p, q)` per row.
pub fn spatial_temporal_context(
    grid: &HashGrid<f64>,
    pos_net: &DenseNet<f64>,
    attr_net: &DenseNet<f64>,
    bbox: &Aabb,
    positions: &[[f64; 3]],
    rotations: &[[f64; 4]],
) -> Result<Array2<f64>> {
    let n = positions.len();
    let mut out = Array2::zeros((n, pos_net.output_dim()));
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let (unit, attr) = context_inputs(bbox, &positions[start..end], &rotations[start..end]);
        let h = grid.infer_batch(&unit);
        let mut c = pos_net.infer(h.view())?;
        c += &attr_net.infer(attr.view())?;
        out.slice_mut(s![start..end, ..]).assign(&c);
    }
    Ok(out)
}

pub struct ContextCache {
    hash: HashCache<f64>,
    pos: DenseCache<f64>,
    attr: DenseCache<f64>,
}

pub fn spatial_temporal_context_forward(
    grid: &HashGrid<f64>,
    pos_net: &DenseNet<f64>,
    attr_net: &DenseNet<f64>,
    bbox: &Aabb,
    positions: &[[f64; 3]],
    rotations: &[[f64; 4]],
) -> Result<(Array2<f64>, ContextCache)> {
    let (unit, attr) = context_inputs(bbox, positions, rotations);
    let (h, hash) = grid.query_batch(&unit);
    let (mut c, pos) = pos_net.forward(h.view())?;
    let (a, attr) = attr_net.forward(attr.view())?;
    c += &a;
    Ok((c, ContextCache { hash, pos, attr }))
}

/// Accumulates gradients of the three context components.
#[allow(clippy::too_many_arguments)]
pub fn spatial_temporal_context_backward(
    grid: &HashGrid<f64>,
    pos_net: &DenseNet<f64>,
    attr_net: &DenseNet<f64>,
    cache: &ContextCache,
    grad: ArrayView2<f64>,
    grid_grad: &mut [f64],
    pos_grad: &mut DenseNet<f64>,
    attr_grad: &mut DenseNet<f64>,
) -> Result<()> {
    let gh = pos_net.backward(&cache.pos, grad, pos_grad)?;
    grid.backward(&cache.hash, gh.view(), grid_grad);
    attr_net.backward(&cache.attr, grad, attr_grad)?;
    Ok(())
}

/// Per-element mean and scale of the latent distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyParams {
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
    /// Pre-activation scales, kept for the backward pass.
    pub raw_scale: Array2<f64>,
}

fn fusion_input<'a>(ctx: ArrayView2<'a, f64>, z_hat: ArrayView2<'a, f64>) -> Result<Array2<f64>> {
    if ctx.nrows() != z_hat.nrows() {
        return Err(Error::Dimension(format!("{} context rows for {} hyper-latent rows", ctx.nrows(), z_hat.nrows())));
    }
    Ok(concatenate(Axis(1), &[ctx, z_hat]).expect("row counts checked"))
}

fn split_params(out: Array2<f64>, latent: usize) -> Result<EntropyParams> {
    if out.ncols() != 2 * latent {
        return Err(Error::Dimension(format!("fusion emits {} values, expected {}", out.ncols(), 2 * latent)));
    }
    let mu = out.slice(s![.., ..latent]).to_owned();
    let raw_scale = out.slice(s![.., latent..]).to_owned();
    let sigma = raw_scale.mapv(scale_from_raw);
    Ok(EntropyParams { mu, sigma, raw_scale })
}

pub fn predict_params<'a>(
    fusion: &DenseNet<f64>,
    ctx: ArrayView2<'a, f64>,
    z_hat: ArrayView2<'a, f64>,
) -> Result<EntropyParams> {
    let x = fusion_input(ctx, z_hat)?;
    split_params(fusion.infer(x.view())?, z_hat.ncols())
}

pub fn predict_params_forward<'a>(
    fusion: &DenseNet<f64>,
    ctx: ArrayView2<'a, f64>,
    z_hat: ArrayView2<'a, f64>,
) -> Result<(EntropyParams, DenseCache<f64>)> {
    let x = fusion_input(ctx, z_hat)?;
    let (out, cache) = fusion.forward(x.view())?;
    Ok((split_params(out, z_hat.ncols())?, cache))
}

/// Returns `(dL/dctx, dL/dz_hat)` given gradients at `mu` and `sigma`.
pub fn predict_params_backward(
    fusion: &DenseNet<f64>,
    cache: &DenseCache<f64>,
    params: &EntropyParams,
    grad_mu: ArrayView2<f64>,
    grad_sigma: ArrayView2<f64>,
    fusion_grad: &mut DenseNet<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let latent = params.mu.ncols();
    let mut g = Array2::zeros((params.mu.nrows(), 2 * latent));
    g.slice_mut(s![.., ..latent]).assign(&grad_mu);
    let mut gs = g.slice_mut(s![.., latent..]);
    ndarray::Zip::from(&mut gs)
        .and(&grad_sigma)
        .and(&params.raw_scale)
        .for_each(|d, &gsig, &r| *d = gsig * scale_from_raw_grad(r));
    let gin = fusion.backward(cache, g.view(), fusion_grad)?;
    let ctx_dim = gin.ncols() - latent;
    Ok((gin.slice(s![.., ..ctx_dim]).to_owned(), gin.slice(s![.., ctx_dim..]).to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::SIGMA_MIN;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parts() -> (HashGrid<f64>, DenseNet<f64>, DenseNet<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = HashGrid::new(4, 2, 10, 4, &mut rng);
        let pos = DenseNet::new(&[8, 16, 12], Activation::LeakyRelu, &mut rng);
        let attr = DenseNet::new(&[7, 16, 12], Activation::LeakyRelu, &mut rng);
        (grid, pos, attr)
    }

    #[test]
    fn identical_inputs_identical_contexts() {
        let (grid, pos, attr) = parts();
        let b = Aabb::unit();
        let p = [[0.3, 0.2, 0.9], [0.3, 0.2, 0.9], [0.1, 0.5, 0.5]];
        let q = [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let c = spatial_temporal_context(&grid, &pos, &attr, &b, &p, &q).unwrap();
        assert_eq!(c.row(0), c.row(1));
        assert_eq!(c.ncols(), 12);
        let (cf, _) = spatial_temporal_context_forward(&grid, &pos, &attr, &b, &p, &q).unwrap();
        assert_eq!(c, cf);
    }

    #[test]
    fn zeroed_grid_leaves_attribute_branch() {
        let (mut grid, pos, attr) = parts();
        grid.table.fill(0.0);
        let b = Aabb::unit();
        let p = [[0.3, 0.2, 0.9], [0.7, 0.1, 0.4]];
        let q = [[1.0, 0.0, 0.0, 0.0], [0.6, 0.8, 0.0, 0.0]];
        let c = spatial_temporal_context(&grid, &pos, &attr, &b, &p, &q).unwrap();
        let bias = pos.infer(Array2::zeros((2, 8)).view()).unwrap();
        let (_, a) = context_inputs(&b, &p, &q);
        let expect = bias + attr.infer(a.view()).unwrap();
        for (x, y) in c.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn params_shape_and_scale_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fusion = DenseNet::new(&[12 + 4, 8, 8], Activation::LeakyRelu, &mut rng);
        let ctx = Array2::from_elem((3, 12), 0.1);
        let z = Array2::from_elem((3, 4), 1.0);
        let p = predict_params(&fusion, ctx.view(), z.view()).unwrap();
        assert_eq!(p.mu.dim(), (3, 4));
        assert_eq!(p.sigma.dim(), (3, 4));
        fusion.layers[1].bias.fill(-100.0);
        fusion.layers[1].weight.fill(0.0);
        let p = predict_params(&fusion, ctx.view(), z.view()).unwrap();
        assert!(p.sigma.iter().all(|&s| s == SIGMA_MIN));
        assert_eq!(p, predict_params(&fusion, ctx.view(), z.view()).unwrap());
    }
}
