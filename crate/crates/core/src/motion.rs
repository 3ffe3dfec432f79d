//! Motion estimation in feature space and the transforms around the latent.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::nn::{freq_encode, DenseNet};

/// Frequency-encoded control-point attributes: position mapped to the unit
/// box, quaternion as stored.
pub fn feature_inputs(bbox: &Aabb, attributes: &[[f64; 7]], octaves: usize) -> Array2<f64> {
    let width = 14 * octaves;
    let mut out = Array2::zeros((attributes.len(), width));
    for (a, mut row) in attributes.iter().zip(out.rows_mut()) {
        let u = bbox.to_unit(&[a[0], a[1], a[2]]);
        let x = [u[0], u[1], u[2], a[3], a[4], a[5], a[6]];
        row.as_slice_mut().expect("standard layout").copy_from_slice(&freq_encode(&x, octaves));
    }
    out
}

pub fn extract_features(
    net: &DenseNet<f64>,
    bbox: &Aabb,
    attributes: &[[f64; 7]],
    octaves: usize,
) -> Result<Array2<f64>> {
    net.infer(feature_inputs(bbox, attributes, octaves).view())
}

/// `Converter(y_cur - y_ref)`.
pub fn motion_from_features(
    converter: &DenseNet<f64>,
    y_cur: &Array2<f64>,
    y_ref: &Array2<f64>,
) -> Result<Array2<f64>> {
    if y_cur.dim() != y_ref.dim() {
        return Err(Error::Dimension(format!(
            "current features {:?} vs reference features {:?}",
            y_cur.dim(),
            y_ref.dim()
        )));
    }
    let m = converter.infer((y_cur - y_ref).view())?;
    check_motion_width(&m)?;
    Ok(m)
}

pub fn analysis(net: &DenseNet<f64>, motion: &Array2<f64>) -> Result<Array2<f64>> {
    net.infer(motion.view())
}

pub fn synthesis(net: &DenseNet<f64>, y_hat: &Array2<f64>) -> Result<Array2<f64>> {
    let m = net.infer(y_hat.view())?;
    check_motion_width(&m)?;
    Ok(m)
}

fn check_motion_width(m: &Array2<f64>) -> Result<()> {
    if m.ncols() != 7 {
        return Err(Error::Dimension(format!("motion has {} columns, expected 7", m.ncols())));
    }
    Ok(())
}

pub fn rows_to_motions(m: &Array2<f64>) -> Vec<[f64; 7]> {
    m.rows().into_iter().map(|r| [r[0], r[1], r[2], r[3], r[4], r[5], r[6]]).collect()
}

/// Everything one P-frame produces on the motion path.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionPacket {
    pub motion: Array2<f64>,
    pub y: Array2<f64>,
    pub y_hat: Array2<f64>,
    pub z: Array2<f64>,
    pub z_hat: Array2<f64>,
    pub decoded: Array2<f64>,
}
