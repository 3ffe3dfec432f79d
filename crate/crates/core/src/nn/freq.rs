use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

/// Emits `sin(2^l π x)`, `cos(2^l π x)` for every input scalar and octave
/// `l < octaves`, input-major then octave then `(sin, cos)`.
pub fn freq_encode<T: Scalar>(x: &[T], octaves: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * x.len() * octaves);
    for &v in x {
        let mut w = T::PI();
        for _ in 0..octaves {
            let a = w * v;
            out.push(a.sin());
            out.push(a.cos());
            w = w + w;
        }
    }
    out
}

pub fn freq_encode_rows<T: Scalar>(x: ArrayView2<T>, octaves: usize) -> Array2<T> {
    let d = x.ncols();
    let mut out = Array2::zeros((x.nrows(), 2 * d * octaves));
    for (row, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
        let enc = freq_encode(&row.to_vec(), octaves);
        dst.as_slice_mut().expect("standard layout").copy_from_slice(&enc);
    }
    out
}

/// Gradient of a loss with respect to the encoder input, given the gradient
/// with respect to its output.
pub fn freq_encode_backward<T: Scalar>(x: &[T], octaves: usize, grad_out: &[T]) -> Vec<T> {
    assert_eq!(grad_out.len(), 2 * x.len() * octaves);
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut w = T::PI();
            let mut acc = T::zero();
            for l in 0..octaves {
                let a = w * v;
                let gs = grad_out[2 * (i * octaves + l)];
                let gc = grad_out[2 * (i * octaves + l) + 1];
                acc += w * (a.cos() * gs - a.sin() * gc);
                w = w + w;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let e = freq_encode(&[0.0f64], 2);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0]);
        let e = freq_encode(&[0.5f64], 1);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        assert_eq!(freq_encode(&[0.1f64; 7], 6).len(), 84);
    }

    #[test]
    fn ordering_is_input_then_octave() {
        let e = freq_encode(&[0.25f64, 0.0], 2);
        let pi = std::f64::consts::PI;
        let expect = [(0.25 * pi).sin(), (0.25 * pi).cos(), (0.5 * pi).sin(), (0.5 * pi).cos(), 0.0, 1.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let x = [0.13f64, -0.71, 0.4];
        let g: Vec<f64> = (0..36).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1).collect();
        let analytic = freq_encode_backward(&x, 6, &g);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let f = |v: &[f64]| freq_encode(v, 6).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((num - analytic[i]).abs() / num.abs().max(1e-6) < 1e-6);
        }
    }
}
