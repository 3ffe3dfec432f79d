//! Real spherical harmonics up to degree 3.

use crate::scalar::Scalar;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// The 16 basis values at unit direction `d`.
pub fn sh_basis<T: Scalar>(d: [T; 3]) -> [T; 16] {
    let c = T::lit;
    let [x, y, z] = d;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        c(SH_C0),
        -c(SH_C1) * y,
        c(SH_C1) * z,
        -c(SH_C1) * x,
        c(SH_C2[0]) * xy,
        c(SH_C2[1]) * yz,
        c(SH_C2[2]) * (c(2.0) * zz - xx - yy),
        c(SH_C2[3]) * xz,
        c(SH_C2[4]) * (xx - yy),
        c(SH_C3[0]) * y * (c(3.0) * xx - yy),
        c(SH_C3[1]) * xy * z,
        c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy),
        c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy),
        c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy),
        c(SH_C3[5]) * z * (xx - yy),
        c(SH_C3[6]) * x * (xx - c(3.0) * yy),
    ]
}

/// Colour before the clamp: `Σ_k Y_k(d) · sh[3k + c] + 0.5`.
pub fn sh_eval_raw<T: Scalar>(sh: &[T; 48], d: [T; 3]) -> [T; 3] {
    let basis = sh_basis(d);
    let mut out = [T::lit(0.5); 3];
    for (k, &b) in basis.iter().enumerate() {
        for c in 0..3 {
            out[c] += b * sh[3 * k + c];
        }
    }
    out
}

/// View-dependent colour, clamped below at zero.
pub fn sh_eval<T: Scalar>(sh: &[T; 48], d: [T; 3]) -> [T; 3] {
    sh_eval_raw(sh, d).map(|v| v.max(T::zero()))
}
