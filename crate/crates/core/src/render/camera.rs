//! Pinhole cameras and the plain-text camera file.
//!
//! One camera per line: the 3×4 world-to-camera matrix `[R | t]` row-major,
//! then `fx fy cx cy width height`. Camera space looks down `+z` with `y`
//! pointing down the image. Blank lines and lines starting with `#` are
//! skipped.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::scalar::Scalar;

pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(a, a).sqrt();
    (n > 0.0 && n.is_finite()).then(|| a.map(|v| v / n))
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Camera { rotation, translation, fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let principal = [self.cx, self.cy];
        if self.rotation.iter().flatten().chain(&self.translation).chain(&principal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("camera has non-finite parameters".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot(r[i], r[j]) - expect).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, vertical field of view in
    /// degrees, principal point at the image centre.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_y_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let bad = || Error::InvalidArgument("degenerate look-at frame".into());
        let forward = unit([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]).ok_or_else(bad)?;
        let right = unit(cross(forward, up)).ok_or_else(bad)?;
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = [-dot(right, eye), -dot(down, eye), -dot(forward, eye)];
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Camera::new(rotation, translation, f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    /// Cameras evenly spaced on a horizontal circle around `center`.
    pub fn orbit(center: [f64; 3], radius: f64, height_offset: f64, count: usize, size: usize) -> Result<Vec<Self>> {
        (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                let eye = [center[0] + radius * a.cos(), center[1] + height_offset, center[2] + radius * a.sin()];
                Camera::look_at(eye, center, [0.0, 1.0, 0.0], 50.0, size, size)
            })
            .collect()
    }

    /// `count` orbit cameras that keep the bounding sphere of `positions` in
    /// view, slightly above its centre.
    pub fn framing<T: Scalar>(positions: &[[T; 3]], count: usize, size: usize) -> Result<Vec<Self>> {
        let b = Aabb::around(positions, 0.0);
        let centre = [0, 1, 2].map(|a| 0.5 * (b.min[a] + b.max[a]));
        let e = b.extent();
        let r = 0.5 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
        Camera::orbit(centre, 2.4 * r, 0.5 * r, count, size)
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| dot(r[i], p) + self.translation[i])
    }

    /// World position of the optical centre, `-Rᵀ t`.
    pub fn center(&self) -> [f64; 3] {
        let r = &self.rotation;
        let t = self.translation;
        [0, 1, 2].map(|j| -(r[0][j] * t[0] + r[1][j] * t[1] + r[2][j] * t[2]))
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad camera value {s:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != 18 {
            return Err(Error::InvalidArgument(format!("camera line has {} values, expected 18", v.len())));
        }
        let size = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 && x <= 1e5 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidArgument(format!("bad image size {x}")))
            }
        };
        Camera::new(
            [[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]],
            [v[3], v[7], v[11]],
            v[12],
            v[13],
            v[14],
            v[15],
            size(v[16])?,
            size(v[17])?,
        )
    }

    pub fn to_line(&self) -> String {
        let r = &self.rotation;
        let t = &self.translation;
        let mut v = Vec::with_capacity(18);
        for i in 0..3 {
            v.extend_from_slice(&r[i]);
            v.push(t[i]);
        }
        v.extend_from_slice(&[self.fx, self.fy, self.cx, self.cy]);
        let mut s: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        s.push(self.width.to_string());
        s.push(self.height.to_string());
        s.join(" ")
    }
}

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Camera::parse_line(l).map_err(|e| Error::InvalidArgument(format!("camera line {}: {e}", i + 1))))
        .collect()
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn save_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text: String = cameras.iter().map(|c| c.to_line() + "\n").collect();
    if text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
