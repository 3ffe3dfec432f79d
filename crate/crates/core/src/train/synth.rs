//! Seeded synthetic dynamic scenes.
//!
//! Every Gaussian is static, rigid or deforming. Rigid ones follow
//! `p_t = R_t · p + t · v` with `R_t` a rotation by `t · ω` about a fixed
//! axis through the origin. Deforming ones oscillate around their base
//! position with a phase that varies smoothly in space, plus optional
//! per-frame jitter. Moving Gaussians also drift in SH DC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::compensate::normalize_quat;
use crate::error::{Error, Result};
use crate::frame::{GaussianFrame, GroupOfFrames, SH_COEFFS};
use crate::pipeline::segment_sequence;

#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub axis: [f64; 3],
    /// Rotation per frame, degrees.
    pub angular_velocity: f64,
    /// Translation per frame.
    pub velocity: [f64; 3],
}

impl RigidMotion {
    pub fn none() -> Self {
        RigidMotion { axis: [0.0, 0.0, 1.0], angular_velocity: 0.0, velocity: [0.0; 3] }
    }

    /// Unit quaternion of the rotation at frame `t`.
    pub fn rotation(&self, t: usize) -> [f64; 4] {
        axis_angle(self.axis, (self.angular_velocity * t as f64).to_radians())
    }

    pub fn translation(&self, t: usize) -> [f64; 3] {
        self.velocity.map(|v| v * t as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSceneConfig {
    pub n_gaussians: usize,
    pub n_frames: usize,
    /// Share of all Gaussians that never move.
    pub static_fraction: f64,
    /// Share of the moving Gaussians that follow [`RigidMotion`].
    pub rigid_fraction: f64,
    pub rigid: RigidMotion,
    pub deform_amplitude: f64,
    /// Oscillation cycles per frame.
    pub deform_frequency: f64,
    /// Standard deviation of per-frame jitter on deforming Gaussians.
    pub noise: f64,
    /// DC change per frame of moving Gaussians.
    pub dc_drift: f64,
    /// Base positions are drawn from `[-extent, extent]³`.
    pub extent: f64,
    pub seed: u64,
}

impl Default for SynthSceneConfig {
    fn default() -> Self {
        SynthSceneConfig {
            n_gaussians: 1000,
            n_frames: 10,
            static_fraction: 0.3,
            rigid_fraction: 0.5,
            rigid: RigidMotion { axis: [0.0, 0.0, 1.0], angular_velocity: 2.0, velocity: [0.01, 0.0, 0.005] },
            deform_amplitude: 0.02,
            deform_frequency: 0.1,
            noise: 0.0,
            dc_drift: 0.01,
            extent: 1.0,
            seed: 0,
        }
    }
}

impl SynthSceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [("static_fraction", self.static_fraction), ("rigid_fraction", self.rigid_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.n_gaussians == 0 || self.n_frames == 0 {
            return bad("scene needs at least one Gaussian and one frame".into());
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad(format!("extent {} must be positive", self.extent));
        }
        let reals =
            [self.deform_amplitude, self.deform_frequency, self.noise, self.dc_drift, self.rigid.angular_velocity];
        if reals.iter().chain(&self.rigid.axis).chain(&self.rigid.velocity).any(|v| !v.is_finite()) || self.noise < 0.0
        {
            return bad("motion recipe must be finite with noise >= 0".into());
        }
        if self.rigid.angular_velocity != 0.0 && self.rigid.axis.iter().all(|&v| v == 0.0) {
            return bad("rigid rotation needs a non-zero axis".into());
        }
        Ok(())
    }

    /// Same scene with no motion at all.
    pub fn frozen(&self) -> Self {
        SynthSceneConfig {
            rigid: RigidMotion::none(),
            deform_amplitude: 0.0,
            noise: 0.0,
            dc_drift: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionClass {
    Static,
    Rigid,
    Deforming,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub frames: Vec<GaussianFrame<f32>>,
    pub classes: Vec<MotionClass>,
}

fn axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 || angle == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s, c) = (0.5 * angle).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// `q · (0, v) · q*`.
fn rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let p = quat_mul(quat_mul(q, [0.0, v[0], v[1], v[2]]), [q[0], -q[1], -q[2], -q[3]]);
    [p[1], p[2], p[3]]
}

fn base_scene(cfg: &SynthSceneConfig, rng: &mut ChaCha8Rng) -> GaussianFrame<f64> {
    let e = cfg.extent;
    let dc = Normal::new(0.0, 0.5).expect("valid");
    let high = Normal::new(0.0, 0.05).expect("valid");
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let mut f = GaussianFrame::empty();
    for _ in 0..cfg.n_gaussians {
        f.positions.push([0; 3].map(|_| rng.gen_range(-e..e)));
        f.rotations.push(normalize_quat([0; 4].map(|_| unit.sample(rng))));
        f.scales.push([0; 3].map(|_| e * 0.01 * 5f64.powf(rng.gen::<f64>())));
        f.opacities.push(rng.gen_range(0.3..0.95));
        let mut sh = [0.0; SH_COEFFS];
        for (k, v) in sh.iter_mut().enumerate() {
            *v = if k < 3 { dc.sample(rng) } else { high.sample(rng) };
        }
        f.sh.push(sh);
    }
    f
}

/// Classes are spatially coherent: the Gaussians nearest a seeded object
/// centre move rigidly, the next shell deforms and the rest is static
/// background.
fn classes(cfg: &SynthSceneConfig, base: &GaussianFrame<f64>, rng: &mut ChaCha8Rng) -> Vec<MotionClass> {
    let n = cfg.n_gaussians;
    let n_static = (cfg.static_fraction * n as f64).round() as usize;
    let n_rigid = (cfg.rigid_fraction * (n - n_static) as f64).round() as usize;
    let e = 0.5 * cfg.extent;
    let centre: [f64; 3] = [0; 3].map(|_| rng.gen_range(-e..e));
    let dist = |j: usize| -> f64 { (0..3).map(|a| (base.positions[j][a] - centre[a]).powi(2)).sum() };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let mut out = vec![MotionClass::Static; n];
    for (rank, &j) in order.iter().enumerate() {
        out[j] = if rank < n_rigid {
            MotionClass::Rigid
        } else if rank < n - n_static {
            MotionClass::Deforming
        } else {
            MotionClass::Static
        };
    }
    out
}

/// Builds every frame of a scene. Frame 0 is the base scene.
pub fn synth_scene(cfg: &SynthSceneConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = base_scene(cfg, &mut rng);
    let classes = classes(cfg, &base, &mut rng);
    let jitter = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid");
    let tau = std::f64::consts::TAU;
    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let mut f = base.clone();
        let (rq, rt) = (cfg.rigid.rotation(t), cfg.rigid.translation(t));
        for j in 0..f.len() {
            let p = base.positions[j];
            let drift = [
                (std::f64::consts::PI * p[0]).sin(),
                (std::f64::consts::PI * p[1]).sin(),
                (std::f64::consts::PI * p[2]).sin(),
            ];
            match classes[j] {
                MotionClass::Static => continue,
                MotionClass::Rigid => {
                    let r = rotate(rq, p);
                    f.positions[j] = [r[0] + rt[0], r[1] + rt[1], r[2] + rt[2]];
                    f.rotations[j] = normalize_quat(quat_mul(rq, base.rotations[j]));
                }
                MotionClass::Deforming => {
                    let phase = |a: usize| std::f64::consts::PI * p[(a + 1) % 3] / cfg.extent;
                    let wave = |a: usize| (tau * cfg.deform_frequency * t as f64 + phase(a)).sin() - phase(a).sin();
                    for a in 0..3 {
                        f.positions[j][a] = p[a] + cfg.deform_amplitude * wave(a);
                        if cfg.noise > 0.0 && t > 0 {
                            f.positions[j][a] += jitter.sample(&mut rng);
                        }
                    }
                    let angle = cfg.deform_amplitude / cfg.extent * wave(0);
                    f.rotations[j] = normalize_quat(quat_mul(axis_angle(drift, angle), base.rotations[j]));
                }
            }
            for (c, d) in drift.iter().enumerate() {
                f.sh[j][c] += cfg.dc_drift * t as f64 * d;
            }
        }
        frames.push(f.cast::<f32>());
    }
    Ok(SynthScene { frames, classes })
}

/// [`synth_scene`] cut into groups of frames.
pub fn synth_sequence(cfg: &SynthSceneConfig, gof_length: usize) -> Result<Vec<GroupOfFrames<f32>>> {
    segment_sequence(synth_scene(cfg)?.frames, gof_length)
}

/// The two seeded scenes used for smoke training and evaluation.
pub fn standard_scenes(n_gaussians: usize, n_frames: usize, seed: u64) -> Vec<SynthSceneConfig> {
    vec![
        SynthSceneConfig { n_gaussians, n_frames, seed, ..SynthSceneConfig::default() },
        SynthSceneConfig {
            n_gaussians,
            n_frames,
            static_fraction: 0.5,
            rigid_fraction: 0.3,
            rigid: RigidMotion { axis: [0.2, 1.0, 0.1], angular_velocity: 3.0, velocity: [0.0, 0.015, -0.005] },
            deform_amplitude: 0.03,
            deform_frequency: 0.07,
            dc_drift: 0.015,
            seed: seed.wrapping_add(1),
            ..SynthSceneConfig::default()
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::validate_frame;

    fn small() -> SynthSceneConfig {
        SynthSceneConfig { n_gaussians: 200, n_frames: 6, noise: 0.001, seed: 9, ..SynthSceneConfig::default() }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = synth_scene(&small()).unwrap();
        assert_eq!(a, synth_scene(&small()).unwrap());
        assert_eq!(a.frames.len(), 6);
        for f in &a.frames {
            assert!(validate_frame(f).is_valid());
        }
        let other = synth_scene(&SynthSceneConfig { seed: 10, ..small() }).unwrap();
        assert_ne!(a.frames[0], other.frames[0]);
    }

    #[test]
    fn zero_motion_repeats_the_base() {
        let s = synth_scene(&small().frozen()).unwrap();
        for f in &s.frames {
            assert_eq!(f, &s.frames[0]);
        }
    }

    #[test]
    fn scales_and_opacities_are_static() {
        let s = synth_scene(&small()).unwrap();
        for f in &s.frames[1..] {
            assert_eq!(f.scales, s.frames[0].scales);
            assert_eq!(f.opacities, s.frames[0].opacities);
            assert_ne!(f.positions, s.frames[0].positions);
        }
    }

    /// Rodrigues' formula applied to the stored base positions.
    #[test]
    fn rigid_subset_matches_direct_transform() {
        let cfg = SynthSceneConfig {
            static_fraction: 0.2,
            rigid_fraction: 1.0,
            rigid: RigidMotion { axis: [1.0, 2.0, 2.0], angular_velocity: 7.0, velocity: [0.02, -0.01, 0.03] },
            ..small()
        };
        let s = synth_scene(&cfg).unwrap();
        let k = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for t in 0..cfg.n_frames {
            let th = (7.0 * t as f64).to_radians();
            for (j, class) in s.classes.iter().enumerate() {
                let p = s.frames[0].positions[j].map(f64::from);
                let got = s.frames[t].positions[j].map(f64::from);
                let expect = match class {
                    MotionClass::Static => p,
                    MotionClass::Rigid => {
                        let kxp = [k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]];
                        let kdp = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
                        let v = [0.02, -0.01, 0.03];
                        [0, 1, 2].map(|a| {
                            p[a] * th.cos() + kxp[a] * th.sin() + k[a] * kdp * (1.0 - th.cos()) + v[a] * t as f64
                        })
                    }
                    MotionClass::Deforming => unreachable!("every moving Gaussian is rigid"),
                };
                for a in 0..3 {
                    assert!((got[a] - expect[a]).abs() < 1e-6, "t={t} j={j}: {got:?} vs {expect:?}");
                }
            }
        }
        let statics = s.classes.iter().filter(|c| **c == MotionClass::Static).count();
        assert_eq!(statics, 40);
    }

    #[test]
    fn fractions_are_validated() {
        assert!(synth_scene(&SynthSceneConfig { static_fraction: 1.5, ..small() }).is_err());
        assert!(synth_scene(&SynthSceneConfig { rigid_fraction: -0.1, ..small() }).is_err());
    }

    #[test]
    fn sequence_is_cut_into_gofs() {
        let g = synth_sequence(&small(), 4).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].gof_length(), 4);
        assert_eq!(g[1].gof_length(), 2);
    }
}
