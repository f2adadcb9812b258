//! Rotational-homography data augmentation.
//!
//! Each sample combines a roll about the optical axis, a pitch-yaw tilt and a
//! central rescale into the single homography `K S_f exp(tilt) R_roll K^-1`,
//! so the image is interpolated once. Roll and tilt are camera rotations and
//! relabel poses exactly; the rescale only approximates a change of depth.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{
    apply_homography, object_pose_relabel, relabel_pose, rotational_homography, Camera,
    CameraPose, Homography,
};
use crate::error::{Error, Result};
use crate::pywarp::PyPoseTarget;
use crate::raster::Raster;
use crate::so3py::{exp_py, PyVec, Rotation3};

/// Sampling ranges and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub scale_range: [f64; 2],
    pub roll_range_deg: [f64; 2],
    pub tilt_max_deg: f64,
    pub seed: u64,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            scale_range: [0.7, 1.3],
            roll_range_deg: [-180.0, 180.0],
            tilt_max_deg: 20.0,
            seed: 0,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        let [slo, shi] = self.scale_range;
        let [rlo, rhi] = self.roll_range_deg;
        if !(slo <= shi && slo > 0.0 && shi.is_finite()) {
            return Err(Error::Precondition(format!("bad scale range [{slo}, {shi}]")));
        }
        if !(rlo <= rhi && rlo.is_finite() && rhi.is_finite()) {
            return Err(Error::Precondition(format!("bad roll range [{rlo}, {rhi}]")));
        }
        if !(0.0..90.0).contains(&self.tilt_max_deg) {
            return Err(Error::Precondition(format!(
                "tilt_max_deg {} outside [0, 90)",
                self.tilt_max_deg
            )));
        }
        Ok(())
    }
}

/// One drawn augmentation. `h` is the homography in calibrated coordinates
/// (`K = I`); [`AugSample::homography`] gives the pixel version.
#[derive(Debug, Clone, PartialEq)]
pub struct AugSample {
    pub f: f64,
    pub roll: f64,
    pub tilt_alpha: PyVec,
    pub h: Homography,
}

/// Draw slots; each slot owns one 64-bit word pair of the index's stream.
const SLOT_SCALE: u128 = 0;
const SLOT_ROLL: u128 = 1;
const SLOT_TILT_RADIUS: u128 = 2;
const SLOT_TILT_DIRECTION: u128 = 3;

fn draw(rng: &mut ChaCha8Rng, slot: u128, lo: f64, hi: f64) -> f64 {
    rng.set_word_pos(slot * 2);
    let u: f64 = rng.random();
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * u
    }
}

impl AugSample {
    /// Builds a sample from explicit parameters.
    pub fn from_parts(f: f64, roll: f64, tilt_alpha: PyVec) -> Self {
        let r = Self::rotation_of(roll, tilt_alpha);
        let h = Matrix3::from_diagonal(&Vector3::new(f, f, 1.0)) * r.matrix();
        AugSample { f, roll, tilt_alpha, h: Homography::new(h).expect("scaled rotation is regular") }
    }

    fn rotation_of(roll: f64, tilt: PyVec) -> Rotation3 {
        exp_py(tilt) * Rotation3::about_optical_axis(roll)
    }

    /// Camera rotation part: tilt after roll.
    pub fn rotation(&self) -> Rotation3 {
        Self::rotation_of(self.roll, self.tilt_alpha)
    }

    /// `K S_f R_aug K^-1`.
    pub fn homography(&self, cam: &Camera) -> Homography {
        Homography::new(cam.k() * self.h.matrix() * cam.k_inv()).expect("conjugate of regular matrix")
    }

    pub fn scale_homography(&self, cam: &Camera) -> Homography {
        let s = Matrix3::from_diagonal(&Vector3::new(self.f, self.f, 1.0));
        Homography::new(cam.k() * s * cam.k_inv()).expect("positive scale")
    }

    pub fn tilt_homography(&self, cam: &Camera) -> Homography {
        rotational_homography(cam, &exp_py(self.tilt_alpha), cam)
    }

    pub fn roll_homography(&self, cam: &Camera) -> Homography {
        rotational_homography(cam, &Rotation3::about_optical_axis(self.roll), cam)
    }

    /// Intrinsics that realise the rescale, `K diag(f, f, 1)`.
    pub fn scaled_camera(&self, cam: &Camera) -> Result<Camera> {
        let k = cam.k() * Matrix3::from_diagonal(&Vector3::new(self.f, self.f, 1.0));
        Camera::new(k, cam.width, cam.height)
    }
}

/// Deterministic draw for `(cfg.seed, index)`.
///
/// ChaCha8 keyed by the seed, with the sample index as stream id and a fixed
/// word offset per parameter, so every parameter is a pure function of
/// `(seed, index, slot)`.
pub fn sample_aug(cfg: &AugConfig, index: u64) -> Result<AugSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let f = draw(&mut rng, SLOT_SCALE, cfg.scale_range[0], cfg.scale_range[1]);
    let roll = draw(&mut rng, SLOT_ROLL, cfg.roll_range_deg[0], cfg.roll_range_deg[1]).to_radians();
    let radius = draw(&mut rng, SLOT_TILT_RADIUS, 0.0, cfg.tilt_max_deg).to_radians();
    let direction = draw(&mut rng, SLOT_TILT_DIRECTION, 0.0, 2.0 * PI);
    Ok(AugSample::from_parts(f, roll, PyVec::from_polar(radius, direction)))
}

/// Warps `img` by the sample's pixel homography and updates an object pose
/// given in the camera frame. Rotation parts relabel exactly; the rescale
/// divides the depth `t2` by `f`.
pub fn apply_aug_p2(
    img: &Raster,
    label: (&Rotation3, &Vector3<f64>),
    cam: &Camera,
    a: &AugSample,
) -> Result<(Raster, (Rotation3, Vector3<f64>))> {
    if img.width() != cam.width || img.height() != cam.height {
        return Err(Error::Precondition("raster and camera sizes differ".into()));
    }
    let out = warp_image(img, &a.homography(cam));
    let (r, mut t) = object_pose_relabel(label.0, label.1, &a.rotation());
    t.z /= a.f;
    Ok((out, (r, t)))
}

/// Camera-pose variant: the camera turns by the sample rotation about its
/// centre. The rescale lives in the intrinsics ([`AugSample::scaled_camera`]).
pub fn apply_aug_camera_pose(pose: &CameraPose, a: &AugSample) -> CameraPose {
    relabel_pose(pose, &a.rotation())
}

/// Inverse warp: output pixel `y` reads the input at `H^-1 y`.
pub fn warp_image(img: &Raster, h: &Homography) -> Raster {
    let inv = h.inverse();
    img.remap(img.width(), img.height(), img.pix2cal, |x, y| {
        apply_homography(&inv, nalgebra::Vector2::new(x, y)).ok()
    })
}

/// Pose update in PY form, applied in the same order as the image warp:
/// roll rotates the PY plane, tilt translates it, then the rescale sends
/// `(alpha, s)` to `(f alpha, s / f)` and turns the object by
/// `exp(alpha (1 - f))`.
pub fn apply_aug_py(
    tgt: &PyPoseTarget,
    r_obj: &Rotation3,
    a: &AugSample,
) -> Result<(PyPoseTarget, Rotation3)> {
    let (c, s) = (a.roll.cos(), a.roll.sin());
    let rolled = PyVec::new(c * tgt.alpha.a0 - s * tgt.alpha.a1, s * tgt.alpha.a0 + c * tgt.alpha.a1);
    let mut r = Rotation3::about_optical_axis(a.roll) * *r_obj;

    let tilted = rolled + a.tilt_alpha;
    r = exp_py(a.tilt_alpha) * r;

    let alpha = tilted * a.f;
    if !(alpha.norm() < FRAC_PI_2) {
        return Err(Error::OutOfHemisphere(alpha.norm()));
    }
    r = exp_py(tilted * (1.0 - a.f)) * r;
    Ok((PyPoseTarget::new(alpha, tgt.s / a.f)?, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Affine2;

    fn zero_cfg() -> AugConfig {
        AugConfig { scale_range: [1.0, 1.0], roll_range_deg: [0.0, 0.0], tilt_max_deg: 0.0, seed: 9 }
    }

    #[test]
    fn draws_are_deterministic() {
        let cfg = AugConfig { seed: 42, ..AugConfig::default() };
        assert_eq!(sample_aug(&cfg, 7).unwrap(), sample_aug(&cfg, 7).unwrap());
        assert_ne!(sample_aug(&cfg, 7).unwrap(), sample_aug(&cfg, 8).unwrap());
        let other = AugConfig { seed: 43, ..cfg.clone() };
        assert_ne!(sample_aug(&cfg, 7).unwrap(), sample_aug(&other, 7).unwrap());
    }

    #[test]
    fn zero_width_ranges_give_identity() {
        let a = sample_aug(&zero_cfg(), 3).unwrap();
        assert_eq!(a.f, 1.0);
        assert_eq!(a.roll, 0.0);
        assert_eq!(a.tilt_alpha.norm(), 0.0);
        assert!((a.h.matrix() - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(AugConfig { scale_range: [1.3, 0.7], ..AugConfig::default() }.validate().is_err());
        assert!(AugConfig { tilt_max_deg: 90.0, ..AugConfig::default() }.validate().is_err());
        assert!(AugConfig { roll_range_deg: [5.0, -5.0], ..AugConfig::default() }.validate().is_err());
        assert!(AugConfig::default().validate().is_ok());
    }

    #[test]
    fn identity_sample_leaves_everything_unchanged() {
        let cam = Camera::from_focal(50.0, 20.0, 15.0, 41, 31).unwrap();
        let img = Raster::from_fn(41, 31, 1, Affine2::identity(), |x, y, _| (x * y) as f64);
        let a = AugSample::from_parts(1.0, 0.0, PyVec::ZERO);
        let r = exp_py(PyVec::new(0.2, 0.1));
        let t = Vector3::new(0.1, -0.2, 3.0);
        let (out, (r2, t2)) = apply_aug_p2(&img, (&r, &t), &cam, &a).unwrap();
        assert_eq!(out, img);
        assert_eq!(r2, r);
        assert_eq!(t2, t);
    }

    #[test]
    fn pure_roll_rotates_pose_about_optical_axis() {
        let cam = Camera::from_focal(50.0, 20.0, 15.0, 41, 31).unwrap();
        let img = Raster::filled(41, 31, 1, 1.0, Affine2::identity());
        let a = AugSample::from_parts(1.0, 0.5, PyVec::ZERO);
        let r = exp_py(PyVec::new(0.2, 0.1));
        let t = Vector3::new(0.1, -0.2, 3.0);
        let (_, (r2, t2)) = apply_aug_p2(&img, (&r, &t), &cam, &a).unwrap();
        let rz = Rotation3::about_optical_axis(0.5);
        assert!(((rz * r).matrix() - r2.matrix()).abs().max() < 1e-15);
        assert!((rz.apply(&t) - t2).norm() < 1e-15);
    }

    #[test]
    fn py_scale_rule_example() {
        let a = AugSample::from_parts(0.5, 0.0, PyVec::ZERO);
        let r = Rotation3::about_optical_axis(0.3);
        let tgt = PyPoseTarget::new(PyVec::new(0.2, 0.0), 2.0).unwrap();
        let (out, r2) = apply_aug_py(&tgt, &r, &a).unwrap();
        assert!((out.alpha - PyVec::new(0.1, 0.0)).norm() < 1e-15);
        assert_eq!(out.s, 4.0);
        let expect = exp_py(PyVec::new(0.1, 0.0)) * r;
        assert!((expect.matrix() - r2.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn py_rules_trivial_cases() {
        let r = exp_py(PyVec::new(-0.4, 0.2));
        let tgt = PyPoseTarget::new(PyVec::new(0.3, -0.1), 1.5).unwrap();
        let (out, r2) = apply_aug_py(&tgt, &r, &AugSample::from_parts(1.0, 0.0, PyVec::ZERO)).unwrap();
        assert_eq!((out, r2), (tgt, r));

        let tgt0 = PyPoseTarget::new(PyVec::ZERO, 1.5).unwrap();
        let (out, r2) = apply_aug_py(&tgt0, &r, &AugSample::from_parts(1.25, 0.0, PyVec::ZERO)).unwrap();
        assert_eq!(out.alpha, PyVec::ZERO);
        assert_eq!(out.s, 1.2);
        assert_eq!(r2, r);

        let edge = PyPoseTarget::new(PyVec::new(1.4, 0.0), 1.0).unwrap();
        let big = AugSample::from_parts(1.3, 0.0, PyVec::ZERO);
        assert!(matches!(apply_aug_py(&edge, &r, &big), Err(Error::OutOfHemisphere(_))));
    }

    #[test]
    fn roll_commutes_with_pitch_yaw_exponential() {
        // R_z exp(alpha) R_z^T = exp(rotated alpha)
        let a = AugSample::from_parts(1.0, 0.9, PyVec::ZERO);
        let tgt = PyPoseTarget::new(PyVec::new(0.3, -0.2), 1.0).unwrap();
        let (out, _) = apply_aug_py(&tgt, &Rotation3::identity(), &a).unwrap();
        let rz = Rotation3::about_optical_axis(0.9);
        let lhs = rz * exp_py(tgt.alpha) * rz.transpose();
        assert!((lhs.matrix() - exp_py(out.alpha).matrix()).abs().max() < 1e-15);
    }
}
