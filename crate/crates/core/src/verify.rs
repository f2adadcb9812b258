//! Self-checks run by `rhwarp verify`.
//!
//! Each check measures one number and compares it with a bound. Checks are
//! deterministic (fixed seeds) and small enough to run in a few seconds.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{apply_aug_p2, sample_aug, AugConfig, AugSample};
use crate::camera::{apply_homography, object_pose_relabel, project, rotational_homography, Camera, RigidMotion};
use crate::distortion::{
    chi_act, distortion_at, error_field, on_alpha_circle, phi_act, phi_act_indexed, psi,
    taylor_order_check, translation_sweet_spot, Approximation, Expansion, GridDomain, GridSpec,
    TaylorDirections,
};
use crate::error::{Error, Result};
use crate::pyconv::{py_convolve, PYKernel};
use crate::pywarp::{camera_pix2cal, target_from_py, target_to_py, warp_from_py, warp_to_py};
use crate::raster::{Affine2, Raster};
use crate::rigidity::{grid_scan, rigidity_witness, sset_solve, CaseKind};
use crate::so3py::{
    exp_py, exp_py_pole, min_py_log, phi_inverse, phi_map, plane_to_py, py_to_plane, PyVec,
    Rotation3, SpherePointIndexed,
};

/// Acceptable range for a measured value. NaN never passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    LessThan(f64),
    AtLeast(f64),
    Between(f64, f64),
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(b) => v <= b,
            Bound::LessThan(b) => v < b,
            Bound::AtLeast(b) => v >= b,
            Bound::Between(lo, hi) => v >= lo && v <= hi,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(b) => write!(f, "<= {b:e}"),
            Bound::LessThan(b) => write!(f, "< {b:e}"),
            Bound::AtLeast(b) => write!(f, ">= {b:e}"),
            Bound::Between(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub bound: Bound,
    run: fn() -> Result<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
    pub error: Option<String>,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match &self.error {
            Some(e) => write!(f, "{status}  {:<34} error: {e}", self.name),
            None => write!(f, "{status}  {:<34} {:<12.4e} {}", self.name, self.value, self.bound),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_py(r: &mut ChaCha8Rng, max_norm: f64) -> PyVec {
    PyVec::from_polar(max_norm * r.random::<f64>(), 2.0 * PI * r.random::<f64>())
}

fn random_rotation(r: &mut ChaCha8Rng, max_angle: f64) -> Rotation3 {
    let axis = Vector3::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5, r.random::<f64>() - 0.5);
    let axis = if axis.norm() > 1e-6 { axis.normalize() } else { Vector3::z() };
    Rotation3::from_rotation_vector(&(axis * (max_angle * r.random::<f64>())))
}

fn random_camera(r: &mut ChaCha8Rng) -> Camera {
    let f = r.random_range(200.0..900.0);
    let aspect = r.random_range(0.9..1.1);
    let skew = r.random_range(-2.0..2.0);
    let k = Matrix3::new(f, skew, r.random_range(280.0..360.0), 0.0, f * aspect, r.random_range(200.0..280.0), 0.0, 0.0, 1.0);
    Camera::new(k, 640, 480).expect("random intrinsics are valid")
}

/// Image whose intensities vary slowly enough for bilinear resampling to be
/// accurate: a few long-wavelength sinusoids on the 0..255 scale.
pub fn smooth_test_image(width: usize, height: usize, channels: usize, pix2cal: Affine2) -> Raster {
    let (w, h) = (width as f64, height as f64);
    Raster::from_fn(width, height, channels, pix2cal, |x, y, c| {
        let (u, v) = (x as f64 / w, y as f64 / h);
        let phase = c as f64 * 0.7;
        127.5 + 40.0 * (2.0 * PI * (0.6 * u + 0.3 * v) + phase).sin() + 30.0 * (2.0 * PI * (0.5 * v - 0.2 * u) + 1.3 * phase).cos()
    })
}

fn exp_orthonormal() -> Result<f64> {
    let mut r = rng(1);
    Ok((0..500).map(|_| exp_py(random_py(&mut r, 6.0)).defect()).fold(0.0, f64::max))
}

fn phi_round_trip() -> Result<f64> {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let a = random_py(&mut r, 12.0);
        let Ok(s) = phi_map(a) else { continue };
        worst = worst.max((phi_inverse(&s)? - a).norm());
    }
    Ok(worst)
}

fn min_log_round_trip() -> Result<f64> {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let a = random_py(&mut r, PI - 1e-3);
        worst = worst.max((min_py_log(&exp_py_pole(a))? - a).norm());
    }
    Ok(worst)
}

fn plane_round_trip() -> Result<f64> {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let a = random_py(&mut r, 1.4);
        worst = worst.max((plane_to_py(py_to_plane(a)?) - a).norm());
    }
    Ok(worst)
}

fn homography_exact() -> Result<f64> {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let cam = random_camera(&mut r);
        let r_obj = random_rotation(&mut r, PI);
        let r_aug = random_rotation(&mut r, 0.4);
        let t = Vector3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(2.0..5.0));
        let x = Vector3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2));
        let before = r_obj.apply(&x) + t;
        let (r2, t2) = object_pose_relabel(&r_obj, &t, &r_aug);
        let after = r2.apply(&x) + t2;
        if after.z <= 0.0 {
            continue;
        }
        let y = cam.calibrated_to_pixel(project(&before)?);
        let expect = cam.calibrated_to_pixel(project(&after)?);
        let got = apply_homography(&rotational_homography(&cam, &r_aug, &cam), y)?;
        worst = worst.max((got - expect).norm() / expect.norm().max(1.0));
    }
    Ok(worst)
}

fn witness_found() -> Result<f64> {
    let mut r = rng(6);
    let mut least = f64::INFINITY;
    for _ in 0..300 {
        let dir = Vector3::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5, r.random::<f64>() - 0.5).normalize();
        let v = dir * 10f64.powf(r.random_range(-3.0..1.0));
        let rho = RigidMotion { r: random_rotation(&mut r, PI), v };
        least = least.min(rigidity_witness(&rho)?.cross_norm);
    }
    let still = RigidMotion { r: random_rotation(&mut r, PI), v: Vector3::zeros() };
    if !matches!(rigidity_witness(&still), Err(Error::NoWitness)) {
        return Ok(f64::NAN);
    }
    Ok(least)
}

fn sset_worked_example() -> Result<f64> {
    let rho = RigidMotion { r: Rotation3::identity(), v: Vector3::x() };
    let res = sset_solve(Vector2::new(1.0, 0.0), &rho)?;
    let plane = res.eigenvalue_cases.iter().any(|c| c.kind == CaseKind::Plane && c.distance(&Vector3::new(3.0, -2.0, 1.0)) < 1e-12);
    let axis = res.curve_samples.iter().all(|(_, x)| x.y.abs() < 1e-12 && x.z.abs() < 1e-12);
    if !plane || !axis {
        return Ok(f64::NAN);
    }
    let scan = grid_scan(&res, 21, 2.0, 1e-9);
    if scan.points_satisfying == 0 {
        return Ok(f64::NAN);
    }
    Ok(scan.max_distance)
}

fn py_warp_round_trip() -> Result<f64> {
    let cam = Camera::from_focal(120.0, 79.5, 59.5, 160, 120)?;
    let img = smooth_test_image(160, 120, 1, camera_pix2cal(&cam));
    let py = warp_to_py(&img, &cam, (240, 320))?;
    let back = warp_from_py(&py, &cam, (120, 160))?;
    let mut interior = back.clone();
    for y in 0..120 {
        for x in 0..160 {
            if x < 4 || y < 4 || x >= 156 || y >= 116 {
                interior.valid_mut()[y * 160 + x] = false;
            }
        }
    }
    interior.mean_abs_diff(&img)
}

fn target_round_trip() -> Result<f64> {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let t = Vector3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(0.1..5.0));
        let back = target_from_py(&target_to_py(&t)?)?;
        worst = worst.max((back - t).norm() / t.norm());
    }
    Ok(worst)
}

fn aug_determinism() -> Result<f64> {
    let cfg = AugConfig { seed: 17, ..AugConfig::default() };
    let cam = Camera::from_focal(60.0, 31.5, 23.5, 64, 48)?;
    let img = smooth_test_image(64, 48, 3, Affine2::identity());
    let r_obj = exp_py(PyVec::new(0.1, 0.2));
    let t = Vector3::new(0.1, 0.0, 2.0);
    let run = || -> Result<_> {
        let a = sample_aug(&cfg, 5)?;
        let out = apply_aug_p2(&img, (&r_obj, &t), &cam, &a)?;
        Ok((a, out))
    };
    Ok(if run()? == run()? { 0.0 } else { 1.0 })
}

fn tilt_reprojection() -> Result<f64> {
    let mut r = rng(8);
    let cam = Camera::from_focal(500.0, 319.5, 239.5, 640, 480)?;
    let a = AugSample::from_parts(1.0, 0.0, PyVec::new(0.15, -0.25));
    let h = a.homography(&cam);
    let r_obj = random_rotation(&mut r, PI);
    let t = Vector3::new(0.1, -0.05, 3.0);
    let (r2, t2) = object_pose_relabel(&r_obj, &t, &a.rotation());
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = Vector3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3));
        let y = cam.calibrated_to_pixel(project(&(r_obj.apply(&x) + t))?);
        let expect = cam.calibrated_to_pixel(project(&(r2.apply(&x) + t2))?);
        worst = worst.max((apply_homography(&h, y)? - expect).norm());
    }
    Ok(worst)
}

fn circle_identity() -> Result<f64> {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = random_py(&mut r, 1.2);
        let theta = on_alpha_circle(a, r.random_range(-1.0..1.0));
        worst = worst.max(phi_act(a, &theta)?.chord(&psi(a, &theta)));
    }
    Ok(worst)
}

fn sweet_spot_identity() -> Result<f64> {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = random_py(&mut r, 1.2);
        let w = translation_sweet_spot(a)?;
        worst = worst.max(chi_act(a, &w)?.chord(&psi(a, &w)));
    }
    Ok(worst)
}

fn indexed_group_action() -> Result<f64> {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (a, b) = (random_py(&mut r, 4.0), random_py(&mut r, 4.0));
        let s = SpherePointIndexed { n: 0, p: exp_py_pole(random_py(&mut r, 3.0)) };
        let (Ok(ab), Ok(sum)) = (
            phi_act_indexed(a, &s).and_then(|x| phi_act_indexed(b, &x)),
            phi_act_indexed(a + b, &s),
        ) else {
            continue;
        };
        worst = worst.max(if ab.n == sum.n { ab.p.chord(&sum.p) } else { f64::INFINITY });
    }
    Ok(worst)
}

/// Mean PY distortion over mean translation distortion on the disc
/// `|g| <= pi/6` of the PY grid, `alpha` of length `pi/9` along `a0`.
pub fn py_translation_ratio(alpha: PyVec, radius: f64, n: usize) -> Result<f64> {
    let grid = GridSpec { n0: n, n1: n, half_width: radius, domain: GridDomain::Py };
    let disc = |g: Vector2<f64>| g.norm() <= radius;
    let py = error_field(alpha, Approximation::Py, grid)?.mean_where(disc).ok_or(Error::EmptyRegion)?;
    let tr = error_field(alpha, Approximation::Translation, grid)?.mean_where(disc).ok_or(Error::EmptyRegion)?;
    Ok(py / tr)
}

fn py_beats_translation() -> Result<f64> {
    py_translation_ratio(PyVec::new(PI / 9.0, 0.0), PI / 6.0, 61)
}

/// Five fixed direction pairs per expansion.
pub fn taylor_directions(which: Expansion) -> Vec<TaylorDirections> {
    let angles = [(0.0, 1.0), (0.4, 2.3), (1.1, -0.9), (2.0, 3.6), (-0.7, 0.8)];
    angles
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| TaylorDirections {
            alpha: PyVec::from_polar(1.0, a),
            second: match which {
                Expansion::P14 => PyVec::new([0.0, 0.3, -0.5, 1.0, 0.7][i], 0.0),
                _ => PyVec::from_polar(1.0, a + b),
            },
        })
        .collect()
}

pub const H_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn min_taylor_slope(which: Expansion) -> Result<f64> {
    let mut least = f64::INFINITY;
    for d in taylor_directions(which) {
        let fit = taylor_order_check(which, d, &H_LADDER)?;
        if let Some(s) = fit.slope {
            least = least.min(s);
        }
    }
    Ok(least)
}

fn shift_equivariance() -> Result<f64> {
    let s = 0.01;
    let grid = Affine2::new(nalgebra::Matrix2::identity() * s, Vector2::new(-0.3, -0.2))?;
    let f = smooth_test_image(60, 40, 2, grid);
    let mut r = rng(12);
    let g = PYKernel::new(5, s, (0..25).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let (dx, dy) = (3usize, 2usize);
    let shifted = f.translate(Vector2::new(dx as f64, dy as f64));
    let a = py_convolve(&shifted, &g)?;
    let b = py_convolve(&f, &g)?;
    let mut worst: f64 = 0.0;
    for y in 0..40 {
        for x in 0..60 {
            if a.is_valid(x, y) && x >= dx && y >= dy && b.is_valid(x - dx, y - dy) {
                for c in 0..2 {
                    worst = worst.max((a.get(x, y, c) - b.get(x - dx, y - dy, c)).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn impulse_sifting() -> Result<f64> {
    let s = 0.02;
    let f = smooth_test_image(30, 20, 1, Affine2::new(nalgebra::Matrix2::identity() * s, Vector2::zeros())?);
    let out = py_convolve(&f, &PYKernel::impulse(3, s)?)?;
    let mut worst: f64 = 0.0;
    for y in 0..20 {
        for x in 0..30 {
            if out.is_valid(x, y) {
                worst = worst.max((out.get(x, y, 0) - (s * s) * f.get(x, y, 0)).abs());
            }
        }
    }
    Ok(worst)
}

fn linearity() -> Result<f64> {
    let grid = Affine2::identity();
    let f1 = smooth_test_image(30, 20, 1, grid);
    let f2 = Raster::from_fn(30, 20, 1, grid, |x, y, _| ((x * 7 + y * 13) % 11) as f64);
    let (a, b) = (0.7, -1.3);
    let mix = Raster::from_fn(30, 20, 1, grid, |x, y, _| a * f1.get(x, y, 0) + b * f2.get(x, y, 0));
    let mut r = rng(13);
    let g = PYKernel::new(3, 1.0, (0..9).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let (c1, c2, cm) = (py_convolve(&f1, &g)?, py_convolve(&f2, &g)?, py_convolve(&mix, &g)?);
    let mut worst: f64 = 0.0;
    for i in 0..c1.data().len() {
        let expect = a * c1.data()[i] + b * c2.data()[i];
        worst = worst.max((cm.data()[i] - expect).abs() / expect.abs().max(1.0));
    }
    Ok(worst)
}

fn distortion_bounded() -> Result<f64> {
    let mut r = rng(14);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let a = random_py(&mut r, 1.0);
        let theta = exp_py_pole(random_py(&mut r, 1.2));
        for which in [Approximation::Py, Approximation::Translation] {
            if let Ok(d) = distortion_at(a, which, &theta) {
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

/// All checks, in display order.
pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "so3py.exp_orthonormal", bound: Bound::AtMost(1e-12), run: exp_orthonormal },
        Check { name: "so3py.phi_round_trip", bound: Bound::AtMost(1e-10), run: phi_round_trip },
        Check { name: "so3py.min_log_round_trip", bound: Bound::AtMost(1e-10), run: min_log_round_trip },
        Check { name: "so3py.plane_round_trip", bound: Bound::AtMost(1e-10), run: plane_round_trip },
        Check { name: "camera.rotational_homography", bound: Bound::AtMost(1e-9), run: homography_exact },
        Check { name: "rigidity.witness", bound: Bound::AtLeast(1e-6), run: witness_found },
        Check { name: "rigidity.sset_worked_example", bound: Bound::AtMost(1e-4), run: sset_worked_example },
        Check { name: "pywarp.round_trip", bound: Bound::LessThan(2.55), run: py_warp_round_trip },
        Check { name: "pywarp.target_round_trip", bound: Bound::AtMost(1e-10), run: target_round_trip },
        Check { name: "augment.determinism", bound: Bound::AtMost(0.0), run: aug_determinism },
        Check { name: "augment.tilt_reprojection", bound: Bound::AtMost(1e-6), run: tilt_reprojection },
        Check { name: "distortion.circle_identity", bound: Bound::AtMost(1e-12), run: circle_identity },
        Check { name: "distortion.sweet_spot_identity", bound: Bound::AtMost(1e-12), run: sweet_spot_identity },
        Check { name: "distortion.indexed_group_action", bound: Bound::AtMost(1e-10), run: indexed_group_action },
        Check { name: "distortion.chord_bounded", bound: Bound::AtMost(2.0), run: distortion_bounded },
        Check { name: "distortion.py_vs_translation", bound: Bound::LessThan(1.0), run: py_beats_translation },
        Check { name: "taylor.p10", bound: Bound::AtLeast(2.7), run: || min_taylor_slope(Expansion::P10) },
        Check { name: "taylor.p12", bound: Bound::AtLeast(2.7), run: || min_taylor_slope(Expansion::P12) },
        Check { name: "taylor.p14", bound: Bound::AtLeast(2.7), run: || min_taylor_slope(Expansion::P14) },
        Check { name: "taylor.eq9", bound: Bound::AtLeast(2.7), run: || min_taylor_slope(Expansion::Eq9) },
        Check { name: "pyconv.shift_equivariance", bound: Bound::AtMost(0.0), run: shift_equivariance },
        Check { name: "pyconv.impulse_sifting", bound: Bound::AtMost(0.0), run: impulse_sifting },
        Check { name: "pyconv.linearity", bound: Bound::AtMost(1e-12), run: linearity },
    ]
}

/// Runs the checks whose name contains `filter`. A check named in
/// `perturb` has its measurement replaced by NaN, which must fail.
pub fn run_checks(filter: Option<&str>, perturb: Option<&str>) -> Vec<CheckOutcome> {
    checks()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .map(|c| {
            let (value, error) = match (c.run)() {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            let value = if perturb == Some(c.name) { f64::NAN } else { value };
            CheckOutcome { name: c.name, value, bound: c.bound, passed: error.is_none() && c.bound.admits(value), error }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::AtMost(1.0).admits(1.0));
        assert!(!Bound::LessThan(1.0).admits(1.0));
        assert!(!Bound::AtLeast(0.0).admits(f64::NAN));
        assert!(Bound::Between(2.7, 3.5).admits(3.0));
    }

    #[test]
    fn filter_and_perturbation() {
        let out = run_checks(Some("so3py.plane"), Some("so3py.plane_round_trip"));
        assert_eq!(out.len(), 1);
        assert!(!out[0].passed);
        let out = run_checks(Some("so3py.plane"), None);
        assert!(out[0].passed, "{}", out[0]);
    }
}
