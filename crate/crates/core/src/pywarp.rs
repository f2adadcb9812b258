//! Resampling between the image plane and the pitch-yaw domain.
//!
//! A PY image stores at grid coordinate `w` the ray whose calibrated image
//! point is `tan(|w|) w / |w|`: the radius is compressed by `arctan` and the
//! polar angle is kept (see [`PyVec::grid_coords`] for how this relates to
//! the exact pitch-yaw parametrization). The result is an azimuthal
//! equidistant projection centred on the principal point.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::camera::{project, Camera};
use crate::error::{Error, Result};
use crate::raster::{remap_mask_nearest, Affine2, Raster};
use crate::so3py::{
    atan_over, exp_py, exp_py_pole, min_py_log, plane_to_py, tan_over, PlanePoint, PyVec,
    Rotation3, SpherePoint,
};

/// Calibrated point to PY grid coordinates.
pub fn plane_to_grid(u: PlanePoint) -> Vector2<f64> {
    Vector2::new(u.u0, u.u1) * atan_over(u.norm())
}

/// PY grid coordinates to the calibrated plane; undefined from `pi/2` on.
pub fn grid_to_plane(w: Vector2<f64>) -> Option<PlanePoint> {
    let r = w.norm();
    if !(r < FRAC_PI_2) {
        return None;
    }
    let u = w * tan_over(r);
    Some(PlanePoint::new(u.x, u.y))
}

/// Pixel-to-calibrated map of a camera, `K^-1` as an affine map.
pub fn camera_pix2cal(cam: &Camera) -> Affine2 {
    let ki = cam.k_inv();
    Affine2 {
        a: Matrix2::new(ki[(0, 0)], ki[(0, 1)], ki[(1, 0)], ki[(1, 1)]),
        b: Vector2::new(ki[(0, 2)], ki[(1, 2)]),
    }
}

/// Isotropic PY grid of `width x height` nodes covering the camera's image.
///
/// The box spans the warped corners and edge midpoints of the image; a single
/// spacing is chosen so that the box fits, and the box is centred.
pub fn py_grid_for_camera(cam: &Camera, width: usize, height: usize) -> Affine2 {
    let (xm, ym) = ((cam.width - 1) as f64, (cam.height - 1) as f64);
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for (fx, fy) in [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 0.5), (1.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)] {
        let w = plane_to_grid(cam.pixel_to_calibrated(Vector2::new(fx * xm, fy * ym)));
        lo = lo.inf(&w);
        hi = hi.sup(&w);
    }
    let span_x = if width > 1 { (hi.x - lo.x) / (width - 1) as f64 } else { 0.0 };
    let span_y = if height > 1 { (hi.y - lo.y) / (height - 1) as f64 } else { 0.0 };
    let mut spacing = span_x.max(span_y);
    if !(spacing > 0.0) {
        spacing = 1e-3;
    }
    let center = (lo + hi) / 2.0;
    let half = Vector2::new((width - 1) as f64, (height - 1) as f64) / 2.0;
    Affine2 {
        a: Matrix2::identity() * spacing,
        b: center - half * spacing,
    }
}

fn check_camera(img: &Raster, cam: &Camera) -> Result<()> {
    if img.width() != cam.width || img.height() != cam.height {
        return Err(Error::Precondition(format!(
            "raster is {}x{} but camera is {}x{}",
            img.width(),
            img.height(),
            cam.width,
            cam.height
        )));
    }
    Ok(())
}

/// Resamples an image-plane raster onto the PY grid of
/// [`py_grid_for_camera`]. Output pixels whose source falls outside the
/// image are zero and invalid. `out_size` is `(height, width)`.
pub fn warp_to_py(img: &Raster, cam: &Camera, out_size: (usize, usize)) -> Result<Raster> {
    check_camera(img, cam)?;
    let (height, width) = out_size;
    let grid = py_grid_for_camera(cam, width, height);
    Ok(img.remap(width, height, grid, |x, y| {
        let u = grid_to_plane(grid.apply(Vector2::new(x, y)))?;
        Some(cam.calibrated_to_pixel(u))
    }))
}

/// Resamples a PY raster back to the image plane of `cam`.
pub fn warp_from_py(img_py: &Raster, cam: &Camera, out_size: (usize, usize)) -> Result<Raster> {
    let (height, width) = out_size;
    let to_grid = img_py.pix2cal.inverse();
    Ok(img_py.remap(width, height, camera_pix2cal(cam), |x, y| {
        let w = plane_to_grid(cam.pixel_to_calibrated(Vector2::new(x, y)));
        if !(w.norm() < FRAC_PI_2) {
            return None;
        }
        Some(to_grid.apply(w))
    }))
}

/// Nearest-neighbour warp of a segmentation mask onto the PY grid `grid`.
pub fn warp_mask_to_py(mask: &[bool], cam: &Camera, grid: &Affine2, out_size: (usize, usize)) -> Vec<bool> {
    let (height, width) = out_size;
    remap_mask_nearest(mask, cam.width, cam.height, width, height, |x, y| {
        let u = grid_to_plane(grid.apply(Vector2::new(x, y)))?;
        Some(cam.calibrated_to_pixel(u))
    })
}

/// Nearest-neighbour warp of a PY mask back to the camera raster.
pub fn warp_mask_from_py(
    mask: &[bool],
    grid: &Affine2,
    grid_size: (usize, usize),
    cam: &Camera,
) -> Vec<bool> {
    let to_grid = grid.inverse();
    remap_mask_nearest(mask, grid_size.1, grid_size.0, cam.width, cam.height, |x, y| {
        let w = plane_to_grid(cam.pixel_to_calibrated(Vector2::new(x, y)));
        Some(to_grid.apply(w))
    })
}

/// Object position as pitch-yaw direction plus distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyPoseTarget {
    pub alpha: PyVec,
    pub s: f64,
}

impl PyPoseTarget {
    pub fn new(alpha: PyVec, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Precondition(format!("distance must be positive, got {s}")));
        }
        if !(alpha.norm() < FRAC_PI_2) {
            return Err(Error::OutOfHemisphere(alpha.norm()));
        }
        Ok(PyPoseTarget { alpha, s })
    }

    /// Position on the PY grid, as used by PY images.
    pub fn grid_coords(&self) -> Vector2<f64> {
        Vector2::from(self.alpha.grid_coords())
    }
}

/// Camera-frame translation to `(alpha, |t|)` with `exp(alpha) e2 = t / |t|`.
pub fn target_to_py(t: &Vector3<f64>) -> Result<PyPoseTarget> {
    let u = project(t)?;
    PyPoseTarget::new(plane_to_py(u), t.norm())
}

/// Inverse of [`target_to_py`].
pub fn target_from_py(tgt: &PyPoseTarget) -> Result<Vector3<f64>> {
    let checked = PyPoseTarget::new(tgt.alpha, tgt.s)?;
    Ok(exp_py_pole(checked.alpha).vector() * checked.s)
}

/// Rotation whose third column is the viewing ray `theta`: the pitch-yaw of
/// least angle that tilts the optical axis onto the ray.
pub fn pixel_frame(theta: &SpherePoint) -> Result<Rotation3> {
    Ok(exp_py(min_py_log(theta)?))
}
