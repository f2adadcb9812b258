//! Discrete convolution on PY grids.
//!
//! `(F * G)(a) = sum_b F(a - b) G(b) spacing^2`, a Riemann sum of the
//! continuous PY convolution. This is true convolution: the kernel is
//! flipped relative to correlation.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::warp_image;
use crate::camera::{rotational_homography, Camera};
use crate::distortion::t_of_alpha;
use crate::error::{Error, Result};
use crate::pywarp::warp_to_py;
use crate::raster::{Affine2, Raster};
use crate::so3py::{exp_py, PyVec};

/// Centered `k x k` kernel; `weights[row * k + col]`, rows along grid `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PYKernel {
    pub k: usize,
    pub spacing: f64,
    pub weights: Vec<f64>,
}

impl PYKernel {
    pub fn new(k: usize, spacing: f64, weights: Vec<f64>) -> Result<Self> {
        let kernel = PYKernel { k, spacing, weights };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k % 2 == 0 {
            return Err(Error::Precondition(format!("kernel size {} is not odd", self.k)));
        }
        if self.weights.len() != self.k * self.k {
            return Err(Error::Precondition(format!(
                "kernel has {} weights, expected {}",
                self.weights.len(),
                self.k * self.k
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) || !self.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Precondition("kernel spacing and weights must be finite".into()));
        }
        Ok(())
    }

    pub fn impulse(k: usize, spacing: f64) -> Result<Self> {
        let mut w = vec![0.0; k * k];
        if k % 2 == 1 {
            w[k * k / 2] = 1.0;
        }
        Self::new(k, spacing, w)
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.k + col]
    }
}

fn tap_stride(f: &Raster, g: &PYKernel) -> Result<usize> {
    let grid = f.pix2cal.isotropic_spacing().map(f64::abs);
    let mismatch = || Error::SpacingMismatch { kernel: g.spacing, grid: grid.unwrap_or(f64::NAN) };
    let s = grid.filter(|s| *s > 0.0).ok_or_else(mismatch)?;
    let m = g.spacing / s;
    let r = m.round();
    if r < 1.0 || (m - r).abs() > 1e-9 * m {
        return Err(mismatch());
    }
    Ok(r as usize)
}

/// Convolves a raster on an isotropic PY grid with `g`.
///
/// The kernel spacing must be a whole multiple of the grid spacing; taps are
/// then that many pixels apart. Values outside the valid region count as
/// zero, and an output pixel is valid only if its whole footprint is valid.
pub fn py_convolve(f: &Raster, g: &PYKernel) -> Result<Raster> {
    g.validate()?;
    let stride = tap_stride(f, g)?;
    let measure = g.spacing * g.spacing;
    let (w, h, ch) = (f.width(), f.height(), f.channels());
    let half = (g.k / 2) as isize;
    let stride = stride as isize;
    let mut data = vec![0.0; w * h * ch];
    let mut valid = vec![false; w * h];
    data.par_chunks_mut(w * ch)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, vrow))| {
            for x in 0..w {
                let mut ok = true;
                let out = &mut row[x * ch..(x + 1) * ch];
                for r in 0..g.k {
                    for c in 0..g.k {
                        let sx = x as isize - (c as isize - half) * stride;
                        let sy = y as isize - (r as isize - half) * stride;
                        if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                            ok = false;
                            continue;
                        }
                        let (sx, sy) = (sx as usize, sy as usize);
                        if !f.is_valid(sx, sy) {
                            ok = false;
                            continue;
                        }
                        let wt = g.weight(r, c) * measure;
                        for (o, v) in out.iter_mut().zip(f.pixel(sx, sy)) {
                            *o += wt * v;
                        }
                    }
                }
                vrow[x] = ok;
            }
        });
    Raster::new(w, h, ch, data, valid, f.pix2cal)
}

/// Mean absolute equivariance errors `(err_py, err_p2)` for rotating the
/// camera by `exp(alpha)`.
///
/// PY pipeline: both images are resampled to the PY grid, convolved, and
/// the reference result is shifted by `alpha` in grid coordinates.
/// Image pipeline: both images are convolved on the pixel grid and the
/// reference is shifted by the principal-point translation. Both kernels
/// use one-pixel tap steps and the results are divided by the tap measure,
/// so the two errors are on the intensity scale of the input.
pub fn equivariance_report(img: &Raster, cam: &Camera, g: &PYKernel, alpha: PyVec) -> Result<(f64, f64)> {
    g.validate()?;
    let rotated = warp_image(img, &rotational_homography(cam, &exp_py(alpha), cam));
    let size = (img.height(), img.width());

    let py_ref = warp_to_py(img, cam, size)?;
    let py_rot = warp_to_py(&rotated, cam, size)?;
    let spacing = py_ref
        .pix2cal
        .isotropic_spacing()
        .ok_or_else(|| Error::Precondition("PY grid is not isotropic".into()))?;
    let gk = PYKernel { spacing, ..g.clone() };
    let conv_ref = scaled(py_convolve(&py_ref, &gk)?, spacing * spacing);
    let conv_rot = scaled(py_convolve(&py_rot, &gk)?, spacing * spacing);
    let [w0, w1] = alpha.grid_coords();
    let shift = Vector2::new(w0, w1) / spacing;
    let err_py = conv_rot.mean_abs_diff(&conv_ref.translate(shift))?;

    let mut pix_ref = img.clone();
    pix_ref.pix2cal = Affine2::identity();
    let mut pix_rot = rotated;
    pix_rot.pix2cal = Affine2::identity();
    let gp = PYKernel { spacing: 1.0, ..g.clone() };
    let conv_ref = py_convolve(&pix_ref, &gp)?;
    let conv_rot = py_convolve(&pix_rot, &gp)?;
    let k = cam.k();
    let shift = Matrix2::new(k[(0, 0)], k[(0, 1)], k[(1, 0)], k[(1, 1)]) * t_of_alpha(alpha)?;
    let err_p2 = conv_rot.mean_abs_diff(&conv_ref.translate(shift))?;
    Ok((err_py, err_p2))
}

fn scaled(mut r: Raster, measure: f64) -> Raster {
    r.data_mut().iter_mut().for_each(|v| *v /= measure);
    r
}
