//! Multi-channel rasters with a validity mask, bilinear sampling and remapping.
//!
//! Pixel centers sit at integer coordinates: column `x`, row `y`.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Affine map `p -> A p + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl Affine2 {
    pub fn identity() -> Self {
        Affine2 { a: Matrix2::identity(), b: Vector2::zeros() }
    }

    pub fn new(a: Matrix2<f64>, b: Vector2<f64>) -> Result<Self> {
        if !(a.determinant().abs() > 0.0) || !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::Precondition("affine map is not invertible".into()));
        }
        Ok(Affine2 { a, b })
    }

    pub fn apply(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.a * p + self.b
    }

    pub fn inverse(&self) -> Affine2 {
        let a = self.a.try_inverse().expect("affine map is invertible");
        Affine2 { a, b: -(a * self.b) }
    }

    /// Grid step if the linear part is `s * I`.
    pub fn isotropic_spacing(&self) -> Option<f64> {
        let s = self.a[(0, 0)];
        let tol = 1e-12 * s.abs();
        if (self.a[(1, 1)] - s).abs() <= tol && self.a[(0, 1)].abs() <= tol && self.a[(1, 0)].abs() <= tol {
            Some(s)
        } else {
            None
        }
    }
}

/// `H x W x C` values, an `H x W` validity mask and the pixel-to-coordinate map.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
    pub pix2cal: Affine2,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        valid: Vec<bool>,
        pix2cal: Affine2,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Precondition("raster dimensions must be positive".into()));
        }
        if data.len() != width * height * channels || valid.len() != width * height {
            return Err(Error::Precondition("raster buffer sizes do not match dimensions".into()));
        }
        Ok(Raster { width, height, channels, data, valid, pix2cal })
    }

    /// All pixels valid and equal to `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64, pix2cal: Affine2) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            valid: vec![true; width * height],
            pix2cal,
        }
    }

    /// Samples `f(x, y, channel)` at every pixel; all pixels valid.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        pix2cal: Affine2,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Raster { width, height, channels, data, valid: vec![true; width * height], pix2cal }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mut(&mut self) -> &mut [bool] {
        &mut self.valid
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Bilinear sample at `(x, y)`. `None` outside the pixel-center hull or
    /// when a tap with nonzero weight is invalid.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        const EDGE: f64 = 1e-9;
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= -EDGE && y >= -EDGE && x <= w - 1.0 + EDGE && y <= h - 1.0 + EDGE) {
            return false;
        }
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        if taps.iter().any(|&(tx, ty, wt)| wt != 0.0 && !self.is_valid(tx, ty)) {
            return false;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(tx, ty, wt) in &taps {
            if wt == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.pixel(tx, ty)) {
                *o += wt * v;
            }
        }
        true
    }

    /// Inverse warp: output pixel `(x, y)` takes the bilinear sample at
    /// `source(x, y)`; `None` or an unsampleable source gives value 0, invalid.
    pub fn remap<F>(&self, width: usize, height: usize, pix2cal: Affine2, source: F) -> Raster
    where
        F: Fn(f64, f64) -> Option<Vector2<f64>> + Sync,
    {
        let ch = self.channels;
        let mut data = vec![0.0; width * height * ch];
        let mut valid = vec![false; width * height];
        data.par_chunks_mut(width * ch)
            .zip(valid.par_chunks_mut(width))
            .enumerate()
            .for_each(|(y, (row, vrow))| {
                for x in 0..width {
                    if let Some(p) = source(x as f64, y as f64) {
                        let px = &mut row[x * ch..(x + 1) * ch];
                        if self.sample_bilinear(p.x, p.y, px) {
                            vrow[x] = true;
                        } else {
                            px.iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                }
            });
        Raster { width, height, channels: ch, data, valid, pix2cal }
    }

    /// Shift by `delta` pixels: the output at `p` is the input at `p - delta`.
    pub fn translate(&self, delta: Vector2<f64>) -> Raster {
        self.remap(self.width, self.height, self.pix2cal, |x, y| {
            Some(Vector2::new(x - delta.x, y - delta.y))
        })
    }

    /// Mean absolute difference over pixels valid in both rasters.
    pub fn mean_abs_diff(&self, other: &Raster) -> Result<f64> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(Error::Precondition("raster shapes differ".into()));
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..self.width * self.height {
            if self.valid[i] && other.valid[i] {
                for c in 0..self.channels {
                    sum += (self.data[i * self.channels + c] - other.data[i * self.channels + c]).abs();
                }
                count += self.channels;
            }
        }
        if count == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(sum / count as f64)
    }
}

/// Boolean mask remapped with nearest-neighbour lookup.
pub fn remap_mask_nearest<F>(
    mask: &[bool],
    src_width: usize,
    src_height: usize,
    width: usize,
    height: usize,
    source: F,
) -> Vec<bool>
where
    F: Fn(f64, f64) -> Option<Vector2<f64>> + Sync,
{
    let mut out = vec![false; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            if let Some(p) = source(x as f64, y as f64) {
                let (sx, sy) = (p.x.round(), p.y.round());
                if sx >= 0.0 && sy >= 0.0 && sx < src_width as f64 && sy < src_height as f64 {
                    *o = mask[sy as usize * src_width + sx as usize];
                }
            }
        }
    });
    out
}

/// Inclusive pixel bounding box `(x_min, y_min, x_max, y_max)` of a mask.
pub fn mask_bbox(mask: &[bool], width: usize) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = (i % width, i / width);
        bbox = Some(match bbox {
            None => (x, y, x, y),
            Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
        });
    }
    bbox
}
