//! File formats: PNG images and masks, JSON sidecars, CSV numbers.
//!
//! Every float written to JSON or CSV uses 17 significant digits, enough to
//! read back the identical `f64`.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::{Matrix2, Vector2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::AugConfig;
use crate::camera::{Camera, CameraFile, PoseFile, PoseLabel};
use crate::error::{Error, Result};
use crate::pyconv::PYKernel;
use crate::raster::{Affine2, Raster};

/// Shortest representation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

struct RoundTripFormatter;

impl serde_json::ser::Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with round-trip floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    read_json::<CameraFile>(path)?.try_into()
}

pub fn write_camera(path: &Path, cam: &Camera) -> Result<()> {
    write_json(path, &CameraFile::from(cam))
}

pub fn read_pose(path: &Path) -> Result<PoseLabel> {
    read_json::<PoseFile>(path)?.try_into()
}

pub fn write_pose(path: &Path, pose: &PoseLabel) -> Result<()> {
    write_json(path, &PoseFile::from(pose))
}

pub fn read_kernel(path: &Path) -> Result<PYKernel> {
    let k: PYKernel = read_json(path)?;
    k.validate()?;
    Ok(k)
}

pub fn read_aug_config(path: &Path) -> Result<AugConfig> {
    let c: AugConfig = read_json(path)?;
    c.validate()?;
    Ok(c)
}

/// Sidecar form of a raster's pixel-to-coordinate map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pix2CalFile {
    #[serde(rename = "A")]
    pub a: [f64; 4],
    pub b: [f64; 2],
}

impl From<&Affine2> for Pix2CalFile {
    fn from(m: &Affine2) -> Self {
        Pix2CalFile {
            a: [m.a[(0, 0)], m.a[(0, 1)], m.a[(1, 0)], m.a[(1, 1)]],
            b: [m.b.x, m.b.y],
        }
    }
}

impl TryFrom<Pix2CalFile> for Affine2 {
    type Error = Error;
    fn try_from(f: Pix2CalFile) -> Result<Affine2> {
        Affine2::new(Matrix2::new(f.a[0], f.a[1], f.a[2], f.a[3]), Vector2::new(f.b[0], f.b[1]))
    }
}

/// `out.png` -> `out.pix2cal.json`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("pix2cal.json")
}

pub fn read_pix2cal(path: &Path) -> Result<Affine2> {
    read_json::<Pix2CalFile>(path)?.try_into()
}

pub fn write_pix2cal(path: &Path, m: &Affine2) -> Result<()> {
    write_json(path, &Pix2CalFile::from(m))
}

/// Reads any PNG as 3-channel RGB on the 0..255 scale, all pixels valid.
pub fn read_png(path: &Path, pix2cal: Affine2) -> Result<Raster> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_raw().iter().map(|v| *v as f64).collect();
    Raster::new(w, h, 3, data, vec![true; w * h], pix2cal)
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes an RGB PNG; one-channel rasters are replicated to grey.
pub fn write_png(path: &Path, r: &Raster) -> Result<()> {
    let (w, h, ch) = (r.width(), r.height(), r.channels());
    if ch != 1 && ch != 3 {
        return Err(Error::Precondition(format!("cannot write {ch}-channel raster as PNG")));
    }
    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let p = r.pixel(x as usize, y as usize);
        if ch == 1 {
            Rgb([to_u8(p[0]); 3])
        } else {
            Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])])
        }
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Single-channel mask, 255 where valid.
pub fn write_mask_png(path: &Path, mask: &[bool], width: usize, height: usize) -> Result<()> {
    if mask.len() != width * height {
        return Err(Error::Precondition("mask size does not match dimensions".into()));
    }
    let img: GrayImage = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        Luma([if mask[y as usize * width + x as usize] { 255 } else { 0 }])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Nonzero pixels are `true`.
pub fn read_mask_png(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((img.as_raw().iter().map(|v| *v > 0).collect(), w, h))
}
