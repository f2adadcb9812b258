//! Rotational homographies, pitch-yaw warping and pitch-yaw convolution.
//!
//! Camera rotations act on images by homographies `K R K^-1`; these are the
//! only image maps that are consistent with a rigid motion of the scene. The
//! pitch-yaw (PY) plane parametrizes the rotations that tilt the optical
//! axis, and resampling images onto it turns small camera tilts into
//! approximate translations.

pub mod augment;
pub mod camera;
pub mod distortion;
pub mod error;
pub mod io;
pub mod pyconv;
pub mod pywarp;
pub mod raster;
pub mod rigidity;
pub mod so3py;
pub mod verify;

pub use camera::{Camera, Homography};
pub use error::{Error, Result};
pub use raster::{Affine2, Raster};
pub use so3py::{PyVec, Rotation3, SpherePoint};
