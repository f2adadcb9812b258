//! Pinhole cameras, homographies and pose relabeling.
//!
//! All geometry happens in calibrated coordinates (image plane `x2 = 1`);
//! the intrinsic matrix `K` only appears when converting to pixels.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3py::{PlanePoint, Rotation3, SpherePoint};

/// Intrinsics plus raster size.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(k: Matrix3<f64>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("raster dimensions must be positive".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidCamera(
                "K must be upper triangular with K[2][2] = 1".into(),
            ));
        }
        if !k.iter().all(|v| v.is_finite()) || k[(0, 0)] * k[(1, 1)] == 0.0 {
            return Err(Error::InvalidCamera("K is singular".into()));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::InvalidCamera("K is singular".into()))?;
        Ok(Camera { k, k_inv, width, height })
    }

    /// Square pixels, no skew.
    pub fn from_focal(focal: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0),
            width,
            height,
        )
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn k_inv(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    /// Same intrinsics for a raster of another size.
    pub fn with_size(&self, width: usize, height: usize) -> Result<Self> {
        Camera::new(self.k, width, height)
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.k[(0, 2)], self.k[(1, 2)])
    }

    pub fn pixel_to_calibrated(&self, p: Vector2<f64>) -> PlanePoint {
        let c = self.k_inv * Vector3::new(p.x, p.y, 1.0);
        PlanePoint::new(c.x, c.y)
    }

    pub fn calibrated_to_pixel(&self, u: PlanePoint) -> Vector2<f64> {
        let p = self.k * Vector3::new(u.u0, u.u1, 1.0);
        Vector2::new(p.x, p.y)
    }
}

/// Projective map of the image plane, stored unnormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(h: Matrix3<f64>) -> Result<Self> {
        let scale = h.abs().max();
        if !(scale.is_finite() && scale > 0.0) || (h / scale).determinant().abs() <= 1e-12 {
            return Err(Error::Precondition("homography is singular".into()));
        }
        Ok(Homography(h))
    }

    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    /// Image translation by `tau` in homogeneous form.
    pub fn translation(tau: Vector2<f64>) -> Self {
        Homography(Matrix3::new(1.0, 0.0, tau.x, 0.0, 1.0, tau.y, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Homography {
        // non-singular by construction
        Homography(self.0.try_inverse().expect("homography is invertible"))
    }

    pub fn compose(&self, rhs: &Homography) -> Homography {
        Homography(self.0 * rhs.0)
    }

    /// Scaled so that the entry of largest magnitude equals +1.
    pub fn normalized(&self) -> Matrix3<f64> {
        let (mut best, mut pivot) = (0.0, 1.0);
        for v in self.0.iter() {
            if v.abs() > best {
                best = v.abs();
                pivot = *v;
            }
        }
        self.0 / pivot
    }

    /// Max-entry difference of the normalized matrices.
    pub fn projective_distance(&self, other: &Homography) -> f64 {
        (self.normalized() - other.normalized()).abs().max()
    }
}

/// `x -> R x + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub r: Rotation3,
    pub v: Vector3<f64>,
}

impl RigidMotion {
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r.apply(x) + self.v
    }
}

/// World-to-camera rotation and camera center; `lambda y = K R (x - c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub r: Rotation3,
    pub c: Vector3<f64>,
}

impl CameraPose {
    /// Homogeneous pixel of the world point `x`.
    pub fn image_of(&self, cam: &Camera, x: &Vector3<f64>) -> Vector3<f64> {
        cam.k() * self.r.apply(&(x - self.c))
    }
}

/// Perspective division `(x0 / x2, x1 / x2)`.
pub fn project(x: &Vector3<f64>) -> Result<PlanePoint> {
    if !(x.z > 0.0) {
        return Err(Error::BehindCamera(x.z));
    }
    Ok(PlanePoint::new(x.x / x.z, x.y / x.z))
}

/// Inverse of [`project`] restricted to the upper hemisphere.
pub fn unproject(u: PlanePoint) -> SpherePoint {
    let v = Vector3::new(u.u0, u.u1, 1.0);
    SpherePoint::from_unit_unchecked(v / v.norm())
}

/// Dehomogenized image of a pixel.
pub fn apply_homography(h: &Homography, p: Vector2<f64>) -> Result<Vector2<f64>> {
    let y = h.0 * Vector3::new(p.x, p.y, 1.0);
    if y.z.abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok(Vector2::new(y.x / y.z, y.y / y.z))
}

/// `K' R K^-1`: the image of a camera rotation, re-rendered through `cam_out`.
pub fn rotational_homography(cam: &Camera, r_aug: &Rotation3, cam_out: &Camera) -> Homography {
    Homography(cam_out.k() * r_aug.matrix() * cam.k_inv())
}

/// Camera pose after rotating the camera by `r_aug` about its center.
pub fn relabel_pose(pose: &CameraPose, r_aug: &Rotation3) -> CameraPose {
    CameraPose {
        r: *r_aug * pose.r,
        c: pose.c,
    }
}

/// Object-in-camera pose `(R_obj, t_obj)` after the same camera rotation.
///
/// `t_obj` is expressed in the camera frame, so both parts rotate.
pub fn object_pose_relabel(
    r_obj: &Rotation3,
    t_obj: &Vector3<f64>,
    r_aug: &Rotation3,
) -> (Rotation3, Vector3<f64>) {
    (*r_aug * *r_obj, r_aug.apply(t_obj))
}

/// On-disk camera description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    pub width: usize,
    pub height: usize,
}

impl TryFrom<CameraFile> for Camera {
    type Error = Error;
    fn try_from(f: CameraFile) -> Result<Camera> {
        Camera::new(Matrix3::from_row_slice(&f.k), f.width, f.height)
    }
}

impl From<&Camera> for CameraFile {
    fn from(c: &Camera) -> Self {
        let mut k = [0.0; 9];
        for (i, v) in k.iter_mut().enumerate() {
            *v = c.k()[(i / 3, i % 3)];
        }
        CameraFile { k, width: c.width, height: c.height }
    }
}

/// On-disk pose: exactly one of `t` (object in camera) or `c` (camera center).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseFile {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<[f64; 3]>,
}

/// Parsed pose label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseLabel {
    Object { r: Rotation3, t: Vector3<f64> },
    Camera(CameraPose),
}

impl TryFrom<PoseFile> for PoseLabel {
    type Error = Error;
    fn try_from(f: PoseFile) -> Result<PoseLabel> {
        let r = Rotation3::from_matrix(Matrix3::from_row_slice(&f.r))?;
        match (f.t, f.c) {
            (Some(t), None) => Ok(PoseLabel::Object { r, t: Vector3::from(t) }),
            (None, Some(c)) => Ok(PoseLabel::Camera(CameraPose { r, c: Vector3::from(c) })),
            _ => Err(Error::Format("pose needs exactly one of \"t\" or \"c\"".into())),
        }
    }
}

impl From<&PoseLabel> for PoseFile {
    fn from(p: &PoseLabel) -> Self {
        let rows = |r: &Rotation3| {
            let mut out = [0.0; 9];
            for (i, v) in out.iter_mut().enumerate() {
                *v = r.matrix()[(i / 3, i % 3)];
            }
            out
        };
        match p {
            PoseLabel::Object { r, t } => PoseFile { r: rows(r), t: Some([t.x, t.y, t.z]), c: None },
            PoseLabel::Camera(cp) => PoseFile {
                r: rows(&cp.r),
                t: None,
                c: Some([cp.c.x, cp.c.y, cp.c.z]),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3py::{exp_py, PyVec};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn project_examples() {
        assert_eq!(project(&Vector3::new(2.0, 4.0, 2.0)).unwrap(), PlanePoint::new(1.0, 2.0));
        assert_eq!(project(&Vector3::new(0.0, 0.0, 5.0)).unwrap(), PlanePoint::new(0.0, 0.0));
        assert!(matches!(project(&Vector3::new(1.0, 1.0, 0.0)), Err(Error::BehindCamera(_))));
    }

    #[test]
    fn unproject_examples() {
        assert_eq!(*unproject(PlanePoint::default()).vector(), Vector3::z());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = unproject(PlanePoint::new(1.0, 0.0));
        assert!((v.vector() - Vector3::new(h, 0.0, h)).norm() < 1e-15);
        let v = unproject(PlanePoint::new(0.0, -1.0));
        assert!((v.vector() - Vector3::new(0.0, -h, h)).norm() < 1e-15);
    }

    #[test]
    fn homography_examples() {
        let p = Vector2::new(3.5, -2.0);
        assert_eq!(apply_homography(&Homography::identity(), p).unwrap(), p);
        let t = Homography::translation(Vector2::new(3.0, 4.0));
        assert_eq!(apply_homography(&t, Vector2::zeros()).unwrap(), Vector2::new(3.0, 4.0));
        let s = Homography::new(Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0))).unwrap();
        assert_eq!(apply_homography(&s, Vector2::new(1.0, 1.0)).unwrap(), Vector2::new(2.0, 2.0));

        let h = Homography::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(matches!(apply_homography(&h, Vector2::new(-1.0, 5.0)), Err(Error::PointAtInfinity)));
        assert!(Homography::new(Matrix3::zeros()).is_err());
    }

    #[test]
    fn identity_rotation_gives_identity_homography() {
        let cam = Camera::from_focal(500.0, 320.0, 240.0, 640, 480).unwrap();
        let h = rotational_homography(&cam, &Rotation3::identity(), &cam);
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn roll_is_an_image_rotation_about_the_principal_point() {
        let theta = 0.7;
        let unit = Camera::new(Matrix3::identity(), 10, 10).unwrap();
        let h = rotational_homography(&unit, &Rotation3::about_optical_axis(theta), &unit);
        let (c, s) = (theta.cos(), theta.sin());
        let rot2 = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix() - rot2).abs().max() < 1e-15);

        let cam = Camera::from_focal(400.0, 300.0, 200.0, 600, 400).unwrap();
        let h = rotational_homography(&cam, &Rotation3::about_optical_axis(theta), &cam);
        let pp = cam.principal_point();
        assert!((apply_homography(&h, pp).unwrap() - pp).norm() < 1e-10);
    }

    #[test]
    fn camera_validation() {
        assert!(Camera::new(Matrix3::identity(), 0, 5).is_err());
        let mut k = Matrix3::identity();
        k[(1, 0)] = 0.1;
        assert!(Camera::new(k, 5, 5).is_err());
        let mut k = Matrix3::identity();
        k[(2, 2)] = 2.0;
        assert!(Camera::new(k, 5, 5).is_err());
        let mut k = Matrix3::identity();
        k[(0, 0)] = 0.0;
        assert!(Camera::new(k, 5, 5).is_err());
    }

    #[test]
    fn relabel_examples() {
        let pose = CameraPose { r: Rotation3::identity(), c: Vector3::zeros() };
        assert_eq!(relabel_pose(&pose, &Rotation3::identity()), pose);
        let r_aug = exp_py(PyVec::new(FRAC_PI_2, 0.0));
        let out = relabel_pose(&pose, &r_aug);
        assert_eq!(out.r, r_aug);
        assert_eq!(out.c, Vector3::zeros());

        let (r, t) = object_pose_relabel(
            &Rotation3::identity(),
            &Vector3::new(0.0, 0.0, 2.0),
            &exp_py(PyVec::new(0.0, FRAC_PI_2)),
        );
        assert_eq!(r, exp_py(PyVec::new(0.0, FRAC_PI_2)));
        assert!((t - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pose_file_requires_exactly_one_position() {
        let r = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let both = PoseFile { r, t: Some([0.0; 3]), c: Some([0.0; 3]) };
        assert!(PoseLabel::try_from(both).is_err());
        let none = PoseFile { r, t: None, c: None };
        assert!(PoseLabel::try_from(none).is_err());
        let json = r#"{"R":[1,0,0,0,1,0,0,0,1],"c":[1,2,3]}"#;
        let f: PoseFile = serde_json::from_str(json).unwrap();
        assert!(matches!(PoseLabel::try_from(f).unwrap(), PoseLabel::Camera(_)));
    }
}
