//! Rotation and pitch-yaw algebra.
//!
//! A pitch-yaw vector `alpha = (a0, a1)` stands for the skew matrix
//! `a0 * C0 + a1 * C1`, where `C0 v = e0 x v` and `C1 v = e1 x v`. Its
//! exponential is the rotation by angle `|alpha|` about the in-plane axis
//! `(a0, a1, 0)`. Pitch-yaw vectors add as plain 2-vectors.
//!
//! Points on the unit sphere are reached from the optical axis `e2` via
//! `alpha -> exp(alpha) e2`; the indexed map [`phi_map`] additionally records
//! how many times the geodesic passed through a pole, which makes it injective
//! away from circles of radius `k * pi`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
const SMALL_ANGLE: f64 = 1e-6;

/// Tolerance used when validating user supplied rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// `sin(x) / x` and `(1 - cos(x)) / x^2`.
fn rodrigues_coefficients(x: f64) -> (f64, f64) {
    if x < SMALL_ANGLE {
        let x2 = x * x;
        let a = 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0;
        let b = 0.5 - x2 / 24.0 + x2 * x2 / 720.0 - x2 * x2 * x2 / 40320.0;
        (a, b)
    } else {
        (x.sin() / x, (1.0 - x.cos()) / (x * x))
    }
}

/// Cross-product matrix `[w]_x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Validates orthonormality and orientation to [`ROTATION_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "|R^T R - I| = {ortho:e}, det = {det}"
            )));
        }
        Ok(Rotation3(m))
    }

    /// Wraps a matrix known to be a rotation (e.g. a product of rotations).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation3(m)
    }

    /// Rodrigues formula for the rotation vector `w` (axis times angle).
    pub fn from_rotation_vector(w: &Vector3<f64>) -> Self {
        let (a, b) = rodrigues_coefficients(w.norm());
        let k = hat(w);
        Rotation3(Matrix3::identity() + k * a + k * k * b)
    }

    /// Rotation about the optical axis `e2` (an image roll).
    pub fn about_optical_axis(angle: f64) -> Self {
        Self::from_rotation_vector(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Third column, the image of the optical axis.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.0.column(2).into_owned()
    }

    /// Largest deviation from orthonormality and unit determinant.
    pub fn defect(&self) -> f64 {
        let ortho = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        ortho.max((self.0.determinant() - 1.0).abs())
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

/// Pitch-yaw Lie algebra element `a0 * C0 + a1 * C1`, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PyVec {
    pub a0: f64,
    pub a1: f64,
}

impl PyVec {
    pub const ZERO: PyVec = PyVec { a0: 0.0, a1: 0.0 };

    pub fn new(a0: f64, a1: f64) -> Self {
        PyVec { a0, a1 }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        PyVec::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(&self) -> f64 {
        self.a0.hypot(self.a1)
    }

    pub fn is_finite(&self) -> bool {
        self.a0.is_finite() && self.a1.is_finite()
    }

    /// Rotation axis `(a0, a1, 0)` scaled by the angle.
    pub fn axis(&self) -> Vector3<f64> {
        Vector3::new(self.a0, self.a1, 0.0)
    }

    /// The 3x3 skew matrix this vector stands for.
    pub fn skew(&self) -> Matrix3<f64> {
        hat(&self.axis())
    }

    /// Coordinates on an image-aligned PY grid.
    ///
    /// Exact pitch-yaw geometry sends `alpha` to the polar angle of `alpha`
    /// minus `pi/2`. Image warps drop that quarter turn, so a PY image pixel
    /// at grid coordinates `w` holds the ray `exp(alpha) e2` with
    /// `w = (a1, -a0)`, which is also the tangent `alpha e2` at the pole.
    pub fn grid_coords(&self) -> [f64; 2] {
        [self.a1, -self.a0]
    }

    /// Inverse of [`PyVec::grid_coords`].
    pub fn from_grid_coords(w: [f64; 2]) -> Self {
        PyVec::new(-w[1], w[0])
    }
}

impl Add for PyVec {
    type Output = PyVec;
    fn add(self, rhs: PyVec) -> PyVec {
        PyVec::new(self.a0 + rhs.a0, self.a1 + rhs.a1)
    }
}

impl Sub for PyVec {
    type Output = PyVec;
    fn sub(self, rhs: PyVec) -> PyVec {
        PyVec::new(self.a0 - rhs.a0, self.a1 - rhs.a1)
    }
}

impl Neg for PyVec {
    type Output = PyVec;
    fn neg(self) -> PyVec {
        PyVec::new(-self.a0, -self.a1)
    }
}

impl Mul<f64> for PyVec {
    type Output = PyVec;
    fn mul(self, s: f64) -> PyVec {
        PyVec::new(self.a0 * s, self.a1 * s)
    }
}

/// Unit vector in R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Vector3<f64>);

impl SpherePoint {
    /// Accepts vectors whose norm is within 1e-10 of one.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!("|v| = {n} is not a unit vector")));
        }
        Ok(SpherePoint(v))
    }

    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Degenerate("cannot normalize a zero vector".into()));
        }
        Ok(SpherePoint(v / n))
    }

    pub(crate) fn from_unit_unchecked(v: Vector3<f64>) -> Self {
        SpherePoint(v)
    }

    /// The optical axis `e2`.
    pub fn pole() -> Self {
        SpherePoint(Vector3::z())
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Euclidean chord distance.
    pub fn chord(&self, other: &SpherePoint) -> f64 {
        (self.0 - other.0).norm()
    }

    /// Great-circle distance, computed with atan2 for accuracy at both ends.
    pub fn arc(&self, other: &SpherePoint) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

/// A sphere point tagged with the number of pole crossings of the geodesic
/// that reached it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePointIndexed {
    pub n: u32,
    pub p: SpherePoint,
}

/// Calibrated image coordinates on the plane `x2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanePoint {
    pub u0: f64,
    pub u1: f64,
}

impl PlanePoint {
    pub fn new(u0: f64, u1: f64) -> Self {
        PlanePoint { u0, u1 }
    }

    pub fn norm(&self) -> f64 {
        self.u0.hypot(self.u1)
    }
}

/// Matrix exponential of a pitch-yaw vector.
pub fn exp_py(alpha: PyVec) -> Rotation3 {
    Rotation3::from_rotation_vector(&alpha.axis())
}

/// `exp(alpha) e2 = (sinc|a| a1, -sinc|a| a0, cos|a|)`.
pub fn exp_py_pole(alpha: PyVec) -> SpherePoint {
    let x = alpha.norm();
    let (a, _) = rodrigues_coefficients(x);
    SpherePoint(Vector3::new(a * alpha.a1, -a * alpha.a0, x.cos()))
}

/// The pitch-yaw of smallest norm carrying `e2` to `theta`.
///
/// Fails at the antipode `-e2`, where every direction is a minimizer.
pub fn min_py_log(theta: &SpherePoint) -> Result<PyVec> {
    let v = theta.vector();
    let rho = v.x.hypot(v.y);
    if rho < 1e-12 {
        if v.z > 0.0 {
            return Ok(PyVec::ZERO);
        }
        return Err(Error::Degenerate("minimal log is not unique at -e2".into()));
    }
    let angle = rho.atan2(v.z.clamp(-1.0, 1.0));
    let s = angle / rho;
    Ok(PyVec::new(-v.y * s, v.x * s))
}

fn check_injective(r: f64) -> Result<()> {
    let m = (r / PI).round();
    if m >= 1.0 && (r - m * PI).abs() <= 1e-12 * r.max(1.0) {
        return Err(Error::NonInjective(r));
    }
    Ok(())
}

/// The indexed-sphere lift `alpha -> (n, exp(alpha) e2)`.
///
/// The geodesic `t -> exp(t alpha) e2` has constant speed `|alpha|` and meets
/// a pole every `pi`, so the crossing count is `floor(|alpha| / pi)`.
pub fn phi_map(alpha: PyVec) -> Result<SpherePointIndexed> {
    if !alpha.is_finite() {
        return Err(Error::Precondition("non-finite pitch-yaw".into()));
    }
    let r = alpha.norm();
    check_injective(r)?;
    Ok(SpherePointIndexed {
        n: (r / PI).floor() as u32,
        p: exp_py_pole(alpha),
    })
}

/// Inverse of [`phi_map`] on its image.
pub fn phi_inverse(s: &SpherePointIndexed) -> Result<PyVec> {
    if s.n == 0 {
        return min_py_log(&s.p);
    }
    let v = s.p.vector();
    let rho = v.x.hypot(v.y);
    if rho < 1e-12 {
        return Err(Error::Degenerate(format!(
            "crossing count {} at a pole has no unique preimage",
            s.n
        )));
    }
    let r0 = rho.atan2(v.z);
    let dir = PyVec::new(-v.y / rho, v.x / rho);
    let n = f64::from(s.n);
    if s.n % 2 == 0 {
        Ok(dir * (r0 + n * PI))
    } else {
        // odd crossings: the geodesic went the other way round
        Ok(dir * -((n + 1.0) * PI - r0))
    }
}

/// Calibrated image point of `exp(alpha) e2`: radius `tan|alpha|` at polar
/// angle `arg(alpha) - pi/2`.
pub fn py_to_plane(alpha: PyVec) -> Result<PlanePoint> {
    let r = alpha.norm();
    if !(r < FRAC_PI_2) {
        return Err(Error::OutOfHemisphere(r));
    }
    let s = tan_over(r);
    Ok(PlanePoint::new(s * alpha.a1, -s * alpha.a0))
}

/// Inverse of [`py_to_plane`]; the radius is compressed by `arctan`.
pub fn plane_to_py(u: PlanePoint) -> PyVec {
    let s = atan_over(u.norm());
    PyVec::new(-s * u.u1, s * u.u0)
}

/// `tan(r) / r`.
pub(crate) fn tan_over(r: f64) -> f64 {
    if r < 1e-4 {
        let r2 = r * r;
        1.0 + r2 / 3.0 + 2.0 * r2 * r2 / 15.0
    } else {
        r.tan() / r
    }
}

/// `atan(r) / r`.
pub(crate) fn atan_over(r: f64) -> f64 {
    if r < 1e-4 {
        let r2 = r * r;
        1.0 - r2 / 3.0 + r2 * r2 / 5.0
    } else {
        r.atan() / r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(*exp_py(PyVec::ZERO).matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_pitch_sends_e2_to_minus_e1() {
        let r = exp_py(PyVec::new(FRAC_PI_2, 0.0));
        assert!(close(&r.apply(&Vector3::z()), &Vector3::new(0.0, -1.0, 0.0), 1e-15));
    }

    #[test]
    fn pole_image_matches_spherical_coordinates() {
        // exp(r (cos f, sin f)) e2 has polar angle f - pi/2 and colatitude r
        for &(r, f) in &[(0.3, 0.1), (1.2, -2.0), (3.0, 2.5)] {
            let p = exp_py(PyVec::from_polar(r, f)).apply(&Vector3::z());
            let g = f - FRAC_PI_2;
            let expect = Vector3::new(r.sin() * g.cos(), r.sin() * g.sin(), r.cos());
            assert!(close(&p, &expect, 1e-14), "{p} vs {expect}");
        }
    }

    #[test]
    fn pole_shortcut_agrees_with_matrix() {
        for &a in &[PyVec::new(0.0, 0.0), PyVec::new(1e-8, -3e-8), PyVec::new(2.0, -5.0)] {
            let m = exp_py(a).apply(&Vector3::z());
            assert!(close(&m, exp_py_pole(a).vector(), 1e-15));
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let a = PyVec::new(0.6e-6, 0.7e-6);
        let b = a * (1.0 + 1e-9);
        assert!((exp_py(a).matrix() - exp_py(b).matrix()).abs().max() < 1e-14);
        assert!(exp_py(a).defect() < 1e-15);
    }

    #[test]
    fn min_log_examples() {
        assert_eq!(min_py_log(&SpherePoint::pole()).unwrap(), PyVec::ZERO);
        let a = min_py_log(&SpherePoint::new(Vector3::new(0.0, -1.0, 0.0)).unwrap()).unwrap();
        assert!((a.a0 - FRAC_PI_2).abs() < 1e-15 && a.a1.abs() < 1e-15);
        let south = SpherePoint::new(Vector3::new(-0.0, 0.0, -1.0)).unwrap();
        assert!(matches!(min_py_log(&south), Err(Error::Degenerate(_))));
    }

    #[test]
    fn phi_map_examples() {
        let s = phi_map(PyVec::new(FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(s.n, 0);
        assert!(close(s.p.vector(), &Vector3::new(0.0, -1.0, 0.0), 1e-15));

        let s = phi_map(PyVec::new(3.0 * FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(s.n, 1);
        assert!(close(s.p.vector(), &Vector3::new(0.0, 1.0, 0.0), 1e-15));

        let s = phi_map(PyVec::ZERO).unwrap();
        assert_eq!(s.n, 0);
        assert_eq!(s.p, SpherePoint::pole());

        assert!(matches!(phi_map(PyVec::new(0.0, PI)), Err(Error::NonInjective(_))));
        assert!(matches!(phi_map(PyVec::new(-2.0 * PI, 0.0)), Err(Error::NonInjective(_))));
    }

    #[test]
    fn phi_inverse_examples() {
        let at = |n, v: Vector3<f64>| SpherePointIndexed { n, p: SpherePoint::new(v).unwrap() };
        assert_eq!(phi_inverse(&at(0, Vector3::z())).unwrap(), PyVec::ZERO);
        let a = phi_inverse(&at(0, Vector3::new(0.0, -1.0, 0.0))).unwrap();
        assert!((a - PyVec::new(FRAC_PI_2, 0.0)).norm() < 1e-15);
        let a = phi_inverse(&at(1, Vector3::new(0.0, 1.0, 0.0))).unwrap();
        assert!((a - PyVec::new(3.0 * FRAC_PI_2, 0.0)).norm() < 1e-14);
        assert!(matches!(phi_inverse(&at(2, Vector3::z())), Err(Error::Degenerate(_))));
        assert!(matches!(phi_inverse(&at(1, -Vector3::z())), Err(Error::Degenerate(_))));
    }

    #[test]
    fn plane_examples() {
        let u = py_to_plane(PyVec::new(0.0, FRAC_PI_4)).unwrap();
        assert!((u.u0 - 1.0).abs() < 1e-15 && u.u1.abs() < 1e-15);
        assert_eq!(py_to_plane(PyVec::ZERO).unwrap(), PlanePoint::new(0.0, 0.0));
        let u = py_to_plane(PyVec::new(FRAC_PI_4, 0.0)).unwrap();
        assert!(u.u0.abs() < 1e-15 && (u.u1 + 1.0).abs() < 1e-15);
        assert!(matches!(py_to_plane(PyVec::new(FRAC_PI_2, 0.0)), Err(Error::OutOfHemisphere(_))));

        assert_eq!(plane_to_py(PlanePoint::default()), PyVec::ZERO);
        let a = plane_to_py(PlanePoint::new(1.0, 0.0));
        assert!(a.a0.abs() < 1e-15 && (a.a1 - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn grid_coords_round_trip() {
        let a = PyVec::new(0.3, -0.2);
        assert_eq!(PyVec::from_grid_coords(a.grid_coords()), a);
    }

    #[test]
    fn rejects_reflections() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation3::from_matrix(m).is_err());
    }
}
