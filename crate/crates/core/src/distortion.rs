//! How well translations approximate a pitch-yaw rotation on the sphere.
//!
//! Three actions of a pitch-yaw `alpha` on `S^2` are compared:
//!
//! * [`psi`]: the rotation `theta -> exp(alpha) theta`;
//! * [`phi_act`]: PY translation, `theta -> exp(alpha + log(theta)) e2`,
//!   where `log` is the minimal pitch-yaw logarithm;
//! * [`chi_act`]: image-plane translation by `t = pi(exp(alpha) e2)`.
//!
//! Distortions are Euclidean chord lengths between the results.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector2, Vector3};

use crate::camera::{project, unproject, Camera};
use crate::error::{Error, Result};
use crate::so3py::{
    exp_py, exp_py_pole, min_py_log, phi_inverse, phi_map, PlanePoint, PyVec, SpherePoint,
    SpherePointIndexed,
};

pub fn psi(alpha: PyVec, theta: &SpherePoint) -> SpherePoint {
    SpherePoint::from_unit_unchecked(exp_py(alpha).apply(theta.vector()))
}

/// PY translation of a sphere point through the indexed lift.
pub fn phi_act(alpha: PyVec, theta: &SpherePoint) -> Result<SpherePoint> {
    let start = phi_inverse(&SpherePointIndexed { n: 0, p: *theta })?;
    if alpha == PyVec::ZERO {
        return Ok(*theta);
    }
    Ok(phi_map(alpha + start)?.p)
}

/// PY translation on indexed spheres, `Phi(alpha + Phi^-1(s))`. Unlike
/// [`phi_act`] this is a group action.
pub fn phi_act_indexed(alpha: PyVec, s: &SpherePointIndexed) -> Result<SpherePointIndexed> {
    phi_map(alpha + phi_inverse(s)?)
}

/// `pi(exp(alpha) e2)`, the image translation matched at the principal point.
pub fn t_of_alpha(alpha: PyVec) -> Result<Vector2<f64>> {
    let r = alpha.norm();
    if !(r < FRAC_PI_2) {
        return Err(Error::OutOfHemisphere(r));
    }
    let u = project(exp_py_pole(alpha).vector())?;
    Ok(Vector2::new(u.u0, u.u1))
}

/// First-order approximation of [`t_of_alpha`]: `alpha e2 = (a1, -a0)`.
pub fn t_linear(alpha: PyVec) -> Vector2<f64> {
    Vector2::new(alpha.a1, -alpha.a0)
}

/// Image-plane translation lifted to the upper hemisphere.
pub fn chi_act(alpha: PyVec, theta: &SpherePoint) -> Result<SpherePoint> {
    let t = t_of_alpha(alpha)?;
    let u = project(theta.vector())?;
    if alpha == PyVec::ZERO {
        return Ok(*theta);
    }
    Ok(unproject(PlanePoint::new(u.u0 + t.x, u.u1 + t.y)))
}

/// Which approximation an error field measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approximation {
    Py,
    Translation,
}

impl std::str::FromStr for Approximation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "py" => Ok(Approximation::Py),
            "translation" => Ok(Approximation::Translation),
            other => Err(Error::Format(format!("unknown approximation {other:?}"))),
        }
    }
}

/// What the grid coordinates parametrize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridDomain {
    /// Pitch-yaw `g`, sphere point `exp(g) e2`.
    Py,
    /// Calibrated image point `g`, sphere point `pi^-1(g)`.
    Plane,
}

/// Regular `n0 x n1` grid over `[-half_width, half_width]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n0: usize,
    pub n1: usize,
    pub half_width: f64,
    pub domain: GridDomain,
}

impl GridSpec {
    /// 201 x 201 over `|g| <= pi/2` in PY coordinates.
    pub fn default_py() -> Self {
        GridSpec { n0: 201, n1: 201, half_width: FRAC_PI_2, domain: GridDomain::Py }
    }

    /// The image window matching [`GridSpec::default_py`] shrunk to `half_width_py`.
    pub fn plane_matching(half_width_py: f64, n: usize) -> Result<Self> {
        if !(half_width_py < FRAC_PI_2) {
            return Err(Error::OutOfHemisphere(half_width_py));
        }
        Ok(GridSpec { n0: n, n1: n, half_width: half_width_py.tan(), domain: GridDomain::Plane })
    }

    /// Parses `"201x201"`.
    pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Format(format!("grid must look like 201x201, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n >= 2)
                .ok_or_else(|| Error::Format(format!("bad grid dimension {v:?}")))
        };
        Ok((parse(a)?, parse(b)?))
    }

    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        let step = |n: usize| 2.0 * self.half_width / (n - 1) as f64;
        Vector2::new(
            -self.half_width + step(self.n0) * i as f64,
            -self.half_width + step(self.n1) * j as f64,
        )
    }

    fn sphere_point(&self, g: Vector2<f64>) -> Option<SpherePoint> {
        match self.domain {
            GridDomain::Py => {
                let a = PyVec::new(g.x, g.y);
                (a.norm() < std::f64::consts::PI).then(|| exp_py_pole(a))
            }
            GridDomain::Plane => Some(unproject(PlanePoint::new(g.x, g.y))),
        }
    }
}

/// Pointwise distortion over a grid. Row-major in `(j, i)`: index `j * n0 + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl SphereField {
    /// Mean over valid nodes satisfying `keep`.
    pub fn mean_where(&self, keep: impl Fn(Vector2<f64>) -> bool) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for j in 0..self.grid.n1 {
            for i in 0..self.grid.n0 {
                let k = j * self.grid.n0 + i;
                if self.valid[k] && keep(self.grid.node(i, j)) {
                    sum += self.values[k];
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn mean(&self) -> Option<f64> {
        self.mean_where(|_| true)
    }
}

/// Distortion of one approximation at one sphere point.
pub fn distortion_at(alpha: PyVec, which: Approximation, theta: &SpherePoint) -> Result<f64> {
    let approx = match which {
        Approximation::Py => phi_act(alpha, theta)?,
        Approximation::Translation => chi_act(alpha, theta)?,
    };
    Ok(approx.chord(&psi(alpha, theta)))
}

/// `|action(alpha, theta) - psi(alpha, theta)|` over the grid; nodes where
/// the action is undefined are invalid.
pub fn error_field(alpha: PyVec, which: Approximation, grid: GridSpec) -> Result<SphereField> {
    if grid.n0 < 2 || grid.n1 < 2 || !(grid.half_width > 0.0) {
        return Err(Error::Precondition("grid needs at least 2x2 nodes and a positive extent".into()));
    }
    if which == Approximation::Translation {
        t_of_alpha(alpha)?;
    }
    let mut values = vec![0.0; grid.n0 * grid.n1];
    let mut valid = vec![false; grid.n0 * grid.n1];
    for j in 0..grid.n1 {
        for i in 0..grid.n0 {
            let k = j * grid.n0 + i;
            let Some(theta) = grid.sphere_point(grid.node(i, j)) else { continue };
            if let Ok(e) = distortion_at(alpha, which, &theta) {
                values[k] = e;
                valid[k] = true;
            }
        }
    }
    Ok(SphereField { grid, values, valid })
}

/// Mean distortion of both approximations over a camera's field of view,
/// one sample per pixel: `(py, translation)`.
pub fn fov_distortion_means(cam: &Camera, alpha: PyVec) -> Result<(f64, f64)> {
    t_of_alpha(alpha)?;
    let (mut py, mut tr, mut n) = (0.0, 0.0, 0usize);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let theta = unproject(cam.pixel_to_calibrated(Vector2::new(x as f64, y as f64)));
            let (Ok(a), Ok(b)) = (
                distortion_at(alpha, Approximation::Py, &theta),
                distortion_at(alpha, Approximation::Translation, &theta),
            ) else {
                continue;
            };
            py += a;
            tr += b;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok((py / n as f64, tr / n as f64))
}

/// Expansions whose remainder order is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// PY translation vs rotation at `exp(beta) e2`; leading term
    /// `|1/6 [alpha, beta] (alpha + 2 beta) e2|`.
    P10,
    /// Image translation vs rotation near the pole; second-order vector
    /// expansion in `t`, `alpha` and `theta`.
    P12,
    /// Image translation vs rotation on the great circle
    /// `2 <pi(theta), t> + |t|^2 = 0`.
    P14,
    /// `t = alpha e2 + O(|alpha|^3)`.
    Eq9,
}

impl std::str::FromStr for Expansion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p10" => Ok(Expansion::P10),
            "p12" => Ok(Expansion::P12),
            "p14" => Ok(Expansion::P14),
            "eq9" => Ok(Expansion::Eq9),
            other => Err(Error::Format(format!("unknown expansion {other:?}"))),
        }
    }
}

/// Unit directions for a Taylor ladder. `second` is `beta` (P10), the
/// offset of `theta` from the pole (P12), or the position along the great
/// circle (P14, first component used as the signed offset). Eq9 ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorDirections {
    pub alpha: PyVec,
    pub second: PyVec,
}

/// Result of a log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorFit {
    /// Residual at each `h` (measured minus leading-order expression).
    pub residuals: Vec<f64>,
    /// Measured error at each `h`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log residual` against `log h`; `None` if exact.
    pub slope: Option<f64>,
    /// Slope of the measured error alone.
    pub error_slope: Option<f64>,
}

impl TaylorFit {
    pub fn is_exact(&self) -> bool {
        self.slope.is_none()
    }
}

fn skew3(a: PyVec) -> nalgebra::Matrix3<f64> {
    a.skew()
}

/// `(measured, residual)` for one expansion at scale `h`.
pub fn expansion_terms(which: Expansion, dirs: TaylorDirections, h: f64) -> Result<(f64, f64)> {
    let e2 = Vector3::z();
    let alpha = dirs.alpha * h;
    match which {
        Expansion::P10 => {
            let beta = dirs.second * h;
            let theta = exp_py_pole(beta);
            let d = phi_act(alpha, &theta)?.vector() - psi(alpha, &theta).vector();
            let (a, b) = (skew3(alpha), skew3(beta));
            let comm = a * b - b * a;
            let lead = comm * (a + b * 2.0) * e2 / 6.0;
            let measured = d.norm();
            Ok((measured, (measured - lead.norm()).abs()))
        }
        Expansion::P12 => {
            let theta = exp_py_pole(dirs.second * h);
            let th = theta.vector();
            let d = chi_act(alpha, &theta)?.vector() - psi(alpha, &theta).vector();
            let t2 = t_of_alpha(alpha)?;
            let t = Vector3::new(t2.x, t2.y, 0.0);
            let a = alpha.axis();
            let th_hat = Vector3::new(th.x, th.y, 0.0);
            let lead = -(t + th_hat) * t.dot(th) - a * (0.5 * th.dot(&a))
                + e2 * ((th.z - 1.0) * t.norm_squared() / 2.0);
            Ok((d.norm(), (d - lead).norm()))
        }
        Expansion::P14 => {
            let t2 = t_of_alpha(alpha)?;
            let perp = Vector2::new(-t2.y, t2.x) / t2.norm();
            let u = -t2 / 2.0 + perp * dirs.second.a0;
            let theta = unproject(PlanePoint::new(u.x, u.y));
            let d = chi_act(alpha, &theta)?.vector() - psi(alpha, &theta).vector();
            let lead = 0.25 * theta.vector().z * alpha.norm().powi(3);
            let measured = d.norm();
            Ok((measured, (measured - lead).abs()))
        }
        Expansion::Eq9 => {
            let d = t_of_alpha(alpha)? - t_linear(alpha);
            Ok((d.norm(), d.norm()))
        }
    }
}

fn loglog_slope(hs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 10.0 * f64::EPSILON)
        .map(|(h, y)| (h.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Fits the order of the remainder of an expansion over a ladder of scales.
///
/// Reported exact (no slope) when the residual at the largest `h` is below
/// 1e-13; scales whose residual is within 10 machine epsilons of zero are
/// left out of the fit.
pub fn taylor_order_check(which: Expansion, dirs: TaylorDirections, h_list: &[f64]) -> Result<TaylorFit> {
    if h_list.len() < 2 || h_list.windows(2).any(|w| !(w[1] < w[0])) || h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Precondition("h_list must be positive and strictly decreasing".into()));
    }
    let mut errors = Vec::with_capacity(h_list.len());
    let mut residuals = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let (e, r) = expansion_terms(which, dirs, h)?;
        errors.push(e);
        residuals.push(r);
    }
    let exact = residuals[0] < 1e-13;
    Ok(TaylorFit {
        slope: if exact { None } else { loglog_slope(h_list, &residuals) },
        error_slope: loglog_slope(h_list, &errors),
        residuals,
        errors,
    })
}

/// The sphere point `omega = pi^-1(-t)` where image translation is exact.
pub fn translation_sweet_spot(alpha: PyVec) -> Result<SpherePoint> {
    let t = t_of_alpha(alpha)?;
    Ok(unproject(PlanePoint::new(-t.x, -t.y)))
}

/// A point on the great circle `s -> exp(s alpha) e2`.
pub fn on_alpha_circle(alpha: PyVec, s: f64) -> SpherePoint {
    exp_py_pole(alpha * s)
}

/// Sphere point of the pitch-yaw `g` (minimal log inverse).
pub fn py_point(g: PyVec) -> Result<SpherePoint> {
    let p = exp_py_pole(g);
    min_py_log(&p)?;
    Ok(p)
}
