//! Where rigid motions and image translations agree.
//!
//! A rigid motion with nonzero translation never acts on the image plane
//! independently of depth: two points on one viewing ray land on different
//! rays. [`rigidity_witness`] produces such a pair. With depth known, an image
//! translation `tau` matches a motion `rho` exactly on the S-set, the solutions
//! of `(lambda H - R) x = v` for real `lambda`; [`sset_solve`] computes it.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::camera::{Homography, RigidMotion};
use crate::error::{Error, Result};

/// Relative singular-value threshold for rank and range decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Two depths on one ray whose images under the motion differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityWitness {
    pub u: Vector3<f64>,
    pub lambda: f64,
    pub cross_norm: f64,
}

impl RigidityWitness {
    /// `|rho(u) x rho(lambda u)|`, evaluated directly.
    pub fn direct_cross_norm(&self, rho: &RigidMotion) -> f64 {
        rho.apply(&self.u).cross(&rho.apply(&(self.u * self.lambda))).norm()
    }
}

fn witness_candidates() -> Vec<Vector3<f64>> {
    let mut out: Vec<Vector3<f64>> = [
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [-1.0, 0.0, 1.0],
        [0.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::from(*c).normalize())
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_71d);
    for _ in 0..32 {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.1..1.0),
        );
        out.push(v.normalize());
    }
    out
}

/// Finds `u` in front of the camera such that `rho(u)` and `rho(2u)` are not
/// collinear. Errors for pure rotations, which preserve rigidity.
pub fn rigidity_witness(rho: &RigidMotion) -> Result<RigidityWitness> {
    if rho.v.norm() == 0.0 {
        return Err(Error::NoWitness);
    }
    let lambda = 2.0;
    let best = witness_candidates()
        .into_iter()
        .map(|u| {
            let cross_norm = ((1.0 - lambda) * rho.r.apply(&u)).cross(&rho.v).norm();
            RigidityWitness { u, lambda, cross_norm }
        })
        .max_by(|a, b| a.cross_norm.total_cmp(&b.cross_norm))
        .expect("candidate list is non-empty");
    if best.cross_norm > 0.0 {
        Ok(best)
    } else {
        Err(Error::NoWitness)
    }
}

/// Real roots of `x^3 + b x^2 + c x + d`, ascending, deduplicated.
pub fn real_cubic_roots(b: f64, c: f64, d: f64) -> Vec<f64> {
    let shift = -b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let scale = 1.0 + b.abs().powi(3) + c.abs().powf(1.5) + d.abs();
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    let mut ts = Vec::with_capacity(3);
    if p.abs() <= 1e-14 * scale.cbrt().powi(2) && q.abs() <= 1e-14 * scale {
        ts.push(0.0);
    } else if disc.abs() <= 1e-14 * scale * scale {
        // double root
        ts.push(3.0 * q / p);
        ts.push(-3.0 * q / (2.0 * p));
    } else if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let w = (-q / 2.0 - s).cbrt();
        ts.push(u + w);
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        for k in 0..3 {
            ts.push(m * (phi - 2.0 * std::f64::consts::PI * f64::from(k) / 3.0).cos());
        }
    }

    let f = |x: f64| ((x + b) * x + c) * x + d;
    let df = |x: f64| (3.0 * x + 2.0 * b) * x + c;
    let mut roots: Vec<f64> = ts
        .into_iter()
        .map(|t| {
            let mut x = t + shift;
            for _ in 0..4 {
                let g = df(x);
                if g.abs() < 1e-8 * scale.cbrt().powi(2) {
                    break;
                }
                let step = f(x) / g;
                if !step.is_finite() {
                    break;
                }
                let next = x - step;
                if f(next).abs() > f(x).abs() {
                    break;
                }
                x = next;
            }
            x
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-7 * a.abs().max(1.0));
    roots
}

/// Real eigenvalues of a 3x3 matrix via its characteristic polynomial.
pub fn real_eigenvalues(a: &Matrix3<f64>) -> Vec<f64> {
    let tr = a.trace();
    let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
        + a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)];
    real_cubic_roots(-tr, minors, -a.determinant())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Line,
    Plane,
    Empty,
}

/// Solution set of `(lambda H - R) x = v` at a singular `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCase {
    pub lambda: f64,
    pub kind: CaseKind,
    pub basepoint: Option<Vector3<f64>>,
    pub directions: Vec<Vector3<f64>>,
}

impl EigenCase {
    /// Euclidean distance from `x` to this affine set; infinite when empty.
    pub fn distance(&self, x: &Vector3<f64>) -> f64 {
        let Some(base) = self.basepoint else {
            return f64::INFINITY;
        };
        let mut d = x - base;
        // directions are orthonormal
        for dir in &self.directions {
            d -= dir * dir.dot(&d);
        }
        d.norm()
    }
}

/// The S-set of an image translation and a rigid motion.
#[derive(Debug, Clone)]
pub struct SSetResult {
    pub eigenvalues: Vec<f64>,
    pub curve_samples: Vec<(f64, Vector3<f64>)>,
    pub eigenvalue_cases: Vec<EigenCase>,
    h: Matrix3<f64>,
    rho: RigidMotion,
}

impl SSetResult {
    /// `(lambda H - R)^-1 v`, or `None` at (numerically) singular `lambda`.
    pub fn curve_point(&self, lambda: f64) -> Option<Vector3<f64>> {
        let m = self.h * lambda - self.rho.r.matrix();
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= RANK_TOL * smax {
            return None;
        }
        m.lu().solve(&self.rho.v)
    }

    /// Distance from `x` to the reported sets. The curve is evaluated at the
    /// depth ratio `x` itself implies.
    pub fn distance(&self, x: &Vector3<f64>) -> f64 {
        let mut best = self
            .eigenvalue_cases
            .iter()
            .map(|c| c.distance(x))
            .fold(f64::INFINITY, f64::min);
        let hx = self.h * x;
        let hn = hx.norm_squared();
        if hn > 0.0 {
            let lambda = hx.dot(&self.rho.apply(x)) / hn;
            if let Some(p) = self.curve_point(lambda) {
                best = best.min((p - x).norm());
            }
        }
        for (_, p) in &self.curve_samples {
            best = best.min((p - x).norm());
        }
        best
    }

    /// `|tau(pi(x)) - pi(rho(x))|`, `None` where either side is undefined.
    pub fn defining_residual(&self, x: &Vector3<f64>) -> Option<f64> {
        translation_residual(&self.h, &self.rho, x)
    }
}

fn translation_residual(h: &Matrix3<f64>, rho: &RigidMotion, x: &Vector3<f64>) -> Option<f64> {
    let y = rho.apply(x);
    if x.z.abs() < 1e-12 || y.z.abs() < 1e-12 {
        return None;
    }
    let left = Vector2::new(x.x / x.z + h[(0, 2)], x.y / x.z + h[(1, 2)]);
    let right = Vector2::new(y.x / y.z, y.y / y.z);
    Some((left - right).norm())
}

/// Depth ratios for curve sampling: `+-10^s` for `s` in `[-3, 3]`, 2001
/// nodes symmetric about zero. The middle node (`lambda = 0`, where
/// `rho(x) = 0`) is dropped, as is anything within 1e-4 of a singular value.
pub fn curve_lambdas(singular: &[f64]) -> Vec<f64> {
    (0..2001)
        .map(|i| -1.0 + f64::from(i) / 1000.0)
        .filter(|u| *u != 0.0)
        .map(|u: f64| u.signum() * 10f64.powf(6.0 * u.abs() - 3.0))
        .filter(|l| singular.iter().all(|m| (l - m).abs() > 1e-4))
        .collect()
}

/// Solves `tau o pi = pi o rho` for the points `x`.
pub fn sset_solve(tau: Vector2<f64>, rho: &RigidMotion) -> Result<SSetResult> {
    if tau.norm() == 0.0 {
        return Err(Error::Precondition("image translation must be non-zero".into()));
    }
    let h = *Homography::translation(tau).matrix();
    let h_inv = *Homography::translation(-tau).matrix();
    let r = rho.r.matrix();
    let eigenvalues = real_eigenvalues(&(h_inv * r));

    let mut cases = Vec::new();
    for &lambda in &eigenvalues {
        let m = h * lambda - r;
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
        let s = svd.singular_values;
        let smax = s.max();
        let keep: Vec<usize> = (0..3).filter(|&i| s[i] > RANK_TOL * smax).collect();
        let rank = keep.len();
        if rank == 3 || rank == 0 {
            continue;
        }
        // minimum-norm least-squares solution
        let mut x = Vector3::zeros();
        for &i in &keep {
            let ui = u.column(i);
            let vi = vt.row(i).transpose();
            x += vi * (ui.dot(&rho.v) / s[i]);
        }
        let residual = (m * x - rho.v).norm();
        let solvable = residual <= RANK_TOL * (smax * x.norm() + rho.v.norm()).max(1e-300);
        let directions: Vec<Vector3<f64>> = (0..3)
            .filter(|i| !keep.contains(i))
            .map(|i| vt.row(i).transpose())
            .collect();
        let case = if !solvable {
            EigenCase { lambda, kind: CaseKind::Empty, basepoint: None, directions: Vec::new() }
        } else {
            EigenCase {
                lambda,
                kind: if rank == 2 { CaseKind::Line } else { CaseKind::Plane },
                basepoint: Some(x),
                directions,
            }
        };
        cases.push(case);
    }

    let mut result = SSetResult {
        eigenvalues,
        curve_samples: Vec::new(),
        eigenvalue_cases: cases,
        h,
        rho: *rho,
    };
    let samples: Vec<(f64, Vector3<f64>)> = curve_lambdas(&result.eigenvalues)
        .into_iter()
        .filter_map(|l| result.curve_point(l).map(|p| (l, p)))
        .collect();
    result.curve_samples = samples;
    Ok(result)
}

/// Outcome of the brute-force grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScan {
    pub points_tested: usize,
    pub points_satisfying: usize,
    pub max_distance: f64,
}

/// Scans `[-extent, extent]^3` on an `n^3` grid (keeping `x2 > 0.01`), finds
/// the points where the translated image of `x` matches the image of `rho(x)`
/// to `eq_tol`, and reports their largest distance from the reported sets.
pub fn grid_scan(
    result: &SSetResult,
    n: usize,
    extent: f64,
    eq_tol: f64,
) -> GridScan {
    let step = if n > 1 { 2.0 * extent / (n - 1) as f64 } else { 0.0 };
    let coord = |i: usize| -extent + step * i as f64;
    let (tested, found, worst) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut tested = 0usize;
            let mut found = 0usize;
            let mut worst = 0.0f64;
            for j in 0..n {
                for k in 0..n {
                    let x = Vector3::new(coord(i), coord(j), coord(k));
                    if x.z <= 0.01 {
                        continue;
                    }
                    tested += 1;
                    if let Some(r) = result.defining_residual(&x) {
                        if r < eq_tol {
                            found += 1;
                            worst = worst.max(result.distance(&x));
                        }
                    }
                }
            }
            (tested, found, worst)
        })
        .reduce(|| (0, 0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));
    GridScan { points_tested: tested, points_satisfying: found, max_distance: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3py::Rotation3;

    fn motion(r: Rotation3, v: [f64; 3]) -> RigidMotion {
        RigidMotion { r, v: Vector3::from(v) }
    }

    #[test]
    fn witness_for_pure_translation() {
        let rho = motion(Rotation3::identity(), [1.0, 0.0, 0.0]);
        let w = rigidity_witness(&rho).unwrap();
        assert!(w.cross_norm > 0.0);
        assert!((w.direct_cross_norm(&rho) - w.cross_norm).abs() < 1e-12);

        // the worked pair: u = e2, lambda = 2
        let a = rho.apply(&Vector3::z());
        let b = rho.apply(&(Vector3::z() * 2.0));
        assert_eq!(a, Vector3::new(1.0, 0.0, 1.0));
        assert_eq!(b, Vector3::new(1.0, 0.0, 2.0));
        assert_eq!((a.x / a.z, b.x / b.z), (1.0, 0.5));
    }

    #[test]
    fn pure_rotation_has_no_witness() {
        let rho = motion(Rotation3::about_optical_axis(0.4), [0.0; 3]);
        assert!(matches!(rigidity_witness(&rho), Err(Error::NoWitness)));
    }

    #[test]
    fn cubic_roots_known_cases() {
        // (x-1)(x-2)(x-3)
        let r = real_cubic_roots(-6.0, 11.0, -6.0);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // (x-1)^3
        assert_eq!(real_cubic_roots(-3.0, 3.0, -1.0), vec![1.0]);
        // (x+1)^2 (x-1)
        let r = real_cubic_roots(1.0, -1.0, -1.0);
        assert_eq!(r.len(), 2);
        assert!((r[0] + 1.0).abs() < 1e-9 && (r[1] - 1.0).abs() < 1e-12);
        // x^3 + x + 1 has one real root
        let r = real_cubic_roots(0.0, 1.0, 1.0);
        assert_eq!(r.len(), 1);
        assert!((r[0].powi(3) + r[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn translation_along_tau_gives_axis_curve_and_plane() {
        let rho = motion(Rotation3::identity(), [1.0, 0.0, 0.0]);
        let s = sset_solve(Vector2::new(1.0, 0.0), &rho).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0]);
        assert_eq!(s.eigenvalue_cases.len(), 1);
        let c = &s.eigenvalue_cases[0];
        assert_eq!(c.kind, CaseKind::Plane);
        assert!((c.basepoint.unwrap().z - 1.0).abs() < 1e-12);
        assert!(c.directions.iter().all(|d| d.z.abs() < 1e-12));
        for (l, p) in &s.curve_samples {
            let expect = Vector3::new(1.0 / (l - 1.0), 0.0, 0.0);
            assert!((p - expect).norm() <= 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn translation_across_tau_has_empty_case() {
        let rho = motion(Rotation3::identity(), [0.0, 1.0, 0.0]);
        let s = sset_solve(Vector2::new(1.0, 0.0), &rho).unwrap();
        assert_eq!(s.eigenvalue_cases.len(), 1);
        assert_eq!(s.eigenvalue_cases[0].kind, CaseKind::Empty);
        let p = s.curve_point(3.0).unwrap();
        // (3H - I) x = e1 => x = (0, 1/2, 0)
        assert!((p - Vector3::new(0.0, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn half_turn_about_axis_gives_plane_kernel() {
        let r = Rotation3::from_matrix(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).unwrap();
        let rho = motion(r, [0.0, 0.0, 1.0]);
        let s = sset_solve(Vector2::new(0.5, 0.25), &rho).unwrap();
        let plane = s
            .eigenvalue_cases
            .iter()
            .find(|c| (c.lambda + 1.0).abs() < 1e-9)
            .expect("case at lambda = -1");
        assert!(plane.kind == CaseKind::Plane || plane.kind == CaseKind::Empty);
        let m = s.h * plane.lambda - r.matrix();
        let sv = m.svd(false, false).singular_values;
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[1] < 1e-9 * sorted[2]);
    }

    #[test]
    fn zero_translation_is_rejected() {
        let rho = motion(Rotation3::identity(), [1.0, 0.0, 0.0]);
        assert!(matches!(sset_solve(Vector2::zeros(), &rho), Err(Error::Precondition(_))));
    }

    #[test]
    fn lambda_grid_shape() {
        let l = curve_lambdas(&[]);
        assert_eq!(l.len(), 2000);
        assert!((l[0] + 1e3).abs() < 1e-9 && (l[1999] - 1e3).abs() < 1e-9);
        assert!(l.iter().all(|x| x.abs() >= 1e-3 - 1e-15));
        let l = curve_lambdas(&[1.0]);
        assert!(l.iter().all(|x| (x - 1.0).abs() > 1e-4));
    }
}
