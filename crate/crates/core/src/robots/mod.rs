//! Virtual robots built from spherical-prismatic (SP) chains, and the assemblers that turn PnP,
//! hand-eye and dual-robot calibration tasks into trace-constrained SDPs.

pub mod dualcal;
pub mod handeye;
pub mod pnp;

pub use dualcal::{build_dualcal, DualCalEstimate, DualCalModel, DualCalScenario};
pub use handeye::{build_handeye, HandEyeEstimate, HandEyeModel, HandEyeScenario};
pub use pnp::{build_pnp, PnpEstimate, PnpModel, PnpScenario};

use log::debug;
use nalgebra::{IsometryMatrix3, Matrix3, Rotation3, Translation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{lift_translation, orthogonality_defect, project_to_so3, read_rotation, rotation_congruence_rows, RotationVar, TranslationVar};
use crate::refine::Spectrum;
use crate::tcsdp::{Layout, PrimalPoint, ProblemBuilder, TcsdpProblem};

pub type Pose = IsometryMatrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Pnp,
    HandEye,
    DualCal,
}

pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Spherical joint followed by a prismatic joint of length at most `tau_u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpRobot {
    pub base: Vector3<f64>,
    pub tau_u: f64,
    pub tau: f64,
    pub v: Vector3<f64>,
}

impl SpRobot {
    /// Pose that reaches `target` from `base`; fails if the distance exceeds `tau_u`.
    pub fn reaching(base: Vector3<f64>, target: Vector3<f64>, tau_u: f64) -> Result<Self> {
        let (tau, v) = sp_inverse(&base, &target, tau_u)?;
        Ok(Self { base, tau_u, tau, v })
    }

    pub fn end(&self) -> Vector3<f64> {
        sp_forward(&self.base, self.tau, &self.v, self.tau_u)
    }
}

/// `t + tau_u * tau * v`.
pub fn sp_forward(t_base: &Vector3<f64>, tau: f64, v: &Vector3<f64>, tau_u: f64) -> Vector3<f64> {
    t_base + v * (tau_u * tau)
}

/// `(tau, v)` with `sp_forward(base, tau, v, tau_u) = target`; a zero offset maps to `v = e_z`.
pub fn sp_inverse(base: &Vector3<f64>, target: &Vector3<f64>, tau_u: f64) -> Result<(f64, Vector3<f64>)> {
    if !(tau_u > 0.0) {
        return Err(Error::InvalidInput("extension cap must be positive".into()));
    }
    let d = target - base;
    let n = d.norm();
    if n > tau_u * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("offset {n} exceeds extension cap {tau_u}")));
    }
    if n == 0.0 {
        return Ok((0.0, Vector3::z()));
    }
    Ok(((n / tau_u).min(1.0), d / n))
}

/// Unit bearing through pixel `p` for a pinhole camera with principal point at the origin.
pub fn bearing_from_pixel(p: &Vector2<f64>, f_cam: f64) -> Vector3<f64> {
    Vector3::new(p.x, p.y, f_cam).normalize()
}

/// Pixel of world point `q` seen from camera pose `camera` (world-from-camera); `None` behind the camera.
pub fn project(camera: &Pose, q: &Vector3<f64>, f_cam: f64) -> Option<Vector2<f64>> {
    let pc = camera.inverse_transform_point(&(*q).into());
    (pc.z > 1e-9).then(|| Vector2::new(f_cam * pc.x / pc.z, f_cam * pc.y / pc.z))
}

pub fn pose_from_parts(r: Matrix3<f64>, t: Vector3<f64>) -> Pose {
    IsometryMatrix3::from_parts(Translation3::from(t), Rotation3::from_matrix_unchecked(r))
}

/// Largest pairwise distance.
pub fn diameter(points: &[Vector3<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

/// Extension cap set to twice the diameter of the scene.
pub fn scene_tau_u(points: &[Vector3<f64>]) -> f64 {
    2.0 * diameter(points).max(1e-6)
}

/// True when the points (at least four) lie on one plane up to a relative tolerance.
pub fn is_coplanar(points: &[Vector3<f64>]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let c: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let ev = cov.symmetric_eigen().eigenvalues;
    ev.min() <= 1e-12 * ev.max().max(1e-300)
}

/// Errors unless every trace group is within `tol` of rank one.
pub fn check_rank_one(problem: &TcsdpProblem, point: &PrimalPoint, tol: f64) -> Result<()> {
    let gap = Spectrum::of(problem, point).eigen_gap();
    if gap > tol {
        return Err(Error::NotRankOne { gap });
    }
    Ok(())
}

/// Rotation read with the polar fix-up: exact reads pass through, small defects are projected,
/// larger ones fail.
pub fn extract_rotation(point: &PrimalPoint, rv: &RotationVar) -> Result<Matrix3<f64>> {
    let r = read_rotation(&point.blocks[rv.block]);
    finish_rotation(r)
}

pub fn finish_rotation(r: Matrix3<f64>) -> Result<Matrix3<f64>> {
    let defect = orthogonality_defect(&r);
    if defect <= 1e-9 && r.determinant() > 0.0 {
        Ok(r)
    } else if defect <= 1e-4 {
        debug!("projecting rotation with defect {defect:e}");
        Ok(project_to_so3(&r))
    } else {
        Err(Error::ExtractionFailed { defect })
    }
}

/// `(tau, v, tau * v)` of an SP pose read from a translation triple.
pub fn extract_sp(point: &PrimalPoint, tv: &TranslationVar) -> (f64, Vector3<f64>, Vector3<f64>) {
    let b = crate::manifolds::TranslationBlock([
        point.blocks[tv.blocks[0]].clone(),
        point.blocks[tv.blocks[1]].clone(),
        point.blocks[tv.blocks[2]].clone(),
    ]);
    let (tau, v) = crate::manifolds::read_translation(&b);
    (tau, v, crate::manifolds::read_scaled_direction(&b))
}

/// Writes the lift of an SP pose reaching `target` from `base` into `point`.
pub(crate) fn place_sp(
    point: &mut PrimalPoint,
    tv: &TranslationVar,
    base: &Vector3<f64>,
    target: &Vector3<f64>,
    tau_u: f64,
) -> Result<()> {
    let (tau, v) = sp_inverse(base, target, tau_u)?;
    let b = lift_translation(tau, &v)?;
    for (l, m) in b.0.into_iter().enumerate() {
        point.blocks[tv.blocks[l]] = m;
    }
    Ok(())
}

pub(crate) fn place_rotation(point: &mut PrimalPoint, rv: &RotationVar, r: &Matrix3<f64>) -> Result<()> {
    point.blocks[rv.block] = crate::manifolds::lift_rotation(r)?.0;
    Ok(())
}

/// Adds the structural rows of a translation triple (equalities and bounds) to a builder.
pub(crate) fn add_translation_rows(pb: &mut ProblemBuilder, tv: &TranslationVar) {
    let (eq, bounds) = tv.constraint_rows(&pb.layout);
    pb.add_equalities(eq);
    pb.add_inequalities(bounds);
}

pub(crate) fn add_rotation_rows(pb: &mut ProblemBuilder, rv: &RotationVar) {
    let rows = rv.constraint_rows(&pb.layout);
    pb.add_equalities(rows);
}

/// Ties `rv` to `base` through `R = m R_base` on the whole lifted block. Replaces the structural
/// rows of `rv` and the rotation rows of the constant-transformation equality between the two.
pub(crate) fn add_congruent_rotation(pb: &mut ProblemBuilder, base: &RotationVar, rv: &RotationVar, m: &Matrix3<f64>, tag: &str) {
    let rows = rotation_congruence_rows(&pb.layout, base, rv, m);
    pb.add_equalities(rows.into_iter().map(|mut r| {
        r.label = format!("{tag}:{}", r.label);
        r
    }));
}

pub(crate) fn empty_point(layout: &Layout) -> PrimalPoint {
    PrimalPoint {
        blocks: layout
            .blocks()
            .iter()
            .map(|b| nalgebra::DMatrix::zeros(b.dim, b.dim))
            .collect(),
        free: vec![0.0; layout.free_indices().len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sp_forward_examples() {
        let p = sp_forward(&Vector3::zeros(), 0.5, &Vector3::z(), 2.0);
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
        let t = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(sp_forward(&t, 0.0, &Vector3::x(), 5.0), t);
    }

    #[test]
    fn sp_inverse_reaches_target() {
        let base = Vector3::new(0.3, -1.0, 2.0);
        let target = Vector3::new(-0.4, 0.2, 1.1);
        let robot = SpRobot::reaching(base, target, 3.0).unwrap();
        assert!((robot.end() - target).norm() < 1e-15);
        assert!(SpRobot::reaching(base, target, 0.1).is_err());
    }

    #[test]
    fn bearings() {
        assert_eq!(bearing_from_pixel(&Vector2::zeros(), 500.0), Vector3::z());
        let b = bearing_from_pixel(&Vector2::new(500.0, 0.0), 500.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b - Vector3::new(h, 0.0, h)).norm() < 1e-15);
    }

    #[test]
    fn coplanarity() {
        let flat: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(is_coplanar(&flat));
        let mut solid = flat.clone();
        solid.push(Vector3::new(0.0, 0.0, 1.0));
        assert!(!is_coplanar(&solid));
    }

    #[test]
    fn rotation_fixup_thresholds() {
        let r = Rotation3::new(Vector3::new(0.1, 0.2, 0.3)).into_inner();
        assert_eq!(finish_rotation(r).unwrap(), r);
        let slightly = r * 1.00001;
        let fixed = finish_rotation(slightly).unwrap();
        assert!(orthogonality_defect(&fixed) < 1e-12);
        assert!(matches!(finish_rotation(r * 1.1), Err(Error::ExtractionFailed { .. })));
    }
}
