use log::warn;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    add_congruent_rotation, add_rotation_rows, add_translation_rows, bearing_from_pixel, check_rank_one, empty_point, extract_rotation,
    extract_sp, is_coplanar, place_rotation, place_sp, pose_from_parts, scene_tau_u, Pose,
};
use crate::error::{Error, Result};
use crate::manifolds::{transform_equality_rows, FrameSymbol, RotationSymbol, RotationVar, TranslationVar};
use crate::tcsdp::expr::{mat3_mul_const_vec, vec3_add, vec3_scale, vec3_sub, LinExpr, LinVec3};
use crate::tcsdp::{Layout, PrimalPoint, ProblemBuilder, TcsdpProblem};

/// Eye-in-hand camera observing a rigid feature set from `m` arm configurations.
///
/// `pixels[i][j]` is feature `j` seen in configuration `i`. `truth_x` is the end-effector-from-camera
/// transform and `truth_target` the world pose of the feature frame when synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandEyeScenario {
    #[serde(default = "super::schema_version")]
    pub version: u32,
    pub ee_poses: Vec<Pose>,
    pub features: Vec<Vector3<f64>>,
    pub pixels: Vec<Vec<Vector2<f64>>>,
    pub f_cam: f64,
    #[serde(default)]
    pub truth_x: Option<Pose>,
    #[serde(default)]
    pub truth_target: Option<Pose>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl HandEyeScenario {
    pub fn m(&self) -> usize {
        self.ee_poses.len()
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    /// Twice the scene diameter over end effectors, cameras and world features (ground truth
    /// needed for the last two; without it a wide margin over the end effectors and features).
    pub fn default_tau_u(&self) -> f64 {
        let mut pts: Vec<Vector3<f64>> = self.ee_poses.iter().map(|p| p.translation.vector).collect();
        match (&self.truth_x, &self.truth_target) {
            (Some(x), Some(t)) => {
                pts.extend(self.ee_poses.iter().map(|e| (e * x).translation.vector));
                pts.extend(self.features.iter().map(|f| t * f));
                scene_tau_u(&pts)
            }
            _ => {
                pts.extend(self.features.iter().copied());
                4.0 * scene_tau_u(&pts)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct HandEyeModel {
    pub problem: TcsdpProblem,
    pub cameras: Vec<RotationVar>,
    pub target: RotationVar,
    /// End effector to camera centre, per configuration.
    pub mounts: Vec<TranslationVar>,
    /// Camera centre to feature, `rays[i][j]`.
    pub rays: Vec<Vec<TranslationVar>>,
    pub tau_u: f64,
    pub ee_poses: Vec<Pose>,
    pub features: Vec<Vector3<f64>>,
    pub bearings: Vec<Vec<Vector3<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandEyeEstimate {
    pub x: Pose,
    pub cameras: Vec<Pose>,
    pub target_rotation: nalgebra::Matrix3<f64>,
}

fn frame(layout: &Layout, ee: &Pose, cam: &RotationVar, mount: &TranslationVar) -> FrameSymbol {
    FrameSymbol {
        tau: Some(mount.tau(layout)),
        v: Some(mount.direction(layout)),
        r1: RotationSymbol::Known(*ee.rotation.matrix()),
        r2: RotationSymbol::Lifted(cam.matrix(layout)),
        products: None,
    }
}

pub fn build_handeye(s: &HandEyeScenario, tau_u: f64) -> Result<HandEyeModel> {
    let (m, n) = (s.m(), s.n());
    if m < 2 {
        return Err(Error::DegenerateScenario(format!("{m} configurations, need at least 2")));
    }
    if n < 4 {
        return Err(Error::DegenerateScenario(format!("{n} features, need at least 4")));
    }
    if s.pixels.len() != m || s.pixels.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidInput("pixel table must be m x n".into()));
    }
    if !(s.f_cam > 0.0) || !(tau_u > 0.0) {
        return Err(Error::InvalidInput("focal length and extension cap must be positive".into()));
    }
    if n < 6 {
        warn!("hand-eye with {n} features; uniqueness is only guaranteed from 6 features on");
    }
    if is_coplanar(&s.features) {
        warn!("hand-eye features are coplanar");
    }
    let bearings: Vec<Vec<Vector3<f64>>> = s
        .pixels
        .iter()
        .map(|row| row.iter().map(|p| bearing_from_pixel(p, s.f_cam)).collect())
        .collect();

    let mut layout = Layout::new();
    let cameras = (0..m)
        .map(|i| RotationVar::add(&mut layout, &format!("R_c{i}")))
        .collect::<Result<Vec<_>>>()?;
    let target = RotationVar::add(&mut layout, "R_f")?;
    let mut mounts = Vec::with_capacity(m);
    let mut rays = Vec::with_capacity(m);
    for i in 0..m {
        mounts.push(TranslationVar::add(&mut layout, &format!("mount{i}"))?);
        rays.push(
            (0..n)
                .map(|j| TranslationVar::add(&mut layout, &format!("ray{i}.{j}")))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let mut pb = ProblemBuilder::new(layout);
    add_rotation_rows(&mut pb, &target);
    add_rotation_rows(&mut pb, &cameras[0]);
    // R_ci = R_ei R_e0' R_c0.
    for i in 1..m {
        let mi = s.ee_poses[i].rotation.matrix() * s.ee_poses[0].rotation.matrix().transpose();
        add_congruent_rotation(&mut pb, &cameras[0], &cameras[i], &mi, &format!("x{i}"));
    }
    let rf = target.matrix(&pb.layout);
    // Feature position minus the known end-effector offset, homogeneous part only.
    let reach = |layout: &Layout, i: usize, j: usize| -> LinVec3 {
        let chain = vec3_add(&mounts[i].scaled_direction(layout), &rays[i][j].scaled_direction(layout));
        vec3_sub(&vec3_scale(&chain, tau_u), &mat3_mul_const_vec(&rf, &s.features[j]))
    };
    let reference = reach(&pb.layout, 0, 0);
    let t0 = s.ee_poses[0].translation.vector;
    for i in 0..m {
        add_translation_rows(&mut pb, &mounts[i]);
        let rc = cameras[i].matrix(&pb.layout);
        let ti = s.ee_poses[i].translation.vector;
        for j in 0..n {
            add_translation_rows(&mut pb, &rays[i][j]);
            let v = rays[i][j].direction(&pb.layout);
            pb.add_squared_norm(&vec3_sub(&v, &mat3_mul_const_vec(&rc, &bearings[i][j])), 1.0)?;
            if (i, j) != (0, 0) {
                let d = vec3_sub(&reach(&pb.layout, i, j), &reference);
                for k in 0..3 {
                    let e = &d[k] + &LinExpr::constant(ti[k] - t0[k]);
                    pb.add_equality(&e, format!("closure{i}.{j}.{k}"));
                }
            }
        }
    }
    let f0 = frame(&pb.layout, &s.ee_poses[0], &cameras[0], &mounts[0]);
    for i in 1..m {
        let fi = frame(&pb.layout, &s.ee_poses[i], &cameras[i], &mounts[i]);
        let rows = transform_equality_rows(&pb.layout, &f0, &fi)?;
        pb.add_equalities(rows.into_iter().filter(|r| !r.label.starts_with("cft:rot")).map(|mut r| {
            r.label = format!("x{i}:{}", r.label);
            r
        }));
    }

    Ok(HandEyeModel {
        problem: pb.build()?,
        cameras,
        target,
        mounts,
        rays,
        tau_u,
        ee_poses: s.ee_poses.clone(),
        features: s.features.clone(),
        bearings,
    })
}

impl HandEyeModel {
    pub fn lift(&self, x: &Pose, target: &Pose) -> Result<PrimalPoint> {
        let mut p = empty_point(&self.problem.layout);
        place_rotation(&mut p, &self.target, target.rotation.matrix())?;
        for (i, ee) in self.ee_poses.iter().enumerate() {
            let cam = ee * x;
            place_rotation(&mut p, &self.cameras[i], cam.rotation.matrix())?;
            let tc = cam.translation.vector;
            place_sp(&mut p, &self.mounts[i], &ee.translation.vector, &tc, self.tau_u)?;
            for (j, f) in self.features.iter().enumerate() {
                place_sp(&mut p, &self.rays[i][j], &tc, &(target * f), self.tau_u)?;
            }
        }
        Ok(p)
    }

    /// `sum_ij |unit(q_j - t_ci) - R_ci p_hat_ij|^2` evaluated directly.
    pub fn residual(&self, x: &Pose, target: &Pose) -> f64 {
        let mut r = 0.0;
        for (i, ee) in self.ee_poses.iter().enumerate() {
            let cam = ee * x;
            for (j, f) in self.features.iter().enumerate() {
                let d = (target * f - cam.translation.vector).normalize();
                r += (d - cam.rotation * self.bearings[i][j]).norm_squared();
            }
        }
        r
    }

    pub fn extract(&self, point: &PrimalPoint, rank_tol: f64) -> Result<HandEyeEstimate> {
        check_rank_one(&self.problem, point, rank_tol)?;
        let mut cameras = Vec::with_capacity(self.cameras.len());
        for (i, ee) in self.ee_poses.iter().enumerate() {
            let r = extract_rotation(point, &self.cameras[i])?;
            let (_, _, tv) = extract_sp(point, &self.mounts[i]);
            cameras.push(pose_from_parts(r, ee.translation.vector + tv * self.tau_u));
        }
        let x = self.ee_poses[0].inverse() * cameras[0];
        Ok(HandEyeEstimate {
            x,
            cameras,
            target_rotation: extract_rotation(point, &self.target)?,
        })
    }
}
