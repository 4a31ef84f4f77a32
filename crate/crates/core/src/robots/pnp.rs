use log::warn;
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    add_rotation_rows, add_translation_rows, bearing_from_pixel, check_rank_one, empty_point, extract_rotation,
    extract_sp, is_coplanar, place_rotation, place_sp, pose_from_parts, scene_tau_u, Pose,
};
use crate::error::{Error, Result};
use crate::manifolds::{RotationVar, TranslationVar};
use crate::tcsdp::expr::{mat3_mul_const_vec, vec3_sub, LinExpr};
use crate::tcsdp::{Layout, PrimalPoint, ProblemBuilder, TcsdpProblem};

/// Known world points and their pixels in one pinhole image.
///
/// `truth` is the world-from-camera pose when the scenario is synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpScenario {
    #[serde(default = "super::schema_version")]
    pub version: u32,
    pub points: Vec<Vector3<f64>>,
    pub pixels: Vec<Vector2<f64>>,
    pub f_cam: f64,
    #[serde(default)]
    pub truth: Option<Pose>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl PnpScenario {
    pub fn bearings(&self) -> Vec<Vector3<f64>> {
        self.pixels.iter().map(|p| bearing_from_pixel(p, self.f_cam)).collect()
    }

    /// Twice the diameter of the points together with the true camera centre when known,
    /// otherwise four times the diameter of the points.
    pub fn default_tau_u(&self) -> f64 {
        match &self.truth {
            Some(t) => {
                let mut pts = self.points.clone();
                pts.push(t.translation.vector);
                scene_tau_u(&pts)
            }
            None => 2.0 * scene_tau_u(&self.points),
        }
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.f_cam, self.f_cam, 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct PnpModel {
    pub problem: TcsdpProblem,
    pub camera: RotationVar,
    /// Indices of the free camera position coordinates in the stacked vector.
    pub position: [usize; 3],
    pub rays: Vec<TranslationVar>,
    pub tau_u: f64,
    pub points: Vec<Vector3<f64>>,
    pub bearings: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpEstimate {
    pub camera: Pose,
    pub taus: Vec<f64>,
    pub directions: Vec<Vector3<f64>>,
}

/// Camera rotation as a rotation block, one SP chain from the camera centre to every point,
/// objective `sum_i |v_i - R p_hat_i|^2`, closure `t + tau_u tau_i v_i = q_i`.
pub fn build_pnp(s: &PnpScenario, tau_u: f64) -> Result<PnpModel> {
    let n = s.points.len();
    if s.pixels.len() != n {
        return Err(Error::InvalidInput(format!("{} points but {} pixels", n, s.pixels.len())));
    }
    if !(s.f_cam > 0.0) || !(tau_u > 0.0) {
        return Err(Error::InvalidInput("focal length and extension cap must be positive".into()));
    }
    if n < 4 {
        return Err(Error::DegenerateScenario(format!("{n} points, need at least 4")));
    }
    if n < 6 {
        warn!("pnp with {n} points; uniqueness is only guaranteed from 6 points on");
    }
    if is_coplanar(&s.points) {
        warn!("pnp points are coplanar");
    }
    let bearings = s.bearings();

    let mut layout = Layout::new();
    let camera = RotationVar::add(&mut layout, "R_c")?;
    let position = [layout.add_free("t_c.x"), layout.add_free("t_c.y"), layout.add_free("t_c.z")];
    let rays = (0..n)
        .map(|i| TranslationVar::add(&mut layout, &format!("ray{i}")))
        .collect::<Result<Vec<_>>>()?;

    let r = camera.matrix(&layout);
    let mut pb = ProblemBuilder::new(layout);
    add_rotation_rows(&mut pb, &camera);
    for (i, tv) in rays.iter().enumerate() {
        add_translation_rows(&mut pb, tv);
        let v = tv.direction(&pb.layout);
        pb.add_squared_norm(&vec3_sub(&v, &mat3_mul_const_vec(&r, &bearings[i])), 1.0)?;
        let tv_scaled = tv.scaled_direction(&pb.layout);
        for k in 0..3 {
            let e = LinExpr::var(position[k]) + tv_scaled[k].scaled(tau_u) - LinExpr::constant(s.points[i][k]);
            pb.add_equality(&e, format!("closure{i}.{k}"));
        }
    }
    Ok(PnpModel {
        problem: pb.build()?,
        camera,
        position,
        rays,
        tau_u,
        points: s.points.clone(),
        bearings,
    })
}

impl PnpModel {
    /// Rank-one point for a camera pose; the rays are the true offsets to the points.
    pub fn lift(&self, camera: &Pose) -> Result<PrimalPoint> {
        let layout = &self.problem.layout;
        let mut p = empty_point(layout);
        place_rotation(&mut p, &self.camera, camera.rotation.matrix())?;
        let t = camera.translation.vector;
        for (k, &idx) in self.position.iter().enumerate() {
            let slot = layout.free_indices().iter().position(|&f| f == idx).expect("free index");
            p.free[slot] = t[k];
        }
        for (tv, q) in self.rays.iter().zip(&self.points) {
            place_sp(&mut p, tv, &t, q, self.tau_u)?;
        }
        Ok(p)
    }

    /// `sum_i |(q_i - t)/|q_i - t| - R p_hat_i|^2` evaluated directly.
    pub fn residual(&self, camera: &Pose) -> f64 {
        let t = camera.translation.vector;
        self.points
            .iter()
            .zip(&self.bearings)
            .map(|(q, b)| ((q - t).normalize() - camera.rotation * b).norm_squared())
            .sum()
    }

    pub fn extract(&self, point: &PrimalPoint, rank_tol: f64) -> Result<PnpEstimate> {
        check_rank_one(&self.problem, point, rank_tol)?;
        let r = extract_rotation(point, &self.camera)?;
        let free = self.problem.layout.free_indices();
        let t = Vector3::from_fn(|k, _| {
            let slot = free.iter().position(|&f| f == self.position[k]).expect("free index");
            point.free[slot]
        });
        let (taus, directions) = self
            .rays
            .iter()
            .map(|tv| {
                let (tau, v, _) = extract_sp(point, tv);
                (tau, v)
            })
            .unzip();
        Ok(PnpEstimate {
            camera: pose_from_parts(r, t),
            taus,
            directions,
        })
    }
}
