use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robots::dualcal::DualCalTruth;
use crate::robots::{pose_from_parts, project, DualCalScenario, HandEyeScenario, PnpScenario, Pose};

/// Focal length used by the synthetic cameras, in pixels.
pub const F_CAM: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    None,
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    /// Pixel perturbation bound for the camera problems. `Medium` sits between the two published levels.
    pub fn pixel_bound(self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Low => 2.0,
            NoiseLevel::Medium => 3.5,
            NoiseLevel::High => 5.0,
        }
    }

    /// `(theta in degrees, l in meters)` for the transform measurements.
    pub fn transform_bound(self) -> (f64, f64) {
        match self {
            NoiseLevel::None => (0.0, 0.0),
            NoiseLevel::Low => (0.1, 1e-4),
            NoiseLevel::Medium => (0.3, 3e-4),
            NoiseLevel::High => (0.8, 8e-4),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseLevel::None => "none",
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(
        b * (2.0 * PI * u3).cos(),
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
    );
    *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

fn uniform_box<R: Rng>(rng: &mut R, lo: Vector3<f64>, hi: Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|k, _| if hi[k] > lo[k] { rng.gen_range(lo[k]..hi[k]) } else { lo[k] })
}

fn symmetric_box<R: Rng>(rng: &mut R, h: f64) -> Vector3<f64> {
    uniform_box(rng, Vector3::repeat(-h), Vector3::repeat(h))
}

/// Camera at `eye` whose optical axis points at `target`, with a random roll.
pub fn look_at<R: Rng>(rng: &mut R, eye: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let mut x = random_unit(rng).cross(&z);
    while x.norm() < 1e-3 {
        x = random_unit(rng).cross(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    pose_from_parts(Matrix3::from_columns(&[x, y, z]), eye)
}

fn perturb_pixel<R: Rng>(rng: &mut R, p: Vector2<f64>, bound: f64) -> Vector2<f64> {
    if bound == 0.0 {
        return p;
    }
    p + Vector2::new(rng.gen_range(-bound..=bound), rng.gen_range(-bound..=bound))
}

/// `R rot(v, rand(0, theta))`, `t + rand(-l, l)` per axis.
pub fn perturb_pose<R: Rng>(rng: &mut R, pose: &Pose, theta_deg: f64, l: f64) -> Pose {
    if theta_deg == 0.0 && l == 0.0 {
        return *pose;
    }
    let axis = Unit::new_normalize(random_unit(rng));
    let angle = rng.gen_range(0.0..=theta_deg.to_radians());
    let r = pose.rotation.matrix() * Rotation3::from_axis_angle(&axis, angle).matrix();
    let t = pose.translation.vector + if l > 0.0 { symmetric_box(rng, l) } else { Vector3::zeros() };
    pose_from_parts(r, t)
}

fn cube_points<R: Rng>(rng: &mut R, n: usize, half: f64) -> Vec<Vector3<f64>> {
    (0..n).map(|_| symmetric_box(rng, half)).collect()
}

fn check_noise(e: f64) -> Result<()> {
    if !(e >= 0.0) || !e.is_finite() {
        return Err(Error::InvalidInput(format!("noise bound must be nonnegative, got {e}")));
    }
    Ok(())
}

/// Points uniform in `[-1, 1]^3`, camera on a sphere of radius 2.5 looking at the origin.
pub fn gen_pnp(n: usize, e_p: f64, seed: u64) -> Result<PnpScenario> {
    if n < 4 {
        return Err(Error::DegenerateScenario(format!("{n} points, need at least 4")));
    }
    check_noise(e_p)?;
    let mut rng = rng_for(seed);
    loop {
        let eye = random_unit(&mut rng) * 2.5;
        let aim = symmetric_box(&mut rng, 0.2);
        let camera = look_at(&mut rng, eye, aim);
        let points = cube_points(&mut rng, n, 1.0);
        let Some(clean) = points.iter().map(|q| project(&camera, q, F_CAM)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let pixels = clean.into_iter().map(|p| perturb_pixel(&mut rng, p, e_p)).collect();
        return Ok(PnpScenario {
            version: crate::robots::SCHEMA_VERSION,
            points,
            pixels,
            f_cam: F_CAM,
            truth: Some(camera),
            noise: e_p,
            seed: Some(seed),
        });
    }
}

/// Features uniform in a unit cube around the target origin, cameras on a sphere of radius 1.5
/// looking at the target, a random mount `X` within 0.15 m of the end effector.
pub fn gen_handeye(m: usize, n: usize, e_p: f64, seed: u64) -> Result<HandEyeScenario> {
    if m < 2 {
        return Err(Error::DegenerateScenario(format!("{m} configurations, need at least 2")));
    }
    if n < 4 {
        return Err(Error::DegenerateScenario(format!("{n} features, need at least 4")));
    }
    check_noise(e_p)?;
    let mut rng = rng_for(seed);
    let x = pose_from_parts(random_rotation(&mut rng), symmetric_box(&mut rng, 0.15));
    let target = pose_from_parts(random_rotation(&mut rng), symmetric_box(&mut rng, 0.2));
    let features = cube_points(&mut rng, n, 0.5);
    let world: Vec<Vector3<f64>> = features.iter().map(|f| target * f).collect();
    let mut ee_poses = Vec::with_capacity(m);
    let mut pixels = Vec::with_capacity(m);
    while ee_poses.len() < m {
        let eye = random_unit(&mut rng) * 1.5;
        let aim = target.translation.vector + symmetric_box(&mut rng, 0.1);
        let cam = look_at(&mut rng, eye, aim);
        let Some(clean) = world.iter().map(|q| project(&cam, q, F_CAM)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        ee_poses.push(cam * x.inverse());
        pixels.push(clean.into_iter().map(|p| perturb_pixel(&mut rng, p, e_p)).collect());
    }
    Ok(HandEyeScenario {
        version: crate::robots::SCHEMA_VERSION,
        ee_poses,
        features,
        pixels,
        f_cam: F_CAM,
        truth_x: Some(x),
        truth_target: Some(target),
        noise: e_p,
        seed: Some(seed),
    })
}

/// Arm B stands about 1 m from arm A's world origin and holds the target; the camera on arm A
/// sees the target from 0.4 to 0.8 m. Noise is applied to A, B and C.
pub fn gen_dualcal(m: usize, theta_deg: f64, l: f64, seed: u64) -> Result<DualCalScenario> {
    if m < 2 {
        return Err(Error::DegenerateScenario(format!("{m} configurations, need at least 2")));
    }
    check_noise(theta_deg)?;
    check_noise(l)?;
    let mut rng = rng_for(seed);
    let x = pose_from_parts(random_rotation(&mut rng), symmetric_box(&mut rng, 0.1));
    let y_t = Vector3::new(1.0, 0.0, 0.0) + symmetric_box(&mut rng, 0.2);
    let y = pose_from_parts(random_rotation(&mut rng), y_t);
    let z = pose_from_parts(random_rotation(&mut rng), symmetric_box(&mut rng, 0.1));
    let truth = DualCalTruth { x, y, z };
    let (mut a, mut b, mut c) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    for _ in 0..m {
        let ci = pose_from_parts(
            random_rotation(&mut rng),
            uniform_box(&mut rng, Vector3::new(0.3, -0.3, 0.2), Vector3::new(0.7, 0.3, 0.6)),
        );
        let t_t = y * ci * z;
        let bi = pose_from_parts(
            random_rotation(&mut rng),
            uniform_box(&mut rng, Vector3::new(-0.1, -0.1, 0.4), Vector3::new(0.1, 0.1, 0.8)),
        );
        let cam = t_t * bi.inverse();
        let ai = cam * x.inverse();
        a.push(perturb_pose(&mut rng, &ai, theta_deg, l));
        b.push(perturb_pose(&mut rng, &bi, theta_deg, l));
        c.push(perturb_pose(&mut rng, &ci, theta_deg, l));
    }
    Ok(DualCalScenario {
        version: crate::robots::SCHEMA_VERSION,
        a,
        b,
        c,
        truth: Some(truth),
        noise: (theta_deg, l),
        seed: Some(seed),
    })
}
