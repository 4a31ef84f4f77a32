use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use tcsdp::bench::{gen_dualcal, gen_handeye, gen_pnp, handeye_consistency, dualcal_consistency, pose_errors};
use tcsdp::robots::{build_dualcal, build_handeye, build_pnp, bearing_from_pixel, pose_from_parts, project};
use tcsdp::tcsdp::{PrimalPoint, TcsdpProblem};
use tcsdp::Error;

fn max_violation(p: &TcsdpProblem, x: &PrimalPoint) -> f64 {
    let y = x.to_vec(&p.layout).unwrap();
    p.max_equality_residual(&y).max(p.max_inequality_violation(&y))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300).max(1.0)
}

#[test]
fn pnp_truth_is_feasible_with_zero_cost() {
    for seed in 0..5 {
        let s = gen_pnp(6, 0.0, seed).unwrap();
        let model = build_pnp(&s, s.default_tau_u()).unwrap();
        let x = model.lift(&s.truth.unwrap()).unwrap();
        assert!(max_violation(&model.problem, &x) <= 1e-10);
        assert!(model.problem.objective_at(&x).unwrap() <= 1e-12);
    }
}

#[test]
fn pnp_lifted_objective_matches_direct_residual() {
    for seed in 0..20 {
        let s = gen_pnp(8, 5.0, 100 + seed).unwrap();
        let model = build_pnp(&s, s.default_tau_u()).unwrap();
        let truth = s.truth.unwrap();
        let x = model.lift(&truth).unwrap();
        assert!(max_violation(&model.problem, &x) <= 1e-10);
        let lifted = model.problem.objective_at(&x).unwrap();
        assert!(rel(lifted, model.residual(&truth)) <= 1e-9, "seed {seed}");
        assert!(lifted > 0.0);
    }
}

#[test]
fn pnp_extraction_of_truth_is_exact() {
    let s = gen_pnp(7, 0.0, 3).unwrap();
    let model = build_pnp(&s, s.default_tau_u()).unwrap();
    let truth = s.truth.unwrap();
    let est = model.extract(&model.lift(&truth).unwrap(), 1e-8).unwrap();
    let (r, t) = pose_errors(&[est.camera], &[truth]).unwrap();
    assert!(r[0] < 1e-12 && t[0] < 1e-12);
    for ((tau, v), q) in est.taus.iter().zip(&est.directions).zip(&s.points) {
        let p = tcsdp::robots::sp_forward(&truth.translation.vector, *tau, v, model.tau_u);
        assert!((p - q).norm() < 1e-12);
    }
}

#[test]
fn pnp_rejects_too_few_points() {
    let mut s = gen_pnp(6, 0.0, 0).unwrap();
    s.points.truncate(3);
    s.pixels.truncate(3);
    assert!(matches!(build_pnp(&s, 10.0), Err(Error::DegenerateScenario(_))));
}

#[test]
fn pnp_extraction_rejects_mixtures() {
    let s = gen_pnp(6, 0.0, 9).unwrap();
    let model = build_pnp(&s, s.default_tau_u()).unwrap();
    let a = model.lift(&s.truth.unwrap()).unwrap();
    let other = s.truth.unwrap() * pose_from_parts(Rotation3::new(Vector3::new(0.4, 0.0, 0.2)).into_inner(), Vector3::zeros());
    let b = model.lift(&other).unwrap();
    let mix = PrimalPoint {
        blocks: a.blocks.iter().zip(&b.blocks).map(|(x, y)| (x + y) * 0.5).collect(),
        free: a.free.clone(),
    };
    assert!(matches!(model.extract(&mix, 1e-6), Err(Error::NotRankOne { .. })));
}

#[test]
fn bearing_matches_projection() {
    let s = gen_pnp(10, 0.0, 11).unwrap();
    let cam = s.truth.unwrap();
    for q in &s.points {
        let px: Vector2<f64> = project(&cam, q, s.f_cam).unwrap();
        let b = bearing_from_pixel(&px, s.f_cam);
        let d = cam.rotation.inverse() * (q - cam.translation.vector);
        assert!(b.cross(&d.normalize()).norm() < 1e-12);
    }
}

#[test]
fn handeye_truth_is_feasible_with_zero_cost() {
    for seed in 0..3 {
        let s = gen_handeye(3, 6, 0.0, seed).unwrap();
        let model = build_handeye(&s, s.default_tau_u()).unwrap();
        let (x, t) = (s.truth_x.unwrap(), s.truth_target.unwrap());
        let p = model.lift(&x, &t).unwrap();
        assert!(max_violation(&model.problem, &p) <= 1e-10);
        assert!(model.problem.objective_at(&p).unwrap() <= 1e-12);
        let est = model.extract(&p, 1e-8).unwrap();
        let (r, tt) = pose_errors(&[est.x], &[x]).unwrap();
        assert!(r[0] < 1e-10 && tt[0] < 1e-10);
        for (i, cam) in est.cameras.iter().enumerate() {
            let xi = s.ee_poses[i].inverse() * cam;
            assert!((xi.to_homogeneous() - x.to_homogeneous()).norm() < 1e-10);
        }
        assert!(handeye_consistency(&s.ee_poses, &est.cameras, &est.x) < 1e-10);
    }
}

#[test]
fn handeye_lifted_objective_matches_direct_residual() {
    for seed in 0..20 {
        let s = gen_handeye(2, 6, 2.0, 50 + seed).unwrap();
        let model = build_handeye(&s, s.default_tau_u()).unwrap();
        let (x, t) = (s.truth_x.unwrap(), s.truth_target.unwrap());
        let p = model.lift(&x, &t).unwrap();
        assert!(max_violation(&model.problem, &p) <= 1e-10);
        let lifted = model.problem.objective_at(&p).unwrap();
        assert!(rel(lifted, model.residual(&x, &t)) <= 1e-9, "seed {seed}");
    }
}

#[test]
fn handeye_rows_reject_a_wrong_mount() {
    let s = gen_handeye(3, 6, 0.0, 4).unwrap();
    let model = build_handeye(&s, s.default_tau_u()).unwrap();
    let x = s.truth_x.unwrap();
    let p = model.lift(&x, &s.truth_target.unwrap()).unwrap();
    // Camera 1 moved off its mount while keeping its own rays consistent.
    let bad_x = x * pose_from_parts(Rotation3::new(Vector3::new(0.0, 0.1, 0.0)).into_inner(), Vector3::zeros());
    let cam1 = s.ee_poses[1] * bad_x;
    let mut q = p.clone();
    q.blocks[model.cameras[1].block] = tcsdp::manifolds::lift_rotation(cam1.rotation.matrix()).unwrap().0;
    assert!(max_violation(&model.problem, &q) > 1e-3);
}

#[test]
fn dualcal_truth_is_feasible_with_zero_cost() {
    for seed in 0..3 {
        let s = gen_dualcal(3, 0.0, 0.0, seed).unwrap();
        let t = s.truth.unwrap();
        assert!(dualcal_consistency(&s.a, &s.b, &s.c, &t) < 1e-12);
        let model = build_dualcal(&s, s.default_tau_u(), 1.0).unwrap();
        let p = model.lift(&t).unwrap();
        assert!(max_violation(&model.problem, &p) <= 1e-10);
        assert!(model.problem.objective_at(&p).unwrap() <= 1e-12);
        let est = model.extract(&p, 1e-8).unwrap();
        let (r, tt) = pose_errors(&[est.x, est.y, est.z], &[t.x, t.y, t.z]).unwrap();
        assert!(r.iter().chain(&tt).all(|&e| e < 1e-10), "{r:?} {tt:?}");
    }
}

#[test]
fn dualcal_lifted_objective_matches_direct_residual() {
    for seed in 0..20 {
        let s = gen_dualcal(2, 0.8, 8e-4, 70 + seed).unwrap();
        let model = build_dualcal(&s, s.default_tau_u(), 0.7).unwrap();
        let t = s.truth.unwrap();
        let p = model.lift(&t).unwrap();
        assert!(max_violation(&model.problem, &p) <= 1e-10);
        let lifted = model.problem.objective_at(&p).unwrap();
        let direct = model.residual(&t);
        assert!(direct > 0.0);
        assert!(rel(lifted, direct) <= 1e-9, "seed {seed}: {lifted} vs {direct}");
    }
}

#[test]
fn dualcal_constant_transform_rows_vanish_on_truth() {
    let s = gen_dualcal(4, 0.0, 0.0, 8).unwrap();
    let model = build_dualcal(&s, s.default_tau_u(), 1.0).unwrap();
    let p = model.lift(&s.truth.unwrap()).unwrap();
    let y = p.to_vec(&model.problem.layout).unwrap();
    let rows: Vec<_> = model
        .problem
        .equalities
        .iter()
        .filter(|r| r.label.starts_with('x') || r.label.starts_with('y') || r.label.starts_with('z'))
        .collect();
    // X: four translation rows plus 28 congruence rows per pair; Y and Z: ten rows each.
    assert_eq!(rows.len(), 3 * (4 + 28) + 3 * 2 * 10);
    assert!(rows.iter().all(|r| r.residual(&y).abs() <= 1e-12));
    assert_eq!(rows.iter().filter(|r| r.label.contains("cft:rot")).count(), 3 * 2 * 6);
    assert_eq!(rows.iter().filter(|r| r.label.contains("rot:cong")).count(), 3 * 28);
}

#[test]
fn pose_error_closed_forms() {
    let alpha: f64 = 0.3;
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), alpha).into_inner();
    let truth = pose_from_parts(Matrix3::identity(), Vector3::zeros());
    let est = pose_from_parts(rz, Vector3::new(0.01, 0.0, 0.0));
    let (r, t) = pose_errors(&[est], &[truth]).unwrap();
    assert!((r[0] - 2.0 * 2f64.sqrt() * (alpha / 2.0).sin().abs()).abs() < 1e-14);
    assert!((t[0] - 0.01).abs() < 1e-15);
    let (r0, t0) = pose_errors(&[truth], &[truth]).unwrap();
    assert_eq!((r0[0], t0[0]), (0.0, 0.0));
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(gen_pnp(6, 2.0, 42).unwrap(), gen_pnp(6, 2.0, 42).unwrap());
    assert_ne!(gen_pnp(6, 2.0, 42).unwrap(), gen_pnp(6, 2.0, 43).unwrap());
    assert_eq!(gen_handeye(3, 6, 2.0, 1).unwrap(), gen_handeye(3, 6, 2.0, 1).unwrap());
    assert_eq!(gen_dualcal(3, 0.3, 3e-4, 1).unwrap(), gen_dualcal(3, 0.3, 3e-4, 1).unwrap());
}

#[test]
fn scenarios_round_trip_through_json() {
    let s = gen_handeye(2, 6, 2.0, 5).unwrap();
    let back: tcsdp::robots::HandEyeScenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(s, back);
    let d = gen_dualcal(2, 0.1, 1e-4, 5).unwrap();
    let back: tcsdp::robots::DualCalScenario = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
    assert_eq!(d, back);
}
