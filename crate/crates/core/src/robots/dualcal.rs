use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    add_congruent_rotation, add_rotation_rows, add_translation_rows, check_rank_one, empty_point, extract_rotation, extract_sp, place_rotation,
    place_sp, pose_from_parts, scene_tau_u, Pose,
};
use crate::error::{Error, Result};
use crate::manifolds::{
    lift_pair_product, pair_product_rows, transform_equality_rows, FrameSymbol, PairProductVar, RotationSymbol,
    RotationVar, TranslationVar,
};
use crate::tcsdp::expr::{
    mat3_mul_const_mat, mat3_mul_const_vec, vec3_add, vec3_const, vec3_scale, vec3_sub, LinExpr, LinMat3,
};
use crate::tcsdp::{Layout, PrimalPoint, ProblemBuilder, TcsdpProblem};

/// The three unknown transforms of `A X B = Y C Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCalTruth {
    pub x: Pose,
    pub y: Pose,
    pub z: Pose,
}

/// Measurement triples for two arms: `a[i]` world-from-end-effector of arm A, `b[i]` camera-from-target,
/// `c[i]` base-from-end-effector of arm B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCalScenario {
    #[serde(default = "super::schema_version")]
    pub version: u32,
    pub a: Vec<Pose>,
    pub b: Vec<Pose>,
    pub c: Vec<Pose>,
    #[serde(default)]
    pub truth: Option<DualCalTruth>,
    /// Rotation noise bound in degrees and translation noise bound in meters.
    #[serde(default)]
    pub noise: (f64, f64),
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DualCalScenario {
    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn default_tau_u(&self) -> f64 {
        let mut pts = vec![Vector3::zeros()];
        pts.extend(self.a.iter().map(|p| p.translation.vector));
        match &self.truth {
            Some(t) => {
                pts.push(t.y.translation.vector);
                for i in 0..self.m() {
                    pts.push((self.a[i] * t.x).translation.vector);
                    pts.push((t.y * self.c[i]).translation.vector);
                    pts.push((t.y * self.c[i] * t.z).translation.vector);
                }
                scene_tau_u(&pts)
            }
            None => 4.0 * scene_tau_u(&pts),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualCalModel {
    pub problem: TcsdpProblem,
    pub cameras: Vec<RotationVar>,
    pub ee_b: Vec<RotationVar>,
    pub targets: Vec<RotationVar>,
    /// End effector A to camera.
    pub ea_c: Vec<TranslationVar>,
    /// End effector B to target.
    pub eb_t: Vec<TranslationVar>,
    /// World origin to base of arm B.
    pub w_b: Vec<TranslationVar>,
    pub products: Vec<PairProductVar>,
    pub tau_u: f64,
    pub gamma_w: f64,
    pub a: Vec<Pose>,
    pub b: Vec<Pose>,
    pub c: Vec<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCalEstimate {
    pub x: Pose,
    pub y: Pose,
    pub z: Pose,
}

fn symbol(layout: &Layout, tv: &TranslationVar, r1: RotationSymbol, r2: LinMat3, pp: Option<PairProductVar>) -> FrameSymbol {
    FrameSymbol {
        tau: Some(tv.tau(layout)),
        v: Some(tv.direction(layout)),
        r1,
        r2: RotationSymbol::Lifted(r2),
        products: pp,
    }
}

/// Per configuration: camera, end-effector B and target rotations, three SP chains and one
/// pair-product variable for `R_eb' v_ebt` and `R_eb' R_t`. Objective
/// `sum_i |R_c R_B - R_t|_F^2 + gamma_w |p_fk1 - p_fk2|^2`; the constant transforms X, Y, Z are tied
/// across configurations against configuration 0.
pub fn build_dualcal(s: &DualCalScenario, tau_u: f64, gamma_w: f64) -> Result<DualCalModel> {
    let m = s.m();
    if m < 2 {
        return Err(Error::DegenerateScenario(format!("{m} configurations, need at least 2")));
    }
    if s.b.len() != m || s.c.len() != m {
        return Err(Error::InvalidInput("A, B and C must have the same length".into()));
    }
    if !(tau_u > 0.0) || !(gamma_w >= 0.0) || !gamma_w.is_finite() {
        return Err(Error::InvalidInput("extension cap must be positive and the weight nonnegative".into()));
    }

    let mut layout = Layout::new();
    let mut cameras = Vec::with_capacity(m);
    let mut ee_b = Vec::with_capacity(m);
    let mut targets = Vec::with_capacity(m);
    let mut ea_c = Vec::with_capacity(m);
    let mut eb_t = Vec::with_capacity(m);
    let mut w_b = Vec::with_capacity(m);
    let mut products = Vec::with_capacity(m);
    for i in 0..m {
        cameras.push(RotationVar::add(&mut layout, &format!("R_c{i}"))?);
        ee_b.push(RotationVar::add(&mut layout, &format!("R_eb{i}"))?);
        targets.push(RotationVar::add(&mut layout, &format!("R_t{i}"))?);
        ea_c.push(TranslationVar::add(&mut layout, &format!("ea_c{i}"))?);
        eb_t.push(TranslationVar::add(&mut layout, &format!("eb_t{i}"))?);
        w_b.push(TranslationVar::add(&mut layout, &format!("w_b{i}"))?);
        products.push(PairProductVar::add(&mut layout, &format!("pp{i}"))?);
    }

    let mut pb = ProblemBuilder::new(layout);
    let mut frames = Vec::with_capacity(m);
    for i in 0..m {
        if i == 0 {
            add_rotation_rows(&mut pb, &cameras[0]);
        } else {
            // R_ci = R_Ai R_A0' R_c0.
            let mi = s.a[i].rotation.matrix() * s.a[0].rotation.matrix().transpose();
            add_congruent_rotation(&mut pb, &cameras[0], &cameras[i], &mi, &format!("x{i}"));
        }
        for rv in [&ee_b[i], &targets[i]] {
            add_rotation_rows(&mut pb, rv);
        }
        for tv in [&ea_c[i], &eb_t[i], &w_b[i]] {
            add_translation_rows(&mut pb, tv);
        }
        let l = &pb.layout;
        let rc = cameras[i].matrix(l);
        let reb = ee_b[i].matrix(l);
        let rt = targets[i].matrix(l);
        let (ra, ta) = (*s.a[i].rotation.matrix(), s.a[i].translation.vector);
        let (rb, tb) = (*s.b[i].rotation.matrix(), s.b[i].translation.vector);
        let (rcm, tcm) = (*s.c[i].rotation.matrix(), s.c[i].translation.vector);
        let rbase = mat3_mul_const_mat(&reb, &rcm.transpose());

        let pp_rows = pair_product_rows(l, &products[i], &reb, &rt, &eb_t[i].direction(l))?;
        let rot_res = mat3_mul_const_mat(&rc, &rb);
        let rot_terms: Vec<LinExpr> = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .map(|(r, c)| &rot_res[r][c] - &rt[r][c])
            .collect();
        let p1 = vec3_add(
            &vec3_add(&vec3_const(&ta, &cameras[i].one(l)), &vec3_scale(&ea_c[i].scaled_direction(l), tau_u)),
            &mat3_mul_const_vec(&rc, &tb),
        );
        let p2 = vec3_add(
            &vec3_add(&vec3_scale(&w_b[i].scaled_direction(l), tau_u), &mat3_mul_const_vec(&rbase, &tcm)),
            &vec3_scale(&eb_t[i].scaled_direction(l), tau_u),
        );
        let fk = vec3_sub(&p1, &p2);
        frames.push([
            symbol(l, &ea_c[i], RotationSymbol::Known(ra), rc, None),
            symbol(l, &w_b[i], RotationSymbol::Known(Matrix3::identity()), rbase, None),
            symbol(l, &eb_t[i], RotationSymbol::Lifted(reb), rt, Some(products[i])),
        ]);
        pb.add_squared_norm(&rot_terms, 1.0)?;
        pb.add_squared_norm(&fk, gamma_w)?;
        pb.add_equalities(pp_rows.into_iter().map(|mut r| {
            r.label = format!("pp{i}:{}", r.label);
            r
        }));
    }
    for i in 1..m {
        for (k, name) in ["x", "y", "z"].iter().enumerate() {
            let rows = transform_equality_rows(&pb.layout, &frames[0][k], &frames[i][k])?;
            // The camera congruence already carries the rotation rows of X.
            let rows = rows.into_iter().filter(|r| k != 0 || !r.label.starts_with("cft:rot"));
            pb.add_equalities(rows.map(|mut r| {
                r.label = format!("{name}{i}:{}", r.label);
                r
            }));
        }
    }

    Ok(DualCalModel {
        problem: pb.build()?,
        cameras,
        ee_b,
        targets,
        ea_c,
        eb_t,
        w_b,
        products,
        tau_u,
        gamma_w,
        a: s.a.clone(),
        b: s.b.clone(),
        c: s.c.clone(),
    })
}

impl DualCalModel {
    pub fn lift(&self, t: &DualCalTruth) -> Result<PrimalPoint> {
        let mut p = empty_point(&self.problem.layout);
        for i in 0..self.a.len() {
            let cam = self.a[i] * t.x;
            let eb = t.y * self.c[i];
            let tgt = eb * t.z;
            place_rotation(&mut p, &self.cameras[i], cam.rotation.matrix())?;
            place_rotation(&mut p, &self.ee_b[i], eb.rotation.matrix())?;
            place_rotation(&mut p, &self.targets[i], tgt.rotation.matrix())?;
            place_sp(&mut p, &self.ea_c[i], &self.a[i].translation.vector, &cam.translation.vector, self.tau_u)?;
            place_sp(&mut p, &self.eb_t[i], &eb.translation.vector, &tgt.translation.vector, self.tau_u)?;
            place_sp(&mut p, &self.w_b[i], &Vector3::zeros(), &t.y.translation.vector, self.tau_u)?;
            let v = (tgt.translation.vector - eb.translation.vector)
                .try_normalize(0.0)
                .unwrap_or_else(Vector3::z);
            let pp = lift_pair_product(eb.rotation.matrix(), tgt.rotation.matrix(), &v);
            for (k, blk) in pp.0.into_iter().enumerate() {
                p.blocks[self.products[i].blocks[k]] = blk;
            }
        }
        Ok(p)
    }

    /// `sum_i |R_c R_B - R_t|_F^2 + gamma_w |t(A X B) - t(Y C Z)|^2` with `R_c = R(A X)`, `R_t = R(Y C Z)`.
    pub fn residual(&self, t: &DualCalTruth) -> f64 {
        (0..self.a.len())
            .map(|i| {
                let cam = self.a[i] * t.x;
                let tgt = t.y * self.c[i] * t.z;
                let lhs = cam * self.b[i];
                (cam.rotation.matrix() * self.b[i].rotation.matrix() - tgt.rotation.matrix()).norm_squared()
                    + self.gamma_w * (lhs.translation.vector - tgt.translation.vector).norm_squared()
            })
            .sum()
    }

    pub fn extract(&self, point: &PrimalPoint, rank_tol: f64) -> Result<DualCalEstimate> {
        check_rank_one(&self.problem, point, rank_tol)?;
        let rc = extract_rotation(point, &self.cameras[0])?;
        let reb = extract_rotation(point, &self.ee_b[0])?;
        let rt = extract_rotation(point, &self.targets[0])?;
        let (_, _, d_ac) = extract_sp(point, &self.ea_c[0]);
        let (_, _, d_bt) = extract_sp(point, &self.eb_t[0]);
        let (_, _, d_wb) = extract_sp(point, &self.w_b[0]);
        let ra = *self.a[0].rotation.matrix();
        let rcm = *self.c[0].rotation.matrix();
        Ok(DualCalEstimate {
            x: pose_from_parts(ra.transpose() * rc, ra.transpose() * d_ac * self.tau_u),
            y: pose_from_parts(reb * rcm.transpose(), d_wb * self.tau_u),
            z: pose_from_parts(reb.transpose() * rt, reb.transpose() * d_bt * self.tau_u),
        })
    }
}
