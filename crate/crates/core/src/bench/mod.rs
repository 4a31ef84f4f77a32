//! Synthetic scenario generation, pose-error metrics and batch execution.

pub mod scenario;

pub use scenario::{gen_dualcal, gen_handeye, gen_pnp, random_rotation, NoiseLevel, F_CAM};

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::{refine_solve_with_progress, PhaseCounts, ProgressRecord, RefineOptions};
use crate::robots::dualcal::DualCalTruth;
use crate::robots::{build_dualcal, build_handeye, build_pnp, Pose, ProblemKind};
use crate::solver::ClarabelBackend;
use crate::tcsdp::{PrimalPoint, TcsdpProblem};

/// A run succeeds when every rotation error is below this.
pub const SUCCESS_ROTATION_ERROR: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ProblemKind,
    /// Configurations (ignored for PnP).
    pub m: usize,
    /// Points or features (ignored for dual calibration).
    pub n: usize,
    pub noise: NoiseLevel,
    pub seed: u64,
    pub refine: RefineOptions,
    /// Weight of the position term in the dual-calibration objective.
    pub gamma_w: f64,
    /// Largest eigenvalue gap accepted when reading transforms off the blocks.
    pub extract_tol: f64,
}

impl ScenarioConfig {
    pub fn new(kind: ProblemKind, m: usize, n: usize, noise: NoiseLevel, seed: u64) -> Self {
        Self {
            kind,
            m,
            n,
            noise,
            seed,
            refine: RefineOptions::default(),
            gamma_w: 1.0,
            extract_tol: 1e-3,
        }
    }
}

/// Outcome of one configuration. Errors are `NaN` when no estimate could be extracted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub m: usize,
    pub n: usize,
    pub noise: NoiseLevel,
    pub seed: u64,
    /// Names of the estimated unknowns, aligned with the error lists.
    pub unknowns: Vec<String>,
    pub rotation_errors: Vec<f64>,
    pub translation_errors: Vec<f64>,
    pub eigen_gap: f64,
    pub duality_gap: f64,
    pub cost: f64,
    pub iterations: PhaseCounts,
    pub wall_time: f64,
    pub success: bool,
    pub certified: bool,
    pub status: String,
    /// `|A X - X B|_F` over consecutive configurations (hand-eye) or `|A X B - Y C Z|_F` per
    /// configuration (dual calibration), worst case.
    pub consistency: Option<f64>,
}

impl SolveReport {
    fn failed(cfg: &ScenarioConfig, unknowns: &[&str], status: String, wall_time: f64) -> Self {
        Self {
            kind: cfg.kind,
            m: cfg.m,
            n: cfg.n,
            noise: cfg.noise,
            seed: cfg.seed,
            unknowns: unknowns.iter().map(|s| s.to_string()).collect(),
            rotation_errors: vec![f64::NAN; unknowns.len()],
            translation_errors: vec![f64::NAN; unknowns.len()],
            eigen_gap: f64::NAN,
            duality_gap: f64::NAN,
            cost: f64::NAN,
            iterations: PhaseCounts::default(),
            wall_time,
            success: false,
            certified: false,
            status,
            consistency: None,
        }
    }
}

/// `(|R_hat R' - I|_F, |t - t_hat|)` per unknown.
pub fn pose_errors(estimate: &[Pose], truth: &[Pose]) -> Result<(Vec<f64>, Vec<f64>)> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidInput("estimate and truth differ in length".into()));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let r = (e.rotation.matrix() * t.rotation.matrix().transpose() - Matrix3::identity()).norm();
            (r, (t.translation.vector - e.translation.vector).norm())
        })
        .unzip())
}

pub fn success_of(rotation_errors: &[f64]) -> bool {
    !rotation_errors.is_empty() && rotation_errors.iter().all(|&r| r < SUCCESS_ROTATION_ERROR)
}

fn unknowns(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Pnp => &["c"],
        ProblemKind::HandEye => &["x"],
        ProblemKind::DualCal => &["x", "y", "z"],
    }
}

/// Generates the scenario, solves it and scores the estimate. Failures become reports.
pub fn run_one(cfg: &ScenarioConfig, progress: &mut dyn FnMut(&ProgressRecord)) -> SolveReport {
    let start = Instant::now();
    match run_inner(cfg, progress, start) {
        Ok(r) => r,
        Err(e) => {
            warn!("{:?} seed {}: {e}", cfg.kind, cfg.seed);
            SolveReport::failed(cfg, unknowns(cfg.kind), e.to_string(), start.elapsed().as_secs_f64())
        }
    }
}

fn run_inner(cfg: &ScenarioConfig, progress: &mut dyn FnMut(&ProgressRecord), start: Instant) -> Result<SolveReport> {
    let backend = ClarabelBackend;
    let names = unknowns(cfg.kind);
    let tol = cfg.extract_tol;
    type Extract<'m> = Box<dyn Fn(&PrimalPoint) -> Result<(Vec<Pose>, Option<f64>)> + 'm>;
    let (problem, extract, truth): (TcsdpProblem, Extract, Vec<Pose>) = match cfg.kind {
        ProblemKind::Pnp => {
            let s = gen_pnp(cfg.n, cfg.noise.pixel_bound(), cfg.seed)?;
            let model = build_pnp(&s, s.default_tau_u())?;
            let truth = vec![s.truth.expect("synthetic")];
            let problem = model.problem.clone();
            (problem, Box::new(move |p| Ok((vec![model.extract(p, tol)?.camera], None))), truth)
        }
        ProblemKind::HandEye => {
            let s = gen_handeye(cfg.m, cfg.n, cfg.noise.pixel_bound(), cfg.seed)?;
            let model = build_handeye(&s, s.default_tau_u())?;
            let truth = vec![s.truth_x.expect("synthetic")];
            let problem = model.problem.clone();
            let extract = move |p: &PrimalPoint| {
                let est = model.extract(p, tol)?;
                let res = handeye_consistency(&model.ee_poses, &est.cameras, &est.x);
                Ok((vec![est.x], Some(res)))
            };
            (problem, Box::new(extract), truth)
        }
        ProblemKind::DualCal => {
            let (theta, l) = cfg.noise.transform_bound();
            let s = gen_dualcal(cfg.m, theta, l, cfg.seed)?;
            let model = build_dualcal(&s, s.default_tau_u(), cfg.gamma_w)?;
            let t = s.truth.expect("synthetic");
            let problem = model.problem.clone();
            let extract = move |p: &PrimalPoint| {
                let est = model.extract(p, tol)?;
                let est_t = DualCalTruth { x: est.x, y: est.y, z: est.z };
                let res = dualcal_consistency(&model.a, &model.b, &model.c, &est_t);
                Ok((vec![est.x, est.y, est.z], Some(res)))
            };
            (problem, Box::new(extract), vec![t.x, t.y, t.z])
        }
    };
    let solved = refine_solve_with_progress(&problem, &cfg.refine, &backend, progress)?;
    let wall_time = start.elapsed().as_secs_f64();
    let mut report = SolveReport::failed(cfg, names, "ok".into(), wall_time);
    report.eigen_gap = solved.eigen_gap;
    report.duality_gap = solved.duality_gap;
    report.cost = solved.cost;
    report.iterations = solved.iterations;
    report.certified = solved.certified;
    match extract(&solved.point) {
        Ok((est, cons)) => {
            let (r, t) = pose_errors(&est, &truth)?;
            report.success = success_of(&r);
            report.rotation_errors = r;
            report.translation_errors = t;
            report.consistency = cons;
        }
        Err(e) => report.status = e.to_string(),
    }
    info!(
        "{:?} seed {}: R err {:?}, cost {:.3e}, EG {:.3e}, {} iterations, {:.1}s",
        cfg.kind,
        cfg.seed,
        report.rotation_errors,
        report.cost,
        report.eigen_gap,
        report.iterations.total(),
        wall_time
    );
    Ok(report)
}

/// Worst `|A X - X B|_F` over consecutive configurations, with `A` the end-effector motion and `B`
/// the camera motion.
pub fn handeye_consistency(ee: &[Pose], cameras: &[Pose], x: &Pose) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 1..ee.len() {
        let a = ee[i - 1].inverse() * ee[i];
        let b = cameras[i - 1].inverse() * cameras[i];
        let d = (a * x).to_homogeneous() - (x * b).to_homogeneous();
        worst = worst.max(d.norm());
    }
    worst
}

/// Worst `|A_i X B_i - Y C_i Z|_F`.
pub fn dualcal_consistency(a: &[Pose], b: &[Pose], c: &[Pose], t: &DualCalTruth) -> f64 {
    (0..a.len())
        .map(|i| ((a[i] * t.x * b[i]).to_homogeneous() - (t.y * c[i] * t.z).to_homogeneous()).norm())
        .fold(0.0, f64::max)
}

/// Runs every configuration on a pool of `parallelism` threads. Progress streams go to
/// `progress_dir/<kind>-<seed>.ndjson` when a directory is given.
pub fn run_batch(configs: &[ScenarioConfig], parallelism: usize, progress_dir: Option<&Path>) -> Result<Vec<SolveReport>> {
    if let Some(dir) = progress_dir {
        fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let io_error: Mutex<Option<Error>> = Mutex::new(None);
    let reports = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| match progress_dir {
                Some(dir) => {
                    let path = dir.join(format!("{}-{}.ndjson", kind_name(cfg.kind), cfg.seed));
                    let mut file = match fs::File::create(&path) {
                        Ok(f) => std::io::BufWriter::new(f),
                        Err(e) => {
                            *io_error.lock().expect("lock") = Some(e.into());
                            return run_one(cfg, &mut |_| {});
                        }
                    };
                    let report = run_one(cfg, &mut |rec| {
                        let _ = writeln!(file, "{}", rec.to_ndjson());
                    });
                    let _ = file.flush();
                    report
                }
                None => run_one(cfg, &mut |_| {}),
            })
            .collect::<Vec<_>>()
    });
    if let Some(e) = io_error.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(reports)
}

pub fn kind_name(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Pnp => "pnp",
        ProblemKind::HandEye => "handeye",
        ProblemKind::DualCal => "dualcal",
    }
}

/// Means over one (kind, m, n, noise) group, in the column order of the published tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: ProblemKind,
    pub m: usize,
    pub n: usize,
    pub noise: NoiseLevel,
    pub unknowns: Vec<String>,
    pub rotation_errors: Vec<f64>,
    pub translation_errors: Vec<f64>,
    pub eigen_gap: f64,
    pub duality_gap: f64,
    pub cost: f64,
    pub wall_time: f64,
    pub iterations: f64,
    pub successes: usize,
    pub total: usize,
}

/// Error and solver means are taken over the successful runs, time and iterations over all runs.
pub fn summarize(reports: &[SolveReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(ProblemKind, usize, usize, NoiseLevel)> = Vec::new();
    for r in reports {
        let k = (r.kind, r.m, r.n, r.noise);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(kind, m, n, noise)| {
            let group: Vec<&SolveReport> = reports
                .iter()
                .filter(|r| (r.kind, r.m, r.n, r.noise) == (kind, m, n, noise))
                .collect();
            let ok: Vec<&&SolveReport> = group.iter().filter(|r| r.success).collect();
            let mean = |f: &dyn Fn(&SolveReport) -> f64, set: &[&SolveReport]| -> f64 {
                if set.is_empty() {
                    f64::NAN
                } else {
                    set.iter().map(|r| f(r)).sum::<f64>() / set.len() as f64
                }
            };
            let ok_refs: Vec<&SolveReport> = ok.iter().map(|r| **r).collect();
            let width = unknowns(kind).len();
            SummaryRow {
                kind,
                m,
                n,
                noise,
                unknowns: unknowns(kind).iter().map(|s| s.to_string()).collect(),
                rotation_errors: (0..width).map(|k| mean(&|r| r.rotation_errors[k], &ok_refs)).collect(),
                translation_errors: (0..width).map(|k| mean(&|r| r.translation_errors[k], &ok_refs)).collect(),
                eigen_gap: mean(&|r| r.eigen_gap, &ok_refs),
                duality_gap: mean(&|r| r.duality_gap, &ok_refs),
                cost: mean(&|r| r.cost, &ok_refs),
                wall_time: mean(&|r| r.wall_time, &group),
                iterations: mean(&|r| r.iterations.total() as f64, &group),
                successes: ok.len(),
                total: group.len(),
            }
        })
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.3e}")
}

/// Writes `results.csv`, `summary.csv` and `results.json` into `dir`.
pub fn write_results(dir: &Path, reports: &[SolveReport]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_path(dir.join("results.csv")).map_err(csv_err)?;
    w.write_record([
        "problem", "m", "n", "noise", "seed", "r1", "r2", "r3", "t1", "t2", "t3", "eg", "dg", "cost", "time_s",
        "iterations", "rank_min", "scheduling", "channel", "success", "certified", "consistency", "status",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let pad = |v: &[f64], k: usize| v.get(k).map(|&x| fmt(x)).unwrap_or_default();
        let row = vec![
            kind_name(r.kind).to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.noise.name().to_string(),
            r.seed.to_string(),
            pad(&r.rotation_errors, 0),
            pad(&r.rotation_errors, 1),
            pad(&r.rotation_errors, 2),
            pad(&r.translation_errors, 0),
            pad(&r.translation_errors, 1),
            pad(&r.translation_errors, 2),
            fmt(r.eigen_gap),
            fmt(r.duality_gap),
            fmt(r.cost),
            format!("{:.3}", r.wall_time),
            r.iterations.total().to_string(),
            r.iterations.rank_min.to_string(),
            r.iterations.scheduling.to_string(),
            r.iterations.channel.to_string(),
            r.success.to_string(),
            r.certified.to_string(),
            r.consistency.map(fmt).unwrap_or_default(),
            r.status.clone(),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let summary = summarize(reports);
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record([
        "problem", "m", "n", "noise", "r1", "r2", "r3", "t1", "t2", "t3", "eg", "dg", "cost", "time_s", "iterations",
        "success/total",
    ])
    .map_err(csv_err)?;
    for s in &summary {
        let pad = |v: &[f64], k: usize| v.get(k).map(|&x| fmt(x)).unwrap_or_default();
        let row = vec![
            kind_name(s.kind).to_string(),
            s.m.to_string(),
            s.n.to_string(),
            s.noise.name().to_string(),
            pad(&s.rotation_errors, 0),
            pad(&s.rotation_errors, 1),
            pad(&s.rotation_errors, 2),
            pad(&s.translation_errors, 0),
            pad(&s.translation_errors, 1),
            pad(&s.translation_errors, 2),
            fmt(s.eigen_gap),
            fmt(s.duality_gap),
            fmt(s.cost),
            format!("{:.3}", s.wall_time),
            format!("{:.1}", s.iterations),
            format!("{}/{}", s.successes, s.total),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let json = serde_json::json!({ "runs": reports, "summary": summary });
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}
