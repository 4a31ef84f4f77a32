use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::{
    sigma_schedule_with_floor, Phase, ProgressRecord, RefineOptions, RefineState, Refiner, Spectrum, StepKind,
};
use crate::solver::ConicBackend;
use crate::tcsdp::{kkt_certify, CertificateReport, DualCertificate, PrimalPoint, TcsdpProblem};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub rank_min: usize,
    pub scheduling: usize,
    pub channel: usize,
}

impl PhaseCounts {
    pub fn total(&self) -> usize {
        self.rank_min + self.scheduling + self.channel
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub point: PrimalPoint,
    pub cost: f64,
    pub eigen_gap: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub relaxation_cost: f64,
    pub relaxation_eigen_gap: f64,
    pub iterations: PhaseCounts,
    /// Final eigenvalue gap within the rank tolerance.
    pub converged: bool,
    pub certified: bool,
    pub certificate: Option<CertificateReport>,
    pub dual: DualCertificate,
    pub cost_history: Vec<f64>,
    pub lambda_history: Vec<Vec<f64>>,
    pub phase_history: Vec<Phase>,
}

pub fn refine_solve(problem: &TcsdpProblem, opts: &RefineOptions, backend: &dyn ConicBackend) -> Result<SolveReport> {
    refine_solve_with_progress(problem, opts, backend, &mut |_| {})
}

struct Run<'a, 'b> {
    refiner: Refiner<'a>,
    state: RefineState,
    spectrum: Spectrum,
    cost: f64,
    counts: PhaseCounts,
    phases: Vec<Phase>,
    best: Option<(f64, PrimalPoint)>,
    dual: DualCertificate,
    certified_point: bool,
    sink: &'b mut dyn FnMut(&ProgressRecord),
}

impl<'a, 'b> Run<'a, 'b> {
    fn opts(&self) -> &RefineOptions {
        self.refiner.opts
    }

    fn rank_one(&self) -> bool {
        self.spectrum.eigen_gap() <= self.opts().rank_tol
    }

    fn done(&self) -> bool {
        self.rank_one() && (self.cost <= self.opts().cost_tol || (self.opts().stop_when_certified && self.certified_point))
    }

    fn certify_current(&mut self) {
        if !self.rank_one() {
            self.certified_point = false;
            return;
        }
        let tol = self.opts().certificate_tol;
        self.certified_point = kkt_certify(self.refiner.problem, &self.state.point, None, &self.dual, tol)
            .map(|r| r.certified)
            .unwrap_or(false);
    }

    /// Takes one step; `Ok(false)` when the solver could not produce one and the phase should end.
    fn advance(&mut self, phase: Phase, kind: StepKind) -> Result<bool> {
        self.advance_weighted(phase, kind, self.opts().gamma_c)
    }

    fn advance_weighted(&mut self, phase: Phase, kind: StepKind, gamma_c: f64) -> Result<bool> {
        let up = match self.refiner.step_weighted(&self.state, kind, gamma_c) {
            Ok(up) => up,
            Err(Error::NumericalFailure(msg)) => {
                warn!("ending {phase:?} phase: {msg}");
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let spectrum = self.refiner.spectrum(&up.next);
        let cost = self.refiner.problem.objective_at(&up.next)?;
        self.state.push(phase, up.next, cost, &spectrum);
        self.spectrum = spectrum;
        self.cost = cost;
        self.phases.push(phase);
        match phase {
            Phase::RankMin => self.counts.rank_min += 1,
            Phase::Scheduling => self.counts.scheduling += 1,
            Phase::Channel => self.counts.channel += 1,
            Phase::InitialRelax => {}
        }
        if self.rank_one() && self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
            self.best = Some((cost, self.state.point.clone()));
        }
        (self.sink)(&ProgressRecord {
            iteration: self.state.k,
            phase,
            cost,
            eigen_gap: self.spectrum.eigen_gap(),
            lambda_sum: self.spectrum.lambda_sum(),
            group_lambda1: self.spectrum.group_lambda1.clone(),
            c: Some(up.c),
            sigma: match kind {
                StepKind::Scheduled(s) => Some(s),
                _ => None,
            },
        });
        Ok(true)
    }

    /// Rank-minimisation steps until rank 1. When the gap stalls the rank-push weight is raised
    /// tenfold, up to `1e4 * gamma_c`.
    fn rank_min_phase(&mut self) -> Result<()> {
        let mut prev_gap = self.spectrum.eigen_gap();
        let mut stalled = 0;
        let mut weight = self.opts().gamma_c;
        for _ in 0..self.opts().rank_min_limit {
            if self.rank_one() {
                break;
            }
            if !self.advance_weighted(Phase::RankMin, StepKind::RankMin, weight)? {
                break;
            }
            let gap = self.spectrum.eigen_gap();
            if prev_gap - gap <= 1e-3 * prev_gap.abs() {
                stalled += 1;
            } else {
                stalled = 0;
            }
            prev_gap = gap;
            if stalled >= self.opts().stall_window {
                if weight >= 1e4 * self.opts().gamma_c {
                    debug!("rank minimisation stalled at gap {gap:e}");
                    break;
                }
                weight *= 10.0;
                stalled = 0;
                debug!("rank minimisation stalled at gap {gap:e}; rank-push weight now {weight:e}");
            }
        }
        self.certify_current();
        Ok(())
    }

    fn scheduling_phase(&mut self) -> Result<()> {
        let floor = self.opts().sigma_floor;
        let mut stall = StallWatch::default();
        for k in 1..=self.opts().scheduling_limit {
            let sigma = sigma_schedule_with_floor(k, floor);
            if !self.advance(Phase::Scheduling, StepKind::Scheduled(sigma))? {
                break;
            }
            if self.rank_one() && self.cost <= self.opts().cost_tol {
                break;
            }
            if sigma <= floor && stall.stalled(self.cost, self.opts()) {
                debug!("scheduling stalled at cost {:e}", self.cost);
                break;
            }
        }
        Ok(())
    }

    fn channel_phase(&mut self) -> Result<()> {
        let required = self.opts().gamma * self.state.trace_sum;
        if self.spectrum.lambda_sum() < required {
            warn!("skipping channel: sum lambda1 {} below {required}", self.spectrum.lambda_sum());
            return Ok(());
        }
        let mut stall = StallWatch::default();
        for _ in 0..self.opts().channel_limit {
            if !self.advance(Phase::Channel, StepKind::Channel)? {
                break;
            }
            if self.cost <= self.opts().cost_tol {
                break;
            }
            if stall.stalled(self.cost, self.opts()) {
                debug!("channel stalled at cost {:e}", self.cost);
                break;
            }
        }
        Ok(())
    }
}

/// Counts steps since the best cost of a phase last improved by more than `stall_tol` (relative).
#[derive(Default)]
struct StallWatch {
    best: Option<f64>,
    since: usize,
}

impl StallWatch {
    fn stalled(&mut self, cost: f64, opts: &RefineOptions) -> bool {
        match self.best {
            Some(b) if cost >= b - opts.stall_tol * b.abs().max(1e-12) => self.since += 1,
            _ => {
                self.best = Some(cost);
                self.since = 0;
            }
        }
        self.since >= opts.stall_window
    }
}

/// Relax, move to rank 1, reduce the cost with the scheduling/channel sequence, then certify.
///
/// `progress` receives one record per update.
pub fn refine_solve_with_progress(
    problem: &TcsdpProblem,
    opts: &RefineOptions,
    backend: &dyn ConicBackend,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<SolveReport> {
    opts.validate()?;
    let refiner = Refiner::new(problem, backend, opts);
    let (point, dual) = refiner.solve_relaxation()?;
    let spectrum = refiner.spectrum(&point);
    let cost = problem.objective_at(&point)?;
    let relaxation_cost = cost;
    let relaxation_eigen_gap = spectrum.eigen_gap();
    info!("relaxation: cost {cost:e}, eigen gap {relaxation_eigen_gap:e}");
    (progress)(&ProgressRecord {
        iteration: 0,
        phase: Phase::InitialRelax,
        cost,
        eigen_gap: relaxation_eigen_gap,
        lambda_sum: spectrum.lambda_sum(),
        group_lambda1: spectrum.group_lambda1.clone(),
        c: None,
        sigma: None,
    });
    let state = RefineState::new(problem, point.clone());
    let best = (spectrum.eigen_gap() <= opts.rank_tol).then(|| (cost, point));
    let mut run = Run {
        refiner,
        state,
        spectrum,
        cost,
        counts: PhaseCounts::default(),
        phases: Vec::new(),
        best,
        dual,
        certified_point: false,
        sink: progress,
    };

    run.rank_min_phase()?;
    for pass in 0..=opts.max_repeats {
        if run.done() {
            break;
        }
        debug!("cost-reduction pass {pass}");
        run.scheduling_phase()?;
        run.rank_min_phase()?;
        if run.done() {
            break;
        }
        run.channel_phase()?;
        run.rank_min_phase()?;
    }

    let final_point = match run.best.take() {
        Some((_, p)) => p,
        None => run.state.point.clone(),
    };
    let spectrum = Spectrum::of(problem, &final_point);
    let final_cost = problem.objective_at(&final_point)?;
    let dual_value = run.dual.dual_value(problem)?;
    let certificate = kkt_certify(problem, &final_point, None, &run.dual, opts.certificate_tol).ok();
    let certified = certificate.as_ref().is_some_and(|c| c.certified);
    let eigen_gap = spectrum.eigen_gap();
    Ok(SolveReport {
        point: final_point,
        cost: final_cost,
        eigen_gap,
        dual_value,
        duality_gap: final_cost - dual_value,
        relaxation_cost,
        relaxation_eigen_gap,
        iterations: run.counts,
        converged: eigen_gap <= opts.rank_tol,
        certified,
        certificate,
        dual: run.dual,
        cost_history: run.state.cost_history,
        lambda_history: run.state.lambda_history,
        phase_history: run.phases,
    })
}
