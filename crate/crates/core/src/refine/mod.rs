//! Rank refinement: rank-minimisation steps, low-rank channel steps, tolerance scheduling and the
//! driver that turns a relaxed optimum into a certified rank-1 solution.

mod driver;
mod step;

pub use driver::{refine_solve, refine_solve_with_progress, PhaseCounts, SolveReport};
pub use step::{channel_update, rank_min_update, scheduled_update, Refiner, StepKind, Update};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverSettings;
use crate::tcsdp::{PrimalPoint, TcsdpProblem};

/// Floor of the tolerance schedule.
pub const SIGMA_FLOOR: f64 = 1e-5;

/// `max(floor, 1 - 1/(1 + e^((25 - k)/5)))`.
pub fn sigma_schedule(k: usize) -> f64 {
    sigma_schedule_with_floor(k, SIGMA_FLOOR)
}

pub fn sigma_schedule_with_floor(k: usize, floor: f64) -> f64 {
    let k = k.max(1) as f64;
    let s = 1.0 - 1.0 / (1.0 + ((25.0 - k) / 5.0).exp());
    s.max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    InitialRelax,
    RankMin,
    Scheduling,
    Channel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Weight of the rank-push variable `c` in the objective.
    pub gamma_c: f64,
    /// Channel width: the channel keeps `sum lambda1 >= gamma * trace`.
    pub gamma: f64,
    /// Also hold every trace group at `lambda1 >= gamma * trace` during the channel, so the slack
    /// cannot concentrate in a single block. The summed band still holds.
    pub channel_per_group: bool,
    pub sigma_floor: f64,
    pub rank_min_limit: usize,
    pub scheduling_limit: usize,
    pub channel_limit: usize,
    /// Eigenvalue-gap threshold for calling a solution rank-1.
    pub rank_tol: f64,
    /// Cost below which no further cost reduction is attempted; a negative value never stops early.
    pub cost_tol: f64,
    /// Additional passes of the scheduling/channel sequence.
    pub max_repeats: usize,
    /// Stop the cost reduction once a rank-1 iterate passes the optimality certificate.
    pub stop_when_certified: bool,
    /// Per-group Frobenius bound on a step, as a multiple of the group trace; `None` disables it.
    pub trust_region: Option<f64>,
    /// Residual tolerance for the optimality certificate.
    pub certificate_tol: f64,
    /// A cost-reduction phase stops once its best cost has not improved by this relative amount
    /// for `stall_window` steps.
    pub stall_tol: f64,
    pub stall_window: usize,
    pub solver: SolverSettings,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            gamma_c: 1.0,
            gamma: 0.98,
            channel_per_group: false,
            sigma_floor: SIGMA_FLOOR,
            rank_min_limit: 300,
            scheduling_limit: 1000,
            channel_limit: 200,
            rank_tol: 1e-5,
            cost_tol: 1e-6,
            max_repeats: 1,
            stop_when_certified: true,
            trust_region: Some(1.0),
            certificate_tol: 1e-6,
            stall_tol: 1e-4,
            stall_window: 20,
            solver: SolverSettings::default(),
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.gamma_c > 0.0) {
            return Err(Error::InvalidInput("gamma_c must be positive".into()));
        }
        if self.rank_min_limit == 0 || self.scheduling_limit == 0 || self.channel_limit == 0 {
            return Err(Error::InvalidInput("phase limits must be at least 1".into()));
        }
        if !(self.rank_tol > 0.0) {
            return Err(Error::InvalidInput("rank tolerance must be positive".into()));
        }
        if self.cost_tol.is_nan() {
            return Err(Error::InvalidInput("cost tolerance is NaN".into()));
        }
        Ok(())
    }
}

/// Top eigenvalues of one iterate, per block and summed per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub block_lambda1: Vec<f64>,
    pub group_lambda1: Vec<f64>,
    pub group_traces: Vec<f64>,
}

impl Spectrum {
    pub fn of(problem: &TcsdpProblem, point: &PrimalPoint) -> Self {
        let block_lambda1: Vec<f64> = point
            .blocks
            .iter()
            .map(|m| crate::symeig::dense_sym_eig((m + m.transpose()) * 0.5).values[0])
            .collect();
        let groups = problem.layout.groups();
        let group_lambda1 = groups.iter().map(|g| g.blocks.iter().map(|&b| block_lambda1[b]).sum()).collect();
        Self {
            block_lambda1,
            group_lambda1,
            group_traces: groups.iter().map(|g| g.trace).collect(),
        }
    }

    pub fn lambda_sum(&self) -> f64 {
        self.block_lambda1.iter().sum()
    }

    pub fn trace_sum(&self) -> f64 {
        self.group_traces.iter().sum()
    }

    /// `max_g (trace_g - sum lambda1)`.
    pub fn eigen_gap(&self) -> f64 {
        self.group_traces
            .iter()
            .zip(&self.group_lambda1)
            .map(|(t, l)| t - l)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Current iterate with its history; histories hold one entry per completed update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineState {
    pub point: PrimalPoint,
    pub k: usize,
    pub phase: Phase,
    pub cost_history: Vec<f64>,
    pub lambda_history: Vec<Vec<f64>>,
    pub trace_sum: f64,
}

impl RefineState {
    pub fn new(problem: &TcsdpProblem, point: PrimalPoint) -> Self {
        Self {
            point,
            k: 0,
            phase: Phase::InitialRelax,
            cost_history: Vec::new(),
            lambda_history: Vec::new(),
            trace_sum: problem.layout.groups().iter().map(|g| g.trace).sum(),
        }
    }

    pub fn push(&mut self, phase: Phase, point: PrimalPoint, cost: f64, spectrum: &Spectrum) {
        self.point = point;
        self.phase = phase;
        self.k += 1;
        self.cost_history.push(cost);
        self.lambda_history.push(spectrum.group_lambda1.clone());
    }
}

/// One line of the progress stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub cost: f64,
    pub eigen_gap: f64,
    pub lambda_sum: f64,
    pub group_lambda1: Vec<f64>,
    pub c: Option<f64>,
    pub sigma: Option<f64>,
}

impl ProgressRecord {
    pub fn to_ndjson(&self) -> String {
        serde_json::to_string(self).expect("progress record serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert!((sigma_schedule(25) - 0.5).abs() < 1e-15);
        assert!((sigma_schedule(1) - 0.9918374).abs() < 1e-7);
        assert_eq!(sigma_schedule(100), 1e-5);
        assert!(sigma_schedule(82) > 1e-5);
        assert_eq!(sigma_schedule(83), 1e-5);
    }

    #[test]
    fn options_validate() {
        assert!(RefineOptions::default().validate().is_ok());
        let bad = RefineOptions { gamma: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
