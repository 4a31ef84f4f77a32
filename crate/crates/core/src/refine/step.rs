use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::refine::{RefineOptions, RefineState, Spectrum};
use crate::solver::{triu_index, AffineRow, Cone, ConicBackend, ConicProgram, ConicSolution, SolveStatus};
use crate::symeig::{default_mult_tol, grad_lambda1, SymmetricMatrix};
use crate::tcsdp::{ConicModel, DualCertificate, PrimalPoint, TcsdpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    RankMin,
    Scheduled(f64),
    Channel,
}

/// Result of one refinement step: the new iterate, the step and the rank-push variable.
#[derive(Debug, Clone)]
pub struct Update {
    pub next: PrimalPoint,
    pub delta: PrimalPoint,
    pub c: f64,
}

/// Linearisation of `sum_i lambda1(Y_i)` at an iterate, in solver coordinates.
struct Linearization {
    coeffs: Vec<(usize, f64)>,
    at_point: f64,
    lambda_sum: f64,
    /// Per block: range into `coeffs`, `grad . Y` and `lambda1`.
    blocks: Vec<(std::ops::Range<usize>, f64, f64)>,
}

/// Holds the compiled base program so repeated steps only add the step-specific rows.
pub struct Refiner<'a> {
    pub problem: &'a TcsdpProblem,
    pub backend: &'a dyn ConicBackend,
    pub opts: &'a RefineOptions,
    model: ConicModel,
    base: ConicProgram,
}

impl<'a> Refiner<'a> {
    pub fn new(problem: &'a TcsdpProblem, backend: &'a dyn ConicBackend, opts: &'a RefineOptions) -> Self {
        let mut model = ConicModel::new(problem);
        let base = model.base_program(problem, true);
        Self {
            problem,
            backend,
            opts,
            model,
            base,
        }
    }

    pub fn model(&self) -> &ConicModel {
        &self.model
    }

    /// Optimal results pass; stalled ones pass when the iterate is feasible to 1e-6.
    fn accept(&self, sol: &ConicSolution) -> bool {
        if sol.status.is_usable() {
            return true;
        }
        if !matches!(sol.status, SolveStatus::MaxIterations | SolveStatus::NumericalFailure)
            || !sol.x.iter().all(|v| v.is_finite())
        {
            return false;
        }
        let y = self.model.y_from_x(&sol.x[..self.model.num_x]);
        if self.problem.max_equality_residual(&y) > 1e-6 || self.problem.max_inequality_violation(&y) > 1e-6 {
            return false;
        }
        let Ok(point) = PrimalPoint::from_vec(&self.problem.layout, &y) else { return false };
        point
            .blocks
            .iter()
            .all(|m| ((m + m.transpose()) * 0.5).symmetric_eigen().eigenvalues.min() >= -1e-6)
    }

    /// Relaxed solve; returns the optimum and the dual certificate built from it.
    pub fn solve_relaxation(&self) -> Result<(PrimalPoint, DualCertificate)> {
        let sol = self.backend.solve_conic(&self.base, &self.opts.solver)?;
        match sol.status {
            SolveStatus::PrimalInfeasible => return Err(Error::Infeasible),
            SolveStatus::DualInfeasible => return Err(Error::Unbounded),
            _ if !self.accept(&sol) => {
                return Err(Error::NumericalFailure(format!("relaxation ended with {:?}", sol.status)))
            }
            _ => {}
        }
        let y = self.model.y_from_x(&sol.x);
        let point = PrimalPoint::from_vec(&self.problem.layout, &y)?;
        let (rho, mu, s) = self.model.read_duals(self.problem, &sol)?;
        let cert = DualCertificate::from_quadratic_optimum(self.problem, &y, rho, mu, s);
        Ok((point, cert))
    }

    fn linearize(&self, point: &PrimalPoint) -> Result<Linearization> {
        let mut coeffs = Vec::new();
        let mut at_point = 0.0;
        let mut lambda_sum = 0.0;
        let mut blocks = Vec::with_capacity(point.blocks.len());
        for (b, (spec, m)) in self.problem.layout.blocks().iter().zip(&point.blocks).enumerate() {
            let sym = SymmetricMatrix::symmetrized(m);
            let eig = crate::symeig::sym_eig(&sym)?;
            lambda_sum += eig.lambda1();
            let start = coeffs.len();
            let grad = match grad_lambda1(&sym, default_mult_tol(eig.lambda1())) {
                Ok(g) => g,
                Err(Error::DegenerateSpectrum { gap }) => {
                    debug!("block {} has a repeated top eigenvalue (gap {gap:e}); perturbing", spec.label);
                    let d = spec.dim as f64;
                    let diag: Vec<f64> = (0..spec.dim).map(|i| 1e-9 * (d - i as f64) / d).collect();
                    grad_lambda1(&sym.add(&SymmetricMatrix::from_diagonal(&diag)), 0.0)?
                }
                Err(e) => return Err(e),
            };
            let dot = grad.dot(&sym);
            at_point += dot;
            let off = self.model.block_x_offset[b];
            for c in 0..spec.dim {
                for r in 0..=c {
                    let w = if r == c { 1.0 } else { 2.0 };
                    let g = grad.get(r, c) * w;
                    if g != 0.0 {
                        coeffs.push((off + triu_index(r, c), g));
                    }
                }
            }
            blocks.push((start..coeffs.len(), dot, eig.lambda1()));
        }
        Ok(Linearization {
            coeffs,
            at_point,
            lambda_sum,
            blocks,
        })
    }

    fn add_trust_region(&self, prog: &mut ConicProgram, x_prev: &[f64]) {
        let Some(scale) = self.opts.trust_region else { return };
        let s2 = std::f64::consts::SQRT_2;
        for group in self.problem.layout.groups() {
            let mut rows = vec![AffineRow { coeffs: vec![], rhs: scale * group.trace }];
            for &b in &group.blocks {
                let d = self.problem.layout.block(b).dim;
                let off = self.model.block_x_offset[b];
                for c in 0..d {
                    for r in 0..=c {
                        let k = off + triu_index(r, c);
                        let w = if r == c { 1.0 } else { s2 };
                        rows.push(AffineRow { coeffs: vec![(k, -w)], rhs: -w * x_prev[k] });
                    }
                }
            }
            prog.add_block(Cone::SecondOrder, rows);
        }
    }

    /// Step program: objective plus `gamma_c c` (except in the channel), `c in [0,1]`, the
    /// linearised half-space and the trust region.
    fn step_program(
        &self,
        state: &RefineState,
        kind: StepKind,
        gamma_c: f64,
        lin: &Linearization,
        x_prev: &[f64],
    ) -> Result<(ConicProgram, usize)> {
        let total = state.trace_sum;
        let (target, sigma) = match kind {
            StepKind::RankMin => (total, 0.0),
            StepKind::Scheduled(s) => (total, s),
            StepKind::Channel => {
                let required = self.opts.gamma * total;
                if lin.lambda_sum < required {
                    return Err(Error::ChannelEntryViolation {
                        required,
                        actual: lin.lambda_sum,
                    });
                }
                (required, 0.0)
            }
        };
        let mut prog = self.base.clone();
        let c = prog.add_var();
        if kind != StepKind::Channel {
            prog.linear[c] = gamma_c;
        }
        prog.add_bounds(c, 0.0, 1.0);
        // grad . (Y' - Y) >= (c - 1)(lambda1 - target) - sigma, written as a <= row.
        let slope = lin.lambda_sum - target;
        let mut coeffs: Vec<(usize, f64)> = lin.coeffs.iter().map(|&(k, g)| (k, -g)).collect();
        coeffs.push((c, slope));
        let rhs = -lin.at_point + slope + sigma;
        prog.add_inequality(coeffs, rhs);
        if kind == StepKind::Channel && self.opts.channel_per_group {
            for group in self.problem.layout.groups() {
                let mut row = Vec::new();
                let (mut lam, mut dot) = (0.0, 0.0);
                for &b in &group.blocks {
                    let (range, d, l) = &lin.blocks[b];
                    row.extend(lin.coeffs[range.clone()].iter().map(|&(k, g)| (k, -g)));
                    dot += d;
                    lam += l;
                }
                // A group already under the floor may not lose more.
                let floor = (self.opts.gamma * group.trace).min(lam);
                prog.add_inequality(row, lam - dot - floor);
            }
        }
        self.add_trust_region(&mut prog, x_prev);
        Ok((prog, c))
    }

    /// Nearest point (Frobenius) of the feasible set to `point`.
    pub fn reproject(&self, point: &PrimalPoint) -> Result<PrimalPoint> {
        let y = point.to_vec(&self.problem.layout)?;
        let x_prev = self.model.x_from_y(&y);
        let mut prog = self.base.clone();
        prog.quadratic.clear();
        prog.linear = vec![0.0; prog.num_vars];
        let free: std::collections::HashSet<usize> =
            self.problem.layout.free_indices().iter().map(|&i| self.model.y_to_x[i]).collect();
        let mut weights = vec![1.0; self.model.num_x];
        for (b, spec) in self.problem.layout.blocks().iter().enumerate() {
            let off = self.model.block_x_offset[b];
            for c in 0..spec.dim {
                for r in 0..c {
                    weights[off + triu_index(r, c)] = 2.0;
                }
            }
        }
        for k in 0..self.model.num_x {
            let w = if free.contains(&k) { 1.0 } else { weights[k] };
            prog.quadratic.push((k, k, 2.0 * w));
            prog.linear[k] = -2.0 * w * x_prev[k];
        }
        let sol = self.backend.solve_conic(&prog, &self.opts.solver)?;
        if !self.accept(&sol) {
            return Err(Error::NumericalFailure(format!("re-projection ended with {:?}", sol.status)));
        }
        self.model.point_from_x(self.problem, &sol.x[..self.model.num_x])
    }

    fn solve_step(
        &self,
        state: &RefineState,
        point: &PrimalPoint,
        kind: StepKind,
        gamma_c: f64,
    ) -> Result<Option<(PrimalPoint, f64)>> {
        let lin = self.linearize(point)?;
        let y = point.to_vec(&self.problem.layout)?;
        let x_prev = self.model.x_from_y(&y);
        let (prog, c_idx) = self.step_program(state, kind, gamma_c, &lin, &x_prev)?;
        let sol = self.backend.solve_conic(&prog, &self.opts.solver)?;
        if !self.accept(&sol) {
            warn!("{kind:?} step ended with {:?}", sol.status);
            return Ok(None);
        }
        let next = self.model.point_from_x(self.problem, &sol.x[..self.model.num_x])?;
        Ok(Some((next, sol.x[c_idx].clamp(0.0, 1.0))))
    }

    /// One update from `state.point`; on solver failure the iterate is re-projected and the step retried once.
    pub fn step(&self, state: &RefineState, kind: StepKind) -> Result<Update> {
        self.step_weighted(state, kind, self.opts.gamma_c)
    }

    /// `step` with an explicit rank-push weight in place of `opts.gamma_c`.
    pub fn step_weighted(&self, state: &RefineState, kind: StepKind, gamma_c: f64) -> Result<Update> {
        let start = &state.point;
        let (next, c) = match self.solve_step(state, start, kind, gamma_c)? {
            Some(v) => v,
            None => {
                let fixed = self.reproject(start)?;
                self.solve_step(state, &fixed, kind, gamma_c)?
                    .ok_or_else(|| Error::NumericalFailure(format!("{kind:?} step failed after re-projection")))?
            }
        };
        let delta = PrimalPoint {
            blocks: next.blocks.iter().zip(&start.blocks).map(|(a, b)| a - b).collect::<Vec<DMatrix<f64>>>(),
            free: next.free.iter().zip(&start.free).map(|(a, b)| a - b).collect(),
        };
        Ok(Update { next, delta, c })
    }

    pub fn spectrum(&self, point: &PrimalPoint) -> Spectrum {
        Spectrum::of(self.problem, point)
    }
}

pub fn rank_min_update(
    problem: &TcsdpProblem,
    state: &RefineState,
    opts: &RefineOptions,
    backend: &dyn ConicBackend,
) -> Result<Update> {
    Refiner::new(problem, backend, opts).step(state, StepKind::RankMin)
}

pub fn channel_update(
    problem: &TcsdpProblem,
    state: &RefineState,
    opts: &RefineOptions,
    backend: &dyn ConicBackend,
) -> Result<Update> {
    Refiner::new(problem, backend, opts).step(state, StepKind::Channel)
}

pub fn scheduled_update(
    problem: &TcsdpProblem,
    state: &RefineState,
    sigma: f64,
    opts: &RefineOptions,
    backend: &dyn ConicBackend,
) -> Result<Update> {
    Refiner::new(problem, backend, opts).step(state, StepKind::Scheduled(sigma))
}
