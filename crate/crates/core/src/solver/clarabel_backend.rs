use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::solver::{Cone, ConicBackend, ConicProgram, ConicSolution, SolveStatus, SolverSettings};

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl ConicBackend for ClarabelBackend {
    fn solve_conic(&self, program: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        program.validate()?;
        let n = program.num_vars;
        let m = program.num_rows();

        let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
        for &(i, j, v) in &program.quadratic {
            pi.push(i);
            pj.push(j);
            pv.push(v);
        }
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

        let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0;
        for blk in &program.blocks {
            for r in &blk.rows {
                for &(j, a) in &r.coeffs {
                    if a != 0.0 {
                        ai.push(row);
                        aj.push(j);
                        av.push(a);
                    }
                }
                b.push(r.rhs);
                row += 1;
            }
            let len = blk.rows.len();
            let cone = match blk.cone {
                Cone::Zero => SupportedConeT::ZeroConeT(len),
                Cone::Nonnegative => SupportedConeT::NonnegativeConeT(len),
                Cone::SecondOrder => SupportedConeT::SecondOrderConeT(len),
                Cone::PsdTriangle(d) => SupportedConeT::PSDTriangleConeT(d),
            };
            // Merge runs of the same scalar cone type to keep the cone list short.
            match (cones.last_mut(), &cone) {
                (Some(SupportedConeT::ZeroConeT(k)), SupportedConeT::ZeroConeT(l)) => *k += l,
                (Some(SupportedConeT::NonnegativeConeT(k)), SupportedConeT::NonnegativeConeT(l)) => *k += l,
                _ => cones.push(cone),
            }
        }
        let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);

        let st = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel)
            .tol_feas(settings.tol_feas)
            .build()
            .map_err(|e| Error::NumericalFailure(format!("solver settings: {e:?}")))?;

        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &program.linear, &a, &b, &cones, st)
            .map_err(|e| Error::NumericalFailure(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::PrimalInfeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::DualInfeasible,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIterations,
            _ => SolveStatus::NumericalFailure,
        };

        let mut duals = Vec::with_capacity(program.blocks.len());
        let mut off = 0;
        for blk in &program.blocks {
            let len = blk.rows.len();
            duals.push(sol.z[off..off + len].to_vec());
            off += len;
        }

        Ok(ConicSolution {
            status,
            x: sol.x.clone(),
            duals,
            primal_objective: sol.obj_val,
            dual_objective: sol.obj_val_dual,
            iterations: sol.iterations,
            solve_time: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::AffineRow;

    #[test]
    fn solves_small_lp() {
        // min -x0 - x1  s.t. x0 + x1 <= 1, x >= 0
        let mut p = ConicProgram::new(2);
        p.linear = vec![-1.0, -1.0];
        p.add_inequality(vec![(0, 1.0), (1, 1.0)], 1.0);
        p.add_bounds(0, 0.0, 10.0);
        p.add_bounds(1, 0.0, 10.0);
        let s = ClarabelBackend.solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective + 1.0).abs() < 1e-7);
    }

    #[test]
    fn solves_trace_constrained_psd() {
        // max Y01 over 2x2 PSD with trace 1: optimum 1/2
        let mut p = ConicProgram::new(3);
        p.linear = vec![0.0, -1.0, 0.0];
        p.add_equality(vec![(0, 1.0), (2, 1.0)], 1.0);
        let s2 = std::f64::consts::SQRT_2;
        p.add_block(
            Cone::PsdTriangle(2),
            vec![
                AffineRow { coeffs: vec![(0, -1.0)], rhs: 0.0 },
                AffineRow { coeffs: vec![(1, -s2)], rhs: 0.0 },
                AffineRow { coeffs: vec![(2, -1.0)], rhs: 0.0 },
            ],
        );
        let s = ClarabelBackend.solve_conic(&p, &SolverSettings::default()).unwrap();
        assert!(s.status.is_usable());
        assert!((s.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn reports_infeasibility() {
        let mut p = ConicProgram::new(1);
        p.add_inequality(vec![(0, 1.0)], -1.0);
        p.add_inequality(vec![(0, -1.0)], -1.0);
        let s = ClarabelBackend.solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::PrimalInfeasible);
    }
}
