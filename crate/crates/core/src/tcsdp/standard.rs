use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solver::{triu_index, AffineRow, Cone, ConicBackend, ConicProgram, SolverSettings};
use crate::tcsdp::certificate::DualCertificate;
use crate::tcsdp::conic::ConicModel;
use crate::tcsdp::layout::PrimalPoint;
use crate::tcsdp::problem::TcsdpProblem;

/// Epigraph form: minimize `t + c'y` with `[[t, (Ly)'], [Ly, I]] >= 0` and the original constraints.
#[derive(Debug, Clone, Copy)]
pub struct StandardForm<'a> {
    pub problem: &'a TcsdpProblem,
}

/// Solution of the literal standard-form program together with the dual read from the solver.
#[derive(Debug, Clone)]
pub struct StandardSolution {
    pub point: PrimalPoint,
    pub t: f64,
    pub certificate: DualCertificate,
    pub objective: f64,
}

pub fn to_standard_form(problem: &TcsdpProblem) -> StandardForm<'_> {
    StandardForm { problem }
}

impl<'a> StandardForm<'a> {
    pub fn rank(&self) -> usize {
        self.problem.factor.rank()
    }

    pub fn lmi_dim(&self) -> usize {
        self.rank() + 1
    }

    pub fn lmi(&self, y: &[f64], t: f64) -> DMatrix<f64> {
        let r = self.rank();
        let ly = self.problem.factor.apply(y);
        let mut m = DMatrix::identity(r + 1, r + 1);
        m[(0, 0)] = t;
        for (k, v) in ly.into_iter().enumerate() {
            m[(0, k + 1)] = v;
            m[(k + 1, 0)] = v;
        }
        m
    }

    pub fn objective(&self, y: &[f64], t: f64) -> f64 {
        t + self.problem.objective.c.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }

    /// The literal conic program; returns it with the model, the index of `t` and the LMI block.
    pub fn conic_program(&self) -> (ConicProgram, ConicModel, usize, usize) {
        let mut model = ConicModel::new(self.problem);
        let mut prog = model.base_program(self.problem, false);
        let t = prog.add_var();
        prog.linear[t] = 1.0;
        let d = self.lmi_dim();
        let s2 = std::f64::consts::SQRT_2;
        let mut rows = vec![AffineRow { coeffs: vec![], rhs: 0.0 }; d * (d + 1) / 2];
        rows[triu_index(0, 0)].coeffs = vec![(t, -1.0)];
        for (k, lrow) in self.problem.factor.rows.iter().enumerate() {
            let c = k + 1;
            rows[triu_index(0, c)].coeffs = model.map_coeffs(lrow).into_iter().map(|(j, a)| (j, -s2 * a)).collect();
            rows[triu_index(c, c)].rhs = 1.0;
        }
        let lmi_block = prog.add_block(Cone::PsdTriangle(d), rows);
        (prog, model, t, lmi_block)
    }

    /// Solves the standard form directly and reads the full dual `(rho, mu, S, Z)` from the solver.
    pub fn solve(&self, backend: &dyn ConicBackend, settings: &SolverSettings) -> Result<StandardSolution> {
        let (prog, model, t_idx, lmi_block) = self.conic_program();
        let sol = backend.solve_conic(&prog, settings)?;
        if !sol.status.is_usable() {
            return Err(match sol.status {
                crate::solver::SolveStatus::PrimalInfeasible => Error::Infeasible,
                crate::solver::SolveStatus::DualInfeasible => Error::Unbounded,
                s => Error::NumericalFailure(format!("standard form solve ended with {s:?}")),
            });
        }
        let point = model.point_from_x(self.problem, &sol.x[..model.num_x])?;
        let (rho, mu, s) = model.read_duals(self.problem, &sol)?;
        let z = crate::solver::svec_to_mat(&sol.duals[lmi_block], self.lmi_dim());
        Ok(StandardSolution {
            point,
            t: sol.x[t_idx],
            certificate: DualCertificate { rho, mu, s, z },
            objective: sol.primal_objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcsdp::expr::LinExpr;
    use crate::tcsdp::layout::Layout;
    use crate::tcsdp::problem::ProblemBuilder;

    #[test]
    fn lmi_is_psd_iff_epigraph_holds() {
        let mut l = Layout::new();
        l.add_single_block(2, 1.0, "a").unwrap();
        let mut pb = ProblemBuilder::new(l);
        pb.add_squared_residual(&(LinExpr::var(0) - LinExpr::var(3)), 1.0).unwrap();
        pb.add_squared_residual(&LinExpr::var(1), 2.0).unwrap();
        let p = pb.build().unwrap();
        let sf = to_standard_form(&p);
        let y = [0.9, 0.1, 0.1, 0.1];
        let f = p.objective_value(&y);
        let min_eig = |m: DMatrix<f64>| m.symmetric_eigen().eigenvalues.min();
        assert!(min_eig(sf.lmi(&y, f + 1e-9)) > -1e-12);
        assert!(min_eig(sf.lmi(&y, f - 1e-3)) < 0.0);
    }
}
