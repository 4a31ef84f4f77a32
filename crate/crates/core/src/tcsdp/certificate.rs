use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcsdp::layout::PrimalPoint;
use crate::tcsdp::problem::TcsdpProblem;
use crate::tcsdp::standard::to_standard_form;

/// Dual variables of the epigraph problem: equality multipliers `rho`, inequality multipliers
/// `mu >= 0`, block multipliers `S_i` and the LMI multiplier `Z = [[1, z'], [z, Z22]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub z: DMatrix<f64>,
}

impl DualCertificate {
    /// Completes a certificate from the quadratic-form optimum `y*`: `z = -L y*`, `Z = [1; z][1; z]'`.
    pub fn from_quadratic_optimum(
        problem: &TcsdpProblem,
        y_star: &[f64],
        rho: Vec<f64>,
        mu: Vec<f64>,
        s: Vec<DMatrix<f64>>,
    ) -> Self {
        let ly = problem.factor.apply(y_star);
        let mut col = DVector::zeros(ly.len() + 1);
        col[0] = 1.0;
        for (k, v) in ly.iter().enumerate() {
            col[k + 1] = -v;
        }
        Self {
            rho,
            mu,
            s,
            z: &col * col.transpose(),
        }
    }

    pub fn small_z(&self) -> Vec<f64> {
        (1..self.z.nrows()).map(|k| self.z[(k, 0)]).collect()
    }

    /// `rho'b - mu'h - tr(Z) + 1`.
    pub fn dual_value(&self, problem: &TcsdpProblem) -> Result<f64> {
        let b = problem.rhs();
        let base = dual_objective_value(&self.rho, &self.z, &b)?;
        if self.mu.len() != problem.inequalities.len() {
            return Err(Error::InvalidCertificate("inequality multiplier length mismatch".into()));
        }
        let mh: f64 = self.mu.iter().zip(&problem.inequalities).map(|(m, r)| m * r.rhs).sum();
        Ok(base - mh)
    }
}

/// `rho'b - tr(Z) + 1`; requires `Z[0,0] = 1`.
pub fn dual_objective_value(rho: &[f64], z: &DMatrix<f64>, b: &[f64]) -> Result<f64> {
    if rho.len() != b.len() {
        return Err(Error::InvalidCertificate(format!(
            "rho has {} entries, b has {}",
            rho.len(),
            b.len()
        )));
    }
    if z.nrows() == 0 || z.nrows() != z.ncols() {
        return Err(Error::InvalidCertificate("Z must be square and non-empty".into()));
    }
    if (z[(0, 0)] - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidCertificate(format!("Z[0,0] = {} (expected 1)", z[(0, 0)])));
    }
    Ok(rho.iter().zip(b).map(|(r, b)| r * b).sum::<f64>() - z.trace() + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateFailure {
    PrimalInfeasible,
    DualInfeasible,
    Stationarity,
    Complementarity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub primal_equality: f64,
    pub primal_inequality: f64,
    pub primal_psd: f64,
    pub epigraph: f64,
    pub dual_psd: f64,
    pub dual_lmi: f64,
    pub dual_inequality: f64,
    pub z_corner: f64,
    pub stationarity: f64,
    pub complementarity_lmi: f64,
    pub complementarity_blocks: f64,
    pub complementarity_inequality: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub certified: bool,
    pub failure: Option<CertificateFailure>,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Checks KKT conditions of the epigraph problem at `(t, y)` with `t = ||L y||^2` unless given.
pub fn kkt_certify(
    problem: &TcsdpProblem,
    primal: &PrimalPoint,
    t: Option<f64>,
    dual: &DualCertificate,
    tol: f64,
) -> Result<CertificateReport> {
    let layout = &problem.layout;
    let y = primal.to_vec(layout)?;
    let sf = to_standard_form(problem);
    let r = sf.rank();
    if dual.z.nrows() != r + 1 || dual.z.ncols() != r + 1 {
        return Err(Error::InvalidCertificate(format!(
            "Z is {}x{}, expected {}",
            dual.z.nrows(),
            dual.z.ncols(),
            r + 1
        )));
    }
    if dual.s.len() != layout.blocks().len() {
        return Err(Error::InvalidCertificate("one S block per PSD block is required".into()));
    }
    for (s, spec) in dual.s.iter().zip(layout.blocks()) {
        if s.nrows() != spec.dim || s.ncols() != spec.dim {
            return Err(Error::InvalidCertificate(format!("S block for {} has wrong shape", spec.label)));
        }
    }
    if dual.rho.len() != problem.equalities.len() || dual.mu.len() != problem.inequalities.len() {
        return Err(Error::InvalidCertificate("multiplier length mismatch".into()));
    }

    let ly = problem.factor.apply(&y);
    let lsq: f64 = ly.iter().map(|v| v * v).sum();
    let t = t.unwrap_or(lsq);

    let primal_equality = problem.max_equality_residual(&y);
    let primal_inequality = problem.max_inequality_violation(&y);
    let primal_psd = primal.blocks.iter().map(|m| (-min_eig(m)).max(0.0)).fold(0.0, f64::max);
    let epigraph = (lsq - t).max(0.0);

    let dual_psd = dual.s.iter().map(|m| (-min_eig(m)).max(0.0)).fold(0.0, f64::max);
    let dual_lmi = (-min_eig(&dual.z)).max(0.0);
    let dual_inequality = dual.mu.iter().map(|m| (-m).max(0.0)).fold(0.0, f64::max);
    let z_corner = (dual.z[(0, 0)] - 1.0).abs();

    // c - 2 L'z - A'rho + G'mu, compared blockwise with S.
    let n = layout.len();
    let mut g = problem.factor.apply_transpose(&dual.small_z(), n);
    for v in g.iter_mut() {
        *v *= -2.0;
    }
    for &(i, c) in &problem.objective.c {
        g[i] += c;
    }
    for (row, rho) in problem.equalities.iter().zip(&dual.rho) {
        for &(i, a) in &row.coeffs {
            g[i] -= a * rho;
        }
    }
    for (row, mu) in problem.inequalities.iter().zip(&dual.mu) {
        for &(i, a) in &row.coeffs {
            g[i] += a * mu;
        }
    }
    let mut stationarity: f64 = 0.0;
    for (b, (spec, s)) in layout.blocks().iter().zip(&dual.s).enumerate() {
        let gm = layout.block_matrix(b, &g);
        let sym = (&gm + gm.transpose()) * 0.5;
        stationarity = stationarity.max((sym - s).amax());
        let _ = spec;
    }
    for &i in layout.free_indices() {
        stationarity = stationarity.max(g[i].abs());
    }

    let lmi = sf.lmi(&y, t);
    let complementarity_lmi = dual.z.dot(&lmi).abs();
    let complementarity_blocks = primal
        .blocks
        .iter()
        .zip(&dual.s)
        .map(|(yb, s)| s.dot(yb).abs())
        .fold(0.0, f64::max);
    let complementarity_inequality = problem
        .inequalities
        .iter()
        .zip(&dual.mu)
        .map(|(row, mu)| (mu * (row.rhs - row.lhs(&y))).abs())
        .fold(0.0, f64::max);

    let primal_value = sf.objective(&y, t);
    let dual_value = dual.dual_value(problem)?;

    let failure = if primal_equality > tol || primal_inequality > tol || primal_psd > tol || epigraph > tol {
        Some(CertificateFailure::PrimalInfeasible)
    } else if dual_psd > tol || dual_lmi > tol || dual_inequality > tol || z_corner > tol {
        Some(CertificateFailure::DualInfeasible)
    } else if stationarity > tol {
        Some(CertificateFailure::Stationarity)
    } else if complementarity_lmi > tol || complementarity_blocks > tol || complementarity_inequality > tol {
        Some(CertificateFailure::Complementarity)
    } else {
        None
    };

    Ok(CertificateReport {
        primal_equality,
        primal_inequality,
        primal_psd,
        epigraph,
        dual_psd,
        dual_lmi,
        dual_inequality,
        z_corner,
        stationarity,
        complementarity_lmi,
        complementarity_blocks,
        complementarity_inequality,
        primal_value,
        dual_value,
        duality_gap: primal_value - dual_value,
        certified: failure.is_none(),
        failure,
    })
}

/// `f(y) - d` for a primal point and a dual certificate.
pub fn duality_gap(problem: &TcsdpProblem, primal: &PrimalPoint, dual: &DualCertificate) -> Result<f64> {
    Ok(problem.objective_at(primal)? - dual.dual_value(problem)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_value_formula() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let v = dual_objective_value(&[2.0, -1.0], &z, &[1.5, 3.0]).unwrap();
        assert!((v - (3.0 - 3.0 - 3.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn dual_value_rejects_bad_corner() {
        let z = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert!(matches!(
            dual_objective_value(&[], &z, &[]),
            Err(Error::InvalidCertificate(_))
        ));
        assert!(dual_objective_value(&[1.0], &DMatrix::identity(1, 1), &[]).is_err());
    }
}
