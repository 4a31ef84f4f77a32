//! Conic program container and the backend trait used by the relaxation and refinement steps.

mod clarabel_backend;

pub use clarabel_backend::ClarabelBackend;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero,
    Nonnegative,
    SecondOrder,
    /// PSD cone of the given matrix dimension; rows are the upper triangle column by column,
    /// off-diagonal entries scaled by `sqrt(2)`.
    PsdTriangle(usize),
}

/// One affine row: slack `s = rhs - coeffs . x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub cone: Cone,
    pub rows: Vec<AffineRow>,
}

/// `min 1/2 x'Px + q'x` subject to `rhs - A x` lying in each cone block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub linear: Vec<f64>,
    /// Upper-triangle triplets of `P`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            linear: vec![0.0; num_vars],
            quadratic: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.linear.push(0.0);
        self.num_vars - 1
    }

    pub fn add_block(&mut self, cone: Cone, rows: Vec<AffineRow>) -> usize {
        self.blocks.push(ConeBlock { cone, rows });
        self.blocks.len() - 1
    }

    /// `coeffs . x = rhs`.
    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_block(Cone::Zero, vec![AffineRow { coeffs, rhs }])
    }

    /// `coeffs . x <= rhs`.
    pub fn add_inequality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_block(Cone::Nonnegative, vec![AffineRow { coeffs, rhs }])
    }

    pub fn add_bounds(&mut self, var: usize, lo: f64, hi: f64) -> usize {
        self.add_block(
            Cone::Nonnegative,
            vec![
                AffineRow { coeffs: vec![(var, -1.0)], rhs: -lo },
                AffineRow { coeffs: vec![(var, 1.0)], rhs: hi },
            ],
        )
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.linear.len() != self.num_vars {
            return Err(Error::InvalidInput("linear objective length mismatch".into()));
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite objective".into()));
        }
        for &(i, j, v) in &self.quadratic {
            if i > j || j >= self.num_vars || !v.is_finite() {
                return Err(Error::InvalidInput("bad quadratic triplet".into()));
            }
        }
        for b in &self.blocks {
            let expected = match b.cone {
                Cone::PsdTriangle(d) => Some(d * (d + 1) / 2),
                _ => None,
            };
            if let Some(e) = expected {
                if b.rows.len() != e {
                    return Err(Error::InvalidInput(format!(
                        "PSD block expects {e} rows, got {}",
                        b.rows.len()
                    )));
                }
            }
            if b.rows.is_empty() {
                return Err(Error::InvalidInput("empty cone block".into()));
            }
            for r in &b.rows {
                if !r.rhs.is_finite() || r.coeffs.iter().any(|&(i, a)| i >= self.num_vars || !a.is_finite()) {
                    return Err(Error::InvalidInput("malformed affine row".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Dual multipliers per cone block, in row order (PSD blocks use the scaled triangle).
    pub duals: Vec<Vec<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

pub trait ConicBackend: Sync {
    fn solve_conic(&self, program: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution>;
}

/// Index of entry `(row, col)` with `row <= col` in the column-wise upper triangle.
pub fn triu_index(row: usize, col: usize) -> usize {
    let (r, c) = if row <= col { (row, col) } else { (col, row) };
    c * (c + 1) / 2 + r
}

/// Scaled triangle vector back to a dense symmetric matrix.
pub fn svec_to_mat(v: &[f64], dim: usize) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(dim, dim);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for c in 0..dim {
        for r in 0..=c {
            let x = v[triu_index(r, c)];
            if r == c {
                m[(r, c)] = x;
            } else {
                m[(r, c)] = x * s;
                m[(c, r)] = x * s;
            }
        }
    }
    m
}

pub fn mat_to_svec(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = vec![0.0; d * (d + 1) / 2];
    for c in 0..d {
        for r in 0..=c {
            v[triu_index(r, c)] = if r == c {
                m[(r, c)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (m[(r, c)] + m[(c, r)])
            };
        }
    }
    v
}
