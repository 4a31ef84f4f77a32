use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solver::{triu_index, AffineRow, Cone, ConicProgram, ConicSolution};
use crate::tcsdp::layout::{PrimalPoint, Slot};
use crate::tcsdp::problem::TcsdpProblem;

/// Map from the stacked vector `y` (full column-major blocks) to solver variables `x`
/// (upper triangles of every block followed by the free scalars in layout order).
#[derive(Debug, Clone)]
pub struct ConicModel {
    pub num_x: usize,
    pub y_to_x: Vec<usize>,
    pub block_x_offset: Vec<usize>,
    pub eq_block: Option<usize>,
    pub ineq_block: Option<usize>,
    pub psd_blocks: Vec<usize>,
}

impl ConicModel {
    pub fn new(problem: &TcsdpProblem) -> Self {
        let layout = &problem.layout;
        let mut block_x_offset = Vec::with_capacity(layout.blocks().len());
        let mut nx = 0;
        for b in layout.blocks() {
            block_x_offset.push(nx);
            nx += b.dim * (b.dim + 1) / 2;
        }
        let mut free_x = BTreeMap::new();
        for &i in layout.free_indices() {
            free_x.insert(i, nx);
            nx += 1;
        }
        let y_to_x = layout
            .slots()
            .iter()
            .enumerate()
            .map(|(i, s)| match *s {
                Slot::Entry { block, row, col } => block_x_offset[block] + triu_index(row, col),
                Slot::Free(_) => free_x[&i],
            })
            .collect();
        Self {
            num_x: nx,
            y_to_x,
            block_x_offset,
            eq_block: None,
            ineq_block: None,
            psd_blocks: Vec::new(),
        }
    }

    /// Maps `y`-space coefficients to merged `x`-space coefficients.
    pub fn map_coeffs(&self, coeffs: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, a) in coeffs {
            *acc.entry(self.y_to_x[i]).or_insert(0.0) += a;
        }
        acc.into_iter().filter(|&(_, a)| a != 0.0).collect()
    }

    /// Gradient-style `y`-space vector folded into `x` space: symmetric pairs are summed.
    pub fn fold_dense(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_x];
        for (i, &v) in g.iter().enumerate() {
            out[self.y_to_x[i]] += v;
        }
        out
    }

    pub fn y_from_x(&self, x: &[f64]) -> Vec<f64> {
        self.y_to_x.iter().map(|&k| x[k]).collect()
    }

    pub fn x_from_y(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.num_x];
        // Symmetric partners share one slot; average them so slightly asymmetric input still maps sensibly.
        let mut count = vec![0u32; self.num_x];
        for (i, &k) in self.y_to_x.iter().enumerate() {
            x[k] += y[i];
            count[k] += 1;
        }
        for (v, c) in x.iter_mut().zip(count) {
            if c > 1 {
                *v /= c as f64;
            }
        }
        x
    }

    /// Base program: objective `f`, structural and trace equalities, inequalities and PSD blocks.
    ///
    /// With `quadratic = false` only the linear part `c'y` is kept, for callers that model the
    /// quadratic term themselves.
    pub fn base_program(&mut self, problem: &TcsdpProblem, quadratic: bool) -> ConicProgram {
        let mut prog = ConicProgram::new(self.num_x);
        for &(i, c) in &problem.objective.c {
            prog.linear[self.y_to_x[i]] += c;
        }
        if quadratic {
            prog.quadratic = self.quadratic_triplets(problem);
        }
        let eq_rows: Vec<AffineRow> = problem
            .equalities
            .iter()
            .map(|r| AffineRow {
                coeffs: self.map_coeffs(&r.coeffs),
                rhs: r.rhs,
            })
            .collect();
        self.eq_block = (!eq_rows.is_empty()).then(|| prog.add_block(Cone::Zero, eq_rows));
        let in_rows: Vec<AffineRow> = problem
            .inequalities
            .iter()
            .map(|r| AffineRow {
                coeffs: self.map_coeffs(&r.coeffs),
                rhs: r.rhs,
            })
            .collect();
        self.ineq_block = (!in_rows.is_empty()).then(|| prog.add_block(Cone::Nonnegative, in_rows));
        self.psd_blocks.clear();
        let s2 = std::f64::consts::SQRT_2;
        for (b, spec) in problem.layout.blocks().iter().enumerate() {
            let d = spec.dim;
            let off = self.block_x_offset[b];
            let mut rows = Vec::with_capacity(d * (d + 1) / 2);
            for c in 0..d {
                for r in 0..=c {
                    let scale = if r == c { 1.0 } else { s2 };
                    rows.push(AffineRow {
                        coeffs: vec![(off + triu_index(r, c), -scale)],
                        rhs: 0.0,
                    });
                }
            }
            let id = prog.add_block(Cone::PsdTriangle(d), rows);
            self.psd_blocks.push(id);
        }
        prog
    }

    /// Upper triplets of `P = 2 M'QM` so that `1/2 x'Px = y'Qy`.
    pub fn quadratic_triplets(&self, problem: &TcsdpProblem) -> Vec<(usize, usize, f64)> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in &problem.objective.q {
            let (a, b) = (self.y_to_x[i], self.y_to_x[j]);
            let key = (a.min(b), a.max(b));
            let w = if i == j {
                2.0 * v
            } else if a == b {
                4.0 * v
            } else {
                2.0 * v
            };
            *acc.entry(key).or_insert(0.0) += w;
        }
        acc.into_iter().filter(|&(_, v)| v != 0.0).map(|((a, b), v)| (a, b, v)).collect()
    }

    pub fn point_from_x(&self, problem: &TcsdpProblem, x: &[f64]) -> Result<PrimalPoint> {
        PrimalPoint::from_vec(&problem.layout, &self.y_from_x(x))
    }

    /// Equality multipliers `rho`, inequality multipliers `mu` and block multipliers `S_i`
    /// in the convention `grad f = A' rho - G' mu + S`.
    pub fn read_duals(&self, problem: &TcsdpProblem, sol: &ConicSolution) -> Result<(Vec<f64>, Vec<f64>, Vec<DMatrix<f64>>)> {
        let rho = match self.eq_block {
            Some(b) => sol.duals[b].iter().map(|z| -z).collect(),
            None => Vec::new(),
        };
        let mu = match self.ineq_block {
            Some(b) => sol.duals[b].clone(),
            None => Vec::new(),
        };
        if rho.len() != problem.equalities.len() || mu.len() != problem.inequalities.len() {
            return Err(Error::InvalidCertificate("dual vector length mismatch".into()));
        }
        let s = self
            .psd_blocks
            .iter()
            .zip(problem.layout.blocks())
            .map(|(&b, spec)| crate::solver::svec_to_mat(&sol.duals[b], spec.dim))
            .collect();
        Ok((rho, mu, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcsdp::expr::LinExpr;
    use crate::tcsdp::layout::Layout;
    use crate::tcsdp::problem::ProblemBuilder;

    #[test]
    fn quadratic_matches_objective_in_x_space() {
        let mut l = Layout::new();
        let b = l.add_single_block(3, 1.0, "a").unwrap();
        let t = l.add_free("t");
        let e01 = l.entry_expr(b, 0, 1);
        let e10 = l.entry_expr(b, 1, 0);
        let e22 = l.entry_expr(b, 2, 2);
        let mut pb = ProblemBuilder::new(l);
        pb.add_squared_residual(&(&e01 + &e10), 1.0).unwrap();
        pb.add_squared_residual(&(&e22 - &LinExpr::var(t)), 3.0).unwrap();
        pb.add_squared_residual(&(&e01 - &e22), 0.5).unwrap();
        let p = pb.build().unwrap();
        let mut m = ConicModel::new(&p);
        let prog = m.base_program(&p, true);
        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.4, 0.2, 2.0, 0.7, -0.4, 0.7, 0.5]);
        let pt = PrimalPoint { blocks: vec![sym], free: vec![1.5] };
        let y = pt.to_vec(&p.layout).unwrap();
        let x = m.x_from_y(&y);
        let mut half = 0.0;
        for &(i, j, v) in &prog.quadratic {
            half += if i == j { 0.5 * v * x[i] * x[i] } else { v * x[i] * x[j] };
        }
        assert!((half - p.objective_value(&y)).abs() < 1e-12);
        assert_eq!(m.y_from_x(&x), y);
        assert_eq!(m.num_x, 7);
    }
}
