use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcsdp::expr::{LinExpr, LinMat3, LinVec3};
use crate::tcsdp::layout::{BlockId, Layout};
use crate::tcsdp::problem::LinearRow;

pub const ROTATION_DIM: usize = 7;
pub const ROTATION_TRACE: f64 = 3.0;
const CORNER: usize = 6;

/// 7x7 lifting of a rotation: `outer(R^(1); R^(2); 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationBlock(pub DMatrix<f64>);

/// A rotation block allocated in a layout, with symbolic reads of its entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationVar {
    pub block: BlockId,
}

impl RotationVar {
    /// Allocates the block in its own trace group (trace 3).
    pub fn add(layout: &mut Layout, label: &str) -> Result<Self> {
        let block = layout.add_single_block(ROTATION_DIM, ROTATION_TRACE, label)?;
        Ok(Self { block })
    }

    pub fn one(&self, layout: &Layout) -> LinExpr {
        layout.entry_expr(self.block, CORNER, CORNER)
    }

    /// Column `l` (0 or 1) read from the homogeneous column.
    pub fn column(&self, layout: &Layout, l: usize) -> LinVec3 {
        assert!(l < 2, "only the first two columns are stored directly");
        std::array::from_fn(|k| layout.entry_expr(self.block, 3 * l + k, CORNER))
    }

    /// `R^(1) x R^(2)` read linearly from the bilinear block `Y(0..3, 3..6)`.
    pub fn third_column(&self, layout: &Layout) -> LinVec3 {
        let e = |a: usize, b: usize| layout.entry_expr(self.block, a, 3 + b);
        [e(1, 2) - e(2, 1), e(2, 0) - e(0, 2), e(0, 1) - e(1, 0)]
    }

    /// `m[row][col]` of the recovered rotation.
    pub fn matrix(&self, layout: &Layout) -> LinMat3 {
        let c = [self.column(layout, 0), self.column(layout, 1), self.third_column(layout)];
        std::array::from_fn(|r| std::array::from_fn(|col| c[col][r].clone()))
    }

    pub fn constraint_rows(&self, layout: &Layout) -> Vec<LinearRow> {
        rotation_constraint_rows(layout, self.block)
    }
}

/// Structural rows of a rotation block: unit traces of both diagonal 3x3 blocks, zero trace of
/// the cross block, unit corner. The total trace is handled by the block's trace group.
pub fn rotation_constraint_rows(layout: &Layout, block: BlockId) -> Vec<LinearRow> {
    let e = |r: usize, c: usize| layout.entry_expr(block, r, c);
    let tr11 = e(0, 0) + e(1, 1) + e(2, 2);
    let tr22 = e(3, 3) + e(4, 4) + e(5, 5);
    let tr12 = e(0, 3) + e(1, 4) + e(2, 5);
    vec![
        LinearRow::from_expr(&(tr11 - LinExpr::constant(1.0)), "rot:tr11"),
        LinearRow::from_expr(&(tr22 - LinExpr::constant(1.0)), "rot:tr22"),
        LinearRow::from_expr(&tr12, "rot:tr12"),
        LinearRow::from_expr(&(e(CORNER, CORNER) - LinExpr::constant(1.0)), "rot:corner"),
    ]
}

/// Rows `Y_b = B Y_a B'` with `B = diag(M, M, 1)`, valid when `R_b = M R_a` for a known rotation `M`.
/// They imply the structural rows of `b`, so callers should not add those as well.
pub fn rotation_congruence_rows(layout: &Layout, a: &RotationVar, b: &RotationVar, m: &Matrix3<f64>) -> Vec<LinearRow> {
    let mut big = DMatrix::zeros(ROTATION_DIM, ROTATION_DIM);
    big.view_mut((0, 0), (3, 3)).copy_from(m);
    big.view_mut((3, 3), (3, 3)).copy_from(m);
    big[(CORNER, CORNER)] = 1.0;
    let mut rows = Vec::with_capacity(28);
    for c in 0..ROTATION_DIM {
        for r in 0..=c {
            let mut e = -layout.entry_expr(b.block, r, c);
            for p in 0..ROTATION_DIM {
                for q in 0..ROTATION_DIM {
                    let w = big[(r, p)] * big[(c, q)];
                    if w != 0.0 {
                        e += layout.entry_expr(a.block, p, q).scaled(w);
                    }
                }
            }
            rows.push(LinearRow::from_expr(&e.compressed(), format!("rot:cong{r}{c}")));
        }
    }
    rows
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).norm() <= tol && r.determinant() > 0.0
}

pub fn lift_rotation(r: &Matrix3<f64>) -> Result<RotationBlock> {
    if !r.iter().all(|v| v.is_finite()) || !is_rotation(r, 1e-9) {
        return Err(Error::InvalidInput("lift_rotation expects a rotation matrix".into()));
    }
    let mut v = DVector::zeros(ROTATION_DIM);
    for k in 0..3 {
        v[k] = r[(k, 0)];
        v[3 + k] = r[(k, 1)];
    }
    v[CORNER] = 1.0;
    Ok(RotationBlock(&v * v.transpose()))
}

/// Largest absolute residual of the structural rows and of `min(0, lambda_min)`.
pub fn rotation_block_residual(y: &DMatrix<f64>) -> Result<f64> {
    if y.nrows() != ROTATION_DIM || y.ncols() != ROTATION_DIM {
        return Err(Error::InvalidInput("rotation block must be 7x7".into()));
    }
    let tr11 = y[(0, 0)] + y[(1, 1)] + y[(2, 2)];
    let tr22 = y[(3, 3)] + y[(4, 4)] + y[(5, 5)];
    let tr12 = y[(0, 3)] + y[(1, 4)] + y[(2, 5)];
    let rows = [(tr11 - 1.0).abs(), (tr22 - 1.0).abs(), tr12.abs(), (y[(CORNER, CORNER)] - 1.0).abs()];
    let asym = (y - y.transpose()).amax();
    let sym = (y + y.transpose()) * 0.5;
    let neg = (-sym.symmetric_eigen().eigenvalues.min()).max(0.0);
    Ok(rows.into_iter().fold(asym.max(neg), f64::max))
}

/// Linear read of the rotation: first two columns from the homogeneous column, third from the cross block.
pub fn read_rotation(y: &DMatrix<f64>) -> Matrix3<f64> {
    let c1 = Vector3::new(y[(0, CORNER)], y[(1, CORNER)], y[(2, CORNER)]);
    let c2 = Vector3::new(y[(3, CORNER)], y[(4, CORNER)], y[(5, CORNER)]);
    let x = |a: usize, b: usize| y[(a, 3 + b)];
    let c3 = Vector3::new(x(1, 2) - x(2, 1), x(2, 0) - x(0, 2), x(0, 1) - x(1, 0));
    Matrix3::from_columns(&[c1, c2, c3])
}

pub fn recover_rotation(y: &RotationBlock, tol: f64) -> Result<Matrix3<f64>> {
    let residual = rotation_block_residual(&y.0)?;
    if residual > tol {
        return Err(Error::InvalidBlock { residual });
    }
    Ok(read_rotation(&y.0))
}

/// Frobenius-nearest rotation via SVD, for reads with a small orthogonality defect.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

pub fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}
