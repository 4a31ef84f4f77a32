use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcsdp::expr::{LinExpr, LinVec3};
use crate::tcsdp::layout::{BlockId, Layout};
use crate::tcsdp::problem::LinearRow;

pub const TRANSLATION_DIM: usize = 4;
pub const TRANSLATION_TRACE: f64 = 4.0;

/// Three 4x4 liftings `outer(sqrt(tau) v_l, sqrt(1-tau) v_l, sqrt(tau), sqrt(1-tau))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationBlock(pub [DMatrix<f64>; 3]);

/// A translation triple allocated in a layout as one trace group (trace 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationVar {
    pub blocks: [BlockId; 3],
}

impl TranslationVar {
    pub fn add(layout: &mut Layout, label: &str) -> Result<Self> {
        let g = layout.add_group(TRANSLATION_TRACE, label)?;
        let b0 = layout.add_block(g, TRANSLATION_DIM, format!("{label}.1"))?;
        let b1 = layout.add_block(g, TRANSLATION_DIM, format!("{label}.2"))?;
        let b2 = layout.add_block(g, TRANSLATION_DIM, format!("{label}.3"))?;
        Ok(Self { blocks: [b0, b1, b2] })
    }

    fn e(&self, layout: &Layout, l: usize, r: usize, c: usize) -> LinExpr {
        layout.entry_expr(self.blocks[l], r, c)
    }

    pub fn tau(&self, layout: &Layout) -> LinExpr {
        self.e(layout, 0, 2, 2)
    }

    /// `sqrt(tau) sqrt(1 - tau)` entry, nonnegative on lifts.
    pub fn tau_mix(&self, layout: &Layout) -> LinExpr {
        self.e(layout, 0, 2, 3)
    }

    /// `Y_1(2,2) + Y_1(3,3)`, equal to 1 on the feasible set.
    pub fn one(&self, layout: &Layout) -> LinExpr {
        self.e(layout, 0, 2, 2) + self.e(layout, 0, 3, 3)
    }

    pub fn direction(&self, layout: &Layout) -> LinVec3 {
        std::array::from_fn(|l| self.e(layout, l, 0, 2) + self.e(layout, l, 1, 3))
    }

    /// `tau * v`.
    pub fn scaled_direction(&self, layout: &Layout) -> LinVec3 {
        std::array::from_fn(|l| self.e(layout, l, 0, 2))
    }

    pub fn constraint_rows(&self, layout: &Layout) -> (Vec<LinearRow>, Vec<LinearRow>) {
        translation_constraint_rows(layout, self)
    }
}

/// Equality rows and bound rows (`expr <= 0`) of a translation triple.
///
/// The sum-of-traces condition is carried by the trace group.
pub fn translation_constraint_rows(layout: &Layout, t: &TranslationVar) -> (Vec<LinearRow>, Vec<LinearRow>) {
    let e = |l: usize, r: usize, c: usize| t.e(layout, l, r, c);
    let one = LinExpr::constant(1.0);
    let mut eq = Vec::new();
    for l in 0..3 {
        eq.push(LinearRow::from_expr(&(e(l, 2, 2) + e(l, 3, 3) - one.clone()), format!("tr:unit{l}")));
    }
    for l in 0..3 {
        eq.push(LinearRow::from_expr(&(e(l, 0, 3) - e(l, 1, 2)), format!("tr:offdiag{l}")));
    }
    for l in 1..3 {
        eq.push(LinearRow::from_expr(&(e(l, 2, 2) - e(0, 2, 2)), format!("tr:tau{l}")));
        eq.push(LinearRow::from_expr(&(e(l, 2, 3) - e(0, 2, 3)), format!("tr:mix{l}")));
    }
    let sum_01 = e(0, 0, 1) + e(1, 0, 1) + e(2, 0, 1);
    eq.push(LinearRow::from_expr(&(sum_01 - e(0, 2, 3)), "tr:sum01"));
    let sum_00 = e(0, 0, 0) + e(1, 0, 0) + e(2, 0, 0);
    eq.push(LinearRow::from_expr(&(sum_00 - e(0, 2, 2)), "tr:sum00"));
    let sum_11 = e(0, 1, 1) + e(1, 1, 1) + e(2, 1, 1);
    eq.push(LinearRow::from_expr(&(sum_11 - e(0, 3, 3)), "tr:sum11"));

    let mut bounds = Vec::new();
    for l in 0..3 {
        for c in 0..TRANSLATION_DIM {
            for r in 0..=c {
                let x = e(l, r, c);
                let (lo, hi) = if (r, c) == (2, 2) || (r, c) == (2, 3) { (0.0, 1.0) } else { (-1.0, 1.0) };
                bounds.push(LinearRow::from_expr(&(x.clone() - LinExpr::constant(hi)), format!("tr:ub{l}{r}{c}")));
                bounds.push(LinearRow::from_expr(&(LinExpr::constant(lo) - x), format!("tr:lb{l}{r}{c}")));
            }
        }
    }
    (eq, bounds)
}

pub fn lift_translation(tau: f64, v: &Vector3<f64>) -> Result<TranslationBlock> {
    if !(0.0..=1.0).contains(&tau) || !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "lift_translation expects tau in [0,1] and a unit direction (tau = {tau}, |v| = {})",
            v.norm()
        )));
    }
    let (a, b) = (tau.sqrt(), (1.0 - tau).sqrt());
    Ok(TranslationBlock(std::array::from_fn(|l| {
        let w = DVector::from_vec(vec![a * v[l], b * v[l], a, b]);
        &w * w.transpose()
    })))
}

/// Largest residual of the equality rows, bounds, trace sum and PSD condition.
pub fn translation_block_residual(b: &TranslationBlock) -> Result<f64> {
    if b.0.iter().any(|m| m.nrows() != TRANSLATION_DIM || m.ncols() != TRANSLATION_DIM) {
        return Err(Error::InvalidInput("translation blocks must be 4x4".into()));
    }
    let mut layout = Layout::new();
    let var = TranslationVar::add(&mut layout, "t")?;
    let mut y = vec![0.0; layout.len()];
    for (l, m) in b.0.iter().enumerate() {
        let off = layout.block(var.blocks[l]).offset;
        y[off..off + 16].copy_from_slice(m.as_slice());
    }
    let (eq, bounds) = translation_constraint_rows(&layout, &var);
    let mut res: f64 = eq.iter().map(|r| r.residual(&y).abs()).fold(0.0, f64::max);
    res = res.max(bounds.iter().map(|r| r.residual(&y).max(0.0)).fold(0.0, f64::max));
    let tr: f64 = b.0.iter().map(|m| m.trace()).sum();
    res = res.max((tr - TRANSLATION_TRACE).abs());
    for m in &b.0 {
        res = res.max((m - m.transpose()).amax());
        let sym = (m + m.transpose()) * 0.5;
        res = res.max((-sym.symmetric_eigen().eigenvalues.min()).max(0.0));
    }
    Ok(res)
}

pub fn read_translation(b: &TranslationBlock) -> (f64, Vector3<f64>) {
    let tau = b.0[0][(2, 2)];
    let v = Vector3::from_fn(|l, _| b.0[l][(0, 2)] + b.0[l][(1, 3)]);
    (tau, v)
}

pub fn read_scaled_direction(b: &TranslationBlock) -> Vector3<f64> {
    Vector3::from_fn(|l, _| b.0[l][(0, 2)])
}

pub fn recover_translation(b: &TranslationBlock, tol: f64) -> Result<(f64, Vector3<f64>)> {
    let residual = translation_block_residual(b)?;
    if residual > tol {
        return Err(Error::InvalidBlock { residual });
    }
    Ok(read_translation(b))
}

pub fn recover_scaled_direction(b: &TranslationBlock, tol: f64) -> Result<Vector3<f64>> {
    let residual = translation_block_residual(b)?;
    if residual > tol {
        return Err(Error::InvalidBlock { residual });
    }
    Ok(read_scaled_direction(b))
}
