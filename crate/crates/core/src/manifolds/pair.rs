use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::rotation::{ROTATION_DIM, ROTATION_TRACE};
use crate::tcsdp::expr::{LinExpr, LinMat3, LinVec3};
use crate::tcsdp::layout::{BlockId, Layout};
use crate::tcsdp::problem::LinearRow;

/// Nine 7x7 matrices per configuration: three lift `(R1^(l1), v, 1)` and six lift `(R1^(l1), R2^(l2), 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProductBlock(pub Vec<DMatrix<f64>>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairProductVar {
    pub blocks: [BlockId; 9],
}

fn rotation_pair_slot(l1: usize, l2: usize) -> usize {
    3 + 2 * l1 + l2
}

impl PairProductVar {
    /// Allocates the nine matrices, each in its own trace group (trace 3).
    pub fn add(layout: &mut Layout, label: &str) -> Result<Self> {
        let mut blocks = [0; 9];
        for (k, b) in blocks.iter_mut().enumerate() {
            *b = layout.add_single_block(ROTATION_DIM, ROTATION_TRACE, &format!("{label}.{k}"))?;
        }
        Ok(Self { blocks })
    }

    fn cross_trace(&self, layout: &Layout, slot: usize) -> LinExpr {
        let b = self.blocks[slot];
        layout.entry_expr(b, 0, 3) + layout.entry_expr(b, 1, 4) + layout.entry_expr(b, 2, 5)
    }

    /// `R1^(l1)' v`.
    pub fn direction_product(&self, layout: &Layout, l1: usize) -> LinExpr {
        self.cross_trace(layout, l1)
    }

    /// `R1^(l1)' R2^(l2)` for `l2` in {0, 1}.
    pub fn rotation_product(&self, layout: &Layout, l1: usize, l2: usize) -> LinExpr {
        self.cross_trace(layout, rotation_pair_slot(l1, l2))
    }

    fn copy(&self, layout: &Layout, slot: usize, second: bool) -> LinVec3 {
        let off = if second { 3 } else { 0 };
        std::array::from_fn(|k| layout.entry_expr(self.blocks[slot], off + k, 6))
    }
}

/// Structural rows for the nine matrices plus the rows tying their homogeneous columns to the
/// reads `r1`, `r2` (row-major rotation expressions) and `v` from the primary blocks.
///
/// The cross-block trace is left free here: it carries the product being modelled.
pub fn pair_product_rows(
    layout: &Layout,
    pp: &PairProductVar,
    r1: &LinMat3,
    r2: &LinMat3,
    v: &LinVec3,
) -> Result<Vec<LinearRow>> {
    for e in r1.iter().flatten().chain(r2.iter().flatten()).chain(v.iter()) {
        if e.max_index().is_some_and(|i| i >= layout.len()) {
            return Err(Error::InvalidBinding("binding references an entry outside the layout".into()));
        }
    }
    let one = LinExpr::constant(1.0);
    let mut rows = Vec::with_capacity(81);
    for (slot, &b) in pp.blocks.iter().enumerate() {
        let e = |r: usize, c: usize| layout.entry_expr(b, r, c);
        rows.push(LinearRow::from_expr(&(e(0, 0) + e(1, 1) + e(2, 2) - one.clone()), format!("pp{slot}:tr11")));
        rows.push(LinearRow::from_expr(&(e(3, 3) + e(4, 4) + e(5, 5) - one.clone()), format!("pp{slot}:tr22")));
        rows.push(LinearRow::from_expr(&(e(6, 6) - one.clone()), format!("pp{slot}:corner")));
    }
    for l1 in 0..3 {
        let col1: LinVec3 = std::array::from_fn(|k| r1[k][l1].clone());
        let targets: Vec<(usize, LinVec3)> = std::iter::once((l1, v.clone()))
            .chain((0..2).map(|l2| (rotation_pair_slot(l1, l2), std::array::from_fn(|k| r2[k][l2].clone()))))
            .collect();
        for (slot, second) in targets {
            let a = pp.copy(layout, slot, false);
            let b = pp.copy(layout, slot, true);
            for k in 0..3 {
                rows.push(LinearRow::from_expr(&(&a[k] - &col1[k]), format!("pp{slot}:first{k}")));
                rows.push(LinearRow::from_expr(&(&b[k] - &second[k]), format!("pp{slot}:second{k}")));
            }
        }
    }
    Ok(rows)
}

pub fn lift_pair_product(r1: &Matrix3<f64>, r2: &Matrix3<f64>, v: &Vector3<f64>) -> PairProductBlock {
    let outer = |a: Vector3<f64>, b: Vector3<f64>| {
        let w = DVector::from_iterator(7, a.iter().chain(b.iter()).copied().chain(std::iter::once(1.0)));
        &w * w.transpose()
    };
    let mut mats = Vec::with_capacity(9);
    for l1 in 0..3 {
        mats.push(outer(r1.column(l1).into(), *v));
    }
    for l1 in 0..3 {
        for l2 in 0..2 {
            mats.push(outer(r1.column(l1).into(), r2.column(l2).into()));
        }
    }
    PairProductBlock(mats)
}
