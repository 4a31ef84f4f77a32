use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::manifolds::pair::PairProductVar;
use crate::tcsdp::expr::{LinExpr, LinMat3, LinVec3};
use crate::tcsdp::layout::Layout;
use crate::tcsdp::problem::LinearRow;

/// Rotation appearing in a constant-transformation equality.
#[derive(Debug, Clone)]
pub enum RotationSymbol {
    Known(Matrix3<f64>),
    /// Row-major expressions linear in lifted entries.
    Lifted(LinMat3),
    Unbound,
}

/// One side `(tau, v, R1, R2)` of a constant-transformation equality. When both rotations are
/// lifted the products come from a pair-product variable.
#[derive(Debug, Clone)]
pub struct FrameSymbol {
    pub tau: Option<LinExpr>,
    pub v: Option<LinVec3>,
    pub r1: RotationSymbol,
    pub r2: RotationSymbol,
    pub products: Option<PairProductVar>,
}

impl FrameSymbol {
    fn tau(&self) -> Result<LinExpr> {
        self.tau.clone().ok_or_else(|| Error::InvalidBinding("tau is unbound".into()))
    }

    fn direction(&self, layout: &Layout, l1: usize) -> Result<LinExpr> {
        let v = self.v.as_ref().ok_or_else(|| Error::InvalidBinding("direction is unbound".into()))?;
        match &self.r1 {
            RotationSymbol::Known(r) => Ok(LinExpr::weighted_sum((0..3).map(|k| (r[(k, l1)], &v[k])))),
            RotationSymbol::Lifted(_) => self
                .products
                .map(|pp| pp.direction_product(layout, l1))
                .ok_or_else(|| Error::InvalidBinding("lifted R1 with lifted v needs pair products".into())),
            RotationSymbol::Unbound => Err(Error::InvalidBinding("R1 is unbound".into())),
        }
    }

    fn rotation(&self, layout: &Layout, l1: usize, l2: usize) -> Result<LinExpr> {
        match (&self.r1, &self.r2) {
            (RotationSymbol::Unbound, _) | (_, RotationSymbol::Unbound) => {
                Err(Error::InvalidBinding("rotation is unbound".into()))
            }
            (RotationSymbol::Known(a), RotationSymbol::Known(b)) => {
                Ok(LinExpr::constant((a.column(l1).transpose() * b.column(l2))[0]))
            }
            (RotationSymbol::Known(a), RotationSymbol::Lifted(b)) => {
                Ok(LinExpr::weighted_sum((0..3).map(|k| (a[(k, l1)], &b[k][l2]))))
            }
            (RotationSymbol::Lifted(a), RotationSymbol::Known(b)) => {
                Ok(LinExpr::weighted_sum((0..3).map(|k| (b[(k, l2)], &a[k][l1]))))
            }
            (RotationSymbol::Lifted(_), RotationSymbol::Lifted(_)) => self
                .products
                .map(|pp| pp.rotation_product(layout, l1, l2))
                .ok_or_else(|| Error::InvalidBinding("two lifted rotations need pair products".into())),
        }
    }
}

/// Rows equating `tau`, `R1^(l1)' v` (l1 = 1..3) and `R1^(l1)' R2^(l2)` (l1 = 1..3, l2 = 1..2)
/// between two frames. The third column of `R2` follows from the cross product.
pub fn transform_equality_rows(layout: &Layout, a: &FrameSymbol, b: &FrameSymbol) -> Result<Vec<LinearRow>> {
    let mut rows = Vec::with_capacity(10);
    rows.push(LinearRow::from_expr(&(a.tau()? - b.tau()?), "cft:tau"));
    for l1 in 0..3 {
        let e = a.direction(layout, l1)? - b.direction(layout, l1)?;
        rows.push(LinearRow::from_expr(&e, format!("cft:dir{l1}")));
    }
    for l1 in 0..3 {
        for l2 in 0..2 {
            let e = a.rotation(layout, l1, l2)? - b.rotation(layout, l1, l2)?;
            rows.push(LinearRow::from_expr(&e, format!("cft:rot{l1}{l2}")));
        }
    }
    Ok(rows)
}
