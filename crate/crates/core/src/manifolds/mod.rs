//! Fixed-trace PSD liftings of rotations and bounded translations, their constraint rows, recovery
//! maps, and the constant-transformation and pair-product rows used by calibration problems.

pub mod pair;
pub mod rotation;
pub mod transform;
pub mod translation;

pub use pair::{lift_pair_product, pair_product_rows, PairProductBlock, PairProductVar};
pub use rotation::{
    rotation_congruence_rows,
    is_rotation, lift_rotation, orthogonality_defect, project_to_so3, read_rotation, recover_rotation,
    rotation_block_residual, rotation_constraint_rows, RotationBlock, RotationVar,
};
pub use transform::{transform_equality_rows, FrameSymbol, RotationSymbol};
pub use translation::{
    lift_translation, read_scaled_direction, read_translation, recover_scaled_direction, recover_translation,
    translation_block_residual, translation_constraint_rows, TranslationBlock, TranslationVar,
};

use nalgebra::DMatrix;

use crate::symeig::dense_sym_eig;

/// Default feasibility tolerance for recovery.
pub const BLOCK_TOL: f64 = 1e-6;

/// `trace - sum_i lambda1(Y_i)` for one group.
pub fn group_gap(blocks: &[&DMatrix<f64>], trace: f64) -> f64 {
    trace - blocks.iter().map(|m| dense_sym_eig((*m).clone()).values[0]).sum::<f64>()
}

/// True iff the group's trace minus the sum of top eigenvalues is at most `tol`.
pub fn rank1_check(blocks: &[&DMatrix<f64>], trace: f64, tol: f64) -> bool {
    group_gap(blocks, trace) <= tol
}
