use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcsdp::expr::LinExpr;

pub type BlockId = usize;
pub type GroupId = usize;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub dim: usize,
    pub group: GroupId,
    /// Position of entry (0, 0) in the stacked vector; the block occupies `dim * dim` slots column-major.
    pub offset: usize,
    pub label: String,
}

/// Blocks whose traces sum to a fixed value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceGroup {
    pub blocks: Vec<BlockId>,
    pub trace: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Entry { block: BlockId, row: usize, col: usize },
    Free(usize),
}

/// Ordering of PSD blocks and free scalars inside the stacked vector `y`.
///
/// Slots are allocated in creation order, so block and free-variable ranges may interleave.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<BlockSpec>,
    groups: Vec<TraceGroup>,
    free: Vec<usize>,
    free_labels: Vec<String>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new trace group; blocks are attached with [`Layout::add_block`].
    pub fn add_group(&mut self, trace: f64, label: impl Into<String>) -> Result<GroupId> {
        if !trace.is_finite() || trace <= 0.0 {
            return Err(Error::InvalidInput(format!("group trace must be positive, got {trace}")));
        }
        self.groups.push(TraceGroup {
            blocks: Vec::new(),
            trace,
            label: label.into(),
        });
        Ok(self.groups.len() - 1)
    }

    pub fn add_block(&mut self, group: GroupId, dim: usize, label: impl Into<String>) -> Result<BlockId> {
        if dim == 0 {
            return Err(Error::InvalidInput("block dimension must be positive".into()));
        }
        let g = self
            .groups
            .get_mut(group)
            .ok_or_else(|| Error::InvalidInput(format!("unknown group {group}")))?;
        let id = self.blocks.len();
        g.blocks.push(id);
        self.blocks.push(BlockSpec {
            dim,
            group,
            offset: self.len,
            label: label.into(),
        });
        self.len += dim * dim;
        Ok(id)
    }

    /// Convenience for a group holding a single block.
    pub fn add_single_block(&mut self, dim: usize, trace: f64, label: &str) -> Result<BlockId> {
        let g = self.add_group(trace, label)?;
        self.add_block(g, dim, label)
    }

    pub fn add_free(&mut self, label: impl Into<String>) -> usize {
        let idx = self.len;
        self.free.push(idx);
        self.free_labels.push(label.into());
        self.len += 1;
        idx
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &BlockSpec {
        &self.blocks[id]
    }

    pub fn groups(&self) -> &[TraceGroup] {
        &self.groups
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn free_labels(&self) -> &[String] {
        &self.free_labels
    }

    /// Index of `Y_block[row, col]` in the stacked vector.
    pub fn entry(&self, block: BlockId, row: usize, col: usize) -> usize {
        let b = &self.blocks[block];
        debug_assert!(row < b.dim && col < b.dim);
        b.offset + col * b.dim + row
    }

    pub fn entry_expr(&self, block: BlockId, row: usize, col: usize) -> LinExpr {
        LinExpr::var(self.entry(block, row, col))
    }

    pub fn trace_expr(&self, block: BlockId) -> LinExpr {
        let d = self.blocks[block].dim;
        LinExpr {
            terms: (0..d).map(|i| (self.entry(block, i, i), 1.0)).collect(),
            constant: 0.0,
        }
    }

    /// Owner of every slot, built on demand.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = vec![Slot::Free(0); self.len];
        for (id, b) in self.blocks.iter().enumerate() {
            for col in 0..b.dim {
                for row in 0..b.dim {
                    out[b.offset + col * b.dim + row] = Slot::Entry { block: id, row, col };
                }
            }
        }
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = Slot::Free(k);
        }
        out
    }

    pub fn block_matrix(&self, block: BlockId, y: &[f64]) -> DMatrix<f64> {
        let b = &self.blocks[block];
        DMatrix::from_column_slice(b.dim, b.dim, &y[b.offset..b.offset + b.dim * b.dim])
    }
}

/// Concrete values for every block and free scalar of a layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
}

impl PrimalPoint {
    pub fn from_vec(layout: &Layout, y: &[f64]) -> Result<Self> {
        if y.len() != layout.len() {
            return Err(Error::InvalidInput(format!(
                "vector length {} does not match layout length {}",
                y.len(),
                layout.len()
            )));
        }
        Ok(Self {
            blocks: (0..layout.blocks().len()).map(|b| layout.block_matrix(b, y)).collect(),
            free: layout.free_indices().iter().map(|&i| y[i]).collect(),
        })
    }

    pub fn to_vec(&self, layout: &Layout) -> Result<Vec<f64>> {
        self.check_shape(layout)?;
        let mut y = vec![0.0; layout.len()];
        for (b, m) in layout.blocks().iter().zip(&self.blocks) {
            y[b.offset..b.offset + b.dim * b.dim].copy_from_slice(m.as_slice());
        }
        for (&i, &v) in layout.free_indices().iter().zip(&self.free) {
            y[i] = v;
        }
        Ok(y)
    }

    pub fn check_shape(&self, layout: &Layout) -> Result<()> {
        if self.blocks.len() != layout.blocks().len() || self.free.len() != layout.free_indices().len() {
            return Err(Error::InvalidInput("point does not match layout".into()));
        }
        for (b, m) in layout.blocks().iter().zip(&self.blocks) {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(Error::InvalidInput(format!("block {} has wrong shape", b.label)));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|m| m.iter().all(|v| v.is_finite())) && self.free.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaved_allocation_round_trips() {
        let mut l = Layout::new();
        let g = l.add_group(2.0, "g").unwrap();
        let a = l.add_block(g, 2, "a").unwrap();
        let t = l.add_free("t");
        let b = l.add_block(g, 3, "b").unwrap();
        assert_eq!(l.len(), 4 + 1 + 9);
        assert_eq!(t, 4);
        assert_eq!(l.entry(b, 0, 0), 5);
        assert_eq!(l.entry(a, 1, 0), 1);
        let y: Vec<f64> = (0..l.len()).map(|i| i as f64).collect();
        let p = PrimalPoint::from_vec(&l, &y).unwrap();
        assert_eq!(p.free, vec![4.0]);
        assert_eq!(p.blocks[1][(2, 1)], y[l.entry(b, 2, 1)]);
        assert_eq!(p.to_vec(&l).unwrap(), y);
        match l.slots()[l.entry(b, 1, 2)] {
            Slot::Entry { block, row, col } => assert_eq!((block, row, col), (b, 1, 2)),
            _ => panic!("wrong slot"),
        }
    }

    #[test]
    fn rejects_bad_group_trace() {
        let mut l = Layout::new();
        assert!(l.add_group(0.0, "g").is_err());
        assert!(l.add_block(3, 2, "x").is_err());
    }
}
