//! Index size accounting. Record data is excluded everywhere.

use std::mem::size_of;

use crate::baseline::KdTree;
use crate::grid::CellBlock;
use crate::query::SprigIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageBreakdown {
    /// `n + m + 2` boundary values.
    pub boundary_reals: usize,
    pub boundary_bytes: usize,
    /// Non-empty cells.
    pub blocks: usize,
    /// Cell id, offset, size and pivot per block.
    pub block_bytes: usize,
    /// Cell id to block rank directory, `n * m + 1` entries.
    pub directory_bytes: usize,
    pub pivot_dist_bytes: usize,
    pub model_bytes: usize,
}

impl StorageBreakdown {
    pub fn total(&self) -> usize {
        self.boundary_bytes
            + self.block_bytes
            + self.directory_bytes
            + self.pivot_dist_bytes
            + self.model_bytes
    }

    pub fn total_without_pivot_dists(&self) -> usize {
        self.total() - self.pivot_dist_bytes
    }
}

pub const BLOCK_ENTRY_BYTES: usize = size_of::<CellBlock>();

pub fn sprig_storage(index: &SprigIndex) -> StorageBreakdown {
    let grid = index.grid();
    let table = index.table();
    let boundary_reals = grid.bx().len() + grid.by().len();
    StorageBreakdown {
        boundary_reals,
        boundary_bytes: boundary_reals * size_of::<f64>(),
        blocks: table.blocks().len(),
        block_bytes: table.blocks().len() * BLOCK_ENTRY_BYTES,
        directory_bytes: table.directory_bytes(),
        pivot_dist_bytes: std::mem::size_of_val(table.pivot_dists()),
        model_bytes: index.model().coefficient_bytes(),
    }
}

pub fn kdtree_storage(tree: &KdTree) -> usize {
    tree.storage_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{generate_synthetic, Dataset, Distribution};
    use crate::query::IndexConfig;

    #[test]
    fn single_cell_layout() {
        let ds = Dataset::from_coords([(0.0, 0.0), (1.0, 2.0), (0.5, 0.5)]).unwrap();
        let index = SprigIndex::build(&ds, &IndexConfig::new(1, 1)).unwrap();
        let s = sprig_storage(&index);
        assert_eq!(s.boundary_reals, 4);
        assert_eq!(s.blocks, 1);
        assert_eq!(s.block_bytes, 32);
        assert_eq!(s.pivot_dist_bytes, 3 * 8);
        assert_eq!(s.directory_bytes, 2 * 4);
        assert_eq!(s.model_bytes, 4 * 8);
        assert_eq!(s.total(), 32 + 32 + 8 + 24 + 32);
        assert_eq!(s.total_without_pivot_dists(), 32 + 32 + 8 + 32);
    }

    #[test]
    fn boundary_formula() {
        let ds = generate_synthetic(50_000, Distribution::Uniform, 1).unwrap();
        let index = SprigIndex::build(&ds, &IndexConfig::new(71, 69)).unwrap();
        let s = sprig_storage(&index);
        assert_eq!(s.boundary_reals, 71 + 69 + 2);
        assert_eq!(s.boundary_bytes, (71 + 69 + 2) * 8);
        assert_eq!(s.directory_bytes, (71 * 69 + 1) * 4);
        assert_eq!(s.model_bytes, 72 * 70 * 8);
        assert_eq!(s.pivot_dist_bytes, ds.len() * 8);
    }
}
