//! Adaptive equal-frequency grid, cell ids and the cell table.
//!
//! Column boundaries are placed by walking the sorted distinct coordinate
//! values with their frequencies and cutting whenever a column has collected
//! more than `|D| / n` records. Cell `(i, j)` (column `i`, row `j`) has id
//! `j * n + i`. Intervals are half-open, `[B[i], B[i+1])`, except the last
//! column and row which also hold the maximum.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::point::{distance, Bounds, Dataset, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    bx: Vec<f64>,
    by: Vec<f64>,
}

impl GridLayout {
    /// Builds a layout from explicit boundary sequences. Each needs at least
    /// two entries and must be strictly increasing, except that a
    /// single-column dimension may have zero width.
    pub fn from_boundaries(bx: Vec<f64>, by: Vec<f64>) -> Result<Self> {
        check_boundaries(&bx, "x")?;
        check_boundaries(&by, "y")?;
        Ok(GridLayout { bx, by })
    }

    /// Column count along x.
    #[inline]
    pub fn n(&self) -> usize {
        self.bx.len() - 1
    }

    /// Column count along y.
    #[inline]
    pub fn m(&self) -> usize {
        self.by.len() - 1
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.n() * self.m()
    }

    pub fn bx(&self) -> &[f64] {
        &self.bx
    }

    pub fn by(&self) -> &[f64] {
        &self.by
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            x_min: self.bx[0],
            x_max: self.bx[self.n()],
            y_min: self.by[0],
            y_max: self.by[self.m()],
        }
    }

    /// Column holding `x`; values outside the domain clamp to the edge columns.
    #[inline]
    pub fn column_of(&self, x: f64) -> usize {
        locate_interval(&self.bx, x)
    }

    #[inline]
    pub fn row_of(&self, y: f64) -> usize {
        locate_interval(&self.by, y)
    }

    /// Ground-truth cell id by two full binary searches.
    #[inline]
    pub fn cell_id_of(&self, p: &Point) -> u64 {
        self.cell_id(self.column_of(p.x), self.row_of(p.y))
    }

    #[inline]
    pub fn cell_id(&self, col: usize, row: usize) -> u64 {
        (row * self.n() + col) as u64
    }

    /// `(column, row)` of a cell id.
    #[inline]
    pub fn cell_coords(&self, cell_id: u64) -> (usize, usize) {
        let n = self.n() as u64;
        ((cell_id % n) as usize, (cell_id / n) as usize)
    }

    /// `[x0, x1] x [y0, y1]` extent of a cell.
    pub fn cell_rect(&self, col: usize, row: usize) -> (f64, f64, f64, f64) {
        (
            self.bx[col],
            self.bx[col + 1],
            self.by[row],
            self.by[row + 1],
        )
    }
}

fn check_boundaries(b: &[f64], axis: &str) -> Result<()> {
    if b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "boundary sequence along {axis} needs at least 2 entries"
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite boundary along {axis}"
        )));
    }
    let zero_width_single = b.len() == 2 && b[0] == b[1];
    if !zero_width_single && b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "boundaries along {axis} are not strictly increasing"
        )));
    }
    Ok(())
}

/// Index `i` in `[0, len-2]` with `b[i] <= v < b[i+1]`, clamped at both ends.
#[inline]
pub(crate) fn locate_interval(b: &[f64], v: f64) -> usize {
    let last = b.len() - 2;
    b.partition_point(|&edge| edge <= v)
        .saturating_sub(1)
        .min(last)
}

/// Builds the adaptive grid. The effective column counts may be smaller than
/// requested when the data has too few distinct or too concentrated values.
pub fn build_grid(dataset: &Dataset, n: usize, m: usize) -> Result<GridLayout> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n < 1 || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "grid layout {n}x{m}: both dimensions must be at least 1"
        )));
    }
    let bounds = dataset.bounds();
    let mut xs: Vec<f64> = dataset.points().iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = dataset.points().iter().map(|p| p.y).collect();
    let bx = boundaries(&mut xs, n, bounds.x_min, bounds.x_max);
    let by = boundaries(&mut ys, m, bounds.y_min, bounds.y_max);
    Ok(GridLayout { bx, by })
}

/// Ascending `(value, count)` runs of a coordinate column.
pub fn frequency_map(values: &mut [f64]) -> Vec<(f64, usize)> {
    values.sort_unstable_by(f64::total_cmp);
    let mut runs: Vec<(f64, usize)> = Vec::new();
    for &v in values.iter() {
        match runs.last_mut() {
            Some((key, count)) if *key == v => *count += 1,
            _ => runs.push((v, 1)),
        }
    }
    runs
}

/// Equal-frequency boundary walk over one dimension, `min` and `max` included.
pub fn boundaries(values: &mut [f64], parts: usize, min: f64, max: f64) -> Vec<f64> {
    let map = frequency_map(values);
    let avg = values.len() as f64 / parts as f64;

    let mut raw = Vec::with_capacity(parts + 1);
    let mut cnt = 0usize;
    // The running "previous key" starts at the minimum rather than at zero so
    // that a heavy first key cannot emit a cut outside the domain.
    let mut pre = min;
    for &(key, single) in &map {
        if single as f64 > avg {
            raw.push((key + pre) / 2.0);
            pre = key;
            cnt = 0;
            continue;
        }
        cnt += single;
        if cnt as f64 > avg {
            raw.push((key + pre) / 2.0);
            cnt = 0;
        } else {
            pre = key;
        }
    }

    let mut out = Vec::with_capacity(raw.len() + 2);
    out.push(min);
    for b in raw {
        if b > *out.last().unwrap() && b < max {
            out.push(b);
        }
    }
    out.push(max);
    out
}

/// Table entry for one non-empty cell. Its records occupy
/// `data[offset .. offset + size]` of the owning [`CellTable`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellBlock {
    pub cell_id: u64,
    pub offset: u32,
    pub size: u32,
    /// Virtual pivot `(x, y)`, the cell's centroid once pivots are computed.
    pub pivot: (f64, f64),
}

impl CellBlock {
    #[inline]
    pub fn pivot_point(&self) -> Point {
        Point::at(self.pivot.0, self.pivot.1)
    }

    #[inline]
    pub fn range(&self) -> Range<usize> {
        self.offset as usize..(self.offset + self.size) as usize
    }
}

/// A block together with its records and their pivot distances.
#[derive(Clone, Copy, Debug)]
pub struct BlockRef<'a> {
    pub block: &'a CellBlock,
    pub points: &'a [Point],
    /// Ascending; empty if pivots have not been computed.
    pub pivot_dists: &'a [f64],
}

/// Cell-ordered record storage plus the `cell id -> (offset, size)` table.
/// Empty cells have no block; a rank directory over all cells maps a cell
/// id to its block in constant time.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTable {
    blocks: Vec<CellBlock>,
    /// `rank[c]` is the number of blocks with id below `c`; `cells + 1` entries.
    rank: Vec<u32>,
    data: Vec<Point>,
    pivot_dists: Vec<f64>,
}

fn rank_directory(blocks: &[CellBlock], cells: usize) -> Vec<u32> {
    let mut rank = Vec::with_capacity(cells + 1);
    let mut next = 0usize;
    for c in 0..=cells as u64 {
        while next < blocks.len() && blocks[next].cell_id < c {
            next += 1;
        }
        rank.push(next as u32);
    }
    rank
}

impl CellTable {
    pub(crate) fn from_parts(
        cells: usize,
        blocks: Vec<CellBlock>,
        data: Vec<Point>,
        pivot_dists: Vec<f64>,
    ) -> Result<Self> {
        let mut next = 0usize;
        let mut last_id = None;
        for b in &blocks {
            if b.offset as usize != next || b.size == 0 || last_id.is_some_and(|id| id >= b.cell_id)
            {
                return Err(Error::Format(
                    "cell blocks are not contiguous and ordered".into(),
                ));
            }
            next += b.size as usize;
            last_id = Some(b.cell_id);
        }
        if next != data.len() || !(pivot_dists.is_empty() || pivot_dists.len() == data.len()) {
            return Err(Error::Format("cell blocks do not cover the data".into()));
        }
        if last_id.is_some_and(|id| id >= cells as u64) {
            return Err(Error::Format("cell block outside the grid".into()));
        }
        Ok(CellTable {
            rank: rank_directory(&blocks, cells),
            blocks,
            data,
            pivot_dists,
        })
    }

    /// Non-empty blocks in ascending cell id order.
    pub fn blocks(&self) -> &[CellBlock] {
        &self.blocks
    }

    /// Records in cell order.
    pub fn data(&self) -> &[Point] {
        &self.data
    }

    /// Pivot distances aligned with [`CellTable::data`]; empty until
    /// [`compute_pivots`] has run.
    pub fn pivot_dists(&self) -> &[f64] {
        &self.pivot_dists
    }

    pub fn has_pivots(&self) -> bool {
        !self.data.is_empty() && self.pivot_dists.len() == self.data.len()
    }

    /// Cells covered by the rank directory.
    pub fn cell_count(&self) -> usize {
        self.rank.len() - 1
    }

    /// Bytes of the rank directory.
    pub fn directory_bytes(&self) -> usize {
        self.rank.len() * std::mem::size_of::<u32>()
    }

    #[inline]
    fn block_index(&self, cell_id: u64) -> Option<usize> {
        let c = usize::try_from(cell_id).ok()?;
        let (&lo, &hi) = (self.rank.get(c)?, self.rank.get(c + 1)?);
        (hi > lo).then_some(lo as usize)
    }

    pub fn block(&self, cell_id: u64) -> Option<BlockRef<'_>> {
        self.block_index(cell_id).map(|idx| self.block_at(idx))
    }

    /// Data range of one cell; empty for empty cells.
    #[inline]
    pub fn cell_range(&self, cell_id: u64) -> Range<usize> {
        match self.block_index(cell_id) {
            Some(idx) => self.blocks[idx].range(),
            None => 0..0,
        }
    }

    pub(crate) fn block_at(&self, idx: usize) -> BlockRef<'_> {
        let block = &self.blocks[idx];
        let range = block.range();
        BlockRef {
            block,
            points: &self.data[range.clone()],
            pivot_dists: if self.pivot_dists.is_empty() {
                &[]
            } else {
                &self.pivot_dists[range]
            },
        }
    }

    /// Record count of a cell; 0 for empty cells.
    pub fn size_of(&self, cell_id: u64) -> usize {
        self.cell_range(cell_id).len()
    }

    /// Data range covering every cell with id in `first..=last`. Cells are
    /// stored in id order, so the range is contiguous.
    pub fn span(&self, first: u64, last: u64) -> Range<usize> {
        let start = self.start_of(first);
        let end = self.start_of(last + 1);
        start..end.max(start)
    }

    fn start_of(&self, cell_id: u64) -> usize {
        let c = usize::try_from(cell_id)
            .unwrap_or(usize::MAX)
            .min(self.rank.len() - 1);
        let idx = self.rank[c] as usize;
        self.blocks
            .get(idx)
            .map_or(self.data.len(), |b| b.offset as usize)
    }
}

/// Reorders the dataset by ascending cell id (stable) and records one block
/// per non-empty cell. Pivots are left at the origin with no distances.
pub fn build_cell_table(grid: &GridLayout, dataset: &Dataset) -> CellTable {
    assert!(
        dataset.len() <= u32::MAX as usize,
        "cell table offsets are 32-bit"
    );
    let mut keyed: Vec<(u64, Point)> = dataset
        .points()
        .iter()
        .map(|p| (grid.cell_id_of(p), *p))
        .collect();
    keyed.sort_by_key(|(id, _)| *id);

    let mut blocks: Vec<CellBlock> = Vec::new();
    for (i, (id, _)) in keyed.iter().enumerate() {
        match blocks.last_mut() {
            Some(b) if b.cell_id == *id => b.size += 1,
            _ => blocks.push(CellBlock {
                cell_id: *id,
                offset: i as u32,
                size: 1,
                pivot: (0.0, 0.0),
            }),
        }
    }
    CellTable {
        rank: rank_directory(&blocks, grid.cell_count()),
        blocks,
        data: keyed.into_iter().map(|(_, p)| p).collect(),
        pivot_dists: Vec::new(),
    }
}

/// Sets each block's pivot to its centroid, sorts the block's records by
/// distance to the pivot and stores those distances.
pub fn compute_pivots(mut table: CellTable) -> CellTable {
    let mut dists = vec![0.0; table.data.len()];
    for block in &mut table.blocks {
        let range = block.range();
        let points = &mut table.data[range.clone()];
        let inv = 1.0 / points.len() as f64;
        let (sx, sy) = points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        let pivot = Point::at(sx * inv, sy * inv);

        let mut keyed: Vec<(f64, Point)> =
            points.iter().map(|p| (distance(p, &pivot), *p)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (slot, (_, p)) in points.iter_mut().zip(&keyed) {
            *slot = *p;
        }
        for (slot, (d, _)) in dists[range].iter_mut().zip(&keyed) {
            *slot = *d;
        }
        block.pivot = (pivot.x, pivot.y);
    }
    table.pivot_dists = dists;
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{generate_synthetic, Distribution};
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn xs_dataset(xs: &[f64]) -> Dataset {
        Dataset::from_coords(xs.iter().enumerate().map(|(i, &x)| (x, i as f64))).unwrap()
    }

    #[test]
    fn boundary_trace_distinct_keys() {
        let ds = xs_dataset(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let g = build_grid(&ds, 2, 1).unwrap();
        assert_eq!(g.bx(), &[1.0, 4.5, 8.0]);
    }

    #[test]
    fn boundary_trace_repeated_keys() {
        let ds = xs_dataset(&[1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 4.0]);
        let g = build_grid(&ds, 2, 1).unwrap();
        assert_eq!(g.bx(), &[1.0, 1.5, 4.0]);
    }

    #[test]
    fn heavy_key_branch() {
        // 5 > avg = 10/3 at key 2: cut at (2 + 1) / 2, pre moves to 2
        let ds = xs_dataset(&[1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = build_grid(&ds, 3, 1).unwrap();
        // key 3..6 run: cnt 1,2,3,4 > 3.33 at key 6 -> cut (6 + 5) / 2
        assert_eq!(g.bx(), &[1.0, 1.5, 5.5, 6.0]);
    }

    #[test]
    fn one_by_one_grid() {
        let ds = generate_synthetic(100, Distribution::Uniform, 5).unwrap();
        let g = build_grid(&ds, 1, 1).unwrap();
        let b = ds.bounds();
        assert_eq!(g.bx(), &[b.x_min, b.x_max]);
        assert_eq!(g.by(), &[b.y_min, b.y_max]);
        let t = build_cell_table(&g, &ds);
        assert_eq!(t.blocks().len(), 1);
        assert_eq!(t.blocks()[0].size, 100);
    }

    #[test]
    fn equal_frequency_trace_on_distinct_values() {
        let ds = generate_synthetic(1000, Distribution::Uniform, 9).unwrap();
        let g = build_grid(&ds, 10, 10).unwrap();
        assert_eq!(g.n(), 10);
        let mut counts = vec![0usize; g.n()];
        for p in ds.points() {
            counts[g.column_of(p.x)] += 1;
        }
        // first column gets avg, the cut key then opens each following column
        assert_eq!(counts[0], 100);
        assert!(counts[1..9].iter().all(|&c| c == 101), "{counts:?}");
        assert_eq!(counts[9], 1000 - 100 - 8 * 101);
    }

    #[test]
    fn concentrated_data_yields_fewer_columns() {
        let ds = xs_dataset(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        let g = build_grid(&ds, 4, 1).unwrap();
        assert!(g.n() < 4);
        assert!(g.bx().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_single_value() {
        let ds = Dataset::from_coords([(2.0, 3.0), (2.0, 3.0)]).unwrap();
        let g = build_grid(&ds, 3, 3).unwrap();
        assert_eq!((g.n(), g.m()), (1, 1));
        assert_eq!(g.cell_id_of(&Point::at(2.0, 3.0)), 0);
    }

    #[test]
    fn rejects_bad_requests() {
        let ds = xs_dataset(&[1.0, 2.0]);
        assert!(build_grid(&ds, 0, 1).is_err());
        assert!(build_grid(&ds, 1, 0).is_err());
    }

    #[test]
    fn cell_id_layout() {
        let g = GridLayout::from_boundaries(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        assert_eq!(g.cell_id_of(&Point::at(2.5, 3.5)), 17);
        assert_eq!(g.cell_coords(17), (2, 3));
        assert_eq!(g.cell_id_of(&Point::at(5.0, 5.0)), 24);
        // interior boundary belongs to the right/upper cell
        assert_eq!(g.cell_id_of(&Point::at(1.0, 0.0)), 1);
        // outside the domain clamps
        assert_eq!(g.cell_id_of(&Point::at(-3.0, 9.0)), 20);
    }

    #[test]
    fn cell_id_matches_linear_scan() {
        let mut rng = StdRng::seed_from_u64(42);
        let mut bx: Vec<f64> = (0..9).map(|_| rng.gen::<f64>()).collect();
        let mut by: Vec<f64> = (0..7).map(|_| rng.gen::<f64>()).collect();
        bx.sort_by(f64::total_cmp);
        by.sort_by(f64::total_cmp);
        let g = GridLayout::from_boundaries(bx.clone(), by.clone()).unwrap();
        assert_eq!((g.n(), g.m()), (8, 6));
        for _ in 0..1000 {
            let p = Point::at(rng.gen_range(bx[0]..=bx[8]), rng.gen_range(by[0]..=by[6]));
            let mut expected = None;
            for j in 0..6 {
                for i in 0..8 {
                    let in_x = p.x >= bx[i] && (p.x < bx[i + 1] || (i == 7 && p.x <= bx[8]));
                    let in_y = p.y >= by[j] && (p.y < by[j + 1] || (j == 5 && p.y <= by[6]));
                    if in_x && in_y {
                        assert!(expected.is_none());
                        expected = Some((j * 8 + i) as u64);
                    }
                }
            }
            assert_eq!(Some(g.cell_id_of(&p)), expected);
        }
    }

    #[test]
    fn single_cell_table() {
        let ds = Dataset::from_coords([(0.1, 0.1), (0.2, 0.1), (0.15, 0.2)]).unwrap();
        let g = GridLayout::from_boundaries(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        let t = build_cell_table(&g, &ds);
        assert_eq!(t.blocks().len(), 1);
        assert_eq!((t.blocks()[0].offset, t.blocks()[0].size), (0, 3));
        assert_eq!(t.size_of(3), 0);
    }

    #[test]
    fn traced_table_blocks() {
        let ds = Dataset::from_coords((1..=8).map(|x| (x as f64, 0.0))).unwrap();
        let g = build_grid(&ds, 2, 1).unwrap();
        let t = build_cell_table(&g, &ds);
        let blocks: Vec<(u64, u32, u32)> = t
            .blocks()
            .iter()
            .map(|b| (b.cell_id, b.offset, b.size))
            .collect();
        assert_eq!(blocks, vec![(0, 0, 4), (1, 4, 4)]);
    }

    #[test]
    fn table_partitions_dataset() {
        let ds = generate_synthetic(5000, Distribution::GaussianClusters, 4).unwrap();
        let g = build_grid(&ds, 17, 9).unwrap();
        let t = compute_pivots(build_cell_table(&g, &ds));
        let total: usize = t.blocks().iter().map(|b| b.size as usize).sum();
        assert_eq!(total, ds.len());
        let mut ids: Vec<u64> = Vec::new();
        for b in t.blocks() {
            let r = t.block(b.cell_id).unwrap();
            for p in r.points {
                assert_eq!(g.cell_id_of(p), b.cell_id);
                ids.push(p.id);
            }
            assert!(r.pivot_dists.windows(2).all(|w| w[0] <= w[1]));
            for (p, d) in r.points.iter().zip(r.pivot_dists) {
                assert_eq!(distance(p, &b.pivot_point()), *d);
            }
        }
        ids.sort_unstable();
        assert_eq!(ids, (0..ds.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn span_is_contiguous_over_cell_ranges() {
        let ds = generate_synthetic(2000, Distribution::Uniform, 8).unwrap();
        let g = build_grid(&ds, 6, 6).unwrap();
        let t = build_cell_table(&g, &ds);
        let span = t.span(7, 10);
        let expected: usize = (7..=10).map(|c| t.size_of(c)).sum();
        assert_eq!(span.len(), expected);
        assert!(t.data()[span]
            .iter()
            .all(|p| (7..=10).contains(&g.cell_id_of(p))));
    }

    #[test]
    fn pivot_of_two_points() {
        let ds = Dataset::from_coords([(0.0, 0.0), (2.0, 0.0)]).unwrap();
        let g = GridLayout::from_boundaries(vec![0.0, 2.0], vec![0.0, 0.0]).unwrap();
        let t = compute_pivots(build_cell_table(&g, &ds));
        let b = t.block(0).unwrap();
        assert_eq!(b.block.pivot, (1.0, 0.0));
        assert_eq!(b.pivot_dists, &[1.0, 1.0]);
    }

    #[test]
    fn singleton_pivot() {
        let ds = Dataset::from_coords([(0.3, 0.7)]).unwrap();
        let g = build_grid(&ds, 1, 1).unwrap();
        let t = compute_pivots(build_cell_table(&g, &ds));
        let b = t.block(0).unwrap();
        assert_eq!(b.block.pivot, (0.3, 0.7));
        assert_eq!(b.pivot_dists, &[0.0]);
    }

    #[test]
    fn pivot_is_independent_mean() {
        let mut rng = StdRng::seed_from_u64(3);
        let coords: Vec<(f64, f64)> = (0..50).map(|_| (rng.gen(), rng.gen())).collect();
        let ds = Dataset::from_coords(coords.clone()).unwrap();
        let g = build_grid(&ds, 1, 1).unwrap();
        let t = compute_pivots(build_cell_table(&g, &ds));
        let b = t.block(0).unwrap();
        let mx = coords.iter().map(|c| c.0).sum::<f64>() / 50.0;
        let my = coords.iter().map(|c| c.1).sum::<f64>() / 50.0;
        assert!((b.block.pivot.0 - mx).abs() < 1e-12);
        assert!((b.block.pivot.1 - my).abs() < 1e-12);
        let mut expect: Vec<f64> = coords
            .iter()
            .map(|&(x, y)| ((x - mx).powi(2) + (y - my).powi(2)).sqrt())
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, e) in b.pivot_dists.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
