//! Range and kNN execution over a [`SprigIndex`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::{build_cell_table, build_grid, compute_pivots, BlockRef, CellTable, GridLayout};
use crate::models::{
    fit_model, get_real_cell_id, train_error_guarantee, ErrorGuarantee, LearnedModel, ModelConfig,
    ModelKind,
};
use crate::point::{distance, Dataset, KnnQuery, Point, RangeQuery};

/// Build parameters for a [`SprigIndex`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexConfig {
    /// Requested columns along x.
    pub n: usize,
    /// Requested columns along y.
    pub m: usize,
    pub kind: ModelKind,
    pub model: ModelConfig,
}

impl IndexConfig {
    pub fn new(n: usize, m: usize) -> Self {
        IndexConfig {
            n,
            m,
            kind: ModelKind::Bilinear,
            model: ModelConfig::default(),
        }
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Largest number of data points used to train the error guarantee when no
/// workload is supplied.
const DEFAULT_TRAINING_SAMPLE: usize = 10_000;

/// Grid layout, cell table, fitted locator and its error guarantee.
#[derive(Clone, Debug)]
pub struct SprigIndex {
    grid: GridLayout,
    table: CellTable,
    model: LearnedModel,
    eg: ErrorGuarantee,
}

/// Result of [`SprigIndex::locate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Located {
    pub rid: u64,
    pub col: usize,
    pub row: usize,
}

/// Cell and record counts gathered by one range query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RangeStats {
    pub intersected: usize,
    pub contained: usize,
    /// Records tested against the window in intersected cells.
    pub scanned: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub point: Point,
    pub dist: f64,
}

/// The k nearest records, ascending by distance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnnResult {
    pub neighbors: Vec<Neighbor>,
}

impl KnnResult {
    pub fn distances(&self) -> Vec<f64> {
        self.neighbors.iter().map(|n| n.dist).collect()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Switches for the two kNN pruning techniques.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnOptions {
    pub closest_point_pruning: bool,
    pub pivot_filtering: bool,
}

impl Default for KnnOptions {
    fn default() -> Self {
        KnnOptions {
            closest_point_pruning: true,
            pivot_filtering: true,
        }
    }
}

impl KnnOptions {
    pub const UNPRUNED: KnnOptions = KnnOptions {
        closest_point_pruning: false,
        pivot_filtering: false,
    };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KnnStats {
    /// Layers processed, the home cell being layer 0.
    pub layers: usize,
    /// Non-empty cells whose records were examined.
    pub cells_scanned: usize,
    /// Non-empty cells skipped by closest-point pruning.
    pub cells_pruned: usize,
    /// Records whose distance to the query was computed.
    pub points_scanned: usize,
}

impl SprigIndex {
    /// Builds grid, table, pivots and model, then trains the error guarantee
    /// on a strided sample of the data plus the domain corners.
    pub fn build(dataset: &Dataset, config: &IndexConfig) -> Result<Self> {
        let grid = build_grid(dataset, config.n, config.m)?;
        let model = fit_model(&grid, config.kind, &config.model)?;
        let table = compute_pivots(build_cell_table(&grid, dataset));
        let mut index = SprigIndex {
            grid,
            table,
            model,
            eg: ErrorGuarantee::ZERO,
        };
        index.train(&default_training_points(dataset))?;
        Ok(index)
    }

    /// Reassembles an index from its components.
    pub fn from_parts(
        grid: GridLayout,
        table: CellTable,
        model: LearnedModel,
        eg: ErrorGuarantee,
    ) -> Result<Self> {
        if model.knots_x() != grid.bx() || model.knots_y() != grid.by() {
            return Err(Error::InvalidArgument(
                "model knots differ from the grid boundaries".into(),
            ));
        }
        if let Some(last) = table.blocks().last() {
            if last.cell_id >= grid.cell_count() as u64 {
                return Err(Error::InvalidArgument("cell table exceeds the grid".into()));
            }
        }
        Ok(SprigIndex {
            grid,
            table,
            model,
            eg,
        })
    }

    /// Retrains the error guarantee on a query workload.
    pub fn train(&mut self, workload: &[Point]) -> Result<ErrorGuarantee> {
        self.eg = train_error_guarantee(&self.model, &self.grid, workload)?;
        Ok(self.eg)
    }

    pub fn grid(&self) -> &GridLayout {
        &self.grid
    }

    pub fn table(&self) -> &CellTable {
        &self.table
    }

    pub fn model(&self) -> &LearnedModel {
        &self.model
    }

    pub fn error_guarantee(&self) -> ErrorGuarantee {
        self.eg
    }

    pub fn len(&self) -> usize {
        self.table.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.data().is_empty()
    }

    /// Predicts and refines the cell of `p`.
    #[inline]
    pub fn locate(&self, p: &Point) -> Located {
        let pid = self.model.predict_id(p);
        let rid = get_real_cell_id(p, &self.grid, pid, &self.eg);
        let (col, row) = self.grid.cell_coords(rid);
        Located { rid, col, row }
    }

    /// Records inside the closed window `q`.
    pub fn range_query(&self, q: &RangeQuery) -> Vec<Point> {
        let mut out = Vec::new();
        self.range_query_into(q, &mut out);
        out
    }

    /// Appends the records inside `q` to `out`. Each cell of the located
    /// rectangle is fetched from the table; border cells are scanned record
    /// by record and interior cells are appended whole.
    pub fn range_query_into(&self, q: &RangeQuery, out: &mut Vec<Point>) -> RangeStats {
        let mut stats = RangeStats::default();
        if q.lo.x > q.hi.x || q.lo.y > q.hi.y {
            return stats;
        }
        let b = self.locate(&q.lo);
        let t = self.locate(&q.hi);
        let data = self.table.data();
        let scan = |range: Range<usize>, out: &mut Vec<Point>, stats: &mut RangeStats| {
            stats.scanned += range.len();
            out.extend(data[range].iter().filter(|p| q.contains(p)));
        };
        for row in b.row..=t.row {
            let edge_row = row == b.row || row == t.row;
            for col in b.col..=t.col {
                let range = self.table.cell_range(self.grid.cell_id(col, row));
                if edge_row || col == b.col || col == t.col {
                    stats.intersected += 1;
                    scan(range, out, &mut stats);
                } else {
                    stats.contained += 1;
                    out.extend_from_slice(&data[range]);
                }
            }
        }
        stats
    }

    /// The k nearest records with both pruning techniques enabled.
    pub fn knn_query(&self, q: &KnnQuery) -> Result<KnnResult> {
        self.knn_query_with(q, KnnOptions::default())
            .map(|(r, _)| r)
    }

    /// Spreading kNN search: scan the home cell, then successive Chebyshev
    /// rings of cells until `k` queued results lie within the confirmed
    /// radius of the layer processed last.
    pub fn knn_query_with(&self, q: &KnnQuery, opts: KnnOptions) -> Result<(KnnResult, KnnStats)> {
        let k = q.k;
        if k == 0 || k > self.len() {
            return Err(Error::KOutOfRange { k, len: self.len() });
        }
        let qp = q.point;
        let home = self.locate(&qp);
        let (n, m) = (self.grid.n(), self.grid.m());
        let mut search = KnnSearch::new(k, self.table.data());
        let mut stats = KnnStats::default();
        let mut layer = 0usize;

        loop {
            let r = self.confirmed_radius(&qp, home.col, home.row, layer);
            search.confirm_within(r);
            if layer == 0 {
                if let Some(block) = self.table.block(home.rid) {
                    stats.cells_scanned += 1;
                    stats.points_scanned += block.points.len();
                    search.offer_all(block.block.range(), &qp, r);
                }
            } else {
                for (col, row) in ring(home.col, home.row, layer, n, m) {
                    let Some(block) = self.table.block(self.grid.cell_id(col, row)) else {
                        continue;
                    };
                    let sigma = search.sigma();
                    if opts.closest_point_pruning && sigma.is_finite() {
                        let pc = closest_point_of_cell(&self.grid, col, row, &qp);
                        if distance(&qp, &pc) >= sigma {
                            stats.cells_pruned += 1;
                            continue;
                        }
                    }
                    let local = if opts.pivot_filtering && sigma.is_finite() {
                        pivot_filter(&block, &qp, sigma)
                    } else {
                        0..block.points.len()
                    };
                    let base = block.block.offset as usize;
                    stats.cells_scanned += 1;
                    stats.points_scanned += local.len();
                    search.offer_all(base + local.start..base + local.end, &qp, r);
                }
            }
            stats.layers = layer + 1;
            if search.confirmed >= k || layer >= n.max(m) {
                break;
            }
            layer += 1;
        }
        Ok((search.into_result(), stats))
    }

    /// Minimum distance from `q` to the outer borders of layer `layer`; a
    /// border index past the grid edge contributes `+inf`.
    fn confirmed_radius(&self, q: &Point, col: usize, row: usize, layer: usize) -> f64 {
        let (bx, by) = (self.grid.bx(), self.grid.by());
        let (n, m) = (self.grid.n(), self.grid.m());
        let inf = f64::INFINITY;
        let bottom = row.checked_sub(layer).map_or(inf, |r| q.y - by[r]);
        let top = if row + 1 + layer <= m {
            by[row + 1 + layer] - q.y
        } else {
            inf
        };
        let left = col.checked_sub(layer).map_or(inf, |c| q.x - bx[c]);
        let right = if col + 1 + layer <= n {
            bx[col + 1 + layer] - q.x
        } else {
            inf
        };
        bottom.min(top).min(left).min(right)
    }
}

fn default_training_points(dataset: &Dataset) -> Vec<Point> {
    let points = dataset.points();
    let stride = points.len().div_ceil(DEFAULT_TRAINING_SAMPLE).max(1);
    let mut sample: Vec<Point> = points.iter().step_by(stride).copied().collect();
    sample.extend(dataset.bounds().corners());
    sample
}

/// Cells of the Chebyshev ring at distance `layer` around `(col, row)`,
/// clipped to the grid.
fn ring(
    col: usize,
    row: usize,
    layer: usize,
    n: usize,
    m: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let (col, row, e) = (col as isize, row as isize, layer as isize);
    let (n, m) = (n as isize, m as isize);
    let cols = (col - e).max(0)..=(col + e).min(n - 1);
    let inner_rows = (row - e + 1).max(0)..=(row + e - 1).min(m - 1);

    let bottom = (row - e >= 0).then(|| cols.clone().map(move |c| (c, row - e)));
    let top = (row + e < m).then(|| cols.clone().map(move |c| (c, row + e)));
    let left = (col - e >= 0).then(|| inner_rows.clone().map(move |r| (col - e, r)));
    let right = (col + e < n).then(|| inner_rows.clone().map(move |r| (col + e, r)));
    bottom
        .into_iter()
        .flatten()
        .chain(top.into_iter().flatten())
        .chain(left.into_iter().flatten())
        .chain(right.into_iter().flatten())
        .map(|(c, r)| (c as usize, r as usize))
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist: f64,
    index: usize,
    confirmed: bool,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

/// Bounded max-heap of the best `k` candidates. `confirmed` counts queued
/// candidates known to lie within the confirmed radius; each candidate is
/// counted at most once and uncounted when evicted.
struct KnnSearch<'a> {
    k: usize,
    data: &'a [Point],
    heap: BinaryHeap<Candidate>,
    confirmed: usize,
}

impl<'a> KnnSearch<'a> {
    fn new(k: usize, data: &'a [Point]) -> Self {
        KnnSearch {
            k,
            data,
            heap: BinaryHeap::with_capacity(k + 1),
            confirmed: 0,
        }
    }

    /// Distance of the current k-th best, or `+inf` while the queue is short.
    #[inline]
    fn sigma(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.dist)
        }
    }

    #[inline]
    fn offer_all(&mut self, range: Range<usize>, q: &Point, r: f64) {
        for index in range {
            self.offer(index, distance(&self.data[index], q), r);
        }
    }

    #[inline]
    fn offer(&mut self, index: usize, dist: f64, r: f64) {
        let confirmed = dist <= r;
        if self.heap.len() < self.k {
            self.heap.push(Candidate {
                dist,
                index,
                confirmed,
            });
        } else if self.heap.peek().is_some_and(|worst| worst.dist > dist) {
            let evicted = self.heap.pop().expect("non-empty heap");
            if evicted.confirmed {
                self.confirmed -= 1;
            }
            self.heap.push(Candidate {
                dist,
                index,
                confirmed,
            });
        } else {
            return;
        }
        if confirmed {
            self.confirmed += 1;
        }
    }

    /// Marks queued candidates that the grown radius `r` now covers.
    fn confirm_within(&mut self, r: f64) {
        if self.confirmed == self.heap.len()
            || !self.heap.iter().any(|c| !c.confirmed && c.dist <= r)
        {
            return;
        }
        let mut items = std::mem::take(&mut self.heap).into_vec();
        for c in &mut items {
            if !c.confirmed && c.dist <= r {
                c.confirmed = true;
                self.confirmed += 1;
            }
        }
        self.heap = BinaryHeap::from(items);
    }

    fn into_result(self) -> KnnResult {
        let data = self.data;
        let neighbors = self
            .heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                point: data[c.index],
                dist: c.dist,
            })
            .collect();
        KnnResult { neighbors }
    }
}

/// Intersected and contained cells of a range query's cell rectangle.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellClasses {
    pub intersected: Vec<u64>,
    pub contained: Vec<u64>,
}

/// Splits the cell rectangle spanned by `rid_b` (bottom-left) and `rid_t`
/// (top-right) into border cells, which must be scanned, and interior
/// cells, which the window covers completely.
pub fn classify_cells(grid: &GridLayout, rid_b: u64, rid_t: u64) -> CellClasses {
    let (cb, rb) = grid.cell_coords(rid_b);
    let (ct, rt) = grid.cell_coords(rid_t);
    let mut classes = CellClasses::default();
    for row in rb..=rt {
        for col in cb..=ct {
            let id = grid.cell_id(col, row);
            if col == cb || col == ct || row == rb || row == rt {
                classes.intersected.push(id);
            } else {
                classes.contained.push(id);
            }
        }
    }
    classes
}

/// Sub-range of `block` whose pivot distance lies in
/// `[d(q, pivot) - radius, d(q, pivot) + radius]`. Every record within
/// `radius` of `q` is inside it by the triangle inequality.
pub fn pivot_filter(block: &BlockRef<'_>, q: &Point, radius: f64) -> Range<usize> {
    let dists = block.pivot_dists;
    if !radius.is_finite() || dists.len() != block.points.len() {
        return 0..block.points.len();
    }
    let dq = distance(q, &block.block.pivot_point());
    // absorbs rounding in the three computed distances
    let slack = 1e-12 * (dq + radius);
    let lo = dq - radius - slack;
    let hi = dq + radius + slack;
    let start = dists.partition_point(|&d| d < lo);
    let end = dists.partition_point(|&d| d <= hi);
    start..end.max(start)
}

/// Point of cell `(col, row)` nearest to `q`: `q` clamped to the cell.
pub fn closest_point_of_cell(grid: &GridLayout, col: usize, row: usize, q: &Point) -> Point {
    let (x0, x1, y0, y1) = grid.cell_rect(col, row);
    Point::at(q.x.clamp(x0, x1), q.y.clamp(y0, y1))
}
