//! Range-query cost model and layout selection.
//!
//! `Time = T(F) + T(B) + T_r * (N_i + N_c) + T_s * N_p`

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::{build_cell_table, build_grid};
use crate::models::{get_real_cell_id, ModelConfig, ModelKind};
use crate::point::{Dataset, Point, RangeQuery};
use crate::query::{IndexConfig, RangeStats, SprigIndex};

/// Seconds per cell retrieval and per point scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub t_retrieve: f64,
    pub t_scan: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    pub params: CostParams,
    pub retrieve_iterations: u64,
    pub scan_iterations: u64,
    /// Seconds per retrieval of each timed run.
    pub retrieve_runs: Vec<f64>,
    /// Seconds per scanned point of each timed run.
    pub scan_runs: Vec<f64>,
}

const MIN_ITERATIONS: u64 = 1_000_000;
const MIN_RUN_TIME: Duration = Duration::from_millis(100);
const RUNS: usize = 5;
/// Consecutive cells fetched per random start, like one row of a window.
const RUN_LENGTH: u64 = 16;
const OUT_CAPACITY: usize = 1 << 14;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Doubles the iteration count from `MIN_ITERATIONS` until one run takes
/// at least `MIN_RUN_TIME`, then returns per-iteration times of `RUNS` runs.
fn time_loop(mut body: impl FnMut(u64) -> u64) -> (u64, Vec<f64>) {
    let mut iterations = MIN_ITERATIONS;
    loop {
        let start = Instant::now();
        black_box(body(iterations));
        if start.elapsed() >= MIN_RUN_TIME {
            break;
        }
        iterations *= 2;
    }
    let runs = (0..RUNS)
        .map(|_| {
            let start = Instant::now();
            black_box(body(iterations));
            start.elapsed().as_secs_f64() / iterations as f64
        })
        .collect();
    (iterations, runs)
}

/// Measures the cost of fetching a cell's block from the table and
/// appending it to a result, and of testing one record against a window
/// and keeping the hits.
pub fn calibrate(dataset: &Dataset) -> Result<CalibrationReport> {
    let side = (dataset.len() as f64).sqrt().ceil().clamp(1.0, 1024.0) as usize;
    let grid = build_grid(dataset, side, side)?;
    let table = build_cell_table(&grid, dataset);
    let cells = grid.cell_count() as u64;
    let records = table.data();

    let (retrieve_iterations, retrieve_runs) = time_loop(|iters| {
        let mut out: Vec<Point> = Vec::with_capacity(2 * OUT_CAPACITY);
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut id = 0u64;
        let mut total = 0u64;
        for i in 0..iters {
            if i % RUN_LENGTH == 0 {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                id = (state >> 33) % cells;
            }
            let range = table.cell_range(black_box(id));
            out.extend_from_slice(&records[range]);
            if out.len() >= OUT_CAPACITY {
                total += out.len() as u64;
                out.clear();
            }
            id = if id + 1 == cells { 0 } else { id + 1 };
        }
        total + out.len() as u64
    });

    // Each block is tested against the left half of its own cell, so about
    // half of the records match in no predictable order.
    let side = (dataset.len() as f64 / 64.0)
        .sqrt()
        .ceil()
        .clamp(1.0, 1024.0) as usize;
    let grid = build_grid(dataset, side, side)?;
    let table = build_cell_table(&grid, dataset);
    let records = table.data();
    let cuts: Vec<(std::ops::Range<usize>, RangeQuery)> = table
        .blocks()
        .iter()
        .map(|b| {
            let (col, row) = grid.cell_coords(b.cell_id);
            let (x0, x1, y0, y1) = grid.cell_rect(col, row);
            (
                b.range(),
                RangeQuery::new(x0, y0, 0.5 * (x0 + x1), y1).expect("ordered cell rect"),
            )
        })
        .collect();
    let (scan_iterations, scan_runs) = time_loop(|iters| {
        let mut out: Vec<Point> = Vec::with_capacity(2 * OUT_CAPACITY);
        let mut total = 0u64;
        let mut left = iters as usize;
        while left > 0 {
            for (range, q) in &cuts {
                let q = black_box(q);
                out.extend(records[range.clone()].iter().filter(|p| q.contains(p)));
                left = left.saturating_sub(range.len());
                if left == 0 {
                    break;
                }
            }
            total += out.len() as u64;
            out.clear();
        }
        total
    });

    let params = CostParams {
        t_retrieve: median(&mut retrieve_runs.clone()),
        t_scan: median(&mut scan_runs.clone()),
    };
    Ok(CalibrationReport {
        params,
        retrieve_iterations,
        scan_iterations,
        retrieve_runs,
        scan_runs,
    })
}

/// Per-query mean cost terms for one layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    /// Requested layout.
    pub n: usize,
    pub m: usize,
    /// Layout after boundary placement; smaller when a dimension has too
    /// few distinct values.
    pub effective_n: usize,
    pub effective_m: usize,
    pub t_predict: f64,
    pub t_search: f64,
    pub n_intersected: f64,
    pub n_contained: f64,
    pub n_scanned_points: f64,
    pub total: f64,
}

impl CostEstimate {
    pub fn is_effective(&self) -> bool {
        self.n == self.effective_n && self.m == self.effective_m
    }
}

pub fn total_cost(
    params: &CostParams,
    t_predict: f64,
    t_search: f64,
    n_intersected: f64,
    n_contained: f64,
    n_scanned_points: f64,
) -> f64 {
    t_predict
        + t_search
        + params.t_retrieve * (n_intersected + n_contained)
        + params.t_scan * n_scanned_points
}

/// Model and refinement settings shared by every tuning candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TuneConfig {
    pub kind: ModelKind,
    pub model: ModelConfig,
}

/// Window corners, which are what the range path predicts.
pub fn workload_points(workload: &[RangeQuery]) -> Vec<Point> {
    workload.iter().flat_map(|q| [q.lo, q.hi]).collect()
}

/// Minimum wall time spent timing each of the predict and search terms.
const TERM_TIME: Duration = Duration::from_millis(20);

fn time_per_pass(mut pass: impl FnMut() -> u64) -> f64 {
    black_box(pass());
    let mut passes = 0u32;
    let start = Instant::now();
    while passes == 0 || start.elapsed() < TERM_TIME {
        black_box(pass());
        passes += 1;
    }
    start.elapsed().as_secs_f64() / passes as f64
}

/// Cell counts of a range query without executing it.
pub fn range_counts(index: &SprigIndex, q: &RangeQuery) -> RangeStats {
    let mut stats = RangeStats::default();
    if q.lo.x > q.hi.x || q.lo.y > q.hi.y {
        return stats;
    }
    let b = index.locate(&q.lo);
    let t = index.locate(&q.hi);
    let (grid, table) = (index.grid(), index.table());
    for row in b.row..=t.row {
        let edge_row = row == b.row || row == t.row;
        for col in b.col..=t.col {
            if edge_row || col == b.col || col == t.col {
                stats.intersected += 1;
                stats.scanned += table.size_of(grid.cell_id(col, row));
            } else {
                stats.contained += 1;
            }
        }
    }
    stats
}

/// Cost terms of `workload` against an already built index.
pub fn estimate_index_cost(
    params: &CostParams,
    index: &SprigIndex,
    workload: &[RangeQuery],
) -> Result<CostEstimate> {
    if workload.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let corners = workload_points(workload);
    let model = index.model();
    let grid = index.grid();
    let eg = index.error_guarantee();
    let pids: Vec<u64> = corners.iter().map(|p| model.predict_id(p)).collect();

    let predict_pass = time_per_pass(|| {
        corners
            .iter()
            .map(|p| model.predict(black_box(p)).to_bits())
            .fold(0, u64::wrapping_add)
    });
    let search_pass = time_per_pass(|| {
        corners
            .iter()
            .zip(&pids)
            .map(|(p, &pid)| get_real_cell_id(black_box(p), grid, pid, &eg))
            .fold(0, u64::wrapping_add)
    });

    let mut sums = (0usize, 0usize, 0usize);
    for q in workload {
        let s = range_counts(index, q);
        sums.0 += s.intersected;
        sums.1 += s.contained;
        sums.2 += s.scanned;
    }
    let count = workload.len() as f64;
    let t_predict = predict_pass / count;
    let t_search = search_pass / count;
    let n_intersected = sums.0 as f64 / count;
    let n_contained = sums.1 as f64 / count;
    let n_scanned_points = sums.2 as f64 / count;
    Ok(CostEstimate {
        n: grid.n(),
        m: grid.m(),
        effective_n: grid.n(),
        effective_m: grid.m(),
        t_predict,
        t_search,
        n_intersected,
        n_contained,
        n_scanned_points,
        total: total_cost(
            params,
            t_predict,
            t_search,
            n_intersected,
            n_contained,
            n_scanned_points,
        ),
    })
}

/// Builds the index for layout `(n, m)`, trains its error guarantee on the
/// workload and estimates the workload's mean cost.
pub fn estimate_cost(
    params: &CostParams,
    dataset: &Dataset,
    layout: (usize, usize),
    workload: &[RangeQuery],
    config: &TuneConfig,
) -> Result<CostEstimate> {
    if workload.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let index_config = IndexConfig {
        n: layout.0,
        m: layout.1,
        kind: config.kind,
        model: config.model,
    };
    let mut index = SprigIndex::build(dataset, &index_config)?;
    index.train(&workload_points(workload))?;
    let mut estimate = estimate_index_cost(params, &index, workload)?;
    estimate.n = layout.0;
    estimate.m = layout.1;
    Ok(estimate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    /// Requested layout of the cheapest candidate.
    pub best: (usize, usize),
    /// Every candidate, ascending by estimated total.
    pub table: Vec<CostEstimate>,
}

/// Estimates every candidate layout and picks the cheapest.
pub fn tune_layout(
    params: &CostParams,
    dataset: &Dataset,
    workload: &[RangeQuery],
    candidates: &[(usize, usize)],
    config: &TuneConfig,
) -> Result<TuneResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate layouts".into()));
    }
    let mut table = candidates
        .iter()
        .map(|&layout| estimate_cost(params, dataset, layout, workload, config))
        .collect::<Result<Vec<_>>>()?;
    table.sort_by(|a, b| a.total.total_cmp(&b.total));
    Ok(TuneResult {
        best: (table[0].n, table[0].m),
        table,
    })
}

/// Largest columns per dimension in a default ladder.
pub const LADDER_CAP: usize = 4096;

/// Powers of two from 2 up to `2^ceil(log2 sqrt(len))`, capped.
pub fn ladder_sides(len: usize) -> Vec<usize> {
    let top = (len.max(4) as f64).sqrt().log2().ceil() as u32;
    (1..=top)
        .map(|e| 1usize << e)
        .take_while(|&s| s <= LADDER_CAP)
        .collect()
}

/// The ladder crossed with itself.
pub fn default_ladder(len: usize) -> Vec<(usize, usize)> {
    let sides = ladder_sides(len);
    sides
        .iter()
        .flat_map(|&n| sides.iter().map(move |&m| (n, m)))
        .collect()
}
