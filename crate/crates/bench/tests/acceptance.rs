//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Criteria run one after another because several of them
//! time queries.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sprig::grid::{build_cell_table, compute_pivots};
use sprig::models::{fit_model, get_real_cell_id, train_error_guarantee};
use sprig::point::generate_synthetic;
use sprig::query::{pivot_filter, KnnOptions};
use sprig::storage::sprig_storage;
use sprig::tuner::{calibrate, default_ladder, tune_layout, TuneConfig};
use sprig::{
    brute_knn, brute_range, build_grid, Dataset, Distribution, ErrorGuarantee, IndexConfig, KdTree,
    KnnQuery, ModelConfig, ModelKind, Point, RangeQuery, SprigIndex,
};
use sprig_bench::accuracy::{accuracy_probes, measure_model_accuracy};
use sprig_bench::runner::{
    benchmark_engines, mean_latency, run_benchmark, BenchConfig, Built, Engine,
};
use sprig_bench::workload::{generate_knn_workload, generate_range_workload, Queries, Workload};

const SELECTIVITIES: [f64; 5] = [0.001, 0.005, 0.01, 0.015, 0.02];
const KS: [usize; 5] = [4, 8, 16, 32, 64];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sorted_ids(points: &[Point]) -> Vec<u64> {
    let mut ids: Vec<u64> = points.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    ids
}

fn range_queries(w: &Workload) -> Vec<RangeQuery> {
    w.range_queries()
}

fn knn_queries(w: &Workload) -> Vec<KnnQuery> {
    w.groups
        .iter()
        .flat_map(|g| match &g.queries {
            Queries::Knn(q) => q.clone(),
            Queries::Range(_) => Vec::new(),
        })
        .collect()
}

/// Distance lists equal to 1e-12 relative, element by element after sorting.
fn same_distances(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x == y || (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

struct Corpus {
    name: String,
    dataset: Dataset,
    range: Workload,
    knn: Workload,
}

fn correctness_corpora() -> Vec<Corpus> {
    let mut out = Vec::new();
    for dist in [Distribution::Uniform, Distribution::GaussianClusters] {
        for seed in 1..=3u64 {
            let dataset = generate_synthetic(100_000, dist, seed).unwrap();
            let range = generate_range_workload(&dataset, &SELECTIVITIES, 100, seed + 100).unwrap();
            let knn = generate_knn_workload(&dataset, &KS, 100, seed + 200).unwrap();
            out.push(Corpus {
                name: format!("{dist}/seed{seed}"),
                dataset,
                range,
                knn,
            });
        }
    }
    out
}

fn correctness_index(c: &Corpus, w: &Workload) -> SprigIndex {
    let mut index = SprigIndex::build(&c.dataset, &IndexConfig::new(100, 100)).unwrap();
    index.train(&w.training_points()).unwrap();
    index
}

fn range_correctness(corpora: &[Corpus]) -> Outcome {
    let mut checked = 0;
    let mut wrong = Vec::new();
    for c in corpora {
        let index = correctness_index(c, &c.range);
        for (i, q) in range_queries(&c.range).iter().enumerate() {
            checked += 1;
            if sorted_ids(&index.range_query(q)) != sorted_ids(&brute_range(&c.dataset, q)) {
                wrong.push(format!("{}#{i}", c.name));
            }
        }
    }
    check(
        wrong.is_empty() && checked == 6 * 500,
        format!(
            "{checked} windows on 6 datasets, {} mismatches {:?}",
            wrong.len(),
            wrong.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn knn_correctness(corpora: &[Corpus]) -> Outcome {
    let mut checked = 0;
    let mut wrong = Vec::new();
    for c in corpora {
        let index = correctness_index(c, &c.knn);
        for (i, q) in knn_queries(&c.knn).iter().enumerate() {
            checked += 1;
            let got = index.knn_query(q).unwrap().distances();
            let want = brute_knn(&c.dataset, q).unwrap().distances();
            if !same_distances(&got, &want) {
                wrong.push(format!("{}#{i}", c.name));
            }
        }
    }
    check(
        wrong.is_empty() && checked == 6 * 500,
        format!(
            "{checked} queries on 6 datasets, {} mismatches {:?}",
            wrong.len(),
            wrong.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn in_bounds_probes(dataset: &Dataset, count: usize, seed: u64) -> Vec<Point> {
    let b = dataset.bounds();
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Point::at(
                rng.gen_range(b.x_min..=b.x_max),
                rng.gen_range(b.y_min..=b.y_max),
            )
        })
        .collect()
}

fn bilinear_bound() -> Outcome {
    let dataset = generate_synthetic(100_000, Distribution::GaussianClusters, 7).unwrap();
    let probes = in_bounds_probes(&dataset, 10_000, 8);
    let mut details = Vec::new();
    let mut ok = true;
    for side in [10usize, 20, 50, 100] {
        let grid = build_grid(&dataset, side, side).unwrap();
        let n = grid.n();
        let model = fit_model(&grid, ModelKind::Bilinear, &ModelConfig::default()).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &probes {
            let diff = model.predict(p) - grid.cell_id_of(p) as f64;
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        let eg = train_error_guarantee(&model, &grid, &probes).unwrap();
        ok &= lo >= 0.0 && hi <= (n + 1) as f64 && eg.eg <= (n + 1) as f64 && grid.m() == side;
        details.push(format!(
            "{n}x{}: diff in [{lo:.3}, {hi:.3}], eg {:.3} <= {}",
            grid.m(),
            eg.eg,
            n + 1
        ));
    }
    check(ok, details.join("; "))
}

fn refinement_exactness() -> Outcome {
    let dataset = generate_synthetic(100_000, Distribution::GaussianClusters, 9).unwrap();
    let probes = in_bounds_probes(&dataset, 10_000, 10);
    let mut rng = StdRng::seed_from_u64(11);
    let mut wrong = 0usize;
    let mut checked = 0usize;
    for kind in ModelKind::ALL {
        let grid = build_grid(&dataset, 40, 30).unwrap();
        let model = fit_model(&grid, kind, &ModelConfig::default()).unwrap();
        let eg = train_error_guarantee(&model, &grid, &probes).unwrap();
        let cells = grid.cell_count() as u64;
        for p in &probes {
            let truth = grid.cell_id_of(p);
            checked += 2;
            if get_real_cell_id(p, &grid, model.predict_id(p), &eg) != truth {
                wrong += 1;
            }
            // zero guarantee with a deliberately wrong prediction forces the
            // widening search
            let perturbed =
                (truth as i64 + rng.gen_range(-500i64..=500)).clamp(0, cells as i64 - 1) as u64;
            if get_real_cell_id(p, &grid, perturbed, &ErrorGuarantee::ZERO) != truth {
                wrong += 1;
            }
        }
    }
    check(
        wrong == 0,
        format!("{checked} refinements over 5 model kinds, {wrong} wrong"),
    )
}

fn pivot_soundness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(12);
    let mut misses = 0usize;
    let mut kept = 0usize;
    let mut total = 0usize;
    for case in 0..1000 {
        let count = rng.gen_range(1..200);
        let spread: f64 = [1e-6, 1e-3, 1.0, 1e3][case % 4];
        let offset: f64 = rng.gen_range(-1e4..1e4);
        let coords: Vec<(f64, f64)> = (0..count)
            .map(|_| {
                (
                    offset + spread * rng.gen::<f64>(),
                    offset + spread * rng.gen::<f64>(),
                )
            })
            .collect();
        let dataset = Dataset::from_coords(coords).unwrap();
        let grid = build_grid(&dataset, 1, 1).unwrap();
        let table = compute_pivots(build_cell_table(&grid, &dataset));
        let block = table.block(0).unwrap();
        let q = Point::at(
            offset + spread * rng.gen_range(-0.5..1.5),
            offset + spread * rng.gen_range(-0.5..1.5),
        );
        // radius at an actual record distance puts a record on the boundary
        let pick = &block.points[rng.gen_range(0..block.points.len())];
        let radius = if case % 2 == 0 {
            sprig::point::distance(pick, &q)
        } else {
            spread * rng.gen::<f64>()
        };
        let range = pivot_filter(&block, &q, radius);
        total += block.points.len();
        kept += range.len();
        for (i, p) in block.points.iter().enumerate() {
            if sprig::point::distance(p, &q) <= radius && !range.contains(&i) {
                misses += 1;
            }
        }
    }
    check(
        misses == 0,
        format!("1000 cases, {misses} records within radius outside the candidate range; kept {kept}/{total} records"),
    )
}

fn pruning_neutrality(corpora: &[Corpus]) -> Outcome {
    let mut wrong = 0usize;
    let mut count_violations = 0usize;
    let (mut with, mut without) = (0usize, 0usize);
    for c in corpora {
        let index = correctness_index(c, &c.knn);
        for q in knn_queries(&c.knn) {
            let (a, sa) = index.knn_query_with(&q, KnnOptions::default()).unwrap();
            let (b, sb) = index.knn_query_with(&q, KnnOptions::UNPRUNED).unwrap();
            if a.distances() != b.distances() {
                wrong += 1;
            }
            if sa.points_scanned > sb.points_scanned {
                count_violations += 1;
            }
            with += sa.points_scanned;
            without += sb.points_scanned;
        }
    }
    check(
        wrong == 0 && count_violations == 0,
        format!(
            "3000 queries, {wrong} result differences, {count_violations} count increases; records scanned {with} pruned vs {without} unpruned"
        ),
    )
}

fn model_comparison() -> Outcome {
    let dataset = generate_synthetic(200_000, Distribution::GaussianClusters, 13).unwrap();
    let probes = accuracy_probes(&dataset, 10_000, 14);
    let kinds = [ModelKind::Bilinear, ModelKind::Shepard, ModelKind::Rbf];
    let rows = measure_model_accuracy(
        &dataset,
        &[(50, 50)],
        &kinds,
        &probes,
        &ModelConfig::default(),
    )
    .unwrap();
    let eg = |kind: ModelKind| {
        rows.iter()
            .find(|r| r.kind == kind)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|a| a.eg.eg)
    };
    let (Some(bilinear), Some(shepard)) = (eg(ModelKind::Bilinear), eg(ModelKind::Shepard)) else {
        return Err(format!("fit failed: {rows:?}"));
    };
    // an RBF over budget counts as worse than any finite error
    let rbf = eg(ModelKind::Rbf).unwrap_or(f64::INFINITY);
    let layout_ok = rows.iter().all(|r| r.n == 50 && r.m == 50);
    check(
        layout_ok && bilinear == 51.0 && bilinear < shepard && bilinear < rbf,
        format!("50x50 max error: bilinear {bilinear}, shepard {shepard:.1}, rbf {rbf:.1}"),
    )
}

struct Large {
    dataset: Dataset,
    workload: Workload,
    layout: (usize, usize),
}

fn large_setup() -> Large {
    let dataset = generate_synthetic(1_000_000, Distribution::Uniform, 15).unwrap();
    let workload = generate_range_workload(&dataset, &[0.001], 100, 16).unwrap();
    let params = calibrate(&dataset).unwrap().params;
    let tuned = tune_layout(
        &params,
        &dataset,
        &workload.range_queries(),
        &default_ladder(dataset.len()),
        &TuneConfig::default(),
    )
    .unwrap();
    Large {
        dataset,
        workload,
        layout: tuned.best,
    }
}

fn performance(large: &Large) -> Outcome {
    let config = BenchConfig {
        engines: vec![Engine::Sprig, Engine::Brute],
        index: IndexConfig::new(large.layout.0, large.layout.1),
        leaf_capacity: 16,
        reps: 3,
    };
    let report =
        run_benchmark(&large.dataset, &large.workload, &config).map_err(|e| e.to_string())?;
    let group = &large.workload.groups[0].label;
    let sprig = report.row(Engine::Sprig, group).unwrap().latency.mean;
    let brute = report.row(Engine::Brute, group).unwrap().latency.mean;
    let speedup = brute / sprig;

    // the runner must refuse to report when engines disagree: SPRIG over
    // the data minus one record that the first window selects
    let Queries::Range(qs) = &large.workload.groups[0].queries else {
        return Err("range workload expected".into());
    };
    let victim = brute_range(&large.dataset, &qs[0])[0].id;
    let fewer = Dataset::new(
        large
            .dataset
            .points()
            .iter()
            .copied()
            .filter(|p| p.id != victim)
            .collect(),
    )
    .unwrap();
    let broken =
        SprigIndex::build(&fewer, &IndexConfig::new(large.layout.0, large.layout.1)).unwrap();
    let engines = [
        (Built::Brute(&large.dataset), 0.0),
        (Built::Sprig(broken), 0.0),
    ];
    let tampered =
        matches!(benchmark_engines(&engines, &large.workload, 3), Err(e) if e.exit_code() == 2);
    check(
        speedup >= 5.0 && tampered,
        format!(
            "layout {}x{}: sprig {:.2} us, brute {:.2} us, speedup {speedup:.0}x; mismatch abort {}",
            large.layout.0,
            large.layout.1,
            sprig * 1e6,
            brute * 1e6,
            if tampered { "observed" } else { "MISSING" }
        ),
    )
}

fn storage(large: &Large) -> Outcome {
    let mut index = SprigIndex::build(
        &large.dataset,
        &IndexConfig::new(large.layout.0, large.layout.1),
    )
    .unwrap();
    index.train(&large.workload.training_points()).unwrap();
    let s = sprig_storage(&index);
    let (n, m) = (index.grid().n(), index.grid().m());
    let reconciles = s.boundary_reals == n + m + 2
        && s.boundary_bytes == (n + m + 2) * 8
        && s.total()
            == s.boundary_bytes
                + s.block_bytes
                + s.directory_bytes
                + s.pivot_dist_bytes
                + s.model_bytes;

    // the k-d tree is tuned over leaf capacity by measured latency
    let queries = &large.workload.groups[0].queries;
    let mut best: Option<(f64, usize, usize)> = None;
    for leaf in [1usize, 2, 4, 8, 16, 32, 64] {
        let tree = KdTree::build(&large.dataset, leaf).unwrap();
        let bytes = tree.storage_bytes();
        let t = mean_latency(&Built::KdTree(tree), queries, 3).unwrap();
        if best.is_none_or(|(bt, _, _)| t < bt) {
            best = Some((t, leaf, bytes));
        }
    }
    let (_, leaf, kd_bytes) = best.unwrap();
    let ratio = kd_bytes as f64 / s.total() as f64;
    let ratio_without = kd_bytes as f64 / s.total_without_pivot_dists() as f64;
    check(
        reconciles && ratio >= 10.0,
        format!(
            "sprig {n}x{m}: {} B ({} boundary + {} blocks + {} directory + {} pivot distances + {} model), {} B without pivot distances; \
             k-d tree leaf {leaf}: {kd_bytes} B; ratio {ratio:.2} (needs >= 10), {ratio_without:.2} without pivot distances; \
             boundary formula {}",
            s.total(),
            s.boundary_bytes,
            s.block_bytes,
            s.directory_bytes,
            s.pivot_dist_bytes,
            s.model_bytes,
            s.total_without_pivot_dists(),
            if reconciles { "reconciles" } else { "DOES NOT reconcile" }
        ),
    )
}

fn tuner_validity() -> Outcome {
    let dataset = generate_synthetic(100_000, Distribution::Uniform, 17).unwrap();
    let workload = generate_range_workload(&dataset, &SELECTIVITIES, 40, 18).unwrap();
    let queries = workload.range_queries();
    let candidates = default_ladder(dataset.len());
    let params = calibrate(&dataset).unwrap().params;
    let tuned = tune_layout(
        &params,
        &dataset,
        &queries,
        &candidates,
        &TuneConfig::default(),
    )
    .unwrap();

    let all = Queries::Range(queries.clone());
    let mut measured = Vec::with_capacity(candidates.len());
    for &(n, m) in &candidates {
        let mut index = SprigIndex::build(&dataset, &IndexConfig::new(n, m)).unwrap();
        index.train(&workload.training_points()).unwrap();
        let engine = Built::Sprig(index);
        let mut runs: Vec<f64> = (0..5)
            .map(|_| mean_latency(&engine, &all, 1).unwrap())
            .collect();
        runs.sort_by(f64::total_cmp);
        measured.push(((n, m), runs[2]));
    }
    let (best_layout, best) = measured
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let chosen = measured.iter().find(|(l, _)| *l == tuned.best).unwrap().1;
    let excess = chosen / best - 1.0;
    check(
        candidates.len() >= 9 && excess <= 0.20,
        format!(
            "{} candidates; chosen {}x{} at {:.2} us, measured best {}x{} at {:.2} us, excess {:.1}%",
            candidates.len(),
            tuned.best.0,
            tuned.best.1,
            chosen * 1e6,
            best_layout.0,
            best_layout.1,
            best * 1e6,
            excess * 100.0
        ),
    )
}

fn run(number: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("criterion {number:>2} {tag} {title} [{secs:.1}s]: {detail}");
    ok
}

fn main() -> ExitCode {
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);

    let mut results = Vec::new();
    let corpora = if [1, 2, 6].iter().any(|&n| wanted(n)) {
        correctness_corpora()
    } else {
        Vec::new()
    };
    if wanted(1) {
        results.push(run(1, "range correctness", || range_correctness(&corpora)));
    }
    if wanted(2) {
        results.push(run(2, "kNN correctness", || knn_correctness(&corpora)));
    }
    if wanted(3) {
        results.push(run(3, "bilinear error bound", bilinear_bound));
    }
    if wanted(4) {
        results.push(run(4, "refinement exactness", refinement_exactness));
    }
    if wanted(5) {
        results.push(run(5, "pivot-filter soundness", pivot_soundness));
    }
    if wanted(6) {
        results.push(run(6, "pruning neutrality", || {
            pruning_neutrality(&corpora)
        }));
    }
    drop(corpora);
    if wanted(7) {
        results.push(run(7, "model-comparison trend", model_comparison));
    }
    if wanted(8) || wanted(9) {
        let start = Instant::now();
        let large = large_setup();
        println!(
            "tuned layout on 1M uniform points: {}x{} ({:.1}s)",
            large.layout.0,
            large.layout.1,
            start.elapsed().as_secs_f64()
        );
        if wanted(8) {
            results.push(run(8, "performance sanity", || performance(&large)));
        }
        if wanted(9) {
            results.push(run(9, "storage trend", || storage(&large)));
        }
    }
    if wanted(10) {
        results.push(run(10, "tuner validity", tuner_validity));
    }
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
