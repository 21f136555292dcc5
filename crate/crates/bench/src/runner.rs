//! Timed query execution across engines with result cross-checking.

use std::fmt;
use std::fmt::Write as _;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use sprig::query::KnnOptions;
use sprig::storage::sprig_storage;
use sprig::{
    brute_knn, brute_range, Dataset, IndexConfig, KdTree, KnnQuery, KnnResult, Point, RangeQuery,
    SprigIndex,
};

use crate::workload::{Group, Queries, Workload};
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    Sprig,
    KdTree,
    Brute,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Sprig => "sprig",
            Engine::KdTree => "kdtree",
            Engine::Brute => "brute",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = sprig::Error;

    fn from_str(s: &str) -> sprig::Result<Self> {
        match s {
            "sprig" => Ok(Engine::Sprig),
            "kdtree" => Ok(Engine::KdTree),
            "brute" => Ok(Engine::Brute),
            other => Err(sprig::Error::InvalidArgument(format!(
                "unknown engine '{other}'"
            ))),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_fold(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// FNV-1a over the ascending result ids.
pub fn range_checksum(points: &[Point]) -> u64 {
    let mut ids: Vec<u64> = points.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    fnv_fold(ids)
}

/// FNV-1a over the ascending neighbour distances. Ids are left out because
/// records tied at the k-th distance may legitimately differ per engine.
pub fn knn_checksum(result: &KnnResult) -> u64 {
    let mut d = result.distances();
    d.sort_by(f64::total_cmp);
    fnv_fold(d.into_iter().map(f64::to_bits))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryOutcome {
    pub count: usize,
    pub checksum: u64,
}

/// An engine ready to answer queries.
#[allow(clippy::large_enum_variant)]
pub enum Built<'a> {
    Sprig(SprigIndex),
    KdTree(KdTree),
    Brute(&'a Dataset),
}

impl Built<'_> {
    pub fn engine(&self) -> Engine {
        match self {
            Built::Sprig(_) => Engine::Sprig,
            Built::KdTree(_) => Engine::KdTree,
            Built::Brute(_) => Engine::Brute,
        }
    }

    /// Index bytes excluding the records; 0 for the scan.
    pub fn storage_bytes(&self) -> usize {
        match self {
            Built::Sprig(index) => sprig_storage(index).total(),
            Built::KdTree(tree) => tree.storage_bytes(),
            Built::Brute(_) => 0,
        }
    }

    /// Runs a range query into `out` and returns the records tested.
    pub fn range(&self, q: &RangeQuery, out: &mut Vec<Point>) -> usize {
        match self {
            Built::Sprig(index) => index.range_query_into(q, out).scanned,
            Built::KdTree(tree) => tree.range_query_into(q, out),
            Built::Brute(ds) => {
                out.extend(brute_range(ds, q));
                ds.len()
            }
        }
    }

    /// Runs a kNN query and returns it with the records whose distance was
    /// computed, where the engine tracks that.
    pub fn knn(&self, q: &KnnQuery) -> sprig::Result<(KnnResult, Option<usize>)> {
        match self {
            Built::Sprig(index) => index
                .knn_query_with(q, KnnOptions::default())
                .map(|(r, s)| (r, Some(s.points_scanned))),
            Built::KdTree(tree) => tree.knn_query(q).map(|r| (r, None)),
            Built::Brute(ds) => brute_knn(ds, q).map(|r| (r, Some(ds.len()))),
        }
    }

    /// Result count and checksum of every query, plus the total records
    /// scanned where known.
    pub fn outcomes(&self, queries: &Queries) -> sprig::Result<(Vec<QueryOutcome>, Option<usize>)> {
        let mut out = Vec::new();
        let mut scanned = Some(0usize);
        let outcomes = match queries {
            Queries::Range(qs) => qs
                .iter()
                .map(|q| {
                    out.clear();
                    let s = self.range(q, &mut out);
                    scanned = scanned.map(|t| t + s);
                    QueryOutcome {
                        count: out.len(),
                        checksum: range_checksum(&out),
                    }
                })
                .collect(),
            Queries::Knn(qs) => qs
                .iter()
                .map(|q| {
                    let (r, s) = self.knn(q)?;
                    scanned = scanned.zip(s).map(|(a, b)| a + b);
                    Ok(QueryOutcome {
                        count: r.len(),
                        checksum: knn_checksum(&r),
                    })
                })
                .collect::<sprig::Result<_>>()?,
        };
        Ok((outcomes, scanned))
    }

    /// Seconds per query for each query of one timed pass.
    pub fn time_pass(&self, queries: &Queries) -> sprig::Result<Vec<f64>> {
        let mut out = Vec::new();
        match queries {
            Queries::Range(qs) => Ok(qs
                .iter()
                .map(|q| {
                    out.clear();
                    let t = Instant::now();
                    self.range(black_box(q), &mut out);
                    black_box(out.len());
                    t.elapsed().as_secs_f64()
                })
                .collect()),
            Queries::Knn(qs) => qs
                .iter()
                .map(|q| {
                    let t = Instant::now();
                    let r = self.knn(black_box(q))?;
                    black_box(r);
                    Ok(t.elapsed().as_secs_f64())
                })
                .collect(),
        }
    }
}

/// Mean seconds per query over `reps` passes after one untimed pass.
pub fn mean_latency(engine: &Built<'_>, queries: &Queries, reps: usize) -> sprig::Result<f64> {
    engine.time_pass(queries)?;
    let mut total = 0.0;
    for _ in 0..reps.max(1) {
        total += engine.time_pass(queries)?.iter().sum::<f64>();
    }
    Ok(total / (reps.max(1) * queries.len().max(1)) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub engines: Vec<Engine>,
    pub index: IndexConfig,
    pub leaf_capacity: usize,
    /// Timed passes after the warm-up pass; at least 3.
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            engines: vec![Engine::Sprig, Engine::KdTree, Engine::Brute],
            index: IndexConfig::new(64, 64),
            leaf_capacity: 16,
            reps: 3,
        }
    }
}

pub const MIN_REPS: usize = 3;

pub fn build_engine<'a>(
    engine: Engine,
    dataset: &'a Dataset,
    workload: &Workload,
    config: &BenchConfig,
) -> sprig::Result<Built<'a>> {
    Ok(match engine {
        Engine::Sprig => {
            let mut index = SprigIndex::build(dataset, &config.index)?;
            let training = workload.training_points();
            if !training.is_empty() {
                index.train(&training)?;
            }
            Built::Sprig(index)
        }
        Engine::KdTree => Built::KdTree(KdTree::build(dataset, config.leaf_capacity)?),
        Engine::Brute => Built::Brute(dataset),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Latency {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

impl Latency {
    pub fn of(samples: &mut [f64]) -> Latency {
        samples.sort_by(f64::total_cmp);
        let len = samples.len();
        if len == 0 {
            return Latency {
                mean: 0.0,
                median: 0.0,
                p99: 0.0,
            };
        }
        let rank = ((0.99 * len as f64).ceil() as usize).clamp(1, len) - 1;
        Latency {
            mean: samples.iter().sum::<f64>() / len as f64,
            median: samples[len / 2],
            p99: samples[rank],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub engine: Engine,
    pub group: String,
    pub queries: usize,
    pub latency: Latency,
    pub result_count: u64,
    /// Fold of the per-query checksums.
    pub checksum: u64,
    /// Mean records scanned per query, where the engine reports it.
    pub scanned_per_query: Option<f64>,
    pub storage_bytes: usize,
    pub build_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, engine: Engine, group: &str) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.engine == engine && r.group == group)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "engine,group,queries,mean_us,median_us,p99_us,result_count,checksum,scanned_per_query,storage_bytes,build_s\n",
        );
        for r in &self.rows {
            let scanned = r
                .scanned_per_query
                .map(|s| format!("{s:.1}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.3},{:.3},{},{:016x},{},{},{:.4}",
                r.engine,
                r.group,
                r.queries,
                r.latency.mean * 1e6,
                r.latency.median * 1e6,
                r.latency.p99 * 1e6,
                r.result_count,
                r.checksum,
                scanned,
                r.storage_bytes,
                r.build_seconds
            );
        }
        out
    }
}

fn mismatch(
    group: &Group,
    first: (Engine, &[QueryOutcome]),
    other: (Engine, &[QueryOutcome]),
) -> Option<BenchError> {
    let diffs: Vec<String> = first
        .1
        .iter()
        .zip(other.1)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .take(5)
        .map(|(i, (a, b))| {
            format!(
                "query {i}: {} count={} checksum={:016x}, {} count={} checksum={:016x}",
                first.0, a.count, a.checksum, other.0, b.count, b.checksum
            )
        })
        .collect();
    (!diffs.is_empty()).then(|| BenchError::ChecksumMismatch {
        group: group.label.clone(),
        detail: diffs.join("; "),
    })
}

/// Builds each engine and benchmarks them with [`benchmark_engines`].
pub fn run_benchmark(
    dataset: &Dataset,
    workload: &Workload,
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    if config.engines.is_empty() {
        return Err(sprig::Error::InvalidArgument("no engines selected".into()).into());
    }
    let mut built = Vec::with_capacity(config.engines.len());
    for &engine in &config.engines {
        let start = Instant::now();
        let b = build_engine(engine, dataset, workload, config)?;
        built.push((b, start.elapsed().as_secs_f64()));
    }
    benchmark_engines(&built, workload, config.reps)
}

/// Runs one untimed pass per group to collect result checksums, then
/// `reps` timed passes. Any checksum disagreement between engines aborts
/// before latencies are reported. Engines come with their build seconds.
pub fn benchmark_engines(
    engines: &[(Built<'_>, f64)],
    workload: &Workload,
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if workload.query_count() == 0 {
        return Err(sprig::Error::EmptyWorkload.into());
    }
    let reps = reps.max(MIN_REPS);
    let mut outcomes = Vec::with_capacity(engines.len());
    for (built, _) in engines {
        let per_group = workload
            .groups
            .iter()
            .map(|g| built.outcomes(&g.queries))
            .collect::<sprig::Result<Vec<_>>>()?;
        outcomes.push(per_group);
    }
    for (gi, group) in workload.groups.iter().enumerate() {
        let first = (engines[0].0.engine(), outcomes[0][gi].0.as_slice());
        for (e, (built, _)) in engines.iter().enumerate().skip(1) {
            if let Some(err) = mismatch(group, first, (built.engine(), &outcomes[e][gi].0)) {
                return Err(err);
            }
        }
    }

    let mut report = BenchReport::default();
    for ((built, build_seconds), per_group) in engines.iter().zip(&outcomes) {
        let storage_bytes = built.storage_bytes();
        for (group, (results, scanned)) in workload.groups.iter().zip(per_group) {
            let mut samples = Vec::with_capacity(reps * group.queries.len());
            for _ in 0..reps {
                samples.extend(built.time_pass(&group.queries)?);
            }
            let queries = group.queries.len();
            report.rows.push(BenchRow {
                engine: built.engine(),
                group: group.label.clone(),
                queries,
                latency: Latency::of(&mut samples),
                result_count: results.iter().map(|o| o.count as u64).sum(),
                checksum: fnv_fold(results.iter().map(|o| o.checksum)),
                scanned_per_query: scanned.map(|s| s as f64 / queries.max(1) as f64),
                storage_bytes,
                build_seconds: *build_seconds,
            });
        }
    }
    Ok(report)
}
