use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sprig::point::{generate_synthetic, load_points, write_points};
use sprig::storage::sprig_storage;
use sprig::tuner::{calibrate, default_ladder, tune_layout, TuneConfig};
use sprig::{dump, Dataset, Distribution, Error, IndexConfig, ModelConfig, ModelKind, SprigIndex};
use sprig_bench::accuracy::{accuracy_probes, format_accuracy, measure_model_accuracy};
use sprig_bench::runner::{build_engine, run_benchmark, BenchConfig, Built, Engine};
use sprig_bench::workload::{
    format_workload, generate_knn_workload, generate_range_workload, read_workload, Workload,
    WorkloadKind,
};
use sprig_bench::BenchError;

#[derive(Parser)]
#[command(
    name = "sprig",
    version,
    about = "Learned grid index: build, tune, query and benchmark"
)]
struct Cli {
    /// Seed for data and workload generation.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Point file, one `x,y` per line.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Read at most this many valid points from --data.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "bilinear")]
    model: ModelKind,
    #[arg(long, default_value_t = 2.0)]
    shepard_power: f64,
    /// Gaussian kernel width; mean knot spacing when omitted.
    #[arg(long)]
    rbf_width: Option<f64>,
    /// Byte budget for the dense RBF system.
    #[arg(long, default_value_t = 256 << 20)]
    rbf_mem_budget: usize,
}

impl ModelArgs {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            shepard_power: self.shepard_power,
            rbf_width: self.rbf_width,
            rbf_mem_budget: self.rbf_mem_budget,
        }
    }
}

#[derive(Args, Clone)]
struct LayoutArgs {
    /// Columns along x.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Columns along y.
    #[arg(long, default_value_t = 64)]
    m: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Range,
    Knn,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic point file.
    GenData {
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value = "uniform")]
        dist: Distribution,
    },
    /// Generate a query workload over --data.
    GenWorkload {
        #[arg(long, value_enum, default_value = "range")]
        kind: Kind,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.001,0.005,0.01,0.015,0.02"
        )]
        selectivities: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
        ks: Vec<usize>,
        /// Queries per selectivity or per k.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Build an index over --data and write it to --out.
    Build {
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Retrain the error guarantee on this workload.
        #[arg(long)]
        workload: Option<PathBuf>,
    },
    /// Estimate range-query cost for candidate layouts.
    Tune {
        #[arg(long)]
        workload: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// `ladder` or a comma-separated list such as `16x16,32x8`.
        #[arg(long, default_value = "ladder")]
        candidates: String,
    },
    /// Answer a workload, one `query_index,result_count,checksum` line per query.
    Query {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value = "sprig")]
        engine: Engine,
        /// Prebuilt index for the sprig engine.
        #[arg(long)]
        index: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 16)]
        leaf_capacity: usize,
    },
    /// Time engines on a workload after cross-checking their results.
    Bench {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "sprig,kdtree,brute")]
        engines: Vec<Engine>,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Pick the layout with the cost model instead of --n/--m.
        #[arg(long)]
        tune: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 16)]
        leaf_capacity: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Compare locator families across layouts.
    Accuracy {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "10x10,20x20,50x50,100x100,200x200"
        )]
        layouts: Vec<String>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "bilinear,bicubic,pbicubic,shepard,rbf"
        )]
        models: Vec<ModelKind>,
        /// Random in-bounds probes; the domain corners are always added.
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn parse_layout(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::InvalidArgument(format!("layout '{s}' is not of the form NxM"));
    let (n, m) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        n.trim().parse().map_err(|_| bad())?,
        m.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_candidates(spec: &str, len: usize) -> Result<Vec<(usize, usize)>, Error> {
    if spec.trim() == "ladder" {
        return Ok(default_ladder(len));
    }
    spec.split(',').map(parse_layout).collect()
}

fn load_dataset(path: Option<&Path>, limit: Option<usize>) -> Result<Dataset, Error> {
    let path = path.ok_or_else(|| Error::InvalidArgument("--data is required".into()))?;
    let loaded = load_points(path, limit)?;
    if loaded.rejected > 0 {
        eprintln!(
            "skipped {} malformed lines in {}",
            loaded.rejected,
            path.display()
        );
    }
    Ok(loaded.dataset)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn index_summary(index: &SprigIndex) -> String {
    let s = sprig_storage(index);
    let eg = index.error_guarantee();
    let mut out = String::new();
    let _ = writeln!(out, "layout,{}x{}", index.grid().n(), index.grid().m());
    let _ = writeln!(out, "model,{}", index.model().kind());
    let _ = writeln!(out, "points,{}", index.len());
    let _ = writeln!(out, "eg,{}", eg.eg);
    let _ = writeln!(out, "eg_x,{}", eg.eg_x);
    let _ = writeln!(out, "eg_y,{}", eg.eg_y);
    let _ = writeln!(out, "boundary_reals,{}", s.boundary_reals);
    let _ = writeln!(out, "boundary_bytes,{}", s.boundary_bytes);
    let _ = writeln!(out, "blocks,{}", s.blocks);
    let _ = writeln!(out, "block_bytes,{}", s.block_bytes);
    let _ = writeln!(out, "directory_bytes,{}", s.directory_bytes);
    let _ = writeln!(out, "pivot_dist_bytes,{}", s.pivot_dist_bytes);
    let _ = writeln!(out, "model_bytes,{}", s.model_bytes);
    let _ = writeln!(out, "total_bytes,{}", s.total());
    let _ = writeln!(
        out,
        "total_bytes_without_pivot_dists,{}",
        s.total_without_pivot_dists()
    );
    out
}

fn index_config(layout: &LayoutArgs, model: &ModelArgs) -> IndexConfig {
    IndexConfig {
        n: layout.n,
        m: layout.m,
        kind: model.model,
        model: model.config(),
    }
}

fn tuned_layout(
    dataset: &Dataset,
    workload: &Workload,
    model: &ModelArgs,
    candidates: &[(usize, usize)],
) -> Result<String, Error> {
    let queries = workload.range_queries();
    if queries.is_empty() {
        return Err(Error::InvalidArgument(
            "tuning needs a range workload".into(),
        ));
    }
    let report = calibrate(dataset)?;
    eprintln!(
        "calibrated t_retrieve={:.3e}s ({} iterations) t_scan={:.3e}s ({} iterations)",
        report.params.t_retrieve,
        report.retrieve_iterations,
        report.params.t_scan,
        report.scan_iterations
    );
    let config = TuneConfig {
        kind: model.model,
        model: model.config(),
    };
    let result = tune_layout(&report.params, dataset, &queries, candidates, &config)?;
    let mut out =
        String::from("n,m,effective_n,effective_m,t_predict,t_search,N_i,N_c,N_p,total\n");
    for e in &result.table {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3e},{:.3e},{:.2},{:.2},{:.2},{:.3e}",
            e.n,
            e.m,
            e.effective_n,
            e.effective_m,
            e.t_predict,
            e.t_search,
            e.n_intersected,
            e.n_contained,
            e.n_scanned_points,
            e.total
        );
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let data = cli.data.as_deref();
    let out = cli.out.as_deref();
    match cli.command {
        Command::GenData { count, dist } => {
            let ds = generate_synthetic(count, dist, cli.seed)?;
            match out {
                Some(path) => write_points(path, ds.points())?,
                None => {
                    let text: String = ds
                        .points()
                        .iter()
                        .map(|p| format!("{},{}\n", p.x, p.y))
                        .collect();
                    emit(None, &text)?;
                }
            }
        }
        Command::GenWorkload {
            kind,
            selectivities,
            ks,
            count,
        } => {
            let ds = load_dataset(data, cli.limit)?;
            let w = match kind {
                Kind::Range => generate_range_workload(&ds, &selectivities, count, cli.seed)?,
                Kind::Knn => generate_knn_workload(&ds, &ks, count, cli.seed)?,
            };
            emit(out, &format_workload(&w))?;
        }
        Command::Build {
            layout,
            model,
            workload,
        } => {
            let path =
                out.ok_or_else(|| Error::InvalidArgument("--out is required for build".into()))?;
            let ds = load_dataset(data, cli.limit)?;
            let start = Instant::now();
            let mut index = SprigIndex::build(&ds, &index_config(&layout, &model))?;
            if let Some(w) = workload {
                index.train(&read_workload(w)?.training_points())?;
            }
            let seconds = start.elapsed().as_secs_f64();
            dump::save(&index, path)?;
            emit(
                None,
                &format!("{}build_s,{seconds:.4}\n", index_summary(&index)),
            )?;
        }
        Command::Tune {
            workload,
            model,
            candidates,
        } => {
            let ds = load_dataset(data, cli.limit)?;
            let w = read_workload(workload)?;
            let candidates = parse_candidates(&candidates, ds.len())?;
            emit(out, &tuned_layout(&ds, &w, &model, &candidates)?)?;
        }
        Command::Query {
            workload,
            engine,
            index,
            layout,
            model,
            leaf_capacity,
        } => {
            let w = read_workload(workload)?;
            let holder;
            let built = match (engine, index) {
                (Engine::Sprig, Some(path)) => Built::Sprig(dump::load(path)?),
                _ => {
                    holder = load_dataset(data, cli.limit)?;
                    let config = BenchConfig {
                        index: index_config(&layout, &model),
                        leaf_capacity,
                        ..BenchConfig::default()
                    };
                    build_engine(engine, &holder, &w, &config)?
                }
            };
            let mut text = String::new();
            let mut index = 0usize;
            for g in &w.groups {
                let (outcomes, _) = built.outcomes(&g.queries)?;
                for o in outcomes {
                    let _ = writeln!(text, "{index},{},{:016x}", o.count, o.checksum);
                    index += 1;
                }
            }
            emit(out, &text)?;
        }
        Command::Bench {
            workload,
            engines,
            layout,
            tune,
            model,
            leaf_capacity,
            reps,
        } => {
            let ds = load_dataset(data, cli.limit)?;
            let w = read_workload(workload)?;
            let mut config = BenchConfig {
                engines,
                index: index_config(&layout, &model),
                leaf_capacity,
                reps,
            };
            if tune {
                if w.kind() != Some(WorkloadKind::Range) {
                    return Err(
                        Error::InvalidArgument("--tune needs a range workload".into()).into(),
                    );
                }
                let report = calibrate(&ds)?;
                let tuned = tune_layout(
                    &report.params,
                    &ds,
                    &w.range_queries(),
                    &default_ladder(ds.len()),
                    &TuneConfig {
                        kind: model.model,
                        model: model.config(),
                    },
                )?;
                eprintln!("tuned layout {}x{}", tuned.best.0, tuned.best.1);
                config.index.n = tuned.best.0;
                config.index.m = tuned.best.1;
            }
            let report = run_benchmark(&ds, &w, &config)?;
            emit(out, &report.to_csv())?;
        }
        Command::Accuracy {
            layouts,
            models,
            probes,
            model,
        } => {
            let ds = load_dataset(data, cli.limit)?;
            let layouts = layouts
                .iter()
                .map(|s| parse_layout(s))
                .collect::<Result<Vec<_>, _>>()?;
            let probes = accuracy_probes(&ds, probes, cli.seed);
            let rows = measure_model_accuracy(&ds, &layouts, &models, &probes, &model.config())?;
            emit(out, &format_accuracy(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
