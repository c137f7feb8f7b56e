//! `emsnn` — command-line driver for the out-of-core SNN clustering
//! toolkit. Subcommands: `gen`, `knn`, `cluster`, `run`, `bench`,
//! `validate`. Exit codes: 0 ok, 2 configuration/format error, 3 I/O
//! error, 4 internal invariant breach.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emsnn_core::bench::{self, Algorithm, BenchProfile};
use emsnn_core::dataset_io::{self, GenSpec};
use emsnn_core::em_model::Backing;
use emsnn_core::error::{EmError, Result};
use emsnn_core::pipeline::{self, ExecParams, PipelineOutput, ELEMENT_WIDTH};
use emsnn_core::snn_cluster::labels_literal;
use emsnn_core::units::parse_size;

#[derive(Parser)]
#[command(
    name = "emsnn",
    version,
    about = "Out-of-core shared-near-neighbor clustering with exact I/O accounting"
)]
struct Cli {
    /// key=value file supplying defaults for parameter flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset (.emsnn)
    Gen(GenArgs),
    /// Phase 1 only: blocked k-NN matrix construction (.emknn)
    Knn(KnnArgs),
    /// Phase 2 only: blocked SNN clustering of a k-NN matrix
    Cluster(ClusterArgs),
    /// Both phases with one combined metrics file
    Run(RunArgs),
    /// Run a sweep profile, writing metrics and summary CSVs
    Bench(BenchArgs),
    /// Validate dataset / knn file headers and invariants
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of points
    #[arg(long)]
    n: Option<u64>,
    /// Dimensions per point
    #[arg(long)]
    d: Option<u32>,
    /// Number of Gaussian clusters
    #[arg(long)]
    clusters: Option<u64>,
    /// Per-cluster standard deviation
    #[arg(long)]
    spread: Option<f64>,
    /// Cluster centers drawn uniformly from [-box, box] per axis
    #[arg(long = "box")]
    box_extent: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset path
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct StoreArgs {
    /// Main memory budget (bytes; KiB/MiB suffixes accepted)
    #[arg(long)]
    m: Option<String>,
    /// Block size (bytes; KiB/MiB suffixes accepted)
    #[arg(long)]
    b: Option<String>,
    /// Backing for the simulated disk
    #[arg(long, default_value = "memory", value_parser = ["memory", "file"])]
    backing: String,
}

#[derive(Args)]
struct KnnArgs {
    /// Input dataset (.emsnn)
    #[arg(short, long)]
    input: PathBuf,
    /// Neighborhood size, the point itself included
    #[arg(long)]
    k: Option<u32>,
    /// Override the phase-1 tile size (rows)
    #[arg(long)]
    t1: Option<u64>,
    #[command(flatten)]
    store: StoreArgs,
    /// Output k-NN matrix path
    #[arg(short, long)]
    output: PathBuf,
    /// Optional metrics CSV path
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Input k-NN matrix (.emknn)
    #[arg(short, long)]
    input: PathBuf,
    /// Similarity threshold (strict: merge needs more than theta shared)
    #[arg(long)]
    theta: Option<u32>,
    /// Override the phase-2 tile size (rows)
    #[arg(long)]
    t2: Option<u64>,
    /// Diagnostic: the order-dependent single-pass relabel instead of the
    /// connected-component closure
    #[arg(long)]
    paper_literal: bool,
    #[command(flatten)]
    store: StoreArgs,
    /// Output labels CSV path
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Input dataset (.emsnn)
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    theta: Option<u32>,
    #[arg(long)]
    t1: Option<u64>,
    #[arg(long)]
    t2: Option<u64>,
    #[arg(long)]
    paper_literal: bool,
    #[command(flatten)]
    store: StoreArgs,
    /// Output prefix: writes <prefix>.emknn, <prefix>.labels.csv,
    /// <prefix>.metrics.csv
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Profile file (key=value; see bundled profiles/)
    #[arg(short, long)]
    profile: PathBuf,
    /// Output directory for CSVs
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
    /// Record wall-clock elapsed times (makes CSVs nondeterministic)
    #[arg(long)]
    record_elapsed: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Files to validate (.emsnn or .emknn, sniffed by magic)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let defaults = match load_config(cli.config.as_deref()) {
        Ok(d) => d,
        Err(e) => return report(e),
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args, &defaults),
        Command::Knn(args) => cmd_knn(args, &defaults),
        Command::Cluster(args) => cmd_cluster(args, &defaults),
        Command::Run(args) => cmd_run(args, &defaults),
        Command::Bench(args) => cmd_bench(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: EmError) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        EmError::Config(_) | EmError::Format(_) => 2,
        EmError::Io(_) => 3,
        _ => 4,
    };
    ExitCode::from(code)
}

type Defaults = HashMap<String, String>;

fn load_config(path: Option<&Path>) -> Result<Defaults> {
    let mut map = HashMap::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            EmError::Config(format!(
                "{}: line {}: expected key=value",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    defaults: &Defaults,
    key: &str,
) -> Result<Option<T>> {
    if let Some(v) = flag {
        return Ok(Some(v));
    }
    match defaults.get(key) {
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            EmError::Config(format!("config key '{key}': cannot parse '{raw}'"))
        }),
        None => Ok(None),
    }
}

fn require<T>(value: Option<T>, flag: &str, usage: &str) -> Result<T> {
    value.ok_or_else(|| {
        EmError::Config(format!(
            "missing required parameter {flag}\nusage: {usage}"
        ))
    })
}

fn resolve_size(flag: &Option<String>, defaults: &Defaults, key: &str) -> Result<Option<u64>> {
    let raw = flag.clone().or_else(|| defaults.get(key).cloned());
    raw.map(|s| parse_size(&s)).transpose()
}

struct StoreConfig {
    memory_budget: u64,
    block_size: u64,
    file_backed: bool,
}

impl StoreConfig {
    fn from_args(args: &StoreArgs, defaults: &Defaults, usage: &str) -> Result<StoreConfig> {
        let memory_budget = require(resolve_size(&args.m, defaults, "m")?, "--m", usage)?;
        let block_size = require(resolve_size(&args.b, defaults, "b")?, "--b", usage)?;
        Ok(StoreConfig {
            memory_budget,
            block_size,
            file_backed: args.backing == "file",
        })
    }

    /// Backing plus an optional scratch path to remove afterwards.
    fn backing(&self) -> Result<(Backing, Option<PathBuf>)> {
        if self.file_backed {
            let dir = std::env::var_os("EMSNN_TMPDIR")
                .map(PathBuf::from)
                .unwrap_or_else(std::env::temp_dir);
            let path = dir.join(format!("emsnn-store-{}.bin", std::process::id()));
            Ok((Backing::file(&path)?, Some(path)))
        } else {
            Ok((Backing::memory(), None))
        }
    }
}

fn print_run(params: &ExecParams, out: &PipelineOutput) {
    // The byte-to-slot conversion is printed so t can be audited.
    println!("m_bytes={}", params.memory_budget_bytes);
    println!("m_slots={}", params.memory_budget_bytes / ELEMENT_WIDTH);
    println!("b_bytes={}", params.block_size_bytes);
    println!("phase1_tile={}", out.phase1_tile);
    println!("phase2_tile={}", out.phase2_tile);
    for phase in &out.phases {
        let p = &phase.phase;
        println!("{p}.block_reads={}", phase.counters.block_reads);
        println!("{p}.block_writes={}", phase.counters.block_writes);
        println!("{p}.bytes_read={}", phase.counters.bytes_read);
        println!("{p}.bytes_written={}", phase.counters.bytes_written);
        println!("{p}.elapsed_ms={}", phase.elapsed_ms);
    }
    println!("total.transfers={}", out.total_transfers());
    println!("peak_pinned={}", out.peak_pinned);
    println!("edges={}", out.n_edges);
}

fn cmd_gen(args: GenArgs, defaults: &Defaults) -> Result<()> {
    let usage = "emsnn gen --n <points> --d <dims> [--clusters N] [--spread S] [--box W] [--seed S] -o <file.emsnn>";
    let spec = GenSpec {
        n_points: require(resolve(args.n, defaults, "n")?, "--n", usage)?,
        dims: require(resolve(args.d, defaults, "d")?, "--d", usage)?,
        n_clusters: resolve(args.clusters, defaults, "clusters")?.unwrap_or(1),
        spread: resolve(args.spread, defaults, "spread")?.unwrap_or(1.0),
        box_extent: resolve(args.box_extent, defaults, "box")?.unwrap_or(100.0),
        seed: resolve(args.seed, defaults, "seed")?.unwrap_or(1),
    };
    dataset_io::generate_dataset(&spec, &args.output)?;
    println!("wrote={}", args.output.display());
    println!("n={} d={} seed={}", spec.n_points, spec.dims, spec.seed);
    Ok(())
}

fn cmd_knn(args: KnnArgs, defaults: &Defaults) -> Result<()> {
    let usage = "emsnn knn -i <pts.emsnn> --k <k> --m <bytes> --b <bytes> -o <out.emknn>";
    let (header, points) = dataset_io::read_dataset(&args.input)?;
    let store = StoreConfig::from_args(&args.store, defaults, usage)?;
    let params = ExecParams {
        n: header.n_points,
        dims: header.dims,
        k: require(resolve(args.k, defaults, "k")?, "--k", usage)?,
        theta: 0,
        memory_budget_bytes: store.memory_budget,
        block_size_bytes: store.block_size,
        phase1_tile_override: args.t1,
        phase2_tile_override: Some(1), // unused by phase 1
    };
    let (backing, scratch) = store.backing()?;
    let result = run_phase1_only(&points, &params, backing);
    if let Some(path) = scratch {
        let _ = fs::remove_file(path);
    }
    let (knn_rows, metrics) = result?;
    dataset_io::write_knn(&args.output, params.n, params.k, &knn_rows)?;
    if let Some(path) = &args.metrics {
        dataset_io::write_metrics(&[metrics.to_metrics_row(true)], path)?;
    }
    println!("wrote={}", args.output.display());
    println!("phase1_tile={}", params.phase1_tile()?);
    println!("knn.block_reads={}", metrics.counters.block_reads);
    println!("knn.block_writes={}", metrics.counters.block_writes);
    Ok(())
}

fn run_phase1_only(
    points: &[f64],
    params: &ExecParams,
    backing: Backing,
) -> Result<(Vec<u64>, pipeline::PhaseMetrics)> {
    use emsnn_core::em_model::{bytes_to_u64s, f64s_to_bytes, BlockStore, StoreMode};
    use emsnn_core::knn_phase::build_knn_blocked;
    use std::time::Instant;

    let t1 = params.phase1_tile()?;
    let mut store = BlockStore::new(
        params.block_size_bytes,
        params.memory_budget_bytes,
        StoreMode::ExplicitPin,
        backing,
    )?;
    let dataset = store.alloc_array(params.n * params.dims as u64, ELEMENT_WIDTH)?;
    store.stage(&dataset, &f64s_to_bytes(points))?;
    let started = Instant::now();
    let knn = build_knn_blocked(&mut store, &dataset, params.n, params.dims, params.k, t1)?;
    let metrics = pipeline::PhaseMetrics {
        phase: "knn".into(),
        counters: store.counters(),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    Ok((bytes_to_u64s(&store.dump(&knn)?), metrics))
}

fn cmd_cluster(args: ClusterArgs, defaults: &Defaults) -> Result<()> {
    let usage = "emsnn cluster -i <knn.emknn> --theta <t> --m <bytes> --b <bytes> -o <labels.csv>";
    let (header, knn_rows) = dataset_io::read_knn(&args.input)?;
    dataset_io::validate_knn_rows(header.n_points, header.k, &knn_rows)?;
    let store = StoreConfig::from_args(&args.store, defaults, usage)?;
    let theta = require(resolve(args.theta, defaults, "theta")?, "--theta", usage)?;

    use emsnn_core::em_model::{u64s_to_bytes, BlockStore, StoreMode};
    use emsnn_core::snn_cluster::{finalize_labels_from_sink, snn_merge_blocked, EdgeSink};
    use std::time::Instant;

    let params = ExecParams {
        n: header.n_points,
        dims: 1,
        k: header.k,
        theta,
        memory_budget_bytes: store.memory_budget,
        block_size_bytes: store.block_size,
        phase1_tile_override: Some(1),
        phase2_tile_override: args.t2,
    };
    let t2 = params.phase2_tile()?;
    let (backing, scratch) = store.backing()?;
    let run = (|| -> Result<(Vec<u64>, pipeline::PhaseMetrics)> {
        let mut bstore = BlockStore::new(
            store.block_size,
            store.memory_budget,
            StoreMode::ExplicitPin,
            backing,
        )?;
        let knn = bstore.alloc_array(header.n_points * header.k as u64, ELEMENT_WIDTH)?;
        bstore.stage(&knn, &u64s_to_bytes(&knn_rows))?;
        let labels_arr = bstore.alloc_array(header.n_points, ELEMENT_WIDTH)?;
        bstore.stage(
            &labels_arr,
            &u64s_to_bytes(&(0..header.n_points).collect::<Vec<u64>>()),
        )?;
        let started = Instant::now();
        let mut sink = EdgeSink::new();
        snn_merge_blocked(
            &mut bstore,
            &knn,
            &labels_arr,
            header.n_points,
            header.k,
            theta,
            t2,
            &mut sink,
        )?;
        let labels = if args.paper_literal {
            sink.for_each(|_| ())?; // edges are diagnostic-irrelevant here
            labels_literal(&knn_rows, header.n_points, header.k, theta)
        } else {
            finalize_labels_from_sink(sink, header.n_points)?
        };
        bstore.write_range(&labels_arr, 0, header.n_points, &u64s_to_bytes(&labels))?;
        let metrics = pipeline::PhaseMetrics {
            phase: "cluster".into(),
            counters: bstore.counters(),
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        Ok((labels, metrics))
    })();
    if let Some(path) = scratch {
        let _ = fs::remove_file(path);
    }
    let (labels, metrics) = run?;
    dataset_io::write_labels(&labels, &args.output)?;
    if let Some(path) = &args.metrics {
        dataset_io::write_metrics(&[metrics.to_metrics_row(true)], path)?;
    }
    println!("wrote={}", args.output.display());
    println!("phase2_tile={t2}");
    println!("cluster.block_reads={}", metrics.counters.block_reads);
    println!("cluster.block_writes={}", metrics.counters.block_writes);
    Ok(())
}

fn cmd_run(args: RunArgs, defaults: &Defaults) -> Result<()> {
    let usage =
        "emsnn run -i <pts.emsnn> --k <k> --theta <t> --m <bytes> --b <bytes> -o <prefix>";
    let (header, points) = dataset_io::read_dataset(&args.input)?;
    let store = StoreConfig::from_args(&args.store, defaults, usage)?;
    let params = ExecParams {
        n: header.n_points,
        dims: header.dims,
        k: require(resolve(args.k, defaults, "k")?, "--k", usage)?,
        theta: require(resolve(args.theta, defaults, "theta")?, "--theta", usage)?,
        memory_budget_bytes: store.memory_budget,
        block_size_bytes: store.block_size,
        phase1_tile_override: args.t1,
        phase2_tile_override: args.t2,
    };
    let (backing, scratch) = store.backing()?;
    let result = pipeline::run_blocked(&points, &params, backing);
    if let Some(path) = scratch {
        let _ = fs::remove_file(path);
    }
    let mut out = result?;
    if args.paper_literal {
        out.labels = labels_literal(&out.knn_rows, params.n, params.k, params.theta);
    }

    let prefix = args.output.as_os_str().to_string_lossy();
    let knn_path = PathBuf::from(format!("{prefix}.emknn"));
    let labels_path = PathBuf::from(format!("{prefix}.labels.csv"));
    let metrics_path = PathBuf::from(format!("{prefix}.metrics.csv"));
    dataset_io::write_knn(&knn_path, params.n, params.k, &out.knn_rows)?;
    dataset_io::write_labels(&out.labels, &labels_path)?;
    let rows: Vec<_> = out.phases.iter().map(|p| p.to_metrics_row(true)).collect();
    dataset_io::write_metrics(&rows, &metrics_path)?;

    print_run(&params, &out);
    println!("wrote={}", knn_path.display());
    println!("wrote={}", labels_path.display());
    println!("wrote={}", metrics_path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&args.profile)?;
    let profile = BenchProfile::parse(&text)?;
    fs::create_dir_all(&args.out_dir)?;
    let rows = bench::run_profile(&profile, args.record_elapsed)?;
    let metrics_path = args.out_dir.join(format!("{}.metrics.csv", profile.name));
    bench::write_bench_csv(&rows, &metrics_path)?;
    println!("wrote={}", metrics_path.display());

    if profile.algorithms.contains(&Algorithm::Blocked)
        && profile.algorithms.contains(&Algorithm::TraditionalLru)
    {
        let blocked: Vec<_> = rows
            .iter()
            .filter(|r| r.algorithm == "blocked")
            .cloned()
            .collect();
        let traditional: Vec<_> = rows
            .iter()
            .filter(|r| r.algorithm == "traditional-lru")
            .cloned()
            .collect();
        let summary = bench::compare(&blocked, &traditional)?;
        let summary_path = args.out_dir.join(format!("{}.summary.csv", profile.name));
        bench::write_summary_csv(&summary, &summary_path)?;
        println!("wrote={}", summary_path.display());
        for row in &summary {
            println!("ratio.n{}.m{}={:.2}", row.n, row.m, row.ratio);
        }
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    for path in &args.inputs {
        let mut magic = [0u8; 6];
        {
            use std::io::Read;
            let mut f = fs::File::open(path)?;
            f.read_exact(&mut magic)
                .map_err(|_| EmError::Format(format!("{}: too short for a header", path.display())))?;
        }
        match &magic {
            m if m == dataset_io::DATASET_MAGIC => {
                let header = dataset_io::read_dataset_header(path)?;
                println!(
                    "{}: dataset ok n={} d={}",
                    path.display(),
                    header.n_points,
                    header.dims
                );
            }
            m if m == dataset_io::KNN_MAGIC => {
                let (header, rows) = dataset_io::read_knn(path)?;
                dataset_io::validate_knn_rows(header.n_points, header.k, &rows)?;
                println!(
                    "{}: knn ok n={} k={}",
                    path.display(),
                    header.n_points,
                    header.k
                );
            }
            _ => {
                return Err(EmError::Format(format!(
                    "{}: unrecognized magic",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}
