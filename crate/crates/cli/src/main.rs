//! `hiernb`: datasets, graphs, training, rollouts, evaluation and benchmarks
//! from one binary.
//!
//! Every subcommand accepts `--config <json>` plus flag overrides and
//! `--seed`; flags win over the config file. Failures print one
//! machine-readable JSON line on stderr and exit with a code that encodes the
//! failure class: 2 usage (from the argument parser), 3 configuration,
//! 4 file/format, 5 data/model mismatch, 6 numerical divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hiernb_core::error::Error;
use hiernb_core::hierarchy::coverage::interaction_coverage_check;
use hiernb_core::hierarchy::{build_hier_graph, choose_depth, DepthPolicy};
use hiernb_core::io::{
    config_hash, curve_csv, dataset_seed_offset, eval_report_csv, export_trajectory_csv,
    load_checkpoint, load_experiment_config, load_split, model_graph_to_json, save_checkpoint,
    save_json, save_text, save_trajectory, split_dir, traj_file_name, validate_graph_policy,
    DatasetSizes, ExperimentConfig, Split,
};
use hiernb_core::io::{bench_csv, fnv1a64, generate_dataset, load_trajectory};
use hiernb_core::models::{build_model_graph, ForwardOpts, GraphPolicy, ModelVariant};
use hiernb_core::sim::init::{generate_trajectory, init_system};
use hiernb_core::sim::{ForceLaw, SimConfig, TrajStatus};
use hiernb_core::train::{evaluate, log_log_slope, rollout_model, scaling_bench, train};
use hiernb_core::Result;

#[derive(Parser)]
#[command(name = "hiernb", version, about = "Hierarchical graph networks for N-body dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories into a train/valid/test dataset directory.
    Generate(GenerateArgs),
    /// Build one interaction graph and dump it as JSON.
    BuildGraph(BuildGraphArgs),
    /// Train a model on <data-root>/train and write a checkpoint.
    Train(TrainArgs),
    /// Roll a checkpointed model forward from a stored initial condition.
    Rollout(RolloutArgs),
    /// Evaluate a checkpoint on a test set (rollout RMSE, energy error).
    Eval(EvalArgs),
    /// Time graph construction and forward passes across particle counts.
    Bench(BenchArgs),
    /// Exhaustively verify the pair-coverage property of the hierarchy.
    CoverageCheck(CoverageCheckArgs),
    /// Convert a binary trajectory to CSV for inspection.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Experiment config JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (initial conditions, parameters, sampling).
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn file_config(&self) -> Result<Option<ExperimentConfig>> {
        self.config.as_ref().map(load_experiment_config).transpose()
    }
}

/// Graph-policy flags shared by the subcommands that build graphs.
#[derive(Args, Debug, Clone)]
struct GraphFlags {
    /// Interaction graph family.
    #[arg(long, value_enum)]
    graph: Option<GraphKind>,
    /// Fixed hierarchy depth (hier).
    #[arg(long)]
    depth: Option<usize>,
    /// Deepen until every finest cell holds at most this many particles (hier).
    #[arg(long, conflicts_with = "depth")]
    kmax: Option<usize>,
    /// Neighbour count (knn).
    #[arg(long)]
    k: Option<usize>,
    /// Clip cell adjacency at the box edge instead of wrapping.
    #[arg(long)]
    no_periodic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GraphKind {
    Hier,
    Full,
    Knn,
}

impl GraphFlags {
    /// Applies the flags on top of a base policy (from the config file or the
    /// built-in default).
    fn resolve(&self, base: GraphPolicy) -> Result<GraphPolicy> {
        let kind = self.graph.unwrap_or(match base {
            GraphPolicy::Full => GraphKind::Full,
            GraphPolicy::Knn { .. } => GraphKind::Knn,
            GraphPolicy::Hier { .. } => GraphKind::Hier,
        });
        let policy = match kind {
            GraphKind::Full => GraphPolicy::Full,
            GraphKind::Knn => {
                let base_k = match base {
                    GraphPolicy::Knn { k } => Some(k),
                    _ => None,
                };
                GraphPolicy::Knn { k: self.k.or(base_k).unwrap_or(8) }
            }
            GraphKind::Hier => {
                let (base_depth, base_periodic) = match base {
                    GraphPolicy::Hier { depth, periodic } => (Some(depth), periodic),
                    _ => (None, true),
                };
                let depth = if let Some(d) = self.depth {
                    DepthPolicy::Fixed(d)
                } else if let Some(kmax) = self.kmax {
                    DepthPolicy::Adaptive { kmax }
                } else {
                    base_depth.unwrap_or(DepthPolicy::Auto)
                };
                let periodic = if self.no_periodic { false } else { base_periodic };
                GraphPolicy::Hier { depth, periodic }
            }
        };
        validate_graph_policy(&policy)?;
        Ok(policy)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Force law (gravity | coulomb).
    #[arg(long, value_parser = parse_force_law)]
    force: Option<ForceLaw>,
    /// Particle count.
    #[arg(long)]
    n: Option<usize>,
    /// Generate exactly this many training trajectories (no valid/test).
    #[arg(long)]
    trajectories: Option<usize>,
    /// Base steps per trajectory.
    #[arg(long)]
    steps: Option<usize>,
    /// Dataset root (default $HIERNB_DATA_ROOT or ./data).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel trajectory workers (outputs are per-trajectory seeded, so
    /// results do not depend on this).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Take the snapshot from this trajectory file instead of synthesizing.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Snapshot index within --input.
    #[arg(long, default_value_t = 0)]
    step: usize,
    /// Force law for synthesized snapshots.
    #[arg(long, value_parser = parse_force_law)]
    force: Option<ForceLaw>,
    /// Particle count for synthesized snapshots.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    graph: GraphFlags,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset root holding train/ (default $HIERNB_DATA_ROOT or ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Checkpoint output path (default <data-root>/model.ckpt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Model variant (delta | hogn).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ModelVariant>,
    #[command(flatten)]
    graph: GraphFlags,
    /// Write the loss curve CSV here.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Trajectory file providing the initial condition (snapshot 0) and the
    /// simulator constants.
    #[arg(long)]
    input: PathBuf,
    /// Base steps to roll forward.
    #[arg(long, default_value_t = 20)]
    tau: usize,
    /// Write the predicted trajectory here (binary format).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the prediction as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test-set directory (default <data-root>/test).
    #[arg(long)]
    test_dir: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Rollout horizons; repeat or comma-separate (default from config,
    /// else 20,200).
    #[arg(long = "tau", value_delimiter = ',')]
    taus: Vec<usize>,
    /// Metrics CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Particle counts to time.
    #[arg(long = "ns", value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048, 4096])]
    ns: Vec<usize>,
    /// Timed repetitions per size (median reported).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    graph: GraphFlags,
    /// Table CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Particle count.
    #[arg(long)]
    n: Option<usize>,
    /// Hierarchy depth (default choose_depth(n)).
    #[arg(long)]
    depth: Option<usize>,
    /// Wrap cell adjacency around the torus (the default).
    #[arg(long, overrides_with = "no_periodic")]
    periodic: bool,
    /// Clip adjacency at the box edge instead.
    #[arg(long)]
    no_periodic: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Binary trajectory to convert.
    #[arg(long)]
    input: PathBuf,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_force_law(s: &str) -> std::result::Result<ForceLaw, String> {
    match s {
        "gravity" => Ok(ForceLaw::Gravity),
        "coulomb" => Ok(ForceLaw::Coulomb),
        _ => Err(format!("unknown force law {s:?} (gravity | coulomb)")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<ModelVariant, String> {
    match s {
        "delta" => Ok(ModelVariant::Delta),
        "hogn" => Ok(ModelVariant::Hogn),
        _ => Err(format!("unknown variant {s:?} (delta | hogn)")),
    }
}

/// Default data root: flag, then $HIERNB_DATA_ROOT, then ./data.
fn data_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("HIERNB_DATA_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Config resolution for subcommands that may synthesize systems: the file
/// config if given, else defaults built from --force/--n.
fn resolve_config(
    common: &CommonArgs,
    force: Option<ForceLaw>,
    n: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut cfg = match common.file_config()? {
        Some(cfg) => cfg,
        None => {
            let force = force
                .ok_or_else(|| Error::Config("need --force (or --config)".into()))?;
            let n = n.ok_or_else(|| Error::Config("need --n (or --config)".into()))?;
            ExperimentConfig::for_scale(n, force)
        }
    };
    if let Some(f) = force {
        cfg.force_law = f;
        if let Some(sim) = &mut cfg.sim {
            sim.force_law = f;
        }
    }
    if let Some(n) = n {
        cfg.n_particles = n;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::NonFinite(_) => "non_finite",
        Error::Diverged { .. } => "diverged",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::DataMismatch(_) => "data_mismatch",
        Error::Io(_) => "io",
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 3,
        Error::Format(_) | Error::Io(_) => 4,
        Error::DataMismatch(_) | Error::ShapeMismatch(_) => 5,
        Error::Diverged { .. } | Error::NonFinite(_) => 6,
    }
}

fn emit_error_line(kind: &str, code: u8, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "code": code, "message": message })
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code(&e);
            emit_error_line(error_kind(&e), code, &e.to_string());
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Generate(args) => run_generate(args),
        Command::BuildGraph(args) => run_build_graph(args),
        Command::Train(args) => run_train(args),
        Command::Rollout(args) => run_rollout(args),
        Command::Eval(args) => run_eval(args),
        Command::Bench(args) => run_bench(args),
        Command::CoverageCheck(args) => run_coverage_check(args),
        Command::Export(args) => run_export(args),
    }
}

fn run_generate(args: GenerateArgs) -> Result<u8> {
    let cfg = resolve_config(&args.common, args.force, args.n)?;
    let mut sim = cfg.sim_config();
    if let Some(steps) = args.steps {
        sim.n_base_steps = steps;
    }
    let sizes = args
        .trajectories
        .map(|t| DatasetSizes { train: t, valid: 0, test: 0 })
        .unwrap_or(cfg.dataset);
    if sizes.total() == 0 {
        return Err(Error::Config("dataset sizes are all zero".into()));
    }
    let root = args.out.unwrap_or_else(|| data_root(None));
    let written = generate_fanout(&root, cfg.n_particles, &sim, &sizes, cfg.seed, args.jobs)?;
    println!(
        "wrote {written} trajectories (n={}, {} base steps each) under {}",
        cfg.n_particles,
        sim.n_base_steps,
        root.display()
    );
    Ok(0)
}

/// Parallel variant of dataset generation. Each trajectory's seed derives
/// from its global index, so the output bytes are identical for any --jobs.
fn generate_fanout(
    root: &Path,
    n: usize,
    sim: &SimConfig,
    sizes: &DatasetSizes,
    seed: u64,
    jobs: usize,
) -> Result<usize> {
    if jobs <= 1 {
        return generate_dataset(root, n, sim, sizes, seed);
    }
    let mut tasks: Vec<(PathBuf, u64)> = Vec::new();
    for split in Split::ALL {
        let count = split.count(sizes);
        if count == 0 {
            continue;
        }
        let dir = split_dir(root, split);
        fs::create_dir_all(&dir)?;
        let offset = dataset_seed_offset(sizes, split);
        for i in 0..count {
            tasks.push((dir.join(traj_file_name(i)), offset + i as u64));
        }
    }
    let chunk_len = tasks.len().div_ceil(jobs).max(1);
    std::thread::scope(|scope| -> Result<()> {
        let workers: Vec<_> = tasks
            .chunks(chunk_len)
            .map(|chunk| {
                scope.spawn(move || -> Result<()> {
                    for (path, index) in chunk {
                        let traj = generate_trajectory(n, sim, seed, *index)?;
                        save_trajectory(path, &traj)?;
                    }
                    Ok(())
                })
            })
            .collect();
        for w in workers {
            w.join().expect("generation worker panicked")?;
        }
        Ok(())
    })?;
    Ok(tasks.len())
}

fn run_build_graph(args: BuildGraphArgs) -> Result<u8> {
    let base_policy = match args.common.file_config()? {
        Some(cfg) => cfg.graph,
        None => GraphPolicy::Hier { depth: DepthPolicy::Auto, periodic: true },
    };
    let policy = args.graph.resolve(base_policy)?;

    let (sys, cell_size) = if let Some(input) = &args.input {
        let traj = load_trajectory(input)?;
        let snap = traj.snapshots.get(args.step).ok_or_else(|| {
            Error::invalid(format!(
                "snapshot {} out of range ({} recorded)",
                args.step,
                traj.snapshots.len()
            ))
        })?;
        (snap.clone(), traj.config.cell_size)
    } else {
        let cfg = resolve_config(&args.common, args.force, args.n)?;
        let sim = cfg.sim_config();
        (init_system(cfg.n_particles, &sim, cfg.seed)?, sim.cell_size)
    };

    let graph = build_model_graph(&sys, cell_size, &policy)?;
    let json = model_graph_to_json(&graph, sys.len())?;
    match &args.out {
        Some(path) => {
            save_text(path, &format!("{json}\n"))?;
            println!("wrote graph ({} edges) to {}", graph.edge_count(), path.display());
        }
        None => println!("{json}"),
    }
    Ok(0)
}

fn run_train(args: TrainArgs) -> Result<u8> {
    let root = data_root(args.data_root);
    let data = load_split(&split_dir(&root, Split::Train))?;
    let force_law = data[0].config.force_law;
    let n = data[0].n_particles();

    let mut cfg = match args.common.file_config()? {
        Some(cfg) => cfg,
        None => ExperimentConfig::for_scale(n, force_law),
    };
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(variant) = args.variant {
        cfg.variant = variant;
    }
    cfg.graph = args.graph.resolve(cfg.graph)?;

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    if let Some(steps) = args.steps {
        train_cfg.total_steps = steps;
    }
    if let Some(batch) = args.batch {
        train_cfg.batch_size = batch;
    }

    let result = train(cfg.variant, cfg.force_law, &cfg.graph, &data, &train_cfg)?;
    let ckpt_path = args.checkpoint.unwrap_or_else(|| root.join("model.ckpt"));
    save_checkpoint(&ckpt_path, &result.params, &cfg.graph, cfg.seed, train_cfg.total_steps)?;
    if let Some(curve_path) = &args.curve {
        save_text(curve_path, &curve_csv(&result.curve))?;
    }
    let final_loss = result.curve.last().map(|p| p.loss);
    println!(
        "trained {} steps ({} skipped), final loss {}, checkpoint {}",
        train_cfg.total_steps,
        result.skipped_steps,
        final_loss.map_or_else(|| "n/a".into(), |l| l.to_string()),
        ckpt_path.display()
    );
    Ok(0)
}

fn run_rollout(args: RolloutArgs) -> Result<u8> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let input = load_trajectory(&args.input)?;
    if ckpt.meta.force_law != input.config.force_law {
        return Err(Error::DataMismatch(format!(
            "checkpoint was trained on {}, trajectory is {}",
            ckpt.meta.force_law, input.config.force_law
        )));
    }
    let mut config = input.config.clone();
    config.n_base_steps = args.tau;
    let seed = args.common.seed.unwrap_or(input.seed);
    let outcome = rollout_model(
        &ckpt.params,
        &ckpt.meta.graph,
        &input.snapshots[0],
        &config,
        seed,
        args.tau,
        &ForwardOpts::default(),
    )?;
    if let Some(out) = &args.out {
        save_trajectory(out, &outcome.trajectory)?;
    }
    if let Some(csv) = &args.csv {
        export_trajectory_csv(csv, &outcome.trajectory)?;
    }
    match outcome.trajectory.status {
        TrajStatus::Complete => {
            println!(
                "rolled out {} steps ({} graph builds)",
                outcome.trajectory.steps_recorded(),
                outcome.graph_builds
            );
            Ok(0)
        }
        TrajStatus::Truncated { at_base_step } => {
            emit_error_line(
                "diverged",
                6,
                &format!("rollout diverged at step {at_base_step}; partial output written"),
            );
            Ok(6)
        }
    }
}

fn run_eval(args: EvalArgs) -> Result<u8> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dir = args
        .test_dir
        .unwrap_or_else(|| split_dir(&data_root(args.data_root), Split::Test));
    let tests = load_split(&dir)?;
    if ckpt.meta.force_law != tests[0].config.force_law {
        return Err(Error::DataMismatch(format!(
            "checkpoint was trained on {}, test data is {}",
            ckpt.meta.force_law, tests[0].config.force_law
        )));
    }

    let file_cfg = args.common.file_config()?;
    let hash = match &file_cfg {
        Some(cfg) => config_hash(cfg),
        // No config file: fingerprint the checkpoint metadata instead.
        None => fnv1a64(&serde_json::to_vec(&ckpt.meta).expect("meta serializes")),
    };
    let taus = if args.taus.is_empty() {
        file_cfg.map(|c| c.eval_taus).unwrap_or_else(|| vec![20, 200])
    } else {
        args.taus
    };
    let seed = args.common.seed.unwrap_or(ckpt.meta.seed);

    let report = evaluate(
        &ckpt.params,
        &ckpt.meta.graph,
        &tests,
        &taus,
        &ForwardOpts::default(),
        seed,
        hash,
    )?;
    let csv = eval_report_csv(&report);
    match &args.out {
        Some(path) => {
            save_text(path, &csv)?;
            println!("wrote metrics for {} trajectories to {}", tests.len(), path.display());
        }
        None => print!("{csv}"),
    }
    if let Some(json_path) = &args.json {
        save_json(json_path, &report)?;
    }
    Ok(0)
}

fn run_bench(args: BenchArgs) -> Result<u8> {
    if args.ns.is_empty() {
        return Err(Error::Config("need at least one --ns value".into()));
    }
    let policy = args.graph.resolve(GraphPolicy::Hier {
        depth: DepthPolicy::Auto,
        periodic: true,
    })?;
    let seed = args.common.seed.unwrap_or(0);
    let table = scaling_bench(&policy, &args.ns, args.repeats, seed);

    let csv = bench_csv(&table);
    match &args.out {
        Some(path) => {
            save_text(path, &csv)?;
            println!("wrote benchmark table to {}", path.display());
        }
        None => print!("{csv}"),
    }
    if let Some(json_path) = &args.json {
        save_json(json_path, &table)?;
    }

    let timed: Vec<(f64, f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| Some((r.n as f64, r.build_seconds?, r.forward_seconds?)))
        .collect();
    if timed.len() >= 2 {
        let ns: Vec<f64> = timed.iter().map(|t| t.0).collect();
        let builds: Vec<f64> = timed.iter().map(|t| t.1).collect();
        let fwds: Vec<f64> = timed.iter().map(|t| t.2).collect();
        eprintln!(
            "log-log slopes: forward {:.3}, build {:.3}",
            log_log_slope(&ns, &fwds),
            log_log_slope(&ns, &builds)
        );
    }
    Ok(0)
}

fn run_coverage_check(args: CoverageCheckArgs) -> Result<u8> {
    let file_cfg = args.common.file_config()?;
    let n = args
        .n
        .or(file_cfg.as_ref().map(|c| c.n_particles))
        .ok_or_else(|| Error::Config("need --n (or --config)".into()))?;
    let force_law = file_cfg.map_or(ForceLaw::Gravity, |c| c.force_law);
    let sim = SimConfig::for_particle_count(n, force_law);
    let seed = args.common.seed.unwrap_or(0);
    let sys = init_system(n, &sim, seed)?;
    let depth = args.depth.unwrap_or_else(|| choose_depth(n));
    let periodic = !args.no_periodic;

    let graph = build_hier_graph(&sys, sim.cell_size, depth, periodic)?;
    let report = interaction_coverage_check(&graph);
    println!("{report}");
    if report.is_ok() {
        Ok(0)
    } else {
        for v in report.violations.iter().take(5) {
            eprintln!("pair ({}, {}) covered {} times", v.i, v.j, v.coverage);
        }
        Ok(1)
    }
}

fn run_export(args: ExportArgs) -> Result<u8> {
    let traj = load_trajectory(&args.input)?;
    export_trajectory_csv(&args.out, &traj)?;
    println!(
        "wrote {} snapshots x {} particles to {}",
        traj.snapshots.len(),
        traj.n_particles(),
        args.out.display()
    );
    Ok(0)
}
