//! `probekit` command line: ingest, train, sweep, cluster and report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use probekit::cluster::{cluster_eval, ClusterGroup, ClusterRow};
use probekit::config::Config;
use probekit::dataio::senteval::read_raw;
use probekit::dataio::{ingest, spec_for, Level};
use probekit::harness::{load_results, run_sweep, train_cell, CellKey, CellResult};
use probekit::probe::{load_checkpoint, Setting};
use probekit::report::{
    emit_cluster_rows, emit_plot_data, emit_table, emitter_registry, ReportBundle,
};
use probekit::synthetic;
use probekit::{Error, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Where `cluster` stores its rows, relative to the results directory.
/// Kept in a subdirectory so result loading never sees it.
pub const CLUSTER_FILE: &str = "cluster/rows.json";

#[derive(Debug, Parser)]
#[command(
    name = "probekit",
    version,
    about = "Probe frozen encoder layers with and without a residual MLP"
)]
struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build label sidecars and a manifest from a probing text file and PRBE files.
    Ingest(IngestArgs),
    /// Train a single (task, layer, setting, seed) cell.
    Train(TrainArgs),
    /// Train the full task x layer x setting x seed grid.
    Sweep(SweepArgs),
    /// k-means + NMI on raw vs MLP-transformed test representations.
    Cluster(ClusterArgs),
    /// Tables, plot data and clustering summary from stored results.
    Report(ReportArgs),
    /// Write a synthetic fixture task (PRBE files, labels, manifest).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the training seed (and the k-means seed for `cluster`).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated task names.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    task: String,
    /// Probing text file: `<tr|va|te>\t<label>\t<sentence>` per line.
    #[arg(long)]
    data: PathBuf,
    /// Directory holding `<split>.layerNN.prbe` files.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output directory (default: the embeddings directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Linguistic level, required for tasks that are not built in.
    #[arg(long)]
    level: Option<Level>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    layer: u16,
    #[arg(long)]
    with_mlp: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<u16>>,
    /// Comma-separated seeds (`--seed` runs a single seed).
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    layer: Option<u16>,
    /// Ground-truth mode (per_task or pooled_group).
    #[arg(long)]
    mode: Option<String>,
    /// Seed of the with-MLP checkpoint to use (default: train.seed).
    #[arg(long)]
    checkpoint_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<u16>>,
    /// Table format printed to stdout.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Directory for report files (default: <results_dir>/report).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SynthKind {
    Xor,
    Linear,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    layers: Vec<u16>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_val: usize,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
    /// Dimensionality of the linear task.
    #[arg(long, default_value_t = 16)]
    dim: usize,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the command line `argv` (program name first) and returns the
/// process exit code. Diagnostics go to stderr, documents to stdout.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();

    let mut stdout = std::io::stdout().lock();
    match run(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Runtime => EXIT_RUNTIME,
            }
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

/// Loads the config and applies the flags shared by all commands.
fn load_config(common: &Common) -> CliResult<Config> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.cluster.seed = seed;
    }
    if let Some(tasks) = &common.tasks {
        cfg.sweep.tasks = tasks.clone();
    }
    Ok(cfg)
}

fn run(command: Command, out: &mut dyn std::io::Write) -> CliResult<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Cluster(a) => cmd_cluster(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn cmd_ingest(a: IngestArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let examples = read_raw(&a.data)?;
    let spec = spec_for(&a.task, a.level, &examples)?;
    let out_dir = a.out.unwrap_or_else(|| a.embeddings.clone());
    let path = ingest(&a.data, &spec, &a.embeddings, &out_dir)?;
    emit(out, &format!("{}\n", path.display()))
}

fn cmd_train(a: TrainArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    let manifests = cfg.open_manifests()?;
    let task = match cfg.sweep.tasks.as_slice() {
        [only] => only.clone(),
        many => {
            return Err(CliError::Usage(format!(
                "train needs exactly one task, got {} (use --tasks)",
                many.len()
            )))
        }
    };
    let manifest = manifests.get(&task)?;
    if !manifest.has_layer(a.layer) {
        return Err(Error::Manifest(format!(
            "layer {} not available for task {task} (manifest has layers {:?})",
            a.layer, manifest.layers
        ))
        .into());
    }
    let setting = if a.with_mlp || cfg.train.with_mlp {
        Setting::WithMlp
    } else {
        Setting::WithoutMlp
    };
    let key = CellKey {
        task,
        layer: a.layer,
        setting,
        seed: cfg.train.seed,
    };
    let record = train_cell(
        &key,
        &manifests,
        &cfg.train,
        &cfg.results_dir,
        cfg.sweep.save_checkpoints,
    )?;
    emit(
        out,
        &(serde_json::to_string_pretty(&record).map_err(Error::from)? + "\n"),
    )
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(layers) = a.layers {
        cfg.sweep.layers = layers;
    }
    if let Some(seeds) = a.seeds {
        cfg.sweep.seeds = seeds;
    } else if let Some(seed) = a.common.seed {
        cfg.sweep.seeds = vec![seed];
    }
    if a.workers.is_some() {
        cfg.sweep.workers = a.workers;
    }
    let manifests = cfg.open_manifests()?;
    let outcome = run_sweep(&manifests, &cfg.sweep, &cfg.train, &cfg.results_dir)?;
    for f in &outcome.failures {
        eprintln!("failed: {}: {}", f.key.stem(), f.error);
    }
    emit(
        out,
        &format!(
            "{} cells ({} trained, {} failed) in {}\n",
            outcome.cells.len() + outcome.failures.len(),
            outcome.computed,
            outcome.failures.len(),
            cfg.results_dir.display()
        ),
    )?;
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Insufficient(format!("{} cell(s) failed", outcome.failures.len())).into())
    }
}

fn cmd_cluster(a: ClusterArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(layer) = a.layer {
        cfg.cluster.layer = layer;
    }
    if let Some(mode) = a.mode {
        cfg.cluster.mode = mode;
    }
    let manifests = cfg.open_manifests()?;
    let groups: Vec<ClusterGroup> = if cfg.cluster_groups.is_empty() || a.common.tasks.is_some() {
        cfg.sweep
            .tasks
            .iter()
            .map(|t| ClusterGroup {
                name: t.clone(),
                tasks: vec![t.clone()],
            })
            .collect()
    } else {
        cfg.cluster_groups.clone()
    };
    let seed = a.checkpoint_seed.unwrap_or(cfg.train.seed);
    let mut checkpoints = BTreeMap::new();
    for task in groups.iter().flat_map(|g| &g.tasks) {
        if checkpoints.contains_key(task) {
            continue;
        }
        let key = CellKey {
            task: task.clone(),
            layer: cfg.cluster.layer,
            setting: Setting::WithMlp,
            seed,
        };
        let path = key.checkpoint_path(&cfg.results_dir);
        if !path.exists() {
            return Err(Error::MissingCheckpoint(format!(
                "{} (train task {task}, layer {}, with_mlp, seed {seed} first)",
                path.display(),
                key.layer
            ))
            .into());
        }
        let (params, _) = load_checkpoint(&path, cfg.train.activation)?;
        checkpoints.insert(task.clone(), params);
    }
    let mut rows: Vec<ClusterRow> = Vec::new();
    for group in &groups {
        rows.push(cluster_eval(&manifests, &checkpoints, group, &cfg.cluster)?);
    }
    for row in &rows {
        emit(
            out,
            &(serde_json::to_string(row).map_err(Error::from)? + "\n"),
        )?;
    }
    let path = cfg.results_dir.join(CLUSTER_FILE);
    let parent = path.parent().expect("nested path");
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    write_file(
        &path,
        &(serde_json::to_string_pretty(&rows).map_err(Error::from)? + "\n"),
    )
}

fn cmd_report(a: ReportArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let registry = emitter_registry();
    let emitter = registry
        .get(&a.format)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut cfg = load_config(&a.common)?;
    if let Some(layers) = &a.layers {
        cfg.sweep.layers = layers.clone();
    }
    let mut cells: Vec<CellResult> = load_results(&cfg.results_dir)?
        .iter()
        .map(CellResult::from)
        .collect();
    if let Some(tasks) = &a.common.tasks {
        cells.retain(|c| tasks.contains(&c.task));
    }
    if let Some(layers) = &a.layers {
        cells.retain(|c| layers.contains(&c.layer));
    }
    let cluster_path = cfg.results_dir.join(CLUSTER_FILE);
    let cluster_rows: Vec<ClusterRow> = if cluster_path.exists() {
        let text = fs::read_to_string(&cluster_path).map_err(|e| io_err(&cluster_path, e))?;
        serde_json::from_str(&text).map_err(Error::from)?
    } else {
        Vec::new()
    };
    let bundle = ReportBundle::build(&cells, cluster_rows, cfg.hash()?)?;
    let table = emit_table(&bundle, &a.format)?;

    let dir = a.out.unwrap_or_else(|| cfg.results_dir.join("report"));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_file(&dir.join(format!("table.{}", emitter.extension())), &table)?;
    write_file(&dir.join("report.json"), &bundle.to_json()?)?;
    if let Some(deltas) = &bundle.delta_report {
        write_file(&dir.join("plot.json"), &emit_plot_data(deltas)?)?;
    }
    if !bundle.cluster_rows.is_empty() {
        write_file(
            &dir.join("clusters.md"),
            &emit_cluster_rows(&bundle.cluster_rows)?,
        )?;
    }
    emit(out, &table)?;
    out.flush().map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn cmd_synth(a: SynthArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let name = a.name.clone();
    let path = synthetic::write_fixture(&a.out, &a.layers, |layer| {
        let task = match a.kind {
            SynthKind::Xor => synthetic::xor(a.n_train, a.n_val, a.n_test, layer, a.seed),
            SynthKind::Linear => {
                synthetic::linear(a.n_train, a.n_val, a.n_test, a.dim, layer, a.seed)
            }
        };
        synthetic::renamed(task, &name, Level::Surface)
    })?;
    emit(out, &format!("{}\n", path.display()))
}
