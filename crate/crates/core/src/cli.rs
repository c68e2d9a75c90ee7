//! Command-line entry point wiring all modules together.
//!
//! Every subcommand reads an optional `--config <file.json>` (deep-merged
//! over built-in defaults) and then applies flag overrides on top, so
//! flags always win. Generative subcommands (`gen`, `train`, `sweep`,
//! `bench`) require `--seed`; all randomness flows from it. Artifact
//! producers drop a `manifest.json` (command, config hash, seed, code
//! version, outputs) beside their outputs.
//!
//! Exit codes: 0 success, 1 operational failure (including divergence),
//! 2 usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{
    run_cases, BenchError, BenchReport, BenchRun, ChatClient, Formulation, HttpClient,
    MockBehavior, MockClient, ProviderConfig,
};
use crate::checkpoint::{load_checkpoint, CheckpointError};
use crate::circuit::{
    crossing_epoch, emergence_trace, export_attention_maps, validate_circuit, CircuitError,
    CircuitSpec,
};
use crate::flow::{flow_table, initial_state, min_layers, step as flow_step};
use crate::manifest::Manifest;
use crate::model::ModelConfig;
use crate::plot::{
    bars_csv, bars_svg, render_line_svg, series_csv, write_text, LinePlot, PlotError, PlotSeries,
};
use crate::seeds::{derive_seed, DOM_BENCH, DOM_TRACE, DOM_TRAIN_DATA, DOM_VAL_DATA};
use crate::task::{gen_batch, save_dataset, TaskConfig, TaskError};
use crate::train::{
    parse_metrics_csv, sweep, train, write_metrics_csv, RunConfig, SweepConfig, TrainError,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {path}: {detail}")]
    Config { path: String, detail: String },
    #[error("task: {0}")]
    Task(#[from] TaskError),
    #[error("train: {0}")]
    Train(#[from] TrainError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("bench: {0}")]
    Bench(#[from] BenchError),
    #[error("plot: {0}")]
    Plot(#[from] PlotError),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse `argv` and run the requested subcommand, returning the process
/// exit code (0 ok, 1 operational error, 2 usage error).
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "retlab",
    version,
    about = "Laboratory for chained retrieval: datasets, transformer training, \
             attention circuits, depth bounds, and LLM prompt benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an encoded dataset and write it as a binary container
    Gen(GenArgs),
    /// Train a transformer on the retrieval task
    Train(TrainArgs),
    /// Train over a grid of layer counts and seeds, with and without curriculum
    Sweep(SweepArgs),
    /// Export per-head attention maps from a checkpoint
    Analyze(AnalyzeArgs),
    /// Score a hypothesized circuit by combined and knockout ablations
    Ablate(AblateArgs),
    /// Trace circuit-path attention across epoch checkpoints
    Emerge(EmergeArgs),
    /// Print minimum-depth bounds from the information-flow model
    Flow(FlowArgs),
    /// Run prompt benchmarks against a mock or HTTP chat endpoint
    Bench(BenchArgs),
    /// Render an SVG figure from a metrics/sweep/emergence/bench CSV
    Plot(PlotArgs),
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => run_gen(a),
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Ablate(a) => run_ablate(a),
        Command::Emerge(a) => run_emerge(a),
        Command::Flow(a) => run_flow(a),
        Command::Bench(a) => run_bench(a),
        Command::Plot(a) => run_plot(a),
    }
}

// --- config plumbing ---------------------------------------------------------

/// Deep-merge the JSON object at `path` (when given) over `default`,
/// then decode back. Scalars and arrays in the file replace the default;
/// nested objects merge key by key, so partial config files work.
fn merged_config<T>(default: &T, path: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + serde::de::DeserializeOwned + Clone,
{
    let Some(path) = path else {
        return Ok(default.clone());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let overlay: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let mut base = serde_json::to_value(default).expect("default config serializes");
    merge_value(&mut base, overlay);
    serde_json::from_value(base).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

fn merge_value(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge_value(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, v) => *b = v,
    }
}

fn set<T: Copy>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

fn out_dir_for(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| {
        CliError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

// --- gen ----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GenConfig {
    #[serde(default)]
    task: TaskConfig,
    #[serde(default = "default_gen_examples")]
    examples: usize,
}

fn default_gen_examples() -> usize {
    1024
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            task: TaskConfig::default(),
            examples: default_gen_examples(),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// JSON config: {"task": {...}, "examples": n}
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset file
    #[arg(long)]
    out: PathBuf,
    /// Base seed; the data stream is derived from it
    #[arg(long)]
    seed: u64,
    /// Number of examples
    #[arg(long)]
    examples: Option<usize>,
    /// Retrieval steps per chain
    #[arg(long)]
    d: Option<usize>,
    /// Chains per example
    #[arg(long)]
    n: Option<usize>,
    /// Embedding dimensions
    #[arg(long)]
    k: Option<usize>,
    /// Implicit curriculum (supervise every chain position)
    #[arg(long)]
    ic: Option<bool>,
}

fn run_gen(a: GenArgs) -> Result<(), CliError> {
    let mut cfg: GenConfig = merged_config(&GenConfig::default(), a.config.as_deref())?;
    set(&mut cfg.task.d, a.d);
    set(&mut cfg.task.n, a.n);
    set(&mut cfg.task.k, a.k);
    set(&mut cfg.task.ic, a.ic);
    set(&mut cfg.examples, a.examples);
    cfg.task.seed = a.seed;
    cfg.task.validate()?;

    let examples = gen_batch(&cfg.task, derive_seed(a.seed, DOM_TRAIN_DATA, 0), cfg.examples);
    save_dataset(&a.out, &cfg.task, &examples)?;

    let mut manifest = Manifest::new("gen", &cfg, Some(a.seed));
    manifest.record_output(&a.out);
    manifest.write(out_dir_for(&a.out))?;
    println!(
        "wrote {} examples (N={}, D={}, K={}, ic={}) to {}",
        cfg.examples,
        cfg.task.n,
        cfg.task.d,
        cfg.task.k,
        cfg.task.ic,
        a.out.display()
    );
    Ok(())
}

// --- train / sweep -------------------------------------------------------------

fn default_run_config() -> RunConfig {
    let task = TaskConfig::default();
    RunConfig {
        model: ModelConfig::for_task(&task, 4, 1, 64),
        task,
        steps: 2000,
        batch_size: 32,
        lr: 1e-3,
        weight_decay: 1e-4,
        train_examples: 4096,
        val_examples: 256,
        val_every: 50,
        seed: 0,
        checkpoint_every_epochs: None,
        checkpoint_dir: None,
    }
}

/// Flag overrides shared by `train` and `sweep`. Model input/output dims
/// always follow from the task, so changing D/N/K/ic reshapes the model.
#[derive(Args, Clone)]
struct RunOverrides {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    train_examples: Option<usize>,
    #[arg(long)]
    val_examples: Option<usize>,
    /// Evaluate on the validation set every this many steps
    #[arg(long)]
    val_every: Option<usize>,
    /// Retrieval steps per chain
    #[arg(long)]
    d: Option<usize>,
    /// Chains per example
    #[arg(long)]
    n: Option<usize>,
    /// Embedding dimensions
    #[arg(long)]
    k: Option<usize>,
    /// Implicit curriculum (supervise every chain position)
    #[arg(long)]
    ic: Option<bool>,
    /// Attention heads per layer
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    residual_dim: Option<usize>,
}

fn apply_run_overrides(run: &mut RunConfig, o: &RunOverrides) {
    set(&mut run.steps, o.steps);
    set(&mut run.batch_size, o.batch_size);
    set(&mut run.lr, o.lr);
    set(&mut run.weight_decay, o.weight_decay);
    set(&mut run.train_examples, o.train_examples);
    set(&mut run.val_examples, o.val_examples);
    set(&mut run.val_every, o.val_every);
    set(&mut run.task.d, o.d);
    set(&mut run.task.n, o.n);
    set(&mut run.task.k, o.k);
    set(&mut run.task.ic, o.ic);
    set(&mut run.model.heads_per_layer, o.heads);
    set(&mut run.model.residual_dim, o.residual_dim);
    if o.heads.is_some() || o.residual_dim.is_some() {
        run.model.head_dim = run.model.residual_dim / run.model.heads_per_layer.max(1);
        run.model.mlp_hidden = 4 * run.model.residual_dim;
    }
    run.model.input_dim = run.task.input_dim();
    run.model.output_dim = run.task.target_dim();
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run config (same schema as the training library)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for metrics.csv, checkpoints/, and the manifest
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Transformer layers
    #[arg(long)]
    layers: Option<usize>,
    /// Write a checkpoint every this many epochs (0 disables epoch checkpoints)
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[command(flatten)]
    overrides: RunOverrides,
}

fn run_train(a: TrainArgs) -> Result<(), CliError> {
    let mut run: RunConfig = merged_config(&default_run_config(), a.config.as_deref())?;
    apply_run_overrides(&mut run, &a.overrides);
    set(&mut run.model.layers, a.layers);
    run.seed = a.seed;
    if a.checkpoint_every.is_some() {
        run.checkpoint_every_epochs = a.checkpoint_every.filter(|&e| e > 0);
    }
    let ckpt_dir = run
        .checkpoint_dir
        .clone()
        .unwrap_or_else(|| a.out_dir.join("checkpoints"));
    run.checkpoint_dir = Some(ckpt_dir.clone());

    fs::create_dir_all(&a.out_dir)?;
    let result = train(&run)?;
    let metrics_path = a.out_dir.join("metrics.csv");
    write_metrics_csv(&result.metrics, &metrics_path)?;

    let mut manifest = Manifest::new("train", &run, Some(a.seed));
    manifest.record_output(&metrics_path);
    if let Some(every) = run.checkpoint_every_epochs.filter(|&e| e > 0) {
        manifest.record_output(&ckpt_dir.join("ckpt_epoch_000000.rlcp"));
        for epoch in 1..=result.epochs_completed {
            if epoch % every == 0 {
                manifest.record_output(&ckpt_dir.join(format!("ckpt_epoch_{epoch:06}.rlcp")));
            }
        }
    }
    manifest.record_output(&ckpt_dir.join("ckpt_final.rlcp"));
    manifest.write(&a.out_dir)?;

    let last = result.metrics.evals.last();
    println!(
        "trained {} steps ({} epochs); val loss {} -> {}",
        run.steps,
        result.epochs_completed,
        result.metrics.evals.first().map_or(f64::NAN, |e| e.val_loss),
        last.map_or(f64::NAN, |e| e.val_loss),
    );
    println!("metrics: {}", metrics_path.display());
    Ok(())
}

fn default_sweep_config() -> SweepConfig {
    SweepConfig {
        base: default_run_config(),
        layers: vec![1, 2, 3, 4],
        seeds: Vec::new(),
        ic: vec![true, false],
    }
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SweepIcArg {
    /// Curriculum and no-curriculum cells
    Both,
    Ic,
    NonIc,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config: {"base": {...}, "layers": [...], "seeds": [...], "ic": [...]}
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for sweep.csv and the manifest
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Layer counts to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Run this many seeds: seed, seed+1, ...
    #[arg(long)]
    num_seeds: Option<usize>,
    /// Which curriculum settings to cover (--ic true/false narrows to one)
    #[arg(long, value_enum)]
    curriculum: Option<SweepIcArg>,
    #[command(flatten)]
    overrides: RunOverrides,
}

fn run_sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut cfg: SweepConfig = merged_config(&default_sweep_config(), a.config.as_deref())?;
    apply_run_overrides(&mut cfg.base, &a.overrides);
    cfg.base.seed = a.seed;
    if let Some(layers) = a.layers {
        cfg.layers = layers;
    }
    if let Some(n) = a.num_seeds {
        cfg.seeds = (0..n as u64).map(|i| a.seed + i).collect();
    } else if cfg.seeds.is_empty() {
        cfg.seeds = vec![a.seed];
    }
    if let Some(ic) = a.overrides.ic {
        cfg.ic = vec![ic];
    }
    if let Some(sel) = a.curriculum {
        cfg.ic = match sel {
            SweepIcArg::Both => vec![true, false],
            SweepIcArg::Ic => vec![true],
            SweepIcArg::NonIc => vec![false],
        };
    }

    fs::create_dir_all(&a.out_dir)?;
    let report = sweep(&cfg);
    let csv_path = a.out_dir.join("sweep.csv");
    write_file(&csv_path, &report.to_csv())?;

    let mut manifest = Manifest::new("sweep", &cfg, Some(a.seed));
    manifest.record_output(&csv_path);
    manifest.write(&a.out_dir)?;

    for &ic in &cfg.ic {
        for &layers in &cfg.layers {
            match report.mean_final(ic, layers) {
                Some(mean) => println!(
                    "{} layers={layers}: mean final loss {mean:.6}",
                    if ic { "ic" } else { "non-ic" }
                ),
                None => println!(
                    "{} layers={layers}: no finished cells",
                    if ic { "ic" } else { "non-ic" }
                ),
            }
        }
    }
    println!("sweep table: {}", csv_path.display());

    let failures: Vec<String> = report
        .cells
        .iter()
        .filter_map(|c| {
            c.error.as_ref().map(|e| {
                format!(
                    "{} layers={} seed={}: {e}",
                    if c.ic { "ic" } else { "non-ic" },
                    c.layers,
                    c.seed
                )
            })
        })
        .collect();
    if !failures.is_empty() {
        return Err(CliError::Sweep(format!(
            "{} of {} cells failed: {}",
            failures.len(),
            report.cells.len(),
            failures.join("; ")
        )));
    }
    Ok(())
}

// --- analyze / ablate / emerge --------------------------------------------------

#[derive(Args)]
struct AnalyzeArgs {
    /// Model checkpoint to inspect
    #[arg(long)]
    checkpoint: PathBuf,
    /// Examples to average attention maps over
    #[arg(long, default_value_t = 8)]
    examples: usize,
    /// Directory for attention CSV/SVG files and the manifest
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct AnalyzeManifestConfig<'a> {
    checkpoint: String,
    task: &'a TaskConfig,
    examples: usize,
}

fn run_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let task = ckpt.task;
    let examples = gen_batch(&task, derive_seed(task.seed, DOM_TRACE, 0), a.examples);
    export_attention_maps(&ckpt.model, &examples, task.n, &a.out_dir)?;

    let cfg = AnalyzeManifestConfig {
        checkpoint: a.checkpoint.display().to_string(),
        task: &task,
        examples: a.examples,
    };
    let mut manifest = Manifest::new("analyze", &cfg, Some(task.seed));
    for e in 0..examples.len() {
        for l in 0..ckpt.model.config.layers {
            for h in 0..ckpt.model.config.heads_per_layer {
                manifest.record_output(&a.out_dir.join(format!("attn_ex{e:03}_l{l}h{h}.csv")));
                manifest.record_output(&a.out_dir.join(format!("attn_ex{e:03}_l{l}h{h}.svg")));
            }
        }
    }
    for l in 0..ckpt.model.config.layers {
        for h in 0..ckpt.model.config.heads_per_layer {
            manifest.record_output(&a.out_dir.join(format!("attn_avg_l{l}h{h}.csv")));
            manifest.record_output(&a.out_dir.join(format!("attn_avg_l{l}h{h}.svg")));
        }
    }
    manifest.write(&a.out_dir)?;
    println!(
        "wrote attention maps for {} examples x {} layers x {} heads (plus averages) to {}",
        examples.len(),
        ckpt.model.config.layers,
        ckpt.model.config.heads_per_layer,
        a.out_dir.display()
    );
    Ok(())
}

#[derive(Args)]
struct AblateArgs {
    /// Model checkpoint to ablate
    #[arg(long)]
    checkpoint: PathBuf,
    /// Circuit hypothesis (JSON)
    #[arg(long)]
    circuit: PathBuf,
    /// Validation examples for MSE comparison
    #[arg(long, default_value_t = 64)]
    examples: usize,
    /// Directory for ablation.csv and the manifest
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct AblateManifestConfig<'a> {
    checkpoint: String,
    circuit: &'a CircuitSpec,
    task: &'a TaskConfig,
    examples: usize,
}

fn run_ablate(a: AblateArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let task = ckpt.task;
    let circuit = CircuitSpec::from_json_file(&a.circuit)?;
    let val_set = gen_batch(&task, derive_seed(task.seed, DOM_VAL_DATA, 0), a.examples);
    let report = validate_circuit(&ckpt.model, &task, &circuit, &val_set)?;

    fs::create_dir_all(&a.out_dir)?;
    let mut csv = String::from("ablation,mse\n");
    csv.push_str(&format!("unablated,{}\n", report.unablated_mse));
    for (label, mse) in report.rows() {
        csv.push_str(&format!("{},{mse}\n", label.replace(',', ";")));
    }
    let csv_path = a.out_dir.join("ablation.csv");
    write_file(&csv_path, &csv)?;

    let cfg = AblateManifestConfig {
        checkpoint: a.checkpoint.display().to_string(),
        circuit: &circuit,
        task: &task,
        examples: a.examples,
    };
    let mut manifest = Manifest::new("ablate", &cfg, Some(task.seed));
    manifest.record_output(&csv_path);
    manifest.write(&a.out_dir)?;

    println!("unablated mse: {}", report.unablated_mse);
    println!("combined-circuit mse: {}", report.combined_mse);
    for (label, mse) in &report.knockouts {
        println!("knockout {label}: {mse}");
    }
    println!("table: {}", csv_path.display());
    Ok(())
}

#[derive(Args)]
struct EmergeArgs {
    /// Directory of epoch checkpoints (*.rlcp)
    #[arg(long)]
    checkpoint_dir: PathBuf,
    /// Circuit whose paths are traced (JSON)
    #[arg(long)]
    circuit: PathBuf,
    /// Examples to average attention over
    #[arg(long, default_value_t = 16)]
    examples: usize,
    /// Attention level that counts as "formed"
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Directory for emergence.csv, crossings.csv, and the manifest
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct EmergeManifestConfig<'a> {
    checkpoint_dir: String,
    circuit: &'a CircuitSpec,
    examples: usize,
    threshold: f64,
}

fn run_emerge(a: EmergeArgs) -> Result<(), CliError> {
    let circuit = CircuitSpec::from_json_file(&a.circuit)?;
    let trace = emergence_trace(&a.checkpoint_dir, &circuit, a.examples)?;
    for (path, reason) in &trace.skipped {
        eprintln!("warning: skipped {path}: {reason}");
    }

    fs::create_dir_all(&a.out_dir)?;
    let trace_path = a.out_dir.join("emergence.csv");
    write_file(&trace_path, &trace.to_csv())?;

    let mut crossings = String::from("path_id,crossing_epoch\n");
    for p in &trace.paths {
        match crossing_epoch(p, a.threshold) {
            Some(epoch) => crossings.push_str(&format!("{},{epoch}\n", p.path_id)),
            None => crossings.push_str(&format!("{},\n", p.path_id)),
        }
    }
    let crossings_path = a.out_dir.join("crossings.csv");
    write_file(&crossings_path, &crossings)?;

    let cfg = EmergeManifestConfig {
        checkpoint_dir: a.checkpoint_dir.display().to_string(),
        circuit: &circuit,
        examples: a.examples,
        threshold: a.threshold,
    };
    // seed comes from the checkpoints' embedded task config; read one back
    // through the trace is overkill, so record the circuit hash only.
    let mut manifest = Manifest::new("emerge", &cfg, None);
    manifest.record_output(&trace_path);
    manifest.record_output(&crossings_path);
    manifest.write(&a.out_dir)?;

    for p in &trace.paths {
        match crossing_epoch(p, a.threshold) {
            Some(epoch) => println!("{}: crosses {} at epoch {epoch:.1}", p.path_id, a.threshold),
            None => println!("{}: never crosses {}", p.path_id, a.threshold),
        }
    }
    println!("trace: {}", trace_path.display());
    Ok(())
}

// --- flow ------------------------------------------------------------------------

#[derive(Args)]
struct FlowArgs {
    /// Largest D in the table (rows cover 1..=d_max)
    #[arg(long, default_value_t = 20)]
    d_max: u64,
    /// Also dump per-layer intervals for this D
    #[arg(long)]
    intervals: Option<usize>,
    /// Write flow.csv (and intervals.csv) here in addition to stdout
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct FlowManifestConfig {
    d_max: u64,
    intervals: Option<usize>,
}

fn run_flow(a: FlowArgs) -> Result<(), CliError> {
    let mut table = String::from("d,min_layers,theorem1_bound\n");
    for (d, layers, bound) in flow_table(a.d_max) {
        table.push_str(&format!("{d},{layers},{bound}\n"));
    }
    print!("{table}");

    let intervals_csv = a.intervals.map(|d| {
        let mut csv = String::from("t,position,lo,hi\n");
        let mut state = initial_state(d);
        for t in 0..=min_layers(d) {
            for i in 0..state.positions() {
                let (lo, hi) = state.interval(i);
                csv.push_str(&format!("{t},{i},{lo},{hi}\n"));
            }
            state = flow_step(&state);
        }
        csv
    });
    if let Some(csv) = &intervals_csv {
        print!("{csv}");
    }

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        let cfg = FlowManifestConfig {
            d_max: a.d_max,
            intervals: a.intervals,
        };
        let mut manifest = Manifest::new("flow", &cfg, None);
        let table_path = dir.join("flow.csv");
        write_file(&table_path, &table)?;
        manifest.record_output(&table_path);
        if let Some(csv) = &intervals_csv {
            let intervals_path = dir.join("intervals.csv");
            write_file(&intervals_path, csv)?;
            manifest.record_output(&intervals_path);
        }
        manifest.write(dir)?;
    }
    Ok(())
}

// --- bench -------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum FormulationArg {
    All,
    One(Formulation),
}

impl FromStr for FormulationArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            Ok(FormulationArg::All)
        } else {
            Formulation::from_str(s)
                .map(FormulationArg::One)
                .map_err(|e| format!("{e}, or \"all\""))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BenchSettings {
    #[serde(default = "default_bench_cases")]
    cases: usize,
    #[serde(default = "default_bench_chains")]
    chains: usize,
    /// None picks each formulation's fixed/default depth.
    #[serde(default)]
    d: Option<usize>,
    #[serde(default = "default_bench_attempts")]
    max_attempts: usize,
    /// Live HTTP endpoint; selected with --live.
    #[serde(default)]
    provider: Option<ProviderConfig>,
}

fn default_bench_cases() -> usize {
    100
}

fn default_bench_chains() -> usize {
    4
}

fn default_bench_attempts() -> usize {
    8
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            cases: default_bench_cases(),
            chains: default_bench_chains(),
            d: None,
            max_attempts: default_bench_attempts(),
            provider: None,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// JSON config: {"cases": n, "chains": n, "d": n, "max_attempts": n, "provider": {...}}
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for transcripts, report.csv, and the manifest
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    /// equations | lives-with | kingdoms | functions | relatives | all
    #[arg(long, default_value = "all")]
    formulation: FormulationArg,
    /// Cases per formulation
    #[arg(long)]
    cases: Option<usize>,
    /// Chains per prompt (the correct one plus distractors)
    #[arg(long)]
    chains: Option<usize>,
    /// Retrieval depth (rejected by fixed-shape formulations)
    #[arg(long)]
    d: Option<usize>,
    /// Resampling budget per case
    #[arg(long)]
    max_attempts: Option<usize>,
    /// Offline client: answers uniformly / always correctly / with garbage
    #[arg(long, conflicts_with = "live")]
    mock: Option<MockBehavior>,
    /// Query the live provider from the config file instead of a mock
    #[arg(long)]
    live: bool,
}

fn run_bench(a: BenchArgs) -> Result<(), CliError> {
    let mut settings: BenchSettings = merged_config(&BenchSettings::default(), a.config.as_deref())?;
    set(&mut settings.cases, a.cases);
    set(&mut settings.chains, a.chains);
    if a.d.is_some() {
        settings.d = a.d;
    }
    set(&mut settings.max_attempts, a.max_attempts);

    let formulations: Vec<Formulation> = match a.formulation {
        FormulationArg::All => Formulation::ALL.to_vec(),
        FormulationArg::One(f) => vec![f],
    };

    fs::create_dir_all(&a.out_dir)?;
    let mut report = BenchReport::default();
    let mut manifest = Manifest::new("bench", &settings, Some(a.seed));
    for &f in &formulations {
        let position = Formulation::ALL
            .iter()
            .position(|x| *x == f)
            .expect("formulation is canonical") as u64;
        let fseed = derive_seed(a.seed, DOM_BENCH, position);
        let mut client: Box<dyn ChatClient> = if a.live {
            let provider = settings.provider.clone().ok_or_else(|| {
                BenchError::Invalid("--live needs a provider block in the config file".into())
            })?;
            Box::new(HttpClient::new(provider)?)
        } else {
            let behavior = a.mock.unwrap_or(MockBehavior::Uniform);
            Box::new(MockClient::new(
                behavior,
                derive_seed(fseed, DOM_BENCH, u64::MAX),
            ))
        };
        let run = BenchRun {
            formulation: f,
            n_cases: settings.cases,
            n_chains: settings.chains,
            d: settings.d,
            max_attempts: settings.max_attempts,
        };
        let transcript_path = a.out_dir.join(format!("bench_{f}.jsonl"));
        let mut transcript = fs::File::create(&transcript_path)?;
        let (frep, _records) = run_cases(client.as_mut(), &run, fseed, Some(&mut transcript))?;
        println!(
            "{f}: accuracy {:.3} over {} cases (chance {:.3}, {} skipped)",
            frep.accuracy, frep.graded, frep.baseline, frep.skipped
        );
        report.formulations.push(frep);
        manifest.record_output(&transcript_path);
    }

    let report_path = a.out_dir.join("report.csv");
    write_file(&report_path, &report.to_csv())?;
    manifest.record_output(&report_path);
    manifest.write(&a.out_dir)?;
    println!("report: {}", report_path.display());
    Ok(())
}

// --- plot ------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum PlotKind {
    /// Mean final loss per layer count from a sweep.csv
    LossVsLayers,
    /// Per-position partial losses over training from a metrics.csv
    Partials,
    /// Path attention over epochs from an emergence.csv
    Emergence,
    /// Accuracy bars with chance baselines from a bench report.csv
    Accuracy,
}

impl PlotKind {
    fn name(self) -> &'static str {
        match self {
            PlotKind::LossVsLayers => "loss-vs-layers",
            PlotKind::Partials => "partials",
            PlotKind::Emergence => "emergence",
            PlotKind::Accuracy => "accuracy",
        }
    }
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// CSV produced by train/sweep/emerge/bench
    #[arg(long)]
    input: PathBuf,
    /// Output SVG; the plotted data is co-emitted next to it as CSV
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
    /// Threshold line for emergence plots
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Serialize)]
struct PlotManifestConfig {
    kind: String,
    input: String,
    title: Option<String>,
    threshold: f64,
}

fn csv_error(line: usize, detail: impl Into<String>) -> PlotError {
    PlotError::Csv {
        line,
        detail: detail.into(),
    }
}

/// sweep.csv rows that finished: (ic, layers, final_loss).
fn parse_sweep_csv(text: &str) -> Result<Vec<(bool, usize, f64)>, PlotError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| csv_error(1, "empty sweep csv"))?
        .1;
    if !header.starts_with("formulation,layers,seed,final_loss,status") {
        return Err(csv_error(
            1,
            format!("expected sweep header formulation,layers,seed,final_loss,status[,...], got {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 5 {
            return Err(csv_error(lineno, format!("expected at least 5 fields, got {}", parts.len())));
        }
        let ic = match parts[0] {
            "ic" => true,
            "non-ic" => false,
            other => return Err(csv_error(lineno, format!("bad formulation {other:?}"))),
        };
        let layers: usize = parts[1]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad layers {:?}: {e}", parts[1])))?;
        if parts[4] != "ok" {
            continue; // failed cells carry no final loss
        }
        let loss: f64 = parts[3]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad final_loss {:?}: {e}", parts[3])))?;
        rows.push((ic, layers, loss));
    }
    Ok(rows)
}

fn loss_vs_layers_series(rows: &[(bool, usize, f64)]) -> Vec<PlotSeries> {
    let mut series = Vec::new();
    for (ic, name) in [(true, "ic"), (false, "non-ic")] {
        let mut by_layers: std::collections::BTreeMap<usize, Vec<f64>> =
            std::collections::BTreeMap::new();
        for &(row_ic, layers, loss) in rows {
            if row_ic == ic {
                by_layers.entry(layers).or_default().push(loss);
            }
        }
        if by_layers.is_empty() {
            continue;
        }
        let points: Vec<(f64, f64)> = by_layers
            .iter()
            .map(|(layers, losses)| {
                (
                    *layers as f64,
                    losses.iter().sum::<f64>() / losses.len() as f64,
                )
            })
            .collect();
        series.push(PlotSeries::new(name, &points));
    }
    series
}

/// emergence.csv (epoch,path_id,attention) as one series per path, in
/// first-appearance order.
fn parse_emergence_csv(text: &str) -> Result<Vec<PlotSeries>, PlotError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| csv_error(1, "empty emergence csv"))?
        .1;
    if header.trim() != "epoch,path_id,attention" {
        return Err(csv_error(
            1,
            format!("expected header epoch,path_id,attention, got {header:?}"),
        ));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_path: std::collections::HashMap<String, Vec<(f64, f64)>> =
        std::collections::HashMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 3 {
            return Err(csv_error(lineno, format!("expected 3 fields, got {}", parts.len())));
        }
        let epoch: f64 = parts[0]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad epoch {:?}: {e}", parts[0])))?;
        let attention: f64 = parts[parts.len() - 1]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad attention {:?}: {e}", parts[parts.len() - 1])))?;
        let path_id = parts[1..parts.len() - 1].join(",");
        if !by_path.contains_key(&path_id) {
            order.push(path_id.clone());
        }
        by_path.entry(path_id).or_default().push((epoch, attention));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let pts = &by_path[&id];
            PlotSeries::new(id, pts)
        })
        .collect())
}

/// bench report.csv as (label, accuracy) bars plus (label, baseline) lines.
type BarData = (Vec<(String, f64)>, Vec<(String, f64)>);

fn parse_bench_report_csv(text: &str) -> Result<BarData, PlotError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| csv_error(1, "empty bench report csv"))?
        .1;
    if !header.starts_with("formulation,n_cases,graded,correct,accuracy,baseline") {
        return Err(csv_error(
            1,
            format!("expected bench report header, got {header:?}"),
        ));
    }
    let mut bars = Vec::new();
    let mut baselines = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 6 {
            return Err(csv_error(lineno, format!("expected at least 6 fields, got {}", parts.len())));
        }
        let accuracy: f64 = parts[4]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad accuracy {:?}: {e}", parts[4])))?;
        let baseline: f64 = parts[5]
            .parse()
            .map_err(|e| csv_error(lineno, format!("bad baseline {:?}: {e}", parts[5])))?;
        bars.push((parts[0].to_string(), accuracy));
        baselines.push((format!("chance ({})", parts[0]), baseline));
    }
    Ok((bars, baselines))
}

fn run_plot(a: PlotArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.input).map_err(|e| CliError::Config {
        path: a.input.display().to_string(),
        detail: e.to_string(),
    })?;
    let title = |fallback: &str| a.title.clone().unwrap_or_else(|| fallback.to_string());

    // Render fully before writing anything so a bad input leaves no files.
    let (svg, csv) = match a.kind {
        PlotKind::LossVsLayers => {
            let rows = parse_sweep_csv(&text)?;
            let series = loss_vs_layers_series(&rows);
            let plot = LinePlot {
                title: title("Final validation loss by number of layers"),
                x_label: "layers".into(),
                y_label: "final validation loss".into(),
                series,
                log_y: true,
                hlines: Vec::new(),
            };
            (render_line_svg(&plot)?, series_csv(&plot.series))
        }
        PlotKind::Partials => {
            let metrics = parse_metrics_csv(&text)?;
            let mut series = Vec::new();
            for j in 0..metrics.d {
                let points: Vec<(f64, f64)> = metrics
                    .evals
                    .iter()
                    .filter(|e| e.partials.len() > j)
                    .map(|e| (e.step as f64, e.partials[j]))
                    .collect();
                series.push(PlotSeries::new(format!("x_{}", j + 1), &points));
            }
            let total: Vec<(f64, f64)> = metrics
                .evals
                .iter()
                .map(|e| (e.step as f64, e.val_loss))
                .collect();
            series.push(PlotSeries::new("total", &total));
            let plot = LinePlot {
                title: title("Partial validation losses"),
                x_label: "training step".into(),
                y_label: "validation MSE".into(),
                series,
                log_y: true,
                hlines: Vec::new(),
            };
            (render_line_svg(&plot)?, series_csv(&plot.series))
        }
        PlotKind::Emergence => {
            let series = parse_emergence_csv(&text)?;
            let plot = LinePlot {
                title: title("Circuit path emergence"),
                x_label: "epoch".into(),
                y_label: "mean attention".into(),
                series,
                log_y: false,
                hlines: vec![("threshold".into(), a.threshold)],
            };
            (render_line_svg(&plot)?, series_csv(&plot.series))
        }
        PlotKind::Accuracy => {
            let (bars, baselines) = parse_bench_report_csv(&text)?;
            let svg = bars_svg(
                &title("Benchmark accuracy by formulation"),
                "accuracy",
                &bars,
                &baselines,
            )?;
            (svg, bars_csv(&bars, &baselines))
        }
    };

    let csv_path = a.out.with_extension("csv");
    write_text(&a.out, &svg)?;
    write_text(&csv_path, &csv)?;

    let cfg = PlotManifestConfig {
        kind: a.kind.name().to_string(),
        input: a.input.display().to_string(),
        title: a.title.clone(),
        threshold: a.threshold,
    };
    let mut manifest = Manifest::new("plot", &cfg, None);
    manifest.record_output(&a.out);
    manifest.record_output(&csv_path);
    manifest.write(out_dir_for(&a.out))?;
    println!("wrote {} and {}", a.out.display(), csv_path.display());
    Ok(())
}
