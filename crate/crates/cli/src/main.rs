//! `stsmix`: dataset generation, spectral analysis, band filtering, training,
//! evaluation, ablation sweeps and gradient checks from the command line.
//!
//! Exit codes: 0 success, 1 failed gradient check, 2 invalid usage, 3 config or
//! checkpoint mismatch, 4 any other runtime failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stsmix::data::{load_dataset, read_pcv, write_dataset, write_pcv, Dataset, DatasetSpec, Split, Task};
use stsmix::graph::{EdgeWeight, PointSet};
use stsmix::gradcheck::run_suite;
use stsmix::model::{HeadConfig, PreparedClip};
use stsmix::spectral::{band_reject, parse_band_list, rmse, spectrum_csv, spectrum_rows, BandSpec, GraphSpectrum};
use stsmix::train::{
    ablation_settings, evaluate, load_checkpoint, prepare_split, selection_metric, train_loop, AblationAxis, RunConfig,
    TrainOutputs,
};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "stsmix", version, about = "Graph-spectral point cloud video toolkit")]
struct Cli {
    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-frame spectral preprocessing.
    #[arg(long, global = true, env = "PCV_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=256))]
    threads: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory with a manifest.
    Gen(GenArgs),
    /// Energy spectrum of one frame as CSV.
    Spectrum(SpectrumArgs),
    /// Remove frequency bands from every frame of a clip.
    BandFilter(BandFilterArgs),
    /// Train a model; writes a per-epoch metrics CSV and the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print `metric=<value>`.
    Eval(EvalArgs),
    /// One training run per setting along an axis; writes `setting,metric` rows.
    Ablate(AblateArgs),
    /// Finite-difference gradient suite.
    GradCheck(GradCheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Classification,
    Segmentation,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Segmentation => Task::Segmentation,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Clips per class (classification) or scenes in total (segmentation).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    clips: u64,
    /// Frames per clip.
    #[arg(long = "T", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    frames: u64,
    /// Points per frame.
    #[arg(long = "N", default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    points: u64,
    /// Standard deviation of the per-point Gaussian jitter.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Graph neighbors per point.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BandFilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated bands to remove (`low`, `mid`, `high`); may be empty.
    #[arg(long, default_value = "")]
    drop: String,
    #[arg(long, default_value_t = 6)]
    fl: usize,
    #[arg(long, default_value_t = 10)]
    fh: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

/// Run-configuration overrides shared by train, eval and ablate.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// JSON run configuration; flags below take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated epochs at which the learning rate decays.
    #[arg(long, value_delimiter = ',')]
    decay_epochs: Option<Vec<usize>>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    fl: Option<usize>,
    #[arg(long)]
    fh: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    /// Checkpoint of the epoch with the best test-split metric.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// When given, the checkpoint must have been trained with this model configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Bands,
    Thresholds,
    Depth,
    K,
}

impl From<AxisArg> for AblationAxis {
    fn from(a: AxisArg) -> AblationAxis {
        match a {
            AxisArg::Bands => AblationAxis::Bands,
            AxisArg::Thresholds => AblationAxis::Thresholds,
            AxisArg::Depth => AblationAxis::Depth,
            AxisArg::K => AblationAxis::K,
        }
    }
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// `setting,metric` CSV.
    #[arg(long)]
    out: PathBuf,
    /// Directory receiving `<setting>.csv` and `<setting>.ckpt` for every run.
    #[arg(long)]
    runs: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Toy,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, value_enum, default_value = "toy")]
    scale: Scale,
    /// Scales one operation's analytic gradient to exercise the failure path.
    #[arg(long, hide = true)]
    corrupt_op: Option<String>,
}

enum Failure {
    Usage(String),
    Mismatch(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Mismatch(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Mismatch(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<stsmix::Error> for Failure {
    fn from(e: stsmix::Error) -> Self {
        use stsmix::Error as E;
        match e {
            E::ConfigMismatch(_) | E::Checkpoint(_) => Failure::Mismatch(e.to_string()),
            E::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads as usize;
    let seed = cli.seed;
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, seed),
        Command::Spectrum(a) => cmd_spectrum(a, threads),
        Command::BandFilter(a) => cmd_band_filter(a, threads),
        Command::Train(a) => cmd_train(a, seed, threads),
        Command::Eval(a) => cmd_eval(a, threads),
        Command::Ablate(a) => cmd_ablate(a, seed, threads),
        Command::GradCheck(a) => cmd_grad_check(a, seed),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// Writes one line to stdout; a closed pipe is not an error worth dying over.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn echo_config(value: &impl serde::Serialize) {
    if let Ok(json) = serde_json::to_string(value) {
        eprintln!("{json}");
    }
}

/// Creates (or truncates) `path` up front so an unwritable destination is reported as
/// a usage error before any work is done.
fn ensure_writable(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    fs::File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let probe = path.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs, seed: Option<u64>) -> CmdResult {
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(Failure::Usage(format!("--noise must be finite and non-negative, got {}", a.noise)));
    }
    let spec = DatasetSpec {
        task: a.task.into(),
        clips: a.clips as usize,
        frames: a.frames as usize,
        points: a.points as usize,
        noise_sigma: a.noise,
        seed: seed.unwrap_or(0),
        ..DatasetSpec::default()
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    echo_config(&spec);
    ensure_dir(&a.out)?;
    let manifest = write_dataset(&a.out, &spec).map_err(|e| match e {
        stsmix::Error::Io { .. } => Failure::Usage(e.to_string()),
        e => e.into(),
    })?;
    say(&format!("clips={} labels={}", manifest.clips.len(), manifest.num_labels));
    Ok(ExitCode::SUCCESS)
}

fn read_video(path: &Path) -> Result<stsmix::data::PointCloudVideo, Failure> {
    read_pcv(path).map_err(|e| match e {
        stsmix::Error::Io { .. } => Failure::Usage(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    })
}

fn cmd_spectrum(a: SpectrumArgs, _threads: usize) -> CmdResult {
    echo_config(&serde_json::json!({ "in": a.input, "frame": a.frame, "k": a.k, "out": a.out }));
    let video = read_video(&a.input)?;
    if a.frame >= video.frames() {
        return Err(Failure::Usage(format!(
            "frame {} out of range: the clip has {} frames",
            a.frame,
            video.frames()
        )));
    }
    if a.k == 0 || a.k >= video.points() {
        return Err(Failure::Usage(format!("--k must be in 1..{}, got {}", video.points(), a.k)));
    }
    if let Some(out) = &a.out {
        ensure_writable(out)?;
    }
    let coords = video.frame_matrix(a.frame);
    let spectrum = GraphSpectrum::of_points(&PointSet::new(coords.clone())?, a.k, EdgeWeight::Binary)?;
    let csv = spectrum_csv(&spectrum_rows(&spectrum, &coords)?);
    match &a.out {
        Some(out) => write_text(out, &csv)?,
        None => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_band_filter(a: BandFilterArgs, threads: usize) -> CmdResult {
    let drop = parse_band_list(&a.drop).map_err(|e| Failure::Usage(e.to_string()))?;
    echo_config(&serde_json::json!({
        "in": a.input, "out": a.out, "drop": drop.iter().map(|b| b.name()).collect::<Vec<_>>(),
        "fl": a.fl, "fh": a.fh, "k": a.k,
    }));
    let mut video = read_video(&a.input)?;
    let n = video.points();
    let bands = BandSpec::new(a.fl, a.fh, n).map_err(|e| Failure::Usage(e.to_string()))?;
    if a.k == 0 || a.k >= n {
        return Err(Failure::Usage(format!("--k must be in 1..{n}, got {}", a.k)));
    }
    ensure_writable(&a.out)?;

    let filter = |t: usize| -> stsmix::Result<(stsmix::numerics::Matrix, f64)> {
        let coords = video.frame_matrix(t);
        let spectrum = GraphSpectrum::of_points(&PointSet::new(coords.clone())?, a.k, EdgeWeight::Binary)?;
        let kept = band_reject(&spectrum, &coords, &drop, &bands)?;
        let err = rmse(&kept, &coords);
        Ok((kept, err))
    };
    let frames = video.frames();
    let results: Vec<stsmix::Result<_>> = if threads <= 1 {
        (0..frames).map(filter).collect()
    } else {
        let chunk = frames.div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..frames)
                .step_by(chunk)
                .map(|start| s.spawn(move || (start..(start + chunk).min(frames)).map(filter).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    for (t, r) in results.into_iter().enumerate() {
        let (kept, err) = r?;
        video.set_frame(t, &kept)?;
        say(&format!("frame={t} rmse={err}"));
    }
    write_pcv(&a.out, &video).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

/// Prepares `split`, refusing an empty one: metrics over zero clips are meaningless.
fn prepare_nonempty(dataset: &Dataset, split: Split, cfg: &RunConfig, threads: usize) -> Result<Vec<PreparedClip>, Failure> {
    let clips = prepare_split(dataset, split, cfg, threads)?;
    if clips.is_empty() {
        return Err(Failure::Usage(format!(
            "{}: the {} split is empty (generate at least 2 clips per class)",
            dataset.root.display(),
            split.name()
        )));
    }
    Ok(clips)
}

fn open_dataset(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(|e| match e {
        stsmix::Error::Io { .. } => Failure::Usage(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    })
}

/// Config file (or defaults matching the dataset), then flag overrides, then validation.
fn effective_config(flags: &RunFlags, dataset: &Dataset, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut c = RunConfig {
                task: dataset.task(),
                ..RunConfig::default()
            };
            c.model.head = match dataset.task() {
                Task::Classification => HeadConfig::Classification {
                    num_classes: dataset.num_labels(),
                },
                Task::Segmentation => HeadConfig::Segmentation {
                    num_labels: dataset.num_labels(),
                },
            };
            c
        }
    };
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.lr {
        cfg.lr0 = v;
    }
    if let Some(v) = &flags.decay_epochs {
        cfg.decay_epochs = v.clone();
    }
    if let Some(v) = flags.grad_clip {
        cfg.grad_clip = v;
    }
    if let Some(v) = flags.channels {
        cfg.model.channels = v;
    }
    if let Some(v) = flags.blocks {
        cfg.model.blocks = v;
    }
    if let Some(v) = flags.k {
        cfg.model.k = v;
    }
    if let Some(v) = flags.fl {
        cfg.model.f_low = v;
    }
    if let Some(v) = flags.fh {
        cfg.model.f_high = v;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, seed: Option<u64>, threads: usize) -> CmdResult {
    let dataset = open_dataset(&a.data)?;
    let cfg = effective_config(&a.run, &dataset, seed)?;
    echo_config(&cfg);
    for p in [&a.ckpt, &a.metrics].into_iter().flatten() {
        ensure_writable(p)?;
    }
    let train = prepare_nonempty(&dataset, Split::Train, &cfg, threads)?;
    let test = prepare_nonempty(&dataset, Split::Test, &cfg, threads)?;
    let outcome = train_loop(
        &cfg,
        &train,
        &test,
        TrainOutputs {
            metrics_csv: a.metrics.as_deref(),
            checkpoint: a.ckpt.as_deref(),
        },
    )?;
    let last = outcome.history.last().map_or(f64::NAN, |r| r.val_metric);
    say(&format!(
        "steps={} final_metric={last} best_metric={} best_epoch={}",
        outcome.steps, outcome.best_metric, outcome.best_epoch
    ));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs, threads: usize) -> CmdResult {
    let dataset = open_dataset(&a.data)?;
    let expected = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Some(RunConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    if !a.ckpt.is_file() {
        return Err(Failure::Usage(format!("{}: no such checkpoint", a.ckpt.display())));
    }
    let (cfg, model, params) = load_checkpoint(&a.ckpt, expected.as_ref())?;
    echo_config(&cfg);
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let clips = prepare_nonempty(&dataset, split, &cfg, threads)?;
    let metrics = evaluate(&model, &params, &clips)?;
    say(&format!("metric={}", selection_metric(cfg.task, &metrics)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(a: AblateArgs, seed: Option<u64>, threads: usize) -> CmdResult {
    let dataset = open_dataset(&a.data)?;
    let base = effective_config(&a.run, &dataset, seed)?;
    echo_config(&base);
    ensure_writable(&a.out)?;
    if let Some(dir) = &a.runs {
        ensure_dir(dir)?;
    }
    let mut csv = String::from("setting,metric\n");
    for (name, cfg) in ablation_settings(a.axis.into(), &base) {
        let train = prepare_nonempty(&dataset, Split::Train, &cfg, threads)?;
        let test = prepare_nonempty(&dataset, Split::Test, &cfg, threads)?;
        let (metrics_path, ckpt_path) = match &a.runs {
            Some(dir) => (Some(dir.join(format!("{name}.csv"))), Some(dir.join(format!("{name}.ckpt")))),
            None => (None, None),
        };
        let outcome = train_loop(
            &cfg,
            &train,
            &test,
            TrainOutputs {
                metrics_csv: metrics_path.as_deref(),
                checkpoint: ckpt_path.as_deref(),
            },
        )?;
        let metric = outcome.history.last().map_or(f64::NAN, |r| r.val_metric);
        say(&format!("{name},{metric}"));
        csv.push_str(&format!("{name},{metric}\n"));
        write_text(&a.out, &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grad_check(a: GradCheckArgs, seed: Option<u64>) -> CmdResult {
    let Scale::Toy = a.scale;
    let seed = seed.unwrap_or(0);
    echo_config(&serde_json::json!({ "seed": seed, "scale": "toy" }));
    let checks = run_suite(seed, a.corrupt_op.as_deref()).map_err(|e| match e {
        stsmix::Error::Parameter(m) => Failure::Usage(m),
        e => e.into(),
    })?;
    for c in &checks {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        say(&format!("{:<18} worst={:.3e} tol={:.0e} {verdict}", c.op, c.error, c.tolerance));
    }
    Ok(if checks.iter().all(|c| c.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
