//! Command-line front end.
//!
//! Every invocation resolves its settings (flags, then an optional
//! `--config` file, then defaults), creates `<out>/<run_id>/`, runs the
//! command on a worker pool of `--jobs` threads and writes `manifest.json`
//! beside the outputs, also on failure. Exit codes: 0 success, 1 failure,
//! 2 partial failure, 64 usage error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::net_quality::{Connectivity, Polarity, ThresholdMethod};
use crate::report::{self, RunManifest, RunStatus};
use crate::synthgen::Layout;
use config::{ConfigFile, Resolver};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MELONQA_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "melonqa", version, about = "Quality assessment for generated and real melon images")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Parent directory for run directories [env: MELONQA_OUT_DIR; default: runs]
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Name of this run's directory under --out [default: timestamp based]
    #[arg(long, value_name = "ID")]
    run_id: Option<String>,
    /// Worker threads [default: available processors]
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// `key = value` settings file; flags take precedence over it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score generated images against originals with MSE, PSNR and SSIM
    Metrics(MetricsArgs),
    /// Match YOLO predictions to ground-truth boxes by IoU
    DetectEval(DetectEvalArgs),
    /// Quantify net density and uniformity of masked melons
    NetQuality(NetQualityArgs),
    /// One-way ANOVA, Tukey HSD and compact letters for a group,value CSV
    Stats(StatsArgs),
    /// Generate synthetic net-pattern fixtures with exact ground truth
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Metrics(_) => "metrics",
            Command::DetectEval(_) => "detect-eval",
            Command::NetQuality(_) => "net-quality",
            Command::Stats(_) => "stats",
            Command::Synth(_) => "synth",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Metrics(a) => &a.common,
            Command::DetectEval(a) => &a.common,
            Command::NetQuality(a) => &a.common,
            Command::Stats(a) => &a.common,
            Command::Synth(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Stem,
    Manifest,
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stem" => Ok(Self::Stem),
            "manifest" => Ok(Self::Manifest),
            _ => Err(format!("expected `stem` or `manifest`, got {s:?}")),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stem => "stem",
            Self::Manifest => "manifest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toggle {
    On,
    Off,
}

impl FromStr for Toggle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            _ => Err(format!("expected `on` or `off`, got {s:?}")),
        }
    }
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::On => "on",
            Self::Off => "off",
        })
    }
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Original image or directory of originals
    #[arg(long, value_name = "DIR|FILE")]
    original: Option<String>,
    /// Generated image or directory of generated images
    #[arg(long, value_name = "DIR|FILE")]
    generated: Option<String>,
    /// Pair by file stem or by an explicit pairs manifest [default: stem]
    #[arg(long, value_name = "stem|manifest")]
    pairing: Option<Pairing>,
    /// CSV of `original,generated` paths, relative to the CSV's directory
    #[arg(long, value_name = "CSV")]
    pairs_manifest: Option<String>,
    /// Resample generated images onto the original's size [default: off]
    #[arg(long, value_name = "on|off")]
    resize: Option<Toggle>,
    /// SSIM window side, odd [default: 11]
    #[arg(long, value_name = "N")]
    ssim_window: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct DetectEvalArgs {
    /// Directory of ground-truth YOLO .txt files
    #[arg(long, value_name = "DIR")]
    ground_truth: Option<String>,
    /// Directory of predicted YOLO .txt files
    #[arg(long, value_name = "DIR")]
    predictions: Option<String>,
    /// CSV of `image_id,width,height`
    #[arg(long, value_name = "CSV")]
    image_sizes: Option<String>,
    /// Minimum IoU for a match [default: 0.5]
    #[arg(long, value_name = "F")]
    iou_threshold: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct NetQualityArgs {
    /// Directory of melon images
    #[arg(long, value_name = "DIR")]
    images: Option<String>,
    /// Directory of same-stem fruit masks
    #[arg(long, value_name = "DIR")]
    masks: Option<String>,
    /// `otsu` or a fixed luma level [default: otsu]
    #[arg(long, value_name = "otsu|N")]
    threshold: Option<ThresholdMethod>,
    /// Which side of the threshold is skin [default: light]
    #[arg(long, value_name = "light|dark")]
    polarity: Option<Polarity>,
    /// Smallest island kept, in pixels [default: 4]
    #[arg(long, value_name = "N")]
    min_island: Option<usize>,
    /// Pixel connectivity of islands [default: 8]
    #[arg(long, value_name = "4|8")]
    connectivity: Option<Connectivity>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// CSV of `group,value` rows
    #[arg(long, value_name = "CSV")]
    input: Option<String>,
    /// Row label for the metric [default: value]
    #[arg(long, value_name = "NAME")]
    metric_name: Option<String>,
    /// Significance level for the letters [default: 0.05]
    #[arg(long, value_name = "F")]
    alpha: Option<f64>,
    /// Decimal places of table means [default: 1 for PSNR and MSE, else 2]
    #[arg(long, value_name = "N")]
    decimals: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON spec; individual flags override its fields
    #[arg(long, value_name = "JSON")]
    spec: Option<String>,
    /// Number of fixtures; fixture i uses seed + i [default: 1]
    #[arg(long, value_name = "N")]
    count: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// grid, jittered_grid or voronoi
    #[arg(long)]
    layout: Option<Layout>,
    #[arg(long)]
    cell_size: Option<usize>,
    #[arg(long)]
    crack_width: Option<usize>,
    #[arg(long)]
    skin_level: Option<u8>,
    #[arg(long)]
    net_level: Option<u8>,
    /// Circular fruit mask radius; omit for a full-frame mask
    #[arg(long)]
    fruit_radius: Option<f64>,
    /// Voronoi sites [default: one per cell_size^2 pixels]
    #[arg(long)]
    site_count: Option<usize>,
    /// Ground-truth island connectivity
    #[arg(long, value_name = "4|8")]
    connectivity: Option<Connectivity>,
    /// Ground-truth island floor in pixels
    #[arg(long, value_name = "N")]
    min_island: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

/// Ways a command can end other than success.
#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Fatal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Fatal(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Fatal(e) => write!(f, "{e}"),
        }
    }
}

/// Shared state of one run: its directory and manifest.
pub(crate) struct RunContext {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunContext {
    /// Writes `text` to `name` inside the run directory and lists it as an output.
    pub fn write(&mut self, name: &str, text: &str) -> crate::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        report::write_text(&path, text)?;
        self.manifest.outputs.push(name.to_owned());
        Ok(())
    }

    pub fn add_input(&mut self, path: &Path) -> crate::Result<()> {
        self.manifest.add_input(path)
    }

    pub fn note(&mut self, message: impl Into<String>) {
        self.manifest.messages.push(message.into());
    }
}

fn default_run_id(command: &str) -> String {
    format!(
        "{}-{command}-{}",
        chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ"),
        std::process::id()
    )
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let command_line: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    execute(cli.command, command_line)
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Fatal(Error::io(path, e)))?;
    ConfigFile::parse(&text, path).map_err(Failure::Usage)
}

fn execute(command: Command, command_line: Vec<String>) -> i32 {
    let name = command.name();
    let common = command.common().clone();
    let (config, config_failure) = match load_config(common.config.as_deref()) {
        Ok(c) => (c, None),
        Err(f) => (ConfigFile::default(), Some(f)),
    };
    let mut resolver = Resolver::new(&config, common.config.as_deref());

    // the run directory must be known before anything else can be recorded
    let env_out = std::env::var(OUT_DIR_ENV).ok().filter(|v| !v.is_empty());
    let location = resolver
        .value("out", common.out.clone(), env_out.unwrap_or_else(|| DEFAULT_OUT_DIR.to_owned()))
        .and_then(|out| {
            let run_id = resolver.value("run-id", common.run_id.clone(), default_run_id(name))?;
            Ok((out, run_id))
        });
    let (out, run_id) = match location {
        Ok(l) => l,
        Err(message) => {
            eprintln!("error: {message}");
            return EXIT_USAGE;
        }
    };
    let dir = match report::create_run_dir(Path::new(&out), &run_id) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot create run directory: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut ctx = RunContext {
        dir,
        manifest: RunManifest::new(run_id, command_line),
    };
    if let Some(path) = &common.config {
        if path.is_file() {
            let _ = ctx.add_input(path);
        }
    }

    let result = match config_failure {
        Some(f) => Err(f),
        None => resolve_and_run(command, &mut resolver, &mut ctx),
    };
    let status = match result {
        Ok(status) => status,
        Err(failure) => {
            eprintln!("error: {failure}");
            ctx.note(failure.to_string());
            match failure {
                Failure::Usage(_) => RunStatus::UsageError,
                Failure::Fatal(_) => RunStatus::Failed,
            }
        }
    };
    ctx.manifest.config = resolver.into_resolved();
    ctx.manifest.status = status;
    ctx.manifest.exit_code = match status {
        RunStatus::Success => EXIT_SUCCESS,
        RunStatus::Partial => EXIT_PARTIAL,
        RunStatus::Failed => EXIT_FAILURE,
        RunStatus::UsageError => EXIT_USAGE,
    };
    ctx.manifest.outputs.sort();
    if let Err(e) = report::emit_manifest(&ctx.dir, &ctx.manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_FAILURE;
    }
    eprintln!("{name}: {:?} -> {}", status, ctx.dir.display());
    ctx.manifest.exit_code
}

fn resolve_and_run(command: Command, resolver: &mut Resolver<'_>, ctx: &mut RunContext) -> Result<RunStatus, Failure> {
    let jobs = resolver
        .value("jobs", command.common().jobs, default_jobs())
        .map_err(Failure::Usage)?;
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let job = commands::resolve(command, resolver).map_err(Failure::Usage)?;
    resolver.check_unknown().map_err(Failure::Usage)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Fatal(Error::InvalidParameter(format!("cannot start worker pool: {e}"))))?;
    pool.install(|| job.run(ctx))
}
