//! Command-line front end.
//!
//! Data goes to the writer passed to [`run`] (stdout in the binary); logs go
//! through `log` to stderr.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::advscm::Selection;
use crate::config::{AugConfig, LabelMode};
use crate::demo::{self, DemoConfig, DemoRow};
use crate::error::{Error, Result};
use crate::{bench, pipeline, verify};

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "ED4_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "ed4",
    version,
    about = "Sector mixing and patch-shuffle augmentation for face-forgery datasets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mix a manifest-described dataset and write the augmented copy.
    Augment(AugmentArgs),
    /// Write one random patch shuffle per image, with its permutation.
    Shuffle(AugmentArgs),
    /// Train the reference scorer against the reference extractor and report D.
    AdvDemo(AdvDemoArgs),
    /// Run the built-in invariant checks.
    Verify(VerifyArgs),
    /// Measure mixing and shuffling throughput.
    Bench(BenchArgs),
}

/// Settings shared by the dataset commands; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with augmentation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub p_mix: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub mix_counts: Option<Vec<usize>>,
    #[arg(long)]
    pub angle_min: Option<f64>,
    #[arg(long)]
    pub angle_max: Option<f64>,
    #[arg(long)]
    pub min_sector: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub granularities: Option<Vec<u32>>,
    /// `hard` or `soft`.
    #[arg(long)]
    pub label_mode: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Side length images are resized to.
    #[arg(long)]
    pub size: Option<u32>,
    /// Also write random and adversarial shuffle views of each sample.
    #[arg(long)]
    pub shuffle_views: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; falls back to `output_dir` from the config file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AdvDemoArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Samples per round; the scorer is updated once per round.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub granularities: Option<Vec<u32>>,
    #[arg(long)]
    pub size: Option<u32>,
    /// Use these images instead of the synthetic batch.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Assignment rule while training: argmax or sample.
    #[arg(long)]
    pub selection: Option<Selection>,
    /// Feed raw distances to the scorer update instead of batch-centered ones.
    #[arg(long)]
    pub no_baseline: bool,
    /// Rounds scored with the frozen scorer after training.
    #[arg(long)]
    pub eval_rounds: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Run only this suite (or checks whose `suite::name` contains it).
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    /// Parallel workers; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Measuring time per row, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    pub millis: u64,
}

/// Process exit code for an error category.
pub fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 2,
        "io" => 3,
        _ => 4,
    }
}

/// One-line JSON error report for stderr.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.category(), "message": e.to_string() }).to_string()
}

/// `ED4_SEED` wins over the flag; warns when both are set.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>> {
    let Some(raw) = env else {
        return Ok(flag);
    };
    let seed: u64 = raw.trim().parse().map_err(|_| {
        Error::config(format!(
            "{SEED_ENV}=`{raw}` is not an unsigned 64-bit integer"
        ))
    })?;
    if let Some(f) = flag {
        if f != seed {
            log::warn!("{SEED_ENV}={seed} overrides --seed {f}");
        } else {
            log::warn!("{SEED_ENV} and --seed both given");
        }
    }
    Ok(Some(seed))
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

pub fn build_config(args: &ConfigArgs) -> Result<AugConfig> {
    let mut c = match &args.config {
        Some(path) => AugConfig::load(path)?,
        None => AugConfig::default(),
    };
    if let Some(seed) = resolve_seed(args.seed, env_seed().as_deref())? {
        c.seed = seed;
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value.clone() {
                c.$field = v;
            }
        };
    }
    set!(p_mix, args.p_mix);
    set!(mix_counts, args.mix_counts);
    set!(angle_min, args.angle_min);
    set!(angle_max, args.angle_max);
    set!(min_sector, args.min_sector);
    set!(granularities, args.granularities);
    set!(batch_size, args.batch_size);
    set!(epsilon, args.epsilon);
    set!(image_size, args.size);
    if let Some(mode) = &args.label_mode {
        c.label_mode = mode.parse::<LabelMode>()?;
    }
    if args.shuffle_views {
        c.shuffle_views = true;
    }
    c.validate()?;
    Ok(c)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(Error::config("--threads must be >= 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn output_dir(args: &AugmentArgs, cfg: &mut AugConfig) -> Result<PathBuf> {
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.output_dir
        .clone()
        .ok_or_else(|| Error::config("no output directory: pass --out or set output_dir"))
}

fn cmd_augment(args: &AugmentArgs, out: &mut dyn Write) -> Result<u8> {
    let mut cfg = build_config(&args.config)?;
    let dir = output_dir(args, &mut cfg)?;
    let records = pipeline::load_manifest(&args.manifest)?;
    let start = Instant::now();
    let summary = pool(args.threads)?.install(|| pipeline::run_augment(&records, &cfg, &dir))?;
    let line = serde_json::json!({
        "written": summary.written,
        "skipped": summary.skipped,
        "real": summary.real,
        "fake": summary.fake,
        "mixed": summary.mixed,
        "manifest": summary.manifest,
        "seconds": start.elapsed().as_secs_f64(),
    });
    writeln!(out, "{line}").map_err(stdout_err)?;
    Ok(0)
}

fn cmd_shuffle(args: &AugmentArgs, out: &mut dyn Write) -> Result<u8> {
    let mut cfg = build_config(&args.config)?;
    let dir = output_dir(args, &mut cfg)?;
    let records = pipeline::load_manifest(&args.manifest)?;
    let manifest = pool(args.threads)?.install(|| pipeline::run_shuffle(&records, &cfg, &dir))?;
    writeln!(out, "{}", serde_json::json!({ "manifest": manifest })).map_err(stdout_err)?;
    Ok(0)
}

fn cmd_adv_demo(args: &AdvDemoArgs, out: &mut dyn Write) -> Result<u8> {
    let defaults = DemoConfig::default();
    let seed = resolve_seed(Some(args.seed), env_seed().as_deref())?.unwrap_or(args.seed);
    let cfg = DemoConfig {
        seed,
        seeds: args.seeds,
        rounds: args.rounds,
        granularities: args.granularities.clone().unwrap_or(defaults.granularities),
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        image_size: args.size.unwrap_or(defaults.image_size),
        selection: args.selection.unwrap_or(defaults.selection),
        baseline: !args.no_baseline,
        eval_rounds: args.eval_rounds.unwrap_or(defaults.eval_rounds),
        ..defaults
    };
    if cfg.seeds == 0 {
        return Err(Error::config("--seeds must be >= 1"));
    }
    writeln!(out, "{}", DemoRow::HEADER).map_err(stdout_err)?;
    if cfg.rounds == 0 {
        return Ok(0);
    }
    let images = match &args.manifest {
        Some(path) => {
            let records = pipeline::load_manifest(path)?;
            let loaded = records
                .iter()
                .map(|r| pipeline::load_source(r, cfg.image_size).map(|s| s.image.pixels))
                .collect::<Result<Vec<_>>>()?;
            Some(loaded)
        }
        None => None,
    };
    let (summary, rows) = pool(args.threads)?.install(|| demo::run(&cfg, images.as_deref()))?;
    for row in &rows {
        writeln!(out, "{}", row.to_csv()).map_err(stdout_err)?;
    }
    writeln!(out, "{}", summary.report_line()).map_err(stdout_err)?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<u8> {
    let results = verify::run(args.filter.as_deref())?;
    write!(out, "{}", verify::render_table(&results)).map_err(stdout_err)?;
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        1
    })
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<u8> {
    let threads = match args.threads {
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let rows = bench::run(
        args.size,
        threads,
        Duration::from_millis(args.millis.max(1)),
    )?;
    writeln!(out, "{}", bench::Throughput::HEADER).map_err(stdout_err)?;
    for r in rows {
        writeln!(out, "{}", r.to_csv()).map_err(stdout_err)?;
    }
    Ok(0)
}

/// Execute a parsed command. Returns the exit code for non-error outcomes
/// (0, or 1 when `verify` finds a failing check).
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8> {
    match &cli.command {
        Command::Augment(a) => cmd_augment(a, out),
        Command::Shuffle(a) => cmd_shuffle(a, out),
        Command::AdvDemo(a) => cmd_adv_demo(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}
