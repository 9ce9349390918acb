//! `ridgetrack` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or malformed input, 2 invalid configuration
//! or usage, 3 numerical degeneracy.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ridgetrack::synthlab::{self, Noise, Preset, SimulationSpec};
use ridgetrack::videotensor::{read_trajectory_csv, write_trajectory_csv};
use ridgetrack::{detect, load_tensor, save_tensor, DetectConfig, ErrorKind, ScaleParams, TensorFormat, Window};

#[derive(Debug, Parser)]
#[command(name = "ridgetrack", version, about = "Spatio-temporal ridge trajectory extraction")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic blob video with its ground-truth trajectory.
    Simulate(SimulateArgs),
    /// Extract the ridge trajectory from a video tensor.
    Detect(DetectArgs),
    /// Compare two trajectory CSVs frame by frame.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in scenario (gamma1, gamma2, gamma3).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Key-value simulation file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Poisson noise seed.
    #[arg(long, conflicts_with = "no_noise")]
    seed: Option<u64>,
    /// Write only the clean tensor.
    #[arg(long)]
    no_noise: bool,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    /// Binary for files, PGM sequence for directories.
    Auto,
    Binary,
    Pgm,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Tensor file, or a directory of frame_%05d.pgm files.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// Trajectory CSV; diagnostics go next to it.
    #[arg(short, long, default_value = "trajectory.csv")]
    output: PathBuf,
    /// Spatial scale in pixels.
    #[arg(long, default_value_t = ScaleParams::default().sigma)]
    sigma: f64,
    /// Temporal scale in frames.
    #[arg(long, default_value_t = ScaleParams::default().delta)]
    delta: f64,
    /// Kernel radius in scale units.
    #[arg(long, default_value_t = ScaleParams::default().truncate)]
    truncate: f64,
    /// Speed bound on candidate tangents, pixels/frame.
    #[arg(long, default_value_t = DetectConfig::default().tangent_cap)]
    tangent_cap: f64,
    /// Disable the gradient-yielded branch.
    #[arg(long)]
    no_hatted: bool,
    /// Linking window radius in pixels, or `full`.
    #[arg(long, default_value_t = Window::default(), value_parser = parse_window)]
    window: Window,
    /// Curve kernel bandwidth in frames.
    #[arg(long, default_value_t = DetectConfig::default().bandwidth)]
    bandwidth: f64,
    /// Confidence-region level.
    #[arg(long, default_value_t = DetectConfig::default().alpha)]
    alpha: f64,
    /// Also write the curve sampled this many times per frame.
    #[arg(long)]
    oversample: Option<usize>,
    /// Track a dark feature (valley) instead of a bright one.
    #[arg(long)]
    negate: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "RIDGETRACK_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    a: PathBuf,
    b: PathBuf,
    /// Half-open frame range `start:end` left out of the masked statistics.
    #[arg(long, value_parser = parse_mask)]
    mask: Option<Range<i64>>,
    /// Per-frame report CSV.
    #[arg(short, long, default_value = "report.csv")]
    output: PathBuf,
}

fn parse_window(s: &str) -> Result<Window, String> {
    s.parse().map_err(|e: ridgetrack::Error| e.to_string())
}

fn parse_mask(s: &str) -> Result<Range<i64>, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected start:end, got {s:?}"))?;
    let start: i64 = a.trim().parse().map_err(|e| format!("bad mask start {a:?}: {e}"))?;
    let end: i64 = b.trim().parse().map_err(|e| format!("bad mask end {b:?}: {e}"))?;
    if end <= start {
        return Err(format!("empty mask {start}:{end}"));
    }
    Ok(start..end)
}

#[derive(Debug)]
enum CliError {
    Core(ridgetrack::Error),
    Io(PathBuf, std::io::Error),
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Io => 1,
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Io(..) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "I/O error on {}: {e}", p.display()),
            CliError::Config(s) => write!(f, "invalid configuration: {s}"),
        }
    }
}

impl From<ridgetrack::Error> for CliError {
    fn from(e: ridgetrack::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Six significant digits.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// `out.csv` → `out.<suffix>`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn run_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            SimulationSpec::from_config_str(&text)?
        }
        (None, preset) => {
            let p: Preset = preset.as_deref().unwrap_or("gamma1").parse()?;
            SimulationSpec::preset(p).with_noise(Noise::Poisson { seed: 0 })
        }
    };
    if let Some(seed) = args.seed {
        spec.noise = Noise::Poisson { seed };
    }
    if args.no_noise {
        spec.noise = Noise::None;
    }
    spec.validate()?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Io(args.out_dir.clone(), e))?;

    let clean = synthlab::render_clean(&spec)?;
    let clean_path = args.out_dir.join("clean.bin");
    save_tensor(&clean, &clean_path, TensorFormat::Binary)?;
    println!("wrote {}", clean_path.display());
    if let Noise::Poisson { seed } = spec.noise {
        let noisy = synthlab::apply_poisson(&clean, seed);
        let noisy_path = args.out_dir.join("noisy.bin");
        save_tensor(&noisy, &noisy_path, TensorFormat::Binary)?;
        println!("wrote {} (seed {seed})", noisy_path.display());
    }
    let truth_path = args.out_dir.join("truth.csv");
    let [w, h, _] = spec.dims;
    write_trajectory_csv(&truth_path, &spec.truth(), w, h)?;
    println!("wrote {}", truth_path.display());
    Ok(())
}

fn run_detect(args: &DetectArgs) -> CliResult<()> {
    let cfg = DetectConfig {
        scale: ScaleParams {
            sigma: args.sigma,
            delta: args.delta,
            truncate: args.truncate,
        },
        tangent_cap: args.tangent_cap,
        window: args.window,
        bandwidth: args.bandwidth,
        alpha: args.alpha,
        negate: args.negate,
        hatted: !args.no_hatted,
    };
    cfg.validate()?;
    if args.oversample == Some(0) {
        return Err(CliError::Config("oversample must be at least 1".into()));
    }
    let format = match args.format {
        FormatArg::Binary => TensorFormat::Binary,
        FormatArg::Pgm => TensorFormat::PgmSequence,
        FormatArg::Auto if args.input.is_dir() => TensorFormat::PgmSequence,
        FormatArg::Auto => TensorFormat::Binary,
    };

    let start = Instant::now();
    let v = load_tensor(&args.input, format)?;
    info!("loaded {:?} tensor from {}", v.dims(), args.input.display());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let det = pool.install(|| detect(&v, &cfg))?;
    let records = det.records()?;

    write_trajectory_csv(&args.output, &records, v.width(), v.height())?;
    let diag = &det.diagnostics;
    write_file(&sidecar(&args.output, "diagnostics.txt"), &diag.to_text())?;
    let json = serde_json::to_string_pretty(diag).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&sidecar(&args.output, "diagnostics.json"), &json)?;
    if let Some(k) = args.oversample {
        let mut s = String::from("t,u,w\n");
        for [t, u, w] in det.dense(k)? {
            s.push_str(&format!("{t},{u},{w}\n"));
        }
        write_file(&sidecar(&args.output, "dense.csv"), &s)?;
    }

    println!(
        "frames {} runtime {} s mean max-psi {} mu {}",
        records.len(),
        sig6(start.elapsed().as_secs_f64()),
        sig6(diag.mean_max_psi()),
        sig6(diag.mu)
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let a = read_trajectory_csv(&args.a)?;
    let b = read_trajectory_csv(&args.b)?;
    let report = synthlab::evaluate(&a, &b, args.mask.clone())?;

    let mut s = String::from("tau,deviation,masked\n");
    for (tau, d) in report.taus.iter().zip(&report.deviations) {
        let masked = args.mask.as_ref().is_some_and(|m| m.contains(tau));
        s.push_str(&format!("{tau},{d},{}\n", u8::from(masked)));
    }
    write_file(&args.output, &s)?;

    let line = |label: &str, m: &synthlab::Summary| {
        println!(
            "{label} frames {} mean {} rmse {} max {} below-1px {}",
            m.frames,
            sig6(m.mean),
            sig6(m.rmse),
            sig6(m.max),
            sig6(m.fraction_below_one)
        )
    };
    line("all", &report.summary);
    if let (Some((lo, hi)), Some(m)) = (report.mask, &report.masked) {
        line(&format!("outside {lo}:{hi}"), m);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Detect(a) => run_detect(a),
        Command::Evaluate(a) => run_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
