//! `selfx` command line: super-resolution, recurrence analysis, reference
//! sweeps, synthetic corpora, metrics and comparison panels.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 pipeline failure.

pub mod panel;

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use selfx::frames::io::{list_frames, read_png, read_sequence, write_png, write_sequence};
use selfx::frames::Frame;
use selfx::metrics::MetricReport;
use selfx::pipeline::{
    analyze_recurrence, generate_synthetic, parse_override, super_resolve_video, sweep_references, PipelineConfig,
    RecurrenceRow, SweepRow,
};
use selfx::retrieval::{FrameStore, DEFAULT_CACHE_BYTES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;

/// Environment variable capping the search cache, in MiB.
pub const CACHE_ENV: &str = "SELFX_CACHE_MB";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Pipeline(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Pipeline(_) => EXIT_PIPELINE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline error: {m}"),
        }
    }
}

impl From<selfx::Error> for CliError {
    fn from(e: selfx::Error) -> Self {
        use selfx::Error as E;
        match e {
            E::Io { .. } | E::FrameIo { .. } => CliError::Io(e.to_string()),
            E::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "selfx",
    version,
    about = "Video super-resolution from cross-scale self-exemplars"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings shared by the processing subcommands.
#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file of `dotted.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set selection.k=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Upscaling factor.
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    scale: Option<u8>,
    /// Frame positions to process, `a..b` (half-open, in filename order).
    #[arg(long)]
    frames: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Super-resolve a PNG sequence.
    Sr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth sequence; adds metrics.csv.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Per-frame fraction of patches with a usable exemplar at each scale.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Scores every (K, V) reference-count combination.
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "k", value_delimiter = ',', default_value = "1,2,3,4")]
        k_values: Vec<usize>,
        #[arg(long = "v", value_delimiter = ',', default_value = "2")]
        v_values: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Writes a seeded synthetic corpus (lr/, hr/, masks/, instances.csv).
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        #[arg(long, value_delimiter = ',', default_value = "1.7,2.1,2.9")]
        scales: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR, SSIM and Charbonnier of a sequence against ground truth.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labeled comparison grid of equally sized images.
    Panel {
        /// Input image (repeatable, at least two).
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Labels in input order; file stems by default.
        #[arg(long = "label")]
        labels: Vec<String>,
        /// `x,y,width,height` applied to every image.
        #[arg(long)]
        crop: Option<panel::Crop>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit code. Diagnostics go to standard error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("selfx: {e}");
            e.code()
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn parse_range(s: &str, len: usize) -> CliResult<Range<usize>> {
    let bad = || CliError::Usage(format!("--frames {s:?} must be a..b with a < b <= {len}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
    let b = if b.is_empty() {
        len
    } else {
        b.parse().map_err(|_| bad())?
    };
    if a >= b || b > len {
        return Err(bad());
    }
    Ok(a..b)
}

fn load_config(run: &RunArgs) -> CliResult<PipelineConfig> {
    let text = match &run.config {
        Some(p) => fs::read_to_string(p).map_err(|e| io_err(p, e))?,
        None => String::new(),
    };
    let mut overrides = run
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<selfx::Result<Vec<_>>>()?;
    if let Some(w) = run.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    if let Some(s) = run.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(s) = run.scale {
        overrides.push(("upscale".into(), s.to_string()));
    }
    PipelineConfig::parse(&text, &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn cache_budget() -> CliResult<usize> {
    match std::env::var(CACHE_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|mb| mb << 20)
            .map_err(|_| CliError::Usage(format!("{CACHE_ENV}={v:?} is not a whole number of MiB"))),
        Err(_) => Ok(DEFAULT_CACHE_BYTES),
    }
}

fn read_frames(dir: &Path) -> CliResult<Vec<Frame<f32>>> {
    let frames = read_sequence::<f32>(dir)?;
    if frames.is_empty() {
        return Err(CliError::Io(format!("{}: no PNG frames", dir.display())));
    }
    Ok(frames)
}

/// Loads the input store and the selected frame positions.
fn load_video(input: &Path, run: &RunArgs) -> CliResult<(FrameStore<f32>, Vec<usize>)> {
    let frames = read_frames(input)?;
    let range = match &run.frames {
        Some(s) => parse_range(s, frames.len())?,
        None => 0..frames.len(),
    };
    let store = FrameStore::with_cache_budget(frames, cache_budget()?)?;
    Ok((store, range.collect()))
}

fn ground_truth(dir: &Path, positions: &[usize]) -> CliResult<Vec<Frame<f32>>> {
    let all = read_frames(dir)?;
    positions
        .iter()
        .map(|&i| {
            all.get(i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("ground truth has no frame {i}")))
        })
        .collect()
}

/// Reads every PNG of `input` and the ground-truth file of the same name.
fn paired_frames(input: &Path, gt: &Path) -> CliResult<(Vec<Frame<f32>>, Vec<Frame<f32>>)> {
    let paths = list_frames(input)?;
    if paths.is_empty() {
        return Err(CliError::Io(format!("{}: no PNG frames", input.display())));
    }
    let mut pred = Vec::with_capacity(paths.len());
    let mut truth = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.file_name().expect("listed file has a name");
        let g = gt.join(name);
        if !g.is_file() {
            return Err(CliError::Usage(format!("no ground truth {}", g.display())));
        }
        pred.push(read_png::<f32>(&p)?);
        truth.push(read_png::<f32>(&g)?);
    }
    Ok((pred, truth))
}

fn manifest(command: &str, cfg: &PipelineConfig) -> String {
    format!(
        "# selfx {} ({command})\n# Feed this file back with --config to repeat the run.\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_text()
    )
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Sr { input, out, gt, run } => {
            let cfg = load_config(&run)?;
            let (store, positions) = load_video(&input, &run)?;
            let gt = gt.map(|g| ground_truth(&g, &positions)).transpose()?;
            create_dir(&out)?;
            let (frames, report) = super_resolve_video(&store, &positions, &cfg, gt.as_deref())?;
            write_sequence(&frames, &out)?;
            write_text(&out.join("report.csv"), &report.diagnostics_csv())?;
            if let Some(m) = &report.metrics {
                write_text(&out.join("metrics.csv"), &m.csv())?;
            }
            write_text(&out.join("manifest.txt"), &manifest("sr", &cfg))?;
            log::info!("timings: {:?}, total {:?}", report.timings, report.total_time);
            Ok(())
        }
        Command::Analyze { input, out, run } => {
            let cfg = load_config(&run)?;
            let (store, positions) = load_video(&input, &run)?;
            create_dir(&out)?;
            let rows = analyze_recurrence(&store, &positions, &cfg)?;
            write_text(&out.join("recurrence.csv"), &RecurrenceRow::csv(&rows))?;
            write_text(&out.join("manifest.txt"), &manifest("analyze", &cfg))
        }
        Command::Sweep {
            input,
            gt,
            out,
            k_values,
            v_values,
            run,
        } => {
            let cfg = load_config(&run)?;
            let (store, positions) = load_video(&input, &run)?;
            let gt = ground_truth(&gt, &positions)?;
            create_dir(&out)?;
            let rows = sweep_references(&store, &positions, &gt, &cfg, &k_values, &v_values).map_err(|e| match e {
                selfx::Error::InvalidArgument(m) => CliError::Usage(m),
                e => e.into(),
            })?;
            write_text(&out.join("sweep.csv"), &SweepRow::csv(&rows))?;
            write_text(&out.join("manifest.txt"), &manifest("sweep", &cfg))
        }
        Command::Synth {
            seed,
            frames,
            scales,
            out,
        } => {
            let video = generate_synthetic::<f32>(seed, frames, &scales).map_err(|e| CliError::Usage(e.to_string()))?;
            write_sequence(&video.lr, &out.join("lr"))?;
            write_sequence(&video.hr, &out.join("hr"))?;
            write_sequence(&video.masks, &out.join("masks"))?;
            let mut csv = String::from("sprite,frame,x,y,side,scale\n");
            for i in &video.instances {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i.sprite, i.frame, i.x, i.y, i.side, i.scale
                ));
            }
            write_text(&out.join("instances.csv"), &csv)
        }
        Command::Metrics { input, gt, out } => {
            let (pred, gt) = paired_frames(&input, &gt)?;
            let report = MetricReport::evaluate(&pred, &gt).map_err(|e| CliError::Usage(e.to_string()))?;
            create_dir(&out)?;
            write_text(&out.join("metrics.csv"), &report.csv())
        }
        Command::Panel {
            inputs,
            labels,
            crop,
            out,
        } => {
            if !labels.is_empty() && labels.len() != inputs.len() {
                return Err(CliError::Usage(format!(
                    "{} labels for {} images",
                    labels.len(),
                    inputs.len()
                )));
            }
            let mut images = Vec::with_capacity(inputs.len());
            for (i, path) in inputs.iter().enumerate() {
                let label = labels.get(i).cloned().unwrap_or_else(|| {
                    path.file_stem()
                        .map_or_else(|| format!("{i}"), |s| s.to_string_lossy().into_owned())
                });
                images.push((label, read_png::<f32>(path)?));
            }
            let panel = panel::render_panel(&images, crop).map_err(CliError::Usage)?;
            create_dir(&out)?;
            write_png(&panel, &out.join("panel.png")).map_err(CliError::from)
        }
    }
}
