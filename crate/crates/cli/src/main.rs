//! `covfuse`: simulate scenarios, run fusion variants, evaluate and compare.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use covfuse::dataset::{read_detections, write_dataset, write_detections, DatasetDir};
use covfuse::eval::{EvalReport, SUMMARY_CSV_HEADER};
use covfuse::par;
use covfuse::pipeline::{evaluate_detections, run_method, MethodSpec, PipelineConfig};
use covfuse::sim::{run_scenario, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "covfuse", version, about = "Collective-perception detection fusion experiments")]
struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate {
        /// Scenario file (key = value); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one fusion method over every frame.
    Fuse {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-joined hooks: pd, cpr-spc, cpr-roi, rbf, cvsa, late (or baseline).
        #[arg(long, default_value = "baseline")]
        method: MethodSpec,
        /// Detections file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a detections file against the dataset's ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Summary CSV to write; the PR curve goes next to it with a `_pr` suffix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse and evaluate several methods on the same dataset.
    Compare {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// One method per flag, in table order.
        #[arg(long = "method", required = true)]
        methods: Vec<MethodSpec>,
        /// Directory for summary.csv and one PR-curve CSV per method.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline settings file (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl PipelineArgs {
    fn open(&self) -> Result<(DatasetDir, PipelineConfig)> {
        let ds = DatasetDir::open(&self.dataset).with_context(|| format!("opening dataset {}", self.dataset.display()))?;
        let cfg = match &self.config {
            Some(p) => PipelineConfig::read(p)?,
            None => PipelineConfig::default(),
        };
        Ok((ds, cfg))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COVFUSE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = check_usage(&cli.command) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match par::with_workers(cli.workers, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Argument problems clap cannot see.
fn check_usage(command: &Command) -> Result<()> {
    if let Command::Compare { methods, .. } = command {
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                bail!("method {m} given twice");
            }
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, seed, out } => simulate(config.as_deref(), seed, &out),
        Command::Fuse { pipeline, method, out } => fuse(&pipeline, &method, &out),
        Command::Eval { dataset, detections, out } => eval(&dataset, &detections, out.as_deref()),
        Command::Compare { pipeline, methods, out } => compare(&pipeline, &methods, out.as_deref()),
    }
}

fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::read(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    log::info!("simulating {} frames (seed {}) on {} workers", cfg.frames, cfg.seed, par::current_workers());
    let ds = run_scenario(&cfg)?;
    write_dataset(&ds, out)?;
    println!("wrote {} frames to {}", ds.frames.len(), out.display());
    Ok(())
}

fn fuse(args: &PipelineArgs, method: &MethodSpec, out: &Path) -> Result<()> {
    let (ds, cfg) = args.open()?;
    log::info!("fusing {} frames with {method}", ds.frame_count());
    let dets = run_method(&ds, method, &cfg)?;
    write_detections(out, &method.to_string(), &dets)?;
    let total: usize = dets.iter().map(Vec::len).sum();
    println!("{method}: {total} detections over {} frames -> {}", dets.len(), out.display());
    Ok(())
}

fn table(reports: &[EvalReport]) -> String {
    let mut s = format!("{:<28} {:>9} {:>9} {:>7} {:>7} {:>7}\n", "method", "AP@0.7", "AP@0.5", "TP", "FP", "FN");
    for r in reports {
        let strict = r.at(0.7).expect("default thresholds");
        let _ = writeln!(
            s,
            "{:<28} {:>9.2} {:>9.2} {:>7} {:>7} {:>7}",
            r.method,
            r.ap(0.7),
            r.ap(0.5),
            strict.tp,
            strict.fp,
            strict.fn_count
        );
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pr_path(summary: &Path) -> PathBuf {
    let stem = summary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    summary.with_file_name(format!("{stem}_pr.csv"))
}

fn eval(dataset: &Path, detections: &Path, out: Option<&Path>) -> Result<()> {
    let ds = DatasetDir::open(dataset).with_context(|| format!("opening dataset {}", dataset.display()))?;
    let (method, dets) = read_detections(detections)?;
    let report = evaluate_detections(&ds, &method, &dets)?;
    print!("{}", table(std::slice::from_ref(&report)));
    if let Some(path) = out {
        write_text(path, &report.to_csv())?;
        write_text(&pr_path(path), &report.pr_csv())?;
    }
    Ok(())
}

/// File-name-safe form of a method name.
fn slug(method: &MethodSpec) -> String {
    method.to_string().replace('+', "_")
}

fn compare(args: &PipelineArgs, methods: &[MethodSpec], out: Option<&Path>) -> Result<()> {
    let (ds, cfg) = args.open()?;
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods {
        log::info!("running {m}");
        let dets = run_method(&ds, m, &cfg)?;
        reports.push(evaluate_detections(&ds, &m.to_string(), &dets)?);
    }
    print!("{}", table(&reports));
    if let Some(dir) = out {
        let mut summary = format!("{SUMMARY_CSV_HEADER}\n");
        for r in &reports {
            summary.push_str(&r.csv_rows());
        }
        write_text(&dir.join("summary.csv"), &summary)?;
        for (m, r) in methods.iter().zip(&reports) {
            write_text(&dir.join(format!("pr_{}.csv", slug(m))), &r.pr_csv())?;
        }
    }
    Ok(())
}
