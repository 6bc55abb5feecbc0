//! `copatch` command-line front end.
//!
//! Exit codes: 0 success, 1 fixture or data error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use copatch::clustering::Connectivity;
use copatch::pipeline::{self, ConfigOverrides, RenderKind, RunConfig, SweepGrid};
use copatch::report;
use copatch::scoring::{OverlapMetric, TopkPolicy};
use copatch::tensorio::Fixture;
use copatch::Error;

#[derive(Parser)]
#[command(
    name = "copatch",
    version,
    about = "Cluster-guided mask selection for zero-shot referring segmentation"
)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). Warnings are always shown.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over every sample and write a report.
    Run(RunArgs),
    /// Run once per grid point over layer/delta/alpha and write a CSV summary.
    Sweep(SweepArgs),
    /// Render a map, the clusters or the selected mask of one sample as PPM.
    Render(RenderArgs),
    /// Per-layer cosine between the CLS embeddings of two samples.
    Profile(ProfileArgs),
    /// Load and validate every sample of a fixture.
    Check(CheckArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Fixture directory containing manifest.json.
    #[arg(long)]
    fixture: PathBuf,
    /// Exit layer of the visual encoder.
    #[arg(long)]
    layer: Option<u32>,
    /// Initial clustering threshold on the normalized map.
    #[arg(long)]
    delta: Option<f64>,
    /// Weight of the spatial-coherence penalty.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the sentence embedding in the hybrid text feature.
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of retained candidates: "clusters" or a positive integer.
    #[arg(long, value_parser = parse_topk)]
    topk: Option<TopkPolicy>,
    #[arg(long, value_enum)]
    connectivity: Option<Conn>,
    #[arg(long, value_enum)]
    overlap_metric: Option<Overlap>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip samples that fail validation instead of aborting.
    #[arg(long)]
    skip_invalid: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-sample CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated exit layers (default: the configured layer).
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<u32>>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Comma-separated spatial-coherence weights.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sample: String,
    #[arg(long, value_enum)]
    what: What,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    sample_a: String,
    #[arg(long)]
    sample_b: String,
    /// CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    layer: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Conn {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

#[derive(Clone, Copy, ValueEnum)]
enum Overlap {
    UnionIou,
    PerClusterMax,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    RawMap,
    NormalizedMap,
    Clusters,
    FinalMask,
}

fn parse_topk(s: &str) -> Result<TopkPolicy, String> {
    if s == "clusters" {
        return Ok(TopkPolicy::ClusterCount);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(TopkPolicy::Fixed(k)),
        _ => Err(format!("expected \"clusters\" or a positive integer, got {s:?}")),
    }
}

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            layer: self.layer,
            delta: self.delta,
            alpha: self.alpha,
            gamma: self.gamma,
            topk: self.topk,
            connectivity: self.connectivity.map(|c| match c {
                Conn::Four => Connectivity::Four,
                Conn::Eight => Connectivity::Eight,
            }),
            overlap_metric: self.overlap_metric.map(|o| match o {
                Overlap::UnionIou => OverlapMetric::UnionIou,
                Overlap::PerClusterMax => OverlapMetric::PerClusterMax,
            }),
            jobs: self.jobs,
            skip_invalid: self.skip_invalid,
        }
    }

    fn open(&self) -> Result<(Fixture, RunConfig), Error> {
        let fixture = Fixture::open(&self.fixture)?;
        let config = RunConfig::resolve(fixture.manifest(), &self.overrides())?;
        Ok((fixture, config))
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let (fixture, config) = args.common.open()?;
    let out = pipeline::run(&fixture, &config)?;
    emit(args.out.as_deref(), &report::render_report(&out))?;
    if let Some(csv) = &args.csv {
        emit(Some(csv), &report::samples_csv(&out)?)?;
    }
    log::info!(
        "{} samples, mIoU {}, oIoU {}",
        out.report.samples,
        report::fmt6(out.report.miou),
        report::fmt6(out.report.oiou)
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let (fixture, config) = args.common.open()?;
    let grid = SweepGrid {
        layers: args.layers.unwrap_or_else(|| vec![config.layer]),
        deltas: args.deltas.unwrap_or_else(|| vec![config.delta]),
        alphas: args.alphas.unwrap_or_else(|| vec![config.alpha]),
    };
    let rows = pipeline::sweep(&fixture, &config, &grid)?;
    emit(args.out.as_deref(), &report::sweep_csv(&rows)?)
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<()> {
    let (fixture, config) = args.common.open()?;
    let kind = match args.what {
        What::RawMap => RenderKind::RawMap,
        What::NormalizedMap => RenderKind::NormalizedMap,
        What::Clusters => RenderKind::Clusters,
        What::FinalMask => RenderKind::FinalMask,
    };
    let image = pipeline::render(&fixture, &config, &args.sample, kind)?;
    image.save(&args.out)?;
    Ok(())
}

fn cmd_profile(args: ProfileArgs) -> anyhow::Result<()> {
    let fixture = Fixture::open(&args.fixture)?;
    let layer = fixture.manifest().layers[0];
    let values = pipeline::profile(&fixture, layer, &args.sample_a, &args.sample_b)?;
    emit(args.out.as_deref(), &report::profile_csv(&values)?)
}

fn cmd_check(args: CheckArgs) -> anyhow::Result<()> {
    let fixture = Fixture::open(&args.fixture)?;
    let layers = match args.layer {
        Some(l) => vec![l],
        None => fixture.manifest().layers.clone(),
    };
    let mut failures = fixture.missing_files();
    for &layer in &layers {
        fixture.params(layer)?;
        if failures.is_empty() {
            for i in 0..fixture.len() {
                if let Err(e) = fixture.load_sample(i, layer) {
                    failures.push(e);
                }
            }
        }
    }
    for f in &failures {
        eprintln!("{f}");
    }
    if let Some(first) = failures.into_iter().next() {
        return Err(Error::from(first).into());
    }
    println!("{} samples ok across layers {layers:?}", fixture.len());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Render(a) => cmd_render(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
