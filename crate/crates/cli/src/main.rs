use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use maxsim_core::describer::{measure_throughput, read_jsonl, RunLogEntry, Strategy};
use maxsim_core::embedder::SplitMode;
use maxsim_core::manifest::{
    build_inter_pair_manifest, build_intra_pair_manifest, compute_clip_spec, distractor_clip_spec,
    emit_extraction_plan, manifest_stats, read_annotations, BenchmarkManifest, ClipOptions, ManifestError, Protocol,
};
use maxsim_core::pipeline::{self, ablation_table, Endpoints, Pipeline, PipelineError, RunConfig, Sweep};

/// Write to stdout; a closed pipe (`maxsim stats | head`) ends the process quietly.
fn emit(text: &str) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_all(text.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing to stdout: {e}");
        std::process::exit(1);
    }
}

macro_rules! say {
    ($($arg:tt)*) => { emit(&(format!($($arg)*) + "\n")) };
}

macro_rules! say_raw {
    ($($arg:tt)*) => { emit(&format!($($arg)*)) };
}

#[derive(Parser)]
#[command(
    name = "maxsim",
    version,
    about = "Describe, embed and evaluate benchmark samples with max-sim sentence sets"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    fps: Option<f64>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, global = true, value_enum)]
    split: Option<SplitArg>,
    /// Restrict inter-pair databases to query samples.
    #[arg(long, global = true)]
    constrained: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    General,
    TaskAware,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    SplitMax,
    WholeText,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    InterPair,
    IntraPair,
    Classification,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::InterPair => Protocol::InterPair,
            ProtocolArg::IntraPair => Protocol::IntraPair,
            ProtocolArg::Classification => Protocol::Classification,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a retrieval manifest from normalized activity annotations.
    BuildManifest {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Annotated vehicle activities, one JSON object per line.
        #[arg(long)]
        annotations: PathBuf,
        /// Human-only activities used as inter-pair distractors.
        #[arg(long)]
        distractors: Option<PathBuf>,
        /// ROI padding as a fraction of its width/height.
        #[arg(long, default_value_t = 0.05)]
        padding: f64,
        /// Source frame size WIDTHxHEIGHT used to clamp crops.
        #[arg(long, value_parser = parse_frame_size)]
        frame_size: Option<(u32, u32)>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Emit the clip-extraction plan (source, crop, span, output) for a manifest.
    PlanExtract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Where extracted clips should be written.
        #[arg(long)]
        clips_dir: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Describe every sample with the chat model.
    Describe,
    /// Embed the descriptions.
    Embed,
    /// Compute the query × database similarity matrix.
    Simmatrix,
    /// Score the run and write report.json and per_query.csv.
    Evaluate,
    /// Run all stages.
    Run,
    /// Sweep one setting and tabulate the reports.
    Ablate {
        #[command(subcommand)]
        sweep: SweepArg,
    },
    /// Class, pair, duration and resolution statistics of a manifest.
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Instances per second from a describe-stage run log.
    Throughput {
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SweepArg {
    /// Frame rates, e.g. `ablate fps 1 3 5 7`.
    Fps {
        #[arg(required = true)]
        values: Vec<f64>,
    },
    /// Sentence encoders by id.
    Embedder {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Sentence split + max versus whole-text embedding.
    Split,
}

fn parse_frame_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    Ok((w.trim().parse().map_err(|_| "bad width")?, h.trim().parse().map_err(|_| "bad height")?))
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let path = g.config.as_deref().ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(d) = &g.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(f) = g.fps {
        cfg.fps = f;
    }
    if let Some(s) = g.strategy {
        cfg.strategy = match s {
            StrategyArg::General => Strategy::General,
            StrategyArg::TaskAware => Strategy::TaskAware,
        };
    }
    if let Some(s) = g.split {
        cfg.split_mode = match s {
            SplitArg::SplitMax => SplitMode::SplitMax,
            SplitArg::WholeText => SplitMode::WholeText,
        };
    }
    cfg.constrained |= g.constrained;
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline(g: &Global) -> Result<Pipeline> {
    let cfg = load_config(g)?;
    let endpoints = Endpoints::from_config(&cfg)?;
    Ok(Pipeline::new(cfg, endpoints)?)
}

fn read_manifest(path: &Path, protocol: Protocol) -> Result<BenchmarkManifest> {
    let f = File::open(path).map_err(|e| PipelineError::Config(format!("cannot open {}: {e}", path.display())))?;
    Ok(BenchmarkManifest::from_jsonl(protocol, BufReader::new(f))?)
}

/// Manifest from explicit flags, else from the run config.
fn manifest_from(g: &Global, manifest: &Option<PathBuf>, protocol: Option<ProtocolArg>) -> Result<BenchmarkManifest> {
    match (manifest, protocol) {
        (Some(m), Some(p)) => read_manifest(m, p.into()),
        (Some(_), None) => Err(PipelineError::Config("--protocol is required with --manifest".into()).into()),
        (None, _) => Ok(pipeline::load_manifest(&load_config(g)?)?),
    }
}

fn print_report(summary: &pipeline::RunSummary) {
    let r = &summary.report;
    say!("{} {} = {:.1} ({} queries, {} skipped)", r.protocol, r.metric, r.value_1dp, r.queries, r.skipped_queries);
    for p in &r.per_pair {
        if let Some(m) = p.map_1dp {
            say!("  {:<24} {:>5.1}", p.pair, m);
        }
    }
    say!("report: {}", summary.report_path.display());
    say!("per-query: {}", summary.csv_path.display());
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::BuildManifest { protocol, annotations, distractors, padding, frame_size, output } => {
            let opts = ClipOptions { padding, frame_size };
            let queries = read_annotations(&annotations)?
                .into_iter()
                .map(|line| {
                    let (a, fps) = line.into_parts();
                    compute_clip_spec(&a, fps, &opts)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let manifest = match protocol {
                ProtocolArg::InterPair => {
                    let ds = match &distractors {
                        Some(p) => read_annotations(p)?
                            .into_iter()
                            .map(|line| {
                                let (a, fps) = line.into_parts();
                                distractor_clip_spec(&a, fps, &opts)
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                        None => Vec::new(),
                    };
                    build_inter_pair_manifest(queries, ds)?
                }
                ProtocolArg::IntraPair => {
                    if distractors.is_some() {
                        bail!(PipelineError::Config("intra-pair manifests take no distractors".into()));
                    }
                    build_intra_pair_manifest(queries)?
                }
                ProtocolArg::Classification => {
                    bail!(PipelineError::Config("classification manifests are not built from annotations".into()))
                }
            };
            std::fs::write(&output, manifest.to_jsonl()).with_context(|| format!("writing {}", output.display()))?;
            let s = manifest_stats(&manifest);
            say!("{} samples ({} queries, {} distractors) -> {}", s.total, s.queries, s.distractors, output.display());
        }
        Command::PlanExtract { manifest, protocol, clips_dir, output } => {
            let m = manifest_from(g, &manifest, protocol)?;
            let plan = emit_extraction_plan(&m, &clips_dir)?;
            let text = plan.to_jsonl();
            match output {
                Some(p) => {
                    std::fs::write(&p, text)?;
                    say!("{} clips -> {}", plan.rows.len(), p.display());
                }
                None => say_raw!("{text}"),
            }
        }
        Command::Describe => {
            let mut p = pipeline(g)?;
            let records = p.describe()?;
            say!("{} descriptions -> {}", records.len(), p.descriptions_path().display());
        }
        Command::Embed => {
            let mut p = pipeline(g)?;
            let sets = p.embed()?;
            let sentences: usize = sets.iter().map(|s| s.len()).sum();
            say!("{} samples, {} vectors -> {}", sets.len(), sentences, p.vector_cache_dir().display());
        }
        Command::Simmatrix => {
            let mut p = pipeline(g)?;
            let m = p.matrix()?;
            say!("{} x {} -> {}", m.rows(), m.cols(), p.matrix_path().display());
        }
        Command::Evaluate | Command::Run => {
            let mut p = pipeline(g)?;
            let out = p.config.out_dir.clone();
            print_report(&p.evaluate(&out)?);
        }
        Command::Ablate { sweep } => {
            let cfg = load_config(g)?;
            let sweep = match sweep {
                SweepArg::Fps { values } => Sweep::Fps(values),
                SweepArg::Embedder { ids } => Sweep::Embedder(ids),
                SweepArg::Split => Sweep::SplitMode,
            };
            let rows = pipeline::ablate(&cfg, &sweep, Endpoints::from_config)?;
            say_raw!("{}", ablation_table(&rows));
        }
        Command::Stats { manifest, protocol } => {
            let m = manifest_from(g, &manifest, protocol)?;
            say!("{}", serde_json::to_string_pretty(&manifest_stats(&m))?);
        }
        Command::Throughput { log } => {
            let path = match log {
                Some(p) => p,
                None => pipeline(g)?.runlog_path(),
            };
            let entries: Vec<RunLogEntry> = read_jsonl(&path).map_err(PipelineError::from)?;
            // Cache hits say nothing about model speed; count them only if nothing else ran.
            let fresh: Vec<RunLogEntry> = entries.iter().filter(|e| !e.cached).cloned().collect();
            let used = if fresh.is_empty() { &entries } else { &fresh };
            let rate = measure_throughput(used).map_err(PipelineError::from)?;
            say!("{rate:.4} instances/s over {} samples", used.len());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<PipelineError>() {
        return e.exit_code() as u8;
    }
    if err.downcast_ref::<ManifestError>().is_some() {
        return 4;
    }
    1
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
