use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chartlab::config::ConfigFile;
use chartlab::pipeline::{self, AppKind, PipelineConfig, PipelineError, Preset};
use chartlab::Method;
use clap::{Args, Parser, Subcommand};

/// Channel charting: simulate CSI, extract features, fit a chart, score it
/// and run chart-based applications.
#[derive(Parser, Debug)]
#[command(name = "chartlab", version)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Options {
    /// Config file (sectioned key = value text).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for all stage inputs and outputs.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Reduction: pca, sammon, laplacian-eigenmaps, triplet-net.
    #[arg(long, global = true, value_name = "NAME")]
    method: Option<Method>,
    /// Preset: spiral, urban-8x4, loop, seven-cells.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<Preset>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate CSI and ground truth.
    Simulate,
    /// Extract feature vectors from the simulated CSI.
    Features,
    /// Fit the chart.
    Chart,
    /// Score the chart against ground truth.
    Evaluate,
    /// Run a chart-based application.
    App {
        #[arg(long, value_name = "NAME")]
        app: AppKind,
    },
    /// Run every stage, then the configured applications.
    Pipeline,
}

fn load_config(opts: &Options) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| PipelineError::Io { path: path.clone(), source: e.into() })?;
            PipelineConfig::from_config(&ConfigFile::parse(&text)?, opts.preset, opts.seed)?
        }
        None => PipelineConfig::preset(opts.preset.unwrap_or(Preset::Urban8x4), opts.seed.unwrap_or(0)),
    };
    if let Some(m) = opts.method {
        cfg.set_method(m);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<String>, PipelineError> {
    let opts = &cli.opts;
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(PipelineError::Invalid("--threads must be at least 1".into()));
        }
        chartlab::set_thread_count(n);
    }
    let cfg = load_config(opts)?;
    let out: &Path = &opts.out;
    fs::create_dir_all(out).map_err(|e| PipelineError::Io { path: out.to_path_buf(), source: e.into() })?;
    log::info!("preset {} seed {} method {} -> {}", cfg.preset, cfg.seed, cfg.chart.method, out.display());
    let line = match &cli.command {
        Command::Simulate => pipeline::stage_simulate(&cfg, out)?,
        Command::Features => pipeline::stage_features(&cfg, out)?,
        Command::Chart => pipeline::stage_chart(&cfg, out)?,
        Command::Evaluate => pipeline::stage_evaluate(&cfg, out)?,
        Command::App { app } => pipeline::stage_app(&cfg, *app, out)?,
        Command::Pipeline => return pipeline::run_pipeline(&cfg, out),
    };
    Ok(vec![line])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            eprintln!("error[usage]: {}", msg.trim_start_matches("error: ").trim_end());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
