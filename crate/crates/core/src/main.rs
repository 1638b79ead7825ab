use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbsc::cli;
use kbsc::config::{check_method, RunConfig};
use kbsc::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ksc", version, about = "Kriging-based soft classification of coarse multispectral rasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides paths.output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene
    Synth {
        #[command(flatten)]
        common: Common,
        /// Scene seed (overrides synth.scene.seed)
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Classify the input raster
    Classify {
        #[command(flatten)]
        common: Common,
        /// kbsc, maxlike, bayclass, belclass or fuzzyclass
        #[arg(long, default_value = "kbsc")]
        method: String,
        /// Output grid distance in meters
        #[arg(long)]
        h: Option<f64>,
    },
    /// Compare test maps against reference maps
    Assess {
        #[command(flatten)]
        common: Common,
    },
    /// Run methods over seeds and grid distances on synthetic scenes
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<String>>,
        /// Comma-separated grid distances in meters
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
        /// Seeds as a list (1,2,5) or range (1-20)
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the configuration without running anything
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Validation(format!("--seeds: cannot parse `{text}`"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.paths.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<serde_json::Value, Error> {
    match command {
        Command::Synth { common, seeds } => {
            let mut cfg = load(&common)?;
            if let (Some(seed), Some(s)) = (seeds, cfg.synth.as_mut()) {
                s.scene.seed = seed;
            }
            cli::cmd_synth(&cfg)
        }
        Command::Classify { common, method, h } => {
            check_method(&method)?;
            let mut cfg = load(&common)?;
            if h.is_some() {
                cfg.kriging.out_pixel_size = h;
            }
            cli::cmd_classify(&cfg, &method)
        }
        Command::Assess { common } => cli::cmd_assess(&load(&common)?),
        Command::Benchmark {
            common,
            method,
            h,
            seeds,
            jobs,
        } => {
            let mut cfg = load(&common)?;
            if let Some(m) = method {
                cfg.benchmark.methods = m;
            }
            if let Some(h) = h {
                cfg.benchmark.h_list = h;
            }
            if let Some(s) = seeds {
                cfg.benchmark.seeds = parse_seeds(&s)?;
            }
            if let Some(j) = jobs {
                cfg.benchmark.jobs = j;
            }
            cli::cmd_benchmark(&cfg)
        }
        Command::Validate { common } => cli::cmd_validate(&load(&common)?),
    }
}

fn init_logging() {
    let level = std::env::var("KSC_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format(|buf, record| {
            writeln!(
                buf,
                "{} {} {} {}",
                buf.timestamp_millis(),
                record.level(),
                record.module_path().unwrap_or("-"),
                record.args()
            )
        })
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging();
    match run(cli.command) {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = match &e {
                Error::Validation(_) => "validation",
                Error::Format(_) => "format",
                Error::Numerical(_) => "numerical",
                Error::NonConvergence { .. } => "non_convergence",
                Error::UndefinedCorrelation(_) => "undefined_correlation",
                Error::Io { .. } => "io",
                Error::Json(_) => "json",
            };
            log::error!("{e}");
            let _ = writeln!(std::io::stdout(), "{}", json!({ "error": { "kind": kind, "message": e.to_string() } }));
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
