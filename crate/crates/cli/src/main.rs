use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nonbloch_cli::config::{ExperimentConfig, Task};
use nonbloch_cli::{init_threads, plot, EnergyGrid};

#[derive(Parser)]
#[command(name = "nonbloch", version, about = "Edge-wave growth exponents of non-Hermitian lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in parameter preset.
    #[arg(long)]
    preset: Option<String>,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.preset, &self.config) {
            (Some(p), _) => ExperimentConfig::for_preset(p),
            (_, Some(path)) => ExperimentConfig::load(path),
            _ => unreachable!("clap enforces one source"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run tasks and write artifacts plus manifest.json.
    Run {
        #[command(flatten)]
        source: Source,
        /// Tasks (repeatable or comma-separated); replaces the config's list.
        #[arg(long = "task", value_delimiter = ',')]
        tasks: Vec<Task>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Exit with status 2 when a prediction/measurement pair misses its tolerance.
        #[arg(long)]
        check: bool,
        /// Worker threads (falls back to NONBLOCH_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Healing verdict map over a rectangular E0 grid.
    Scan {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Re E0 range: FROM TO COUNT.
        #[arg(long, num_args = 3, value_names = ["FROM", "TO", "COUNT"], allow_negative_numbers = true)]
        re: Vec<String>,
        /// Im E0 range: FROM TO COUNT.
        #[arg(long, num_args = 3, value_names = ["FROM", "TO", "COUNT"], allow_negative_numbers = true)]
        im: Vec<String>,
        /// Worker threads (falls back to NONBLOCH_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render CSV outputs as SVG panels.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for the SVG files (default: next to each input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn range(v: &[String], what: &str) -> Result<(f64, f64, usize)> {
    let parse = |i: usize| v[i].parse::<f64>().with_context(|| format!("--{what}: '{}' is not a number", v[i]));
    let n = v[2].parse::<usize>().with_context(|| format!("--{what}: '{}' is not a count", v[2]))?;
    Ok((parse(0)?, parse(1)?, n))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { source, tasks, out, check, threads } => {
            init_threads(threads)?;
            let mut cfg = source.load()?;
            if !tasks.is_empty() {
                cfg.tasks = tasks;
            }
            let Some(manifest) = nonbloch_cli::run(cfg, &out)? else {
                return Ok(ExitCode::SUCCESS);
            };
            for c in &manifest.checks {
                let status = match (c.pass, c.gate) {
                    (true, _) => "pass",
                    (false, true) => "FAIL",
                    (false, false) => "note",
                };
                println!("{status:4}  {}: measured {:?} vs {:?} (tolerance {:?})", c.name, c.measured, c.prediction, c.tolerance);
            }
            let failed = manifest.failures();
            if check && !failed.is_empty() {
                eprintln!("{} check(s) outside tolerance", failed.len());
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan { source, out, re, im, threads } => {
            init_threads(threads)?;
            let cfg = source.load()?;
            let grid = EnergyGrid { re: range(&re, "re")?, im: range(&im, "im")? };
            let points = nonbloch_cli::scan_map(cfg, grid, &out)?;
            for p in &points {
                println!("{:+.4}{:+.4}i  {}", p.e0.re, p.e0.im, p.verdict);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { inputs, out } => {
            for input in &inputs {
                let dir = match &out {
                    Some(d) => d.clone(),
                    None => input.parent().map(PathBuf::from).unwrap_or_default(),
                };
                std::fs::create_dir_all(&dir).with_context(|| format!("plot: create {}", dir.display()))?;
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
                let target = dir.join(format!("{stem}.svg"));
                plot::render_file(input, &target)?;
                println!("{}", target.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
