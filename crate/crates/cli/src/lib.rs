//! `zo-adamu` command line: run, compare, grid-search and validate
//! experiments described by flat `key = value` config files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use zo_adamu::harness::{self, ExperimentConfig};
use zo_adamu::Error;

#[derive(Debug, Parser)]
#[command(name = "zo-adamu", version, about = "Zeroth-order optimizer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every optimizer and repeat of a config; write trajectories and metrics.
    Run(Common),
    /// Compare optimizers from one or more configs sharing an objective.
    Compare(Common),
    /// Sweep the schedule budgets listed in `grid_t1`/`grid_t2`/`grid_t3`.
    GridSearch(Common),
    /// Parse and validate configs without running anything.
    Validate(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file; repeat for `compare`.
    #[arg(long, required = true)]
    pub config: Vec<PathBuf>,
    /// Output directory, overriding the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed, overriding the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for repeats and grid points.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Config { .. }
        | Error::InvalidSchedule(_)
        | Error::DegenerateSchedule { .. }
        | Error::MismatchedObjective(_)
        | Error::EmptyGrid
        | Error::DimensionMismatch { .. }
        | Error::GradientUnavailable(_) => EXIT_CONFIG,
        Error::NonFiniteLoss { .. } | Error::StepOutOfRange { .. } | Error::CallbackRaised(_) => EXIT_NUMERIC,
    }
}

fn load(common: &Common) -> Result<Vec<ExperimentConfig>, Error> {
    common
        .config
        .iter()
        .map(|path| {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            Ok(cfg)
        })
        .collect()
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn single(common: &Common, what: &str) -> Result<ExperimentConfig, Error> {
    let mut cfgs = load(common)?;
    if cfgs.len() != 1 {
        return Err(Error::config("config", format!("{what} takes exactly one config")));
    }
    Ok(cfgs.remove(0))
}

fn fmt_loss(v: f64) -> String {
    if v.is_nan() {
        "failed".to_string()
    } else {
        format!("{v:.3e}")
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Validate(common) => {
            for (path, cfg) in common.config.iter().zip(load(common)?) {
                println!("# {}: ok", path.display());
                print!("{}", cfg.to_text());
            }
            Ok(0)
        }
        Command::Run(common) => {
            let cfg = single(common, "run")?;
            let dir = out_dir(common, &cfg);
            let results = harness::with_threads(common.threads, || harness::execute(&cfg))??;
            harness::write_artifacts(&cfg, &results, &dir)?;
            println!("{:<10} {:>6} {:>12} {:>12} {:>8}", "optimizer", "repeat", "final", "best", "hit");
            for r in &results {
                println!(
                    "{:<10} {:>6} {:>12} {:>12} {:>8}",
                    r.optimizer.as_str(),
                    r.repeat,
                    fmt_loss(r.final_loss),
                    fmt_loss(r.best_loss),
                    r.steps_to_threshold
                );
            }
            let failed: Vec<_> = results.iter().filter_map(|r| r.failure.as_ref().map(|f| (r, f))).collect();
            for (r, f) in &failed {
                eprintln!("{} repeat {}: {f}", r.optimizer, r.repeat);
            }
            println!("wrote {}", dir.display());
            Ok(if failed.is_empty() { 0 } else { EXIT_NUMERIC })
        }
        Command::Compare(common) => {
            let cfgs = load(common)?;
            let comparison = harness::with_threads(common.threads, || harness::compare(&cfgs))??;
            let dir = out_dir(common, &cfgs[0]);
            comparison.write(&dir)?;
            println!("objective: {}", comparison.objective);
            println!("{:<10} {:>12} {:>8} {:>10} {:>8}", "optimizer", "median", "success", "steps", "failed");
            for r in &comparison.rows {
                println!(
                    "{:<10} {:>12} {:>8.2} {:>10} {:>8}",
                    r.optimizer.as_str(),
                    fmt_loss(r.median_final_loss),
                    r.success_rate,
                    r.median_steps_to_threshold,
                    r.failures
                );
            }
            println!("wrote {}", dir.display());
            Ok(0)
        }
        Command::GridSearch(common) => {
            let cfg = single(common, "grid-search")?;
            if cfg.grid.is_none() {
                return Err(Error::config("grid_t1", "no grid_t1/grid_t2/grid_t3 keys in config"));
            }
            let report = harness::with_threads(common.threads, || harness::grid_search(&cfg))??;
            for line in &report.log {
                eprintln!("{line}");
            }
            let dir = out_dir(common, &cfg);
            report.write(&dir)?;
            let best = report.best_row();
            let median = best.summary.as_ref().map_or(f64::NAN, |s| s.median_final_loss);
            println!(
                "best: t1={} t2={} t3={} median final loss {} ({} points, {} excluded)",
                best.t1,
                best.t2,
                best.t3,
                fmt_loss(median),
                report.rows.len(),
                report.log.len()
            );
            println!("wrote {}", dir.display());
            Ok(0)
        }
    }
}

/// Convenience for tests and scripts: parse `args` (without the program
/// name) and run.
pub fn run_args<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("zo-adamu")).chain(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => match run(&cli) {
            Ok(code) => code,
            Err(err) => {
                eprintln!("error: {err}");
                exit_code(&err)
            }
        },
        Err(err) => {
            let _ = err.print();
            EXIT_CONFIG
        }
    }
}

