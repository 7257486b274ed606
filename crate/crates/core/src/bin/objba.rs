//! Command-line front end to the `objba::app` pipeline.

use clap::{Parser, Subcommand};
use objba::app::{self, AppError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "objba", version, about = "Object-aware stereo bundle adjustment on synthetic scenes")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Finite-difference Jacobians instead of analytic ones.
    #[arg(long, global = true)]
    numeric_jacobians: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stereo dataset with ground truth.
    Simulate,
    /// Optimize a perturbed start for a dataset and fit object boxes.
    Solve { dataset: PathBuf },
    /// Compare an estimate against a dataset's ground truth.
    Eval { dataset: PathBuf, estimate: PathBuf },
    /// Time the Schur reduction over a grid of problem sizes.
    Bench,
}

fn run(cli: Cli) -> Result<(), AppError> {
    if cli.threads > 0 {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .with_overrides(cli.seed, cli.numeric_jacobians);
    cfg.validate()?;

    let files = match &cli.command {
        Command::Simulate => [("dataset.txt", app::cmd_simulate(&cfg)?)].into_iter().collect(),
        Command::Solve { dataset } => app::cmd_solve(&app::read_file(dataset)?, &cfg)?,
        Command::Eval { dataset, estimate } => {
            app::cmd_eval(&app::read_file(dataset)?, &app::read_file(estimate)?, &cfg)?
        }
        Command::Bench => [("bench.csv", app::cmd_bench(&cfg)?)].into_iter().collect(),
    };
    for path in app::write_files(&cli.out, &files)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
