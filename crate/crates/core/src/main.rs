use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fieldlab::cli::{exit_code, report, run_config, sweep};

#[derive(Parser)]
#[command(
    name = "fieldlab",
    version,
    about = "Run field-propagation experiments from TOML configs"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Summarize every results.json under a directory.
    Report { dir: PathBuf },
    /// Run one experiment per seed.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = match args.command {
        Command::Run { config } => {
            run_config(&config).map(|dir| println!("wrote {}", dir.display()))
        }
        Command::Report { dir } => report(&dir).map(|s| {
            println!(
                "{} run(s), {} metrics, summary in {}",
                s.runs.len(),
                s.metrics.len(),
                dir.display()
            );
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
        }),
        Command::Sweep {
            config,
            seeds,
            jobs,
        } => sweep(&config, &seeds, jobs).map(|(dir, s)| {
            println!("{} run(s), summary in {}", s.runs.len(), dir.display());
        }),
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
