use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minkflow::scenario::{self, ScenarioError};

/// Spacelike mean curvature flow with a perpendicular free boundary.
#[derive(Parser)]
#[command(name = "minkflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its outputs.
    Run { config: PathBuf },
    /// Check the curvature condition of the scenario's boundary.
    CheckBoundary { config: PathBuf },
    /// Refine the scenario and report observed orders against its closed form.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: u32,
    },
    /// Run every `*.conf` in a directory concurrently.
    Batch { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<i32, ScenarioError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = scenario::load_config(&config)?;
            let r = scenario::run_scenario(&cfg)?;
            print!("{}", r.report.summary_text());
            println!("output = {}", r.output_dir.display());
            Ok(r.exit_code)
        }
        Command::CheckBoundary { config } => {
            let cfg = scenario::load_config(&config)?;
            let c = scenario::check_boundary(&cfg)?;
            print!("{}", c.text());
            Ok(if c.ok { 0 } else { 4 })
        }
        Command::Converge { config, levels } => {
            let cfg = scenario::load_config(&config)?;
            let table = scenario::convergence_study(&cfg, levels)?;
            print!("{}", table.text());
            Ok(0)
        }
        Command::Batch { dir } => {
            let results = scenario::batch(&dir)?;
            let mut worst = 0;
            for (path, code, what) in &results {
                println!("{} exit={code} {what}", path.display());
                worst = worst.max(*code);
            }
            Ok(worst)
        }
    }
}

fn main() -> ExitCode {
    // usage errors share the config-error code; 2 is reserved for guard trips
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
