use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use expfun_lab::harness::{run_config, Command, RunOptions};

/// Runs one configured experiment and writes CSV data plus `report.json`.
#[derive(Parser)]
#[command(name = "expfun-lab", version)]
struct Cli {
    /// simulate, cf, check-identity, invert-eta, invert-xi, laplace, oracle,
    /// continuity or generator-probe
    command: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` or `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli
        .command
        .parse::<Command>()
        .and_then(|command| run_config(&cli.config, &RunOptions { command: Some(command), seed: cli.seed, out: cli.out }));
    match result {
        Ok(summary) => {
            for f in &summary.data_files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", summary.report_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
