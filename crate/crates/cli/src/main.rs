use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tcpolicy_cli::commands::{run, Command, RunOptions};

/// Time-consistent investment, consumption and insurance policies.
#[derive(Parser)]
#[command(name = "tcpolicy", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the SVG charts
    #[arg(long)]
    no_svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let opts = RunOptions {
        out: cli.out,
        no_svg: cli.no_svg,
    };
    match run(cli.command, &cli.config, &opts) {
        Ok(outcome) => {
            for line in &outcome.messages {
                println!("{line}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
