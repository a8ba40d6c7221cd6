use std::process::ExitCode;

use clap::Parser;
use gge_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(s) => {
            for line in &s.report {
                println!("{line}");
            }
            println!("manifest: {}", s.manifest.display());
            if s.failed_points > 0 {
                eprintln!("{} point(s) failed; see the error column", s.failed_points);
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("gge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
