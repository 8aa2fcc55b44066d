use std::process::ExitCode;

use clap::Parser;
use ehr_fusion_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let err = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
