mod cli;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use omd_core::{Error, ErrorClass};
use serde_json::json;

use crate::cli::{Cli, Command};

fn run(cli: &Cli) -> Result<String, Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Range {
                what: "jobs",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Compare(a) => commands::compare(a, seed),
        Command::Distmat(a) => commands::distmat(a, seed),
        Command::Mds(a) => commands::mds(a, seed),
        Command::Trend(a) => commands::trend(a, seed),
        Command::Provinces(a) => commands::provinces(a, seed),
        Command::Depth(a) => commands::depth(a, seed),
        Command::GenPatchShift(a) => commands::gen_patch_shift_cmd(a, seed),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Input => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Infeasible => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(e.class());
            let report = json!({
                "error": e.root().kind(),
                "message": e.to_string(),
                "exit_code": code,
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
