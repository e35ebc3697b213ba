mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

/// Error carrying the process exit status.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub const PARTIAL: u8 = 2;
    pub const MISSING_GROUND_TRUTH: u8 = 3;
    pub const CONFIG: u8 = 4;

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Exit {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Exit::new(Exit::CONFIG, message)
    }
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compute(a) => commands::compute(cli.seed, a),
        Command::Rank(a) => commands::rank(cli.seed, a),
        Command::Search(a) => commands::search(cli.seed, a),
        Command::Synth(a) => commands::synth(cli.seed, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(x) => ExitCode::from(x.code),
                None => ExitCode::from(1),
            }
        }
    }
}
