//! `icdverify`: graph building, candidate expansion, prompt preview,
//! pipeline runs, standalone verification, and evaluation from one binary.

mod args;
mod commands;
mod config;
mod manifest;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, GraphCommand, PromptCommand, CorpusCommand, PipelineCommand};

/// Exit codes: 0 success, 1 runtime failure, 2 pipeline finished with
/// per-note failures, 64 usage error.
const EXIT_USAGE: i32 = 64;

fn main() {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::Graph { command } => match command {
            GraphCommand::Build(args) => commands::graph::build(args),
            GraphCommand::Stats(args) => commands::graph::stats(args),
        },
        Command::Expand(args) => commands::expand::run(args),
        Command::Prompt { command } => match command {
            PromptCommand::Preview(args) => commands::prompt::preview(args),
        },
        Command::Generate(args) => commands::generate::run(args),
        Command::Pipeline { command } => match command {
            PipelineCommand::Run(args) => commands::pipeline::run(args),
        },
        Command::Verify(args) => commands::verify::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Corpus { command } => match command {
            CorpusCommand::Validate(args) => commands::corpus::validate(args),
        },
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
