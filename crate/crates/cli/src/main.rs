mod args;
mod commands;
mod setup;

use std::process::ExitCode;

use clap::Parser;

use args::{BenchCommand, Cli, Command};
use commands::Ctx;

fn main() -> ExitCode {
    // usage errors exit with 2 from inside parse()
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: setup::load_config(cli.config.as_deref())?,
    };
    match cli.command {
        Command::Chunk(a) => commands::chunk(&ctx, a),
        Command::Tag(a) => commands::tag(&ctx, a),
        Command::Render(a) => commands::render(&ctx, a),
        Command::Bench(BenchCommand::Nolima(a)) => commands::nolima(&ctx, a),
        Command::Bench(BenchCommand::Novelqa(a)) => commands::novelqa(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
        Command::Cache(c) => commands::cache(c),
    }
}

/// The error chain on one line, skipping causes a message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out.push_str(": ");
            out.push_str(&c);
        }
    }
    out
}
