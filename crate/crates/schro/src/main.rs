use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use schro::config::{resolve_seed, Config};
use schro::output::write_error;
use schro::run::Command;

/// Simulate and control the bilinear Schrödinger equation on an interval.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file; defaults apply to every key it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed and SCHRO_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory [default: out/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides stochastic.paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(args.command.as_str()));
    let invalid = |msg: String| {
        eprintln!("error: {msg}");
        if let Err(e) = write_error(&out, args.command, &msg) {
            eprintln!("error: cannot write {}: {e}", out.display());
        }
        ExitCode::from(2)
    };
    let mut config = match &args.config {
        Some(p) => match Config::from_file(p) {
            Ok(c) => c,
            Err(e) => return invalid(format!("{}: {e}", p.display())),
        },
        None => Config::default(),
    };
    if let Some(n) = args.paths {
        config.stochastic.paths = n;
    }
    let env = std::env::var("SCHRO_SEED").ok();
    match resolve_seed(args.seed, config.seed, env.as_deref()) {
        Ok(s) => config.seed = Some(s),
        Err(e) => return invalid(e.to_string()),
    }
    match schro::run_command(args.command, &config, &out, args.quiet) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", out.display());
            ExitCode::from(1)
        }
    }
}
