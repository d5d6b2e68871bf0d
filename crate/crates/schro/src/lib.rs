//! Experiment runner for `schro-core`: configuration files, run
//! directories with manifests, CSV and SVG output.

pub mod config;
pub mod output;
pub mod run;
pub mod svg;

use std::io;
use std::path::Path;
use std::time::Instant;

use config::Config;
use output::RunInfo;
use run::Command;

/// Runs `command` with a config whose seed is already resolved and writes the
/// run directory. Returns the process exit status.
pub fn run_command(command: Command, config: &Config, out: &Path, quiet: bool) -> io::Result<i32> {
    let log = |msg: &str| {
        if !quiet {
            eprintln!("[{command}] {msg}");
        }
    };
    let text = config.to_text();
    let seed = config.seed.unwrap_or(0);
    let start = Instant::now();
    let outcome = run::execute(command, config, seed, &log);
    let info = RunInfo { command, config_text: &text, seed, wall_time: start.elapsed().as_secs_f64() };
    if let Err(e) = &outcome {
        log(&format!("failed: {e}"));
    }
    output::write_run(out, &info, &outcome)
}
