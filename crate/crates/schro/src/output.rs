//! Run directories: `manifest.json`, `result.json` and the command's files,
//! staged in a temporary directory and renamed into place in one step.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::run::{Artifacts, Command, Failure};

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn versions() -> Value {
    json!({ "schro": env!("CARGO_PKG_VERSION"), "schro_core": schro_core::VERSION })
}

pub struct RunInfo<'a> {
    pub command: Command,
    pub config_text: &'a str,
    pub seed: u64,
    pub wall_time: f64,
}

fn manifest(info: &RunInfo<'_>, status: &str, error: Option<&str>, blow_up: Option<bool>, files: &[String]) -> Value {
    json!({
        "command": info.command.as_str(),
        "status": status,
        "error": error,
        "seed": info.seed,
        "config": info.config_text,
        "config_hash": config_hash(info.config_text),
        "versions": versions(),
        "wall_time_s": info.wall_time,
        "blow_up": blow_up,
        "files": files,
    })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    s.push(b'\n');
    s
}

/// Replaces `out` with a directory holding exactly `files`.
pub fn publish(out: &Path, files: &[(String, Vec<u8>)]) -> io::Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent)?;
    let stage = tempfile::Builder::new().prefix(".schro-stage-").tempdir_in(parent)?;
    for (name, bytes) in files {
        fs::write(stage.path().join(name), bytes)?;
    }
    let staged = stage.keep();
    if out.exists() {
        let old = tempfile::Builder::new().prefix(".schro-old-").tempdir_in(parent)?.keep();
        fs::remove_dir(&old)?;
        fs::rename(out, &old)?;
        fs::rename(&staged, out)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&staged, out)?;
    }
    Ok(())
}

/// Writes a finished run. Returns the exit status it maps to.
pub fn write_run(out: &Path, info: &RunInfo<'_>, outcome: &Result<Artifacts, Failure>) -> io::Result<i32> {
    match outcome {
        Ok(a) => {
            let mut files = vec![("result.json".to_string(), pretty(&a.result))];
            files.extend(a.files.iter().cloned());
            let names: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
            files.push(("manifest.json".into(), pretty(&manifest(info, "ok", None, a.blow_up, &names))));
            publish(out, &files)?;
            Ok(0)
        }
        Err(Failure::Invalid(msg)) => {
            write_error(out, info.command, msg)?;
            Ok(2)
        }
        Err(Failure::Numerical { status, message }) => {
            let m = manifest(info, status, Some(message), None, &["manifest.json".into()]);
            publish(out, &[("manifest.json".into(), pretty(&m))])?;
            Ok(3)
        }
    }
}

/// The only file a validation failure leaves behind.
pub fn write_error(out: &Path, command: Command, message: &str) -> io::Result<()> {
    let v = json!({ "command": command.as_str(), "status": "invalid_input", "error": message, "versions": versions() });
    publish(out, &[("error.json".into(), pretty(&v))])
}
