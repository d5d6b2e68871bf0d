use alloc::string::String;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("truncation {truncation} exceeds n_points/4 for {n_points} grid points")]
    Resolution { truncation: usize, n_points: usize },
    #[error("index bound {bound} outside 1..={truncation}")]
    Truncation { bound: usize, truncation: usize },
    #[error("scan too large: {0}")]
    Resource(String),
    #[error("levels {p} and {l} are resonant (gap {gap:e})")]
    Resonance { p: usize, l: usize, gap: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no coupling path from the occupied levels to level {target}")]
    NoCouplingPath { target: usize },
    #[error("timeout after {elapsed} time units (best distance {best})")]
    Timeout { elapsed: f64, best: f64 },
    #[error("amplitude budget {budget} not reachable (smallest sup |u| was {sup})")]
    Budget { budget: f64, sup: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
