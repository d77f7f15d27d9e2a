//! Command-line workbench for collision replay experiments.
//!
//! The binary wraps these modules; they are public so the pipeline can also
//! be driven from tests.

pub mod artifacts;
pub mod config;
pub mod map_cmd;
pub mod nn;
pub mod pipeline;
pub mod ruin_cmd;

use std::path::PathBuf;

/// Failures with a fixed process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("map generation failed: {0}")]
    Generation(String),
    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),
    #[error("unknown key: {0}")]
    UnknownKey(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Generation(_) => 3,
            Failure::Missing(_) | Failure::UnknownKey(_) => 4,
        }
    }
}

/// Exit code for an error: the code of the first [`Failure`] in its chain, else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain().find_map(|e| e.downcast_ref::<Failure>()).map_or(1, Failure::exit_code)
}

/// Sizes the global thread pool from `COLLISION_REPLAY_THREADS`, if set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("COLLISION_REPLAY_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(format!("COLLISION_REPLAY_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
