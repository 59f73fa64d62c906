//! Problem files, search traces and the commands behind the `qpnet` binary.

pub mod commands;
pub mod problem;
pub mod trace;

pub use commands::CliError;
pub use problem::{ProblemError, ProblemFile};
pub use trace::{to_jsonl, write_jsonl, TraceRecord};
