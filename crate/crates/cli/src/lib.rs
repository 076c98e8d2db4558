//! Command-line front end: chain files, argument parsing and dispatch.

pub mod args;
pub mod commands;
pub mod spec;

pub use commands::{run, CliError, Verdict, THREADS_ENV};
pub use spec::{parse_spec, ExperimentSpec, SpecError, SpecErrorKind};
