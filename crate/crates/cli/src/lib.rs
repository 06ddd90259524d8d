//! Library side of the `xlalert` command-line tool.

pub mod manifest;
pub mod pipeline;

pub use manifest::{RunManifest, Stratum};
pub use pipeline::{CliError, ErrorKind};
