//! Library half of the batch driver: experiment manifests and the
//! subcommand bodies, kept out of `main.rs` so integration tests can run
//! the same pipeline in-process.

pub mod manifest;
pub mod pipeline;
