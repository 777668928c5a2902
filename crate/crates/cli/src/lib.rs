//! Pipeline runner behind the `insideout` binary: configuration, the
//! subcommands, and the figures they emit.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod inference;
pub mod plot;

pub use commands::{
    cmd_evaluate, cmd_infer, cmd_prepare, cmd_report, cmd_train, CommonOptions, InferSource,
    Manifest,
};
pub use config::{Overrides, RunConfig};
pub use inference::{InferenceEntry, InferenceResult};
