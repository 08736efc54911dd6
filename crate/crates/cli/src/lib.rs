//! Library side of the `depthforge` command-line tool: configuration
//! resolution, the batch driver and the single-input subcommands.

pub mod batch;
pub mod commands;
pub mod config;
pub mod error;

pub use batch::{run_batch, BatchCommand, BatchSummary};
pub use config::{load as load_config, Overrides, PipelineConfig};
pub use error::{CliError, CliResult};
