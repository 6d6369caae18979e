//! Experiment driver for graph neural tangent kernels: configuration,
//! graph files, the run pipeline and its CSV/JSON artifacts. The numerics
//! live in `gntk-core`.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod graph_io;
pub mod run;

pub use config::{load_config, preset, resolve, Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use run::{run, run_with_env_threads, RunOutcome};
