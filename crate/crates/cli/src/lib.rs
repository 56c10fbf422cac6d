//! Command line harness: JSON explorer configs, dataset ingestion, result
//! records and tables. The `evgraph` binary is a thin layer over [`runner`].

pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{load_config, load_config_with, parse_config, ExplorerConfig};
pub use error::{HarnessError, Result};
pub use runner::RunOptions;
