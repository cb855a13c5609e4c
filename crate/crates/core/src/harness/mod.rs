//! Monte-Carlo experiments over the full UL-to-DL pipeline.

pub mod config;
pub mod metrics;
pub mod oracle;
pub mod output;
pub mod runner;

pub use config::*;
pub use metrics::*;
pub use oracle::*;
pub use output::*;
pub use runner::*;
