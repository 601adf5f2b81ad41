//! Configuration, data input and the `simulate`, `filter` and `infer`
//! commands behind the `ctbp` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod series;

pub use commands::filter::cmd_filter;
pub use commands::infer::cmd_infer;
pub use commands::simulate::cmd_simulate;
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use series::{load_series, ObservationSeries};
