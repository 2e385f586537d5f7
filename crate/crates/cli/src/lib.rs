//! Command-line driver for `taoi-core`: config parsing, single runs,
//! protocol and density sweeps, the schedule oracle and CSV/JSON output.

pub mod cli;
pub mod config;
pub mod report;
pub mod sweep;
pub mod tables;

pub use config::{parse_config, parse_config_str, ConfigError};
pub use report::emit_reports;
pub use sweep::{run_sweep, SweepSpec};

/// Installs a stderr logger filtered by `TAOI_SIM_LOG` (default `info`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("TAOI_SIM_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}
