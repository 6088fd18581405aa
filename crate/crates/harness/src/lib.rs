//! Command-line runner, benchmarks, metrics and the websocket bridge around
//! the `jointmpc` controller.

use std::path::{Path, PathBuf};

pub mod bench;
pub mod bridge;
pub mod config;
pub mod fig3;
pub mod metrics;
pub mod runner;

pub use config::{ExperimentConfig, ScenarioConfig};
pub use metrics::{metrics_report, MetricsReport};
pub use runner::{build_episode, run_scenario, ScenarioOutcome};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing fixture: {}", .0.display())]
    MissingFixture(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] jointmpc::Error),
    #[error("bridge: {0}")]
    Bridge(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
