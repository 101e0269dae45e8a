//! Deterministic merge-scenario simulator: vehicles, a roadside camera,
//! sensor fusion, a pub/sub gateway with network impairment, and a link to
//! the orchestrator.

pub mod camera;
pub mod fusion;
pub mod gateway;
pub mod link;
pub mod log;
pub mod network;
pub mod runner;
pub mod scenario;
pub mod vehicle;

pub use link::{InProcLink, OrchestratorLink, TcpLink};
pub use log::{read_log, write_log, LogEvent};
pub use runner::{replay, run_scenario, RunOutput, RunSummary};
pub use scenario::{Behavior, Impairment, LaneRef, Scenario, VehicleSpec};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad scenario: {0}")]
    Scenario(String),
    #[error("cannot reach orchestrator: {0}")]
    Connect(String),
    #[error("orchestrator connection lost: {0}")]
    Disconnected(String),
    #[error("bad log line {line}: {detail}")]
    Log { line: usize, detail: String },
}
