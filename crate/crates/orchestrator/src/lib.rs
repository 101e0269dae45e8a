//! Traffic orchestrator: ingests vehicle updates, keeps the freshest state
//! per vehicle, asks the trajectory model for merge recommendations, checks
//! them and sends them out.

pub mod checker;
pub mod kb;
pub mod server;
pub mod service;
pub mod wire;

pub use checker::{check_recommendation, find_merge_scenes, CheckFailure, MAX_ABS_ACCEL};
pub use kb::{EnvelopeStatus, KbSnapshot, KnowledgeBase, RecommendationEnvelope};
pub use server::Server;
pub use service::{AuditEvent, Orchestrator, OrchestratorConfig, Outbound, Stats};
pub use wire::{parse_line, Message, RejectKind, VehicleUpdate};
