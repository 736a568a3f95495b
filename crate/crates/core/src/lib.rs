//! Weighted liquid rank reputation engine and a marketplace simulator that
//! measures how well reputation protects honest traders from scammers.

pub mod engine;
pub mod io;
pub mod market;
pub mod metrics;
pub mod sweep;

pub use engine::{AgentId, EngineParams, RatingMode, RatingRecord, ReputationState};
pub use market::{ScenarioConfig, TransactionLog, UsageMode};
pub use metrics::MetricsReport;
