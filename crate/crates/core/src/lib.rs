//! Dynamic scene adjustment: a closed loop that watches a player's attention
//! and score, and picks the scene color for the next time window.
//!
//! - [`model`]: shared value types and config validation
//! - [`windowing`]: tumbling-window aggregation
//! - [`strategy`]: color policies and their registry
//! - [`usersim`]: seeded simulated player
//! - [`evaluation`]: session scores and paired statistics
//! - [`log`]: session log files
//! - [`telemetry`]: live protocol, replay, and TCP server

pub mod evaluation;
pub mod log;
pub mod model;
pub mod strategy;
pub mod telemetry;
pub mod usersim;
pub mod windowing;

pub use model::{
    AttentionLevel, AttentionSample, Color, Reason, SceneCommand, SceneState, ScoreEvent,
    SessionConfig, SessionLog, SessionSummary, WindowSnapshot,
};
