//! Intervention strategies: map a closed window to the scene for the next one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttentionLevel, Color, Reason, SceneCommand, SceneState, WindowSnapshot};

pub const TABLE1: &str = "table1";
pub const CONTROL_FIXED: &str = "control-fixed";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("UnknownStrategy: no strategy named {0:?}")]
    UnknownStrategy(String),
}

/// Color choice plus the rule that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub color: Color,
    pub reason: Reason,
}

/// A scene policy. Implementations must be pure: same inputs, same output.
pub trait Strategy: Send + Sync {
    fn id(&self) -> &'static str;

    fn decide(&self, snapshot: &WindowSnapshot, scene: &SceneState) -> Decision;

    /// One row per rule, for documentation and conformance output.
    fn rules(&self) -> Vec<StrategyRow>;
}

/// Human- and machine-readable description of one policy rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub row: u8,
    pub instant_performance: String,
    pub attention_level: String,
    pub action: String,
    pub reason: Reason,
}

/// The four-row color policy.
///
/// | r      | attention | color     |
/// |--------|-----------|-----------|
/// | r >= 0 | High      | Blue      |
/// | r >= 0 | Low       | Red       |
/// | r < 0  | Low       | Red       |
/// | r < 0  | High      | unchanged |
pub fn table1_decide(r: f64, level: AttentionLevel, current: &SceneState) -> Decision {
    let (color, reason) = match (r >= 0.0, level) {
        (true, AttentionLevel::High) => (Color::Blue, Reason::Row1),
        (true, AttentionLevel::Low) => (Color::Red, Reason::Row2),
        (false, AttentionLevel::Low) => (Color::Red, Reason::Row3),
        (false, AttentionLevel::High) => (current.color, Reason::Row4Maintain),
    };
    Decision { color, reason }
}

/// Control condition: the scene never changes, so the current color is
/// always the session's initial color.
pub fn control_decide(current: &SceneState) -> Decision {
    Decision {
        color: current.color,
        reason: Reason::ControlFixed,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Table1;

impl Strategy for Table1 {
    fn id(&self) -> &'static str {
        TABLE1
    }

    fn decide(&self, snapshot: &WindowSnapshot, scene: &SceneState) -> Decision {
        table1_decide(
            snapshot.instant_performance.unwrap_or(0.0),
            snapshot.attention_level,
            scene,
        )
    }

    fn rules(&self) -> Vec<StrategyRow> {
        // Probe the decision function at representative points so the
        // printed table cannot drift from the code.
        let probe = SceneState::initial(Color::Blue);
        let cases = [
            (1u8, 0.0, AttentionLevel::High, ">=0"),
            (2, 0.0, AttentionLevel::Low, ">=0"),
            (3, -0.5, AttentionLevel::Low, "<0"),
            (4, -0.5, AttentionLevel::High, "<0"),
        ];
        cases
            .iter()
            .map(|&(row, r, level, perf)| {
                let d = table1_decide(r, level, &probe);
                let action = if d.reason == Reason::Row4Maintain {
                    "Maintain".to_string()
                } else {
                    d.color.to_string()
                };
                StrategyRow {
                    strategy: TABLE1.to_string(),
                    row,
                    instant_performance: perf.to_string(),
                    attention_level: level.to_string(),
                    action,
                    reason: d.reason,
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ControlFixed;

impl Strategy for ControlFixed {
    fn id(&self) -> &'static str {
        CONTROL_FIXED
    }

    fn decide(&self, _snapshot: &WindowSnapshot, scene: &SceneState) -> Decision {
        control_decide(scene)
    }

    fn rules(&self) -> Vec<StrategyRow> {
        vec![StrategyRow {
            strategy: CONTROL_FIXED.to_string(),
            row: 1,
            instant_performance: "any".to_string(),
            attention_level: "any".to_string(),
            action: "Maintain".to_string(),
            reason: Reason::ControlFixed,
        }]
    }
}

static BUILTINS: [&dyn Strategy; 2] = [&Table1, &ControlFixed];

/// Looks up a built-in strategy by id.
pub fn lookup(id: &str) -> Option<&'static dyn Strategy> {
    BUILTINS.iter().copied().find(|s| s.id() == id)
}

pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|s| s.id())
}

/// Applies the named strategy to a closed window. The resulting command
/// takes effect in the following window.
pub fn decide_for_snapshot(
    strategy: &str,
    snapshot: &WindowSnapshot,
    scene: &SceneState,
) -> Result<SceneCommand, StrategyError> {
    let s = lookup(strategy).ok_or_else(|| StrategyError::UnknownStrategy(strategy.to_string()))?;
    Ok(command_for(s, snapshot, scene))
}

pub fn command_for(
    strategy: &dyn Strategy,
    snapshot: &WindowSnapshot,
    scene: &SceneState,
) -> SceneCommand {
    let d = strategy.decide(snapshot, scene);
    SceneCommand {
        window_index: snapshot.index + 1,
        color: d.color,
        reason: d.reason,
    }
}
