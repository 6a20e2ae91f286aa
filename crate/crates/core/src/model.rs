//! Domain values shared by every stage of the adjustment loop.
//!
//! Everything here is a plain immutable value. Time is always a
//! session-relative millisecond count; nothing reads a wall clock.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy;
use crate::usersim::UserModelParams;

/// Default tumbling window width in milliseconds.
pub const DEFAULT_WINDOW_MS: u64 = 2500;
/// Default cut-off between low and high attention.
pub const DEFAULT_ATTENTION_THRESHOLD: f64 = 0.5;
/// Default session length: 24 windows of 2.5 s.
pub const DEFAULT_DURATION_MS: u64 = 60_000;

/// Scene background color, the single world parameter under control.
///
/// The declaration order fixes `Red < Blue`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Blue,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Color::Red => f.write_str("Red"),
            Color::Blue => f.write_str("Blue"),
        }
    }
}

/// Binarized user status for one window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttentionLevel {
    High,
    Low,
}

impl fmt::Display for AttentionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionLevel::High => f.write_str("High"),
            AttentionLevel::Low => f.write_str("Low"),
        }
    }
}

/// The scene color in force and the window in which it took effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneState {
    pub color: Color,
    pub active_since_window: u64,
}

impl SceneState {
    pub fn initial(color: Color) -> Self {
        Self {
            color,
            active_since_window: 0,
        }
    }

    /// Scene after `command` takes effect. The activation window only moves
    /// when the color actually changes.
    pub fn apply(self, command: &SceneCommand) -> Self {
        if command.color == self.color {
            self
        } else {
            Self {
                color: command.color,
                active_since_window: command.window_index,
            }
        }
    }
}

/// One normalized attention reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSample {
    pub t_ms: u64,
    pub value: f64,
}

impl AttentionSample {
    pub fn validate(&self) -> Result<(), EventError> {
        if (0.0..=1.0).contains(&self.value) {
            Ok(())
        } else {
            Err(EventError::AttentionOutOfRange(self.value))
        }
    }
}

/// Points scored on one note out of the points available for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEvent {
    pub t_ms: u64,
    pub points: u64,
    pub max_points: u64,
}

impl ScoreEvent {
    pub fn validate(&self) -> Result<(), EventError> {
        if self.max_points == 0 {
            return Err(EventError::ZeroMaxPoints);
        }
        if self.points > self.max_points {
            return Err(EventError::PointsExceedMax {
                points: self.points,
                max_points: self.max_points,
            });
        }
        Ok(())
    }
}

/// Rejected event payloads.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EventError {
    #[error("attention value {0} is outside [0, 1]")]
    AttentionOutOfRange(f64),
    #[error("max_points must be positive")]
    ZeroMaxPoints,
    #[error("points {points} exceed max_points {max_points}")]
    PointsExceedMax { points: u64, max_points: u64 },
}

/// Aggregate of one closed window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSnapshot {
    pub index: u64,
    pub score_ratio: f64,
    pub mean_attention: f64,
    pub attention_level: AttentionLevel,
    /// Difference to the previous window's ratio; absent for window 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instant_performance: Option<f64>,
}

/// Which rule produced a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reason {
    Row1,
    Row2,
    Row3,
    Row4Maintain,
    ControlFixed,
}

/// Scene color to use from `window_index` onward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCommand {
    pub window_index: u64,
    pub color: Color,
    pub reason: Reason,
}

/// Parameters of one session, whether simulated or live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub window_ms: u64,
    pub attention_threshold: f64,
    pub duration_ms: u64,
    pub strategy_id: String,
    pub initial_color: Color,
    pub seed: u64,
    pub user_model: UserModelParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            attention_threshold: DEFAULT_ATTENTION_THRESHOLD,
            duration_ms: DEFAULT_DURATION_MS,
            strategy_id: strategy::TABLE1.to_string(),
            initial_color: Color::Blue,
            seed: 0,
            user_model: UserModelParams::default(),
        }
    }
}

impl SessionConfig {
    /// Number of windows covering `[0, duration_ms)`.
    pub fn window_count(&self) -> u64 {
        self.duration_ms.div_ceil(self.window_ms)
    }
}

/// A single invariant broken by a [`SessionConfig`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("NonPositiveWindow: window_ms must be > 0")]
    NonPositiveWindow,
    #[error("ThresholdOutOfRange: attention_threshold {0} must lie strictly between 0 and 1")]
    ThresholdOutOfRange(f64),
    #[error("DurationShorterThanWindow: duration_ms {duration_ms} < window_ms {window_ms}")]
    DurationShorterThanWindow { duration_ms: u64, window_ms: u64 },
    #[error("UnknownStrategy: no strategy named {0:?}")]
    UnknownStrategy(String),
    #[error("InvalidUserModel: {0}")]
    InvalidUserModel(String),
}

/// Every violation found in a config, in check order.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationErrors(pub Vec<ConfigViolation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Returns the config untouched if it is usable, otherwise every violation.
pub fn validate_config(config: SessionConfig) -> Result<SessionConfig, ValidationErrors> {
    let mut violations = Vec::new();
    if config.window_ms == 0 {
        violations.push(ConfigViolation::NonPositiveWindow);
    }
    let th = config.attention_threshold;
    if !(th > 0.0 && th < 1.0) {
        violations.push(ConfigViolation::ThresholdOutOfRange(th));
    }
    if config.duration_ms < config.window_ms || config.duration_ms == 0 {
        violations.push(ConfigViolation::DurationShorterThanWindow {
            duration_ms: config.duration_ms,
            window_ms: config.window_ms,
        });
    }
    if strategy::lookup(&config.strategy_id).is_none() {
        violations.push(ConfigViolation::UnknownStrategy(config.strategy_id.clone()));
    }
    violations.extend(
        config
            .user_model
            .violations()
            .into_iter()
            .map(ConfigViolation::InvalidUserModel),
    );
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ValidationErrors(violations))
    }
}

/// Overlays a partial JSON object onto `base`, recursing into nested
/// objects. Unknown keys are rejected when the result is decoded.
pub fn merge_json(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) if !v.is_null() => *slot = v.clone(),
        _ => {}
    }
}

/// `base` with the fields present in `overrides` replaced.
pub fn apply_overrides(
    base: &SessionConfig,
    overrides: &serde_json::Value,
) -> Result<SessionConfig, serde_json::Error> {
    let mut merged = serde_json::to_value(base)?;
    merge_json(&mut merged, overrides);
    serde_json::from_value(merged)
}

/// End-of-session totals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub total_points: u64,
    pub total_max_points: u64,
    pub overall_score_ratio: f64,
    pub r_star: f64,
    pub window_count: u64,
}

/// Full record of one session. See [`crate::log`] for the file encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub config: SessionConfig,
    pub attention_events: Vec<AttentionSample>,
    pub score_events: Vec<ScoreEvent>,
    pub snapshots: Vec<WindowSnapshot>,
    pub commands: Vec<SceneCommand>,
    pub summary: SessionSummary,
}

/// Encodes a value as one canonical JSON line, without the trailing newline.
pub fn encode_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("canonical types always serialize")
}

pub fn decode_line<T: DeserializeOwned>(line: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = SessionConfig {
            window_ms: 2500,
            attention_threshold: 0.5,
            duration_ms: 60_000,
            ..SessionConfig::default()
        };
        assert_eq!(validate_config(cfg.clone()), Ok(cfg));
    }

    #[test]
    fn zero_window_is_rejected() {
        let cfg = SessionConfig {
            window_ms: 0,
            ..SessionConfig::default()
        };
        let err = validate_config(cfg).unwrap_err();
        assert!(err.0.contains(&ConfigViolation::NonPositiveWindow));
    }

    #[test]
    fn threshold_above_one_is_rejected() {
        let cfg = SessionConfig {
            attention_threshold: 1.5,
            ..SessionConfig::default()
        };
        let err = validate_config(cfg).unwrap_err();
        assert_eq!(err.0, vec![ConfigViolation::ThresholdOutOfRange(1.5)]);
    }

    #[test]
    fn all_violations_are_reported() {
        let cfg = SessionConfig {
            window_ms: 5000,
            attention_threshold: 0.0,
            duration_ms: 1000,
            strategy_id: "nope".into(),
            ..SessionConfig::default()
        };
        let err = validate_config(cfg).unwrap_err();
        assert_eq!(err.0.len(), 3);
        assert!(matches!(err.0[0], ConfigViolation::ThresholdOutOfRange(_)));
        assert!(matches!(err.0[1], ConfigViolation::DurationShorterThanWindow { .. }));
        assert!(matches!(err.0[2], ConfigViolation::UnknownStrategy(_)));
        assert!(err.to_string().contains("UnknownStrategy"));
    }

    #[test]
    fn nan_threshold_is_rejected() {
        let cfg = SessionConfig {
            attention_threshold: f64::NAN,
            ..SessionConfig::default()
        };
        assert!(validate_config(cfg).is_err());
    }

    #[test]
    fn overrides_merge_nested_fields() {
        let base = SessionConfig::default();
        let cfg = apply_overrides(
            &base,
            &serde_json::json!({"seed": 9, "user_model": {"red_drift": 0.1}}),
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.user_model.red_drift, 0.1);
        assert_eq!(cfg.user_model.blue_reversion, base.user_model.blue_reversion);
        assert_eq!(cfg.window_ms, base.window_ms);
        assert!(apply_overrides(&base, &serde_json::json!({"window": 1})).is_err());
        assert_eq!(apply_overrides(&base, &serde_json::Value::Null).unwrap(), base);
    }

    #[test]
    fn orderings_are_fixed() {
        assert!(Color::Red < Color::Blue);
        assert!(AttentionLevel::High < AttentionLevel::Low);
        let mut colors = vec![Color::Blue, Color::Red, Color::Blue];
        colors.sort();
        assert_eq!(colors, vec![Color::Red, Color::Blue, Color::Blue]);
    }

    #[test]
    fn canonical_field_names() {
        let snap = WindowSnapshot {
            index: 0,
            score_ratio: 0.5,
            mean_attention: 0.25,
            attention_level: AttentionLevel::Low,
            instant_performance: None,
        };
        assert_eq!(
            encode_line(&snap),
            r#"{"index":0,"score_ratio":0.5,"mean_attention":0.25,"attention_level":"Low"}"#
        );
        let cmd = SceneCommand {
            window_index: 3,
            color: Color::Red,
            reason: Reason::Row4Maintain,
        };
        assert_eq!(
            encode_line(&cmd),
            r#"{"window_index":3,"color":"Red","reason":"Row4Maintain"}"#
        );
    }

    #[test]
    fn scene_apply_tracks_changes_only() {
        let s = SceneState::initial(Color::Blue);
        let same = SceneCommand {
            window_index: 4,
            color: Color::Blue,
            reason: Reason::Row1,
        };
        assert_eq!(s.apply(&same), s);
        let change = SceneCommand {
            window_index: 5,
            color: Color::Red,
            reason: Reason::Row2,
        };
        assert_eq!(
            s.apply(&change),
            SceneState {
                color: Color::Red,
                active_since_window: 5
            }
        );
    }

    #[test]
    fn event_validation() {
        assert!(AttentionSample { t_ms: 0, value: 1.2 }.validate().is_err());
        assert!(AttentionSample { t_ms: 0, value: 1.0 }.validate().is_ok());
        assert!(ScoreEvent { t_ms: 0, points: 5, max_points: 0 }.validate().is_err());
        assert!(ScoreEvent { t_ms: 0, points: 101, max_points: 100 }.validate().is_err());
    }

    fn color() -> impl Strategy<Value = Color> {
        prop_oneof![Just(Color::Red), Just(Color::Blue)]
    }

    fn level() -> impl Strategy<Value = AttentionLevel> {
        prop_oneof![Just(AttentionLevel::High), Just(AttentionLevel::Low)]
    }

    fn reason() -> impl Strategy<Value = Reason> {
        prop_oneof![
            Just(Reason::Row1),
            Just(Reason::Row2),
            Just(Reason::Row3),
            Just(Reason::Row4Maintain),
            Just(Reason::ControlFixed),
        ]
    }

    fn user_model() -> impl Strategy<Value = UserModelParams> {
        (
            (0.0..=1.0f64, -1.0..1.0f64, 0.0..1.0f64, 0.0..=1.0f64, 0.0..1.0f64),
            (-1.0..1.0f64, -2.0..2.0f64, -1.0..1.0f64, 1u32..64, 1u64..10_000),
        )
            .prop_map(|((b, rd, rn, br, bn), (fd, ss, so, n, p))| UserModelParams {
                base_attention: b,
                red_drift: rd,
                red_noise_sd: rn,
                blue_reversion: br,
                blue_noise_sd: bn,
                fatigue_drift: fd,
                skill_slope: ss,
                skill_offset: so,
                notes_per_window: n,
                points_per_note: p,
            })
    }

    fn roundtrip<T: Serialize + DeserializeOwned + PartialEq + fmt::Debug>(value: &T) {
        let line = encode_line(value);
        assert!(!line.contains('\n'));
        let back: T = decode_line(&line).unwrap();
        assert_eq!(&back, value);
    }

    proptest! {
        #[test]
        fn snapshot_and_command_roundtrip(
            index in any::<u64>(),
            ratio in 0.0..=1.0f64,
            mean in 0.0..=1.0f64,
            lvl in level(),
            r in proptest::option::of(-1.0..=1.0f64),
            c in color(),
            why in reason(),
        ) {
            roundtrip(&WindowSnapshot {
                index,
                score_ratio: ratio,
                mean_attention: mean,
                attention_level: lvl,
                instant_performance: r,
            });
            roundtrip(&SceneCommand { window_index: index, color: c, reason: why });
            roundtrip(&SceneState { color: c, active_since_window: index });
        }

        #[test]
        fn event_and_summary_roundtrip(
            t in any::<u64>(),
            v in 0.0..=1.0f64,
            pts in 0u64..1000,
            extra in 1u64..1000,
            ratio in 0.0..=1.0f64,
            r_star in -5.0..5.0f64,
        ) {
            roundtrip(&AttentionSample { t_ms: t, value: v });
            roundtrip(&ScoreEvent { t_ms: t, points: pts, max_points: pts + extra });
            roundtrip(&SessionSummary {
                total_points: pts,
                total_max_points: pts + extra,
                overall_score_ratio: ratio,
                r_star,
                window_count: t,
            });
        }

        #[test]
        fn config_roundtrip(
            w in 1u64..100_000,
            th in 0.001..0.999f64,
            d in 1u64..1_000_000,
            c in color(),
            seed in any::<u64>(),
            um in user_model(),
        ) {
            roundtrip(&SessionConfig {
                window_ms: w,
                attention_threshold: th,
                duration_ms: d,
                strategy_id: "table1".into(),
                initial_color: c,
                seed,
                user_model: um,
            });
        }
    }
}
