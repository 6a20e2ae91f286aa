//! Seeded simulated player.
//!
//! Attention drifts upward under a red scene and relaxes toward a baseline
//! under a blue one, with a small fatigue pull in both. Each note is a hit
//! with a probability linear in attention. One generator drives all
//! randomness; per window the note draws come first, then the attention
//! noise draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::summarize;
use crate::model::{
    validate_config, AttentionSample, Color, SceneState, ScoreEvent, SessionConfig, SessionLog,
    ValidationErrors,
};
use crate::strategy::{self, StrategyError};
use crate::windowing::{SnapshotBuilder, WindowAccumulator};

/// Generator family recorded in session logs.
pub const GENERATOR_FAMILY: &str = "ChaCha8Rng";

/// The generator type used for every simulated session.
pub type SimRng = ChaCha8Rng;

pub fn session_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tunables of the simulated player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModelParams {
    pub base_attention: f64,
    pub red_drift: f64,
    pub red_noise_sd: f64,
    pub blue_reversion: f64,
    pub blue_noise_sd: f64,
    pub fatigue_drift: f64,
    pub skill_slope: f64,
    pub skill_offset: f64,
    pub notes_per_window: u32,
    pub points_per_note: u64,
}

impl Default for UserModelParams {
    // Calibrated so the fixed-blue arm averages in the mid-80s; see
    // `examples/calibrate.rs`.
    fn default() -> Self {
        Self {
            base_attention: 0.5,
            red_drift: 0.08,
            red_noise_sd: 0.05,
            blue_reversion: 0.3,
            blue_noise_sd: 0.02,
            fatigue_drift: -0.01,
            skill_slope: 0.8,
            skill_offset: 0.45,
            notes_per_window: 4,
            points_per_note: 100,
        }
    }
}

impl UserModelParams {
    /// Same parameters with both noise terms switched off.
    pub fn noiseless(mut self) -> Self {
        self.red_noise_sd = 0.0;
        self.blue_noise_sd = 0.0;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let finite = [
            ("base_attention", self.base_attention),
            ("red_drift", self.red_drift),
            ("red_noise_sd", self.red_noise_sd),
            ("blue_reversion", self.blue_reversion),
            ("blue_noise_sd", self.blue_noise_sd),
            ("fatigue_drift", self.fatigue_drift),
            ("skill_slope", self.skill_slope),
            ("skill_offset", self.skill_offset),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.base_attention) {
            out.push(format!("base_attention {} outside [0, 1]", self.base_attention));
        }
        if self.red_noise_sd < 0.0 {
            out.push(format!("red_noise_sd {} is negative", self.red_noise_sd));
        }
        if self.blue_noise_sd < 0.0 {
            out.push(format!("blue_noise_sd {} is negative", self.blue_noise_sd));
        }
        if !(0.0..=1.0).contains(&self.blue_reversion) {
            out.push(format!("blue_reversion {} outside [0, 1]", self.blue_reversion));
        }
        if self.notes_per_window == 0 {
            out.push("notes_per_window must be >= 1".to_string());
        }
        if self.points_per_note == 0 {
            out.push("points_per_note must be >= 1".to_string());
        }
        out
    }
}

fn gaussian(rng: &mut impl Rng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sd
}

/// Attention after one window under `color`. Always draws exactly one
/// normal deviate, even when the noise sd is zero.
pub fn attention_step(a: f64, color: Color, params: &UserModelParams, rng: &mut impl Rng) -> f64 {
    let next = match color {
        Color::Red => a + params.red_drift + params.fatigue_drift + gaussian(rng, params.red_noise_sd),
        Color::Blue => {
            a + params.blue_reversion * (params.base_attention - a)
                + params.fatigue_drift
                + gaussian(rng, params.blue_noise_sd)
        }
    };
    next.clamp(0.0, 1.0)
}

pub fn hit_probability(a: f64, params: &UserModelParams) -> f64 {
    (params.skill_offset + params.skill_slope * a).clamp(0.0, 1.0)
}

/// Notes for window `window_index`, spaced evenly over `[start, start + len)`
/// where `len` is the window width, shortened for a partial last window.
pub fn gameplay_step(
    a: f64,
    window_index: u64,
    window_ms: u64,
    duration_ms: u64,
    params: &UserModelParams,
    rng: &mut impl Rng,
) -> Vec<ScoreEvent> {
    let start = window_index * window_ms;
    let len = window_ms.min(duration_ms.saturating_sub(start));
    let n = u64::from(params.notes_per_window);
    let p = hit_probability(a, params);
    (0..n)
        .map(|j| {
            let hit = rng.random::<f64>() < p;
            ScoreEvent {
                t_ms: start + j * len / n,
                points: if hit { params.points_per_note } else { 0 },
                max_points: params.points_per_note,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(#[from] ValidationErrors),
    #[error(transparent)]
    UnknownStrategy(#[from] StrategyError),
}

/// Runs one closed-loop session under `strategy_id` with `seed`, which
/// override the corresponding config fields.
pub fn run_session(config: &SessionConfig, strategy_id: &str, seed: u64) -> Result<SessionLog, SimError> {
    let config = SessionConfig {
        strategy_id: strategy_id.to_string(),
        seed,
        ..config.clone()
    };
    let strategy = strategy::lookup(strategy_id)
        .ok_or_else(|| StrategyError::UnknownStrategy(strategy_id.to_string()))?;
    let config = validate_config(config)?;
    let params = &config.user_model;
    let mut rng = session_rng(seed);

    let windows = config.window_count();
    let mut attention = params.base_attention;
    let mut scene = SceneState::initial(config.initial_color);
    let mut builder = SnapshotBuilder::new(config.attention_threshold);
    let mut attention_events = Vec::with_capacity(windows as usize);
    let mut score_events = Vec::with_capacity(windows as usize * params.notes_per_window as usize);
    let mut snapshots = Vec::with_capacity(windows as usize);
    let mut commands = Vec::with_capacity(windows as usize);

    for k in 0..windows {
        let mut acc = WindowAccumulator::new(k);
        let sample = AttentionSample {
            t_ms: k * config.window_ms,
            value: attention,
        };
        acc.add_attention(&sample);
        attention_events.push(sample);

        for event in gameplay_step(attention, k, config.window_ms, config.duration_ms, params, &mut rng) {
            acc.add_score(&event);
            score_events.push(event);
        }

        let snapshot = builder.finalize(&acc);
        let command = strategy::command_for(strategy, &snapshot, &scene);
        attention = attention_step(attention, scene.color, params, &mut rng);
        scene = scene.apply(&command);
        snapshots.push(snapshot);
        commands.push(command);
    }

    let summary = summarize(&score_events, &snapshots);
    Ok(SessionLog {
        config,
        attention_events,
        score_events,
        snapshots,
        commands,
        summary,
    })
}
