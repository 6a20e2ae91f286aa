//! Shared fixtures for the integration tests. The oracles here recompute
//! everything from raw events and deliberately share no code with the
//! library's aggregation path.
#![allow(dead_code)]

use dsa_core::{AttentionLevel, AttentionSample, ScoreEvent, SessionConfig};
use rand::Rng;

/// Random sorted streams inside `[0, duration_ms)`, with empty windows,
/// ties, and all-miss windows occurring regularly.
pub fn random_stream(
    rng: &mut impl Rng,
    config: &SessionConfig,
) -> (Vec<AttentionSample>, Vec<ScoreEvent>) {
    let n_att = rng.random_range(0..60);
    let n_score = rng.random_range(0..80);
    let mut att: Vec<AttentionSample> = (0..n_att)
        .map(|_| AttentionSample {
            t_ms: rng.random_range(0..config.duration_ms),
            value: rng.random_range(0.0..=1.0),
        })
        .collect();
    let mut scores: Vec<ScoreEvent> = (0..n_score)
        .map(|_| {
            let max_points = rng.random_range(1..=300);
            ScoreEvent {
                t_ms: rng.random_range(0..config.duration_ms),
                points: rng.random_range(0..=max_points),
                max_points,
            }
        })
        .collect();
    att.sort_by_key(|e| e.t_ms);
    scores.sort_by_key(|e| e.t_ms);
    (att, scores)
}

pub fn random_config(rng: &mut impl Rng) -> SessionConfig {
    let window_ms = rng.random_range(1..5000);
    SessionConfig {
        window_ms,
        duration_ms: window_ms * rng.random_range(1..30) + rng.random_range(0..window_ms),
        attention_threshold: rng.random_range(0.05..0.95),
        ..SessionConfig::default()
    }
}

/// Expected per-window values recomputed by scanning every event for every
/// window.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveWindow {
    pub score_ratio: f64,
    pub mean_attention: f64,
    pub level: AttentionLevel,
    pub instant_performance: Option<f64>,
}

pub fn naive_windows(
    att: &[AttentionSample],
    scores: &[ScoreEvent],
    config: &SessionConfig,
) -> Vec<NaiveWindow> {
    let w = config.window_ms;
    let count = (config.duration_ms + w - 1) / w;
    let mut out: Vec<NaiveWindow> = Vec::new();
    for k in 0..count {
        let (lo, hi) = (k * w, (k + 1) * w);
        let mut pts = 0u64;
        let mut max = 0u64;
        for e in scores.iter().filter(|e| e.t_ms >= lo && e.t_ms < hi) {
            pts += e.points;
            max += e.max_points;
        }
        let in_window: Vec<f64> = att
            .iter()
            .filter(|a| a.t_ms >= lo && a.t_ms < hi)
            .map(|a| a.value)
            .collect();
        let previous = out.last().map(|p| p.score_ratio);
        let score_ratio = if max > 0 {
            pts as f64 / max as f64
        } else {
            previous.unwrap_or(1.0)
        };
        let mean_attention = if in_window.is_empty() {
            config.attention_threshold
        } else {
            in_window.iter().sum::<f64>() / in_window.len() as f64
        };
        let level = if mean_attention >= config.attention_threshold {
            AttentionLevel::High
        } else {
            AttentionLevel::Low
        };
        out.push(NaiveWindow {
            score_ratio,
            mean_attention,
            level,
            instant_performance: previous.map(|p| score_ratio - p),
        });
    }
    out
}
