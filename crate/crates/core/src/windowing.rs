//! Tumbling-window aggregation of attention and score streams.
//!
//! Windows are left-closed, right-open: window `k` covers
//! `[k * window_ms, (k + 1) * window_ms)`.

use thiserror::Error;

use crate::model::{AttentionLevel, AttentionSample, ScoreEvent, SessionConfig, WindowSnapshot};

/// Ratio assumed before any score has been seen.
pub const INITIAL_SCORE_RATIO: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WindowingError {
    #[error("UnsortedInput: {stream} event at t_ms={t_ms} precedes t_ms={previous}")]
    UnsortedInput {
        stream: &'static str,
        t_ms: u64,
        previous: u64,
    },
    #[error("EventOutOfRange: {stream} event at t_ms={t_ms} is not before duration_ms={duration_ms}")]
    EventOutOfRange {
        stream: &'static str,
        t_ms: u64,
        duration_ms: u64,
    },
}

/// Running sums for one open window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WindowAccumulator {
    pub index: u64,
    pub points_sum: u64,
    pub max_points_sum: u64,
    pub attention_sum: f64,
    pub attention_count: u64,
}

impl WindowAccumulator {
    pub fn new(index: u64) -> Self {
        Self {
            index,
            ..Self::default()
        }
    }

    pub fn add_score(&mut self, event: &ScoreEvent) {
        self.points_sum += event.points;
        self.max_points_sum += event.max_points;
    }

    pub fn add_attention(&mut self, sample: &AttentionSample) {
        self.attention_sum += sample.value;
        self.attention_count += 1;
    }

    pub fn has_scores(&self) -> bool {
        self.max_points_sum > 0
    }

    /// Mean attention, or `fallback` when no sample arrived.
    pub fn mean_attention(&self, fallback: f64) -> f64 {
        if self.attention_count > 0 {
            self.attention_sum / self.attention_count as f64
        } else {
            fallback
        }
    }
}

pub fn assign_window(t_ms: u64, window_ms: u64) -> u64 {
    assert!(window_ms > 0, "window_ms must be positive");
    t_ms / window_ms
}

/// Window score ratio, carrying `prev_ratio` forward over windows without scores.
pub fn window_score_ratio(acc: &WindowAccumulator, prev_ratio: f64) -> f64 {
    if acc.has_scores() {
        acc.points_sum as f64 / acc.max_points_sum as f64
    } else {
        prev_ratio
    }
}

pub fn instant_performance(s_prev: f64, s_next: f64) -> f64 {
    s_next - s_prev
}

/// High iff the window mean reaches `threshold`; an empty window counts as High.
pub fn classify_attention(acc: &WindowAccumulator, threshold: f64) -> AttentionLevel {
    if acc.mean_attention(threshold) >= threshold {
        AttentionLevel::High
    } else {
        AttentionLevel::Low
    }
}

/// Turns closed accumulators into snapshots, remembering the previous ratio.
///
/// Shared by the offline fold and the live session so both see the same
/// carry-forward and differencing rules.
#[derive(Clone, Debug)]
pub struct SnapshotBuilder {
    threshold: f64,
    prev_ratio: Option<f64>,
}

impl SnapshotBuilder {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            prev_ratio: None,
        }
    }

    pub fn finalize(&mut self, acc: &WindowAccumulator) -> WindowSnapshot {
        let carry = self.prev_ratio.unwrap_or(INITIAL_SCORE_RATIO);
        let score_ratio = window_score_ratio(acc, carry);
        let instant = self
            .prev_ratio
            .map(|prev| instant_performance(prev, score_ratio));
        self.prev_ratio = Some(score_ratio);
        WindowSnapshot {
            index: acc.index,
            score_ratio,
            mean_attention: acc.mean_attention(self.threshold),
            attention_level: classify_attention(acc, self.threshold),
            instant_performance: instant,
        }
    }
}

fn check_stream<T>(
    events: &[T],
    stream: &'static str,
    duration_ms: u64,
    t_of: impl Fn(&T) -> u64,
) -> Result<(), WindowingError> {
    let mut previous = 0;
    for e in events {
        let t_ms = t_of(e);
        if t_ms < previous {
            return Err(WindowingError::UnsortedInput {
                stream,
                t_ms,
                previous,
            });
        }
        if t_ms >= duration_ms {
            return Err(WindowingError::EventOutOfRange {
                stream,
                t_ms,
                duration_ms,
            });
        }
        previous = t_ms;
    }
    Ok(())
}

/// Folds sorted event streams into one snapshot per window of the session.
pub fn fold_stream(
    attention_events: &[AttentionSample],
    score_events: &[ScoreEvent],
    config: &SessionConfig,
) -> Result<Vec<WindowSnapshot>, WindowingError> {
    let window_ms = config.window_ms;
    check_stream(attention_events, "attention", config.duration_ms, |e| e.t_ms)?;
    check_stream(score_events, "score", config.duration_ms, |e| e.t_ms)?;

    let mut attention = attention_events.iter().peekable();
    let mut scores = score_events.iter().peekable();
    let mut builder = SnapshotBuilder::new(config.attention_threshold);
    let mut snapshots = Vec::with_capacity(config.window_count() as usize);
    for index in 0..config.window_count() {
        let mut acc = WindowAccumulator::new(index);
        while let Some(sample) = attention.next_if(|s| assign_window(s.t_ms, window_ms) == index) {
            acc.add_attention(sample);
        }
        while let Some(event) = scores.next_if(|e| assign_window(e.t_ms, window_ms) == index) {
            acc.add_score(event);
        }
        snapshots.push(builder.finalize(&acc));
    }
    Ok(snapshots)
}
