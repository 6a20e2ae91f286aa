//! Session scoring and the paired on/off comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ScoreEvent, SessionConfig, SessionLog, SessionSummary, WindowSnapshot};
use crate::strategy::{CONTROL_FIXED, TABLE1};
use crate::usersim::{run_session, SimError};

/// Score on the 0..=100 scale: percentage of available points earned.
pub fn overall_performance(log: &SessionLog) -> f64 {
    percentage(log.summary.total_points, log.summary.total_max_points)
}

fn percentage(points: u64, max_points: u64) -> f64 {
    if max_points == 0 {
        0.0
    } else {
        100.0 * points as f64 / max_points as f64
    }
}

/// `r_0` plus every defined instant performance, in order.
pub fn r_star_sum(snapshots: &[WindowSnapshot], r_0: f64) -> f64 {
    snapshots
        .iter()
        .filter_map(|s| s.instant_performance)
        .fold(r_0, |acc, r| acc + r)
}

/// Totals for a finished session. `r_0` is the first window's ratio.
pub fn summarize(score_events: &[ScoreEvent], snapshots: &[WindowSnapshot]) -> SessionSummary {
    let total_points = score_events.iter().map(|e| e.points).sum();
    let total_max_points = score_events.iter().map(|e| e.max_points).sum();
    let overall_score_ratio = if total_max_points > 0 {
        total_points as f64 / total_max_points as f64
    } else {
        0.0
    };
    let r_star = snapshots
        .first()
        .map(|first| r_star_sum(snapshots, first.score_ratio))
        .unwrap_or(0.0);
    SessionSummary {
        total_points,
        total_max_points,
        overall_score_ratio,
        r_star,
        window_count: snapshots.len() as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("LengthMismatch: {on} treatment values vs {off} control values")]
    LengthMismatch { on: usize, off: usize },
    #[error("TooFewPairs: need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("DegenerateVariance: every pair differs by the same nonzero amount {0}")]
    DegenerateVariance(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Session(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// One row of a paired comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub seed: u64,
    pub score_on: f64,
    pub score_off: f64,
}

/// Paired t-test summary of treatment ("on") against control ("off").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub n_pairs: u64,
    pub mean_on: f64,
    pub sd_on: f64,
    pub mean_off: f64,
    pub sd_off: f64,
    pub mean_diff: f64,
    pub t_stat: f64,
    pub df: u64,
    pub improved_fraction: f64,
    pub per_pair: Vec<PairRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Paired statistics over explicit (seed, on, off) rows.
pub fn paired_stats_rows(rows: Vec<PairRow>) -> Result<PairedReport, StatsError> {
    let n = rows.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let on: Vec<f64> = rows.iter().map(|r| r.score_on).collect();
    let off: Vec<f64> = rows.iter().map(|r| r.score_off).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.score_on - r.score_off).collect();

    let mean_diff = mean(&diffs);
    let sd_diff = sample_sd(&diffs);
    // Differences that agree to rounding noise have no usable spread.
    let scale = diffs.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let constant = diffs.iter().all(|d| (d - diffs[0]).abs() <= 1e-12 * scale);
    let t_stat = if constant {
        if diffs[0] == 0.0 {
            0.0
        } else {
            return Err(StatsError::DegenerateVariance(mean_diff));
        }
    } else {
        mean_diff / (sd_diff / (n as f64).sqrt())
    };
    let improved = rows.iter().filter(|r| r.score_on > r.score_off).count();

    Ok(PairedReport {
        n_pairs: n as u64,
        mean_on: mean(&on),
        sd_on: sample_sd(&on),
        mean_off: mean(&off),
        sd_off: sample_sd(&off),
        mean_diff,
        t_stat,
        df: n as u64 - 1,
        improved_fraction: improved as f64 / n as f64,
        per_pair: rows,
    })
}

/// Paired t-test of `on` against `off`; rows are labelled by position.
pub fn paired_stats(on: &[f64], off: &[f64]) -> Result<PairedReport, StatsError> {
    if on.len() != off.len() {
        return Err(StatsError::LengthMismatch {
            on: on.len(),
            off: off.len(),
        });
    }
    let rows = on
        .iter()
        .zip(off)
        .enumerate()
        .map(|(i, (&score_on, &score_off))| PairRow {
            seed: i as u64,
            score_on,
            score_off,
        })
        .collect();
    paired_stats_rows(rows)
}

/// Runs `n_pairs` simulated participants through both conditions with a
/// shared seed per pair and compares overall performance.
pub fn run_experiment(
    n_pairs: u64,
    base_config: &SessionConfig,
    seed_start: u64,
) -> Result<PairedReport, ExperimentError> {
    if n_pairs < 2 {
        return Err(StatsError::TooFewPairs(n_pairs as usize).into());
    }
    let rows = (0..n_pairs)
        .map(|k| {
            let seed = seed_start + k;
            let on = run_session(base_config, TABLE1, seed)?;
            let off = run_session(base_config, CONTROL_FIXED, seed)?;
            Ok(PairRow {
                seed,
                score_on: overall_performance(&on),
                score_off: overall_performance(&off),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(paired_stats_rows(rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AttentionLevel;

    fn snap(index: u64, ratio: f64, r: Option<f64>) -> WindowSnapshot {
        WindowSnapshot {
            index,
            score_ratio: ratio,
            mean_attention: 0.5,
            attention_level: AttentionLevel::High,
            instant_performance: r,
        }
    }

    fn log_with(points: u64, max_points: u64) -> SessionLog {
        let events = if max_points == 0 {
            vec![]
        } else {
            vec![ScoreEvent { t_ms: 0, points, max_points }]
        };
        SessionLog {
            config: SessionConfig::default(),
            summary: summarize(&events, &[]),
            attention_events: vec![],
            score_events: events,
            snapshots: vec![],
            commands: vec![],
        }
    }

    #[test]
    fn overall_performance_cases() {
        assert_eq!(overall_performance(&log_with(8000, 10_000)), 80.0);
        assert_eq!(overall_performance(&log_with(400, 400)), 100.0);
        assert_eq!(overall_performance(&log_with(0, 0)), 0.0);
    }

    #[test]
    fn r_star_examples() {
        let snaps = [
            snap(0, 0.5, None),
            snap(1, 0.6, Some(0.1)),
            snap(2, 0.55, Some(-0.05)),
            snap(3, 0.7, Some(0.15)),
        ];
        assert!((r_star_sum(&snaps, 0.5) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_t() {
        let rep = paired_stats(&[3.0, 4.0, 5.0], &[2.0, 4.0, 4.0]).unwrap();
        assert!((rep.mean_diff - 2.0 / 3.0).abs() < 1e-9);
        assert!((rep.t_stat - 2.0).abs() < 1e-9);
        assert_eq!(rep.df, 2);
        assert!((rep.improved_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.mean_on - 4.0).abs() < 1e-12);
        assert!((rep.sd_on - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_arms() {
        let rep = paired_stats(&[80.0, 82.5, 90.0], &[80.0, 82.5, 90.0]).unwrap();
        assert_eq!(rep.t_stat, 0.0);
        assert_eq!(rep.improved_fraction, 0.0);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            paired_stats(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]),
            Err(StatsError::DegenerateVariance(1.0))
        );
        assert!(matches!(
            paired_stats(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch { on: 2, off: 1 })
        ));
        assert_eq!(paired_stats(&[1.0], &[2.0]), Err(StatsError::TooFewPairs(1)));
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let cfg = SessionConfig::default();
        let a = run_experiment(3, &cfg, 100).unwrap();
        let b = run_experiment(3, &cfg, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_pair.len(), 3);
        assert_eq!(a.df, 2);
        let seeds: Vec<_> = a.per_pair.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![100, 101, 102]);
    }
}
