//! Line-oriented session log files.
//!
//! A log is a sequence of canonical JSON lines, each tagged with `"type"`:
//!
//! ```text
//! {"type":"header","format":"dsa-session-log/1","generator":"ChaCha8Rng"}
//! {"type":"start","config":{...}}
//! {"type":"attention","t_ms":0,"value":0.5}
//! {"type":"score","t_ms":0,"points":100,"max_points":100}
//! ...
//! {"type":"end"}
//! {"type":"snapshot",...}   one per window
//! {"type":"command",...}    one per window boundary
//! {"type":"summary",...}
//! ```
//!
//! The `start` .. `end` block is itself a valid client transcript for the
//! telemetry protocol. Events are merged by `t_ms`, attention before score
//! on ties.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    apply_overrides, encode_line, AttentionSample, SceneCommand, ScoreEvent, SessionConfig,
    SessionLog, SessionSummary, WindowSnapshot,
};

pub const LOG_FORMAT: &str = "dsa-session-log/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub generator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogStart {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub config: SessionConfig,
}

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Start(LogStart),
    Attention(AttentionSample),
    Score(ScoreEvent),
    End,
    Snapshot(WindowSnapshot),
    Command(SceneCommand),
    Summary(SessionSummary),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("log has no {0} record")]
    Missing(&'static str),
}

/// Interleaves the two event streams by time, attention first on ties.
pub fn merge_events(attention: &[AttentionSample], scores: &[ScoreEvent]) -> Vec<LogRecord> {
    let mut out = Vec::with_capacity(attention.len() + scores.len());
    let mut a = attention.iter().peekable();
    let mut s = scores.iter().peekable();
    loop {
        match (a.peek(), s.peek()) {
            (Some(x), Some(y)) if x.t_ms <= y.t_ms => out.push(LogRecord::Attention(*a.next().unwrap())),
            (_, Some(_)) => out.push(LogRecord::Score(*s.next().unwrap())),
            (Some(_), None) => out.push(LogRecord::Attention(*a.next().unwrap())),
            (None, None) => break,
        }
    }
    out
}

pub fn log_records(log: &SessionLog, generator: &str, session_id: Option<&str>) -> Vec<LogRecord> {
    let mut records = vec![
        LogRecord::Header(LogHeader {
            format: LOG_FORMAT.to_string(),
            generator: generator.to_string(),
        }),
        LogRecord::Start(LogStart {
            session_id: session_id.map(str::to_string),
            config: log.config.clone(),
        }),
    ];
    records.extend(merge_events(&log.attention_events, &log.score_events));
    records.push(LogRecord::End);
    records.extend(log.snapshots.iter().copied().map(LogRecord::Snapshot));
    records.extend(log.commands.iter().copied().map(LogRecord::Command));
    records.push(LogRecord::Summary(log.summary));
    records
}

/// Canonical text of a log: one record per line, each newline-terminated.
pub fn encode_log(log: &SessionLog, generator: &str, session_id: Option<&str>) -> String {
    let mut out = String::new();
    for record in log_records(log, generator, session_id) {
        out.push_str(&encode_line(&record));
        out.push('\n');
    }
    out
}

/// A decoded log together with its header fields.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedLog {
    pub generator: Option<String>,
    pub session_id: Option<String>,
    pub log: SessionLog,
}

pub fn decode_log(text: &str) -> Result<DecodedLog, LogError> {
    let mut generator = None;
    let mut session_id = None;
    let mut config = None;
    let mut attention_events = Vec::new();
    let mut score_events = Vec::new();
    let mut snapshots = Vec::new();
    let mut commands = Vec::new();
    let mut summary = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(raw).map_err(|source| LogError::Parse { line, source })?;
        let invalid = |message: String| LogError::Invalid { line, message };
        match record {
            LogRecord::Header(h) => generator = Some(h.generator),
            LogRecord::Start(s) => {
                if config.is_some() {
                    return Err(invalid("duplicate start record".into()));
                }
                session_id = s.session_id;
                config = Some(s.config);
            }
            LogRecord::Attention(a) => {
                a.validate().map_err(|e| invalid(e.to_string()))?;
                attention_events.push(a);
            }
            LogRecord::Score(s) => {
                s.validate().map_err(|e| invalid(e.to_string()))?;
                score_events.push(s);
            }
            LogRecord::End => {}
            LogRecord::Snapshot(s) => snapshots.push(s),
            LogRecord::Command(c) => commands.push(c),
            LogRecord::Summary(s) => summary = Some(s),
        }
    }

    Ok(DecodedLog {
        generator,
        session_id,
        log: SessionLog {
            config: config.ok_or(LogError::Missing("start"))?,
            attention_events,
            score_events,
            snapshots,
            commands,
            summary: summary.ok_or(LogError::Missing("summary"))?,
        },
    })
}

/// Config and events recovered from either a session log or a raw client
/// transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub config: SessionConfig,
    pub attention_events: Vec<AttentionSample>,
    pub score_events: Vec<ScoreEvent>,
    /// Commands present in the input, if it was a log.
    pub recorded_commands: Vec<SceneCommand>,
}

/// Reads the `start` config and events from any line file in the log or
/// wire grammar. A partial `start.config` is merged over `defaults`; other
/// record types are ignored apart from recorded commands.
pub fn read_event_stream(text: &str, defaults: &SessionConfig) -> Result<EventStream, LogError> {
    let mut config = None;
    let mut attention_events = Vec::new();
    let mut score_events = Vec::new();
    let mut recorded_commands = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|source| LogError::Parse { line, source })?;
        let kind = value.get("type").and_then(|t| t.as_str()).unwrap_or_default();
        let parse = |source| LogError::Parse { line, source };
        let invalid = |message: String| LogError::Invalid { line, message };
        match kind {
            "start" => {
                let overrides = value.get("config").cloned().unwrap_or_default();
                config = Some(apply_overrides(defaults, &overrides).map_err(parse)?);
            }
            "attention" => {
                let a: AttentionSample = serde_json::from_value(value).map_err(parse)?;
                a.validate().map_err(|e| invalid(e.to_string()))?;
                attention_events.push(a);
            }
            "score" => {
                let s: ScoreEvent = serde_json::from_value(value).map_err(parse)?;
                s.validate().map_err(|e| invalid(e.to_string()))?;
                score_events.push(s);
            }
            "command" => recorded_commands.push(serde_json::from_value(value).map_err(parse)?),
            _ => {}
        }
    }

    Ok(EventStream {
        config: config.ok_or(LogError::Missing("start"))?,
        attention_events,
        score_events,
        recorded_commands,
    })
}
