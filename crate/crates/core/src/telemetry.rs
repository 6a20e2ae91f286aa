//! Live session protocol, offline replay, and the TCP server.
//!
//! Clients stream newline-delimited JSON: one `start`, any number of
//! `attention` and `score` events, then `end`. The server answers with an
//! `ack`, a `command` each time a window boundary is crossed, and a final
//! `summary`. Windows close when the first event past their end arrives,
//! never on a timer.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::summarize;
use crate::log::{encode_log, EventStream};
use crate::model::{
    apply_overrides, encode_line, validate_config, AttentionSample, SceneCommand, SceneState,
    ScoreEvent, SessionConfig, SessionLog, SessionSummary, WindowSnapshot,
};
use crate::strategy::{self, Strategy, StrategyError};
use crate::windowing::{assign_window, fold_stream, SnapshotBuilder, WindowAccumulator, WindowingError};

/// Generator field written into logs of live sessions.
pub const LIVE_GENERATOR: &str = "live";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StartMessage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    /// Partial [`SessionConfig`] merged over the server defaults.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

/// Client to server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Start(StartMessage),
    Attention(AttentionSample),
    Score(ScoreEvent),
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AckMessage {
    pub session_id: String,
    pub config: SessionConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    StaleEvent,
    OutOfRange,
    MalformedLine,
    ProtocolOrderViolation,
    InvalidConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub code: ErrorCode,
    pub message: String,
}

/// Server to client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack(AckMessage),
    Command(SceneCommand),
    Summary(SessionSummary),
    Error(ErrorMessage),
}

impl ServerMessage {
    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorMessage {
            code,
            message: message.into(),
        })
    }
}

/// Parses and validates one client line.
pub fn parse_client_line(line: &str) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(line).map_err(|e| e.to_string())?;
    match &msg {
        ClientMessage::Attention(a) => a.validate().map_err(|e| e.to_string())?,
        ClientMessage::Score(s) => s.validate().map_err(|e| e.to_string())?,
        _ => {}
    }
    Ok(msg)
}

/// Per-session state while the session is open.
pub struct SessionState {
    pub id: String,
    pub config: SessionConfig,
    pub open_window: WindowAccumulator,
    /// Highest window already closed, if any.
    pub last_closed_window: Option<u64>,
    pub scene: SceneState,
    strategy: &'static dyn Strategy,
    builder: SnapshotBuilder,
    attention_events: Vec<AttentionSample>,
    score_events: Vec<ScoreEvent>,
    snapshots: Vec<WindowSnapshot>,
    commands: Vec<SceneCommand>,
}

impl SessionState {
    fn new(id: String, config: SessionConfig, strategy: &'static dyn Strategy) -> Self {
        Self {
            id,
            scene: SceneState::initial(config.initial_color),
            builder: SnapshotBuilder::new(config.attention_threshold),
            config,
            open_window: WindowAccumulator::new(0),
            last_closed_window: None,
            strategy,
            attention_events: Vec::new(),
            score_events: Vec::new(),
            snapshots: Vec::new(),
            commands: Vec::new(),
        }
    }

    pub fn strategy_id(&self) -> &'static str {
        self.strategy.id()
    }

    fn close_open_window(&mut self, out: &mut Vec<ServerMessage>) {
        let snapshot = self.builder.finalize(&self.open_window);
        let command = strategy::command_for(self.strategy, &snapshot, &self.scene);
        self.scene = self.scene.apply(&command);
        self.last_closed_window = Some(snapshot.index);
        self.open_window = WindowAccumulator::new(snapshot.index + 1);
        self.snapshots.push(snapshot);
        self.commands.push(command);
        out.push(ServerMessage::Command(command));
    }

    /// Routes an event time to the open window, closing earlier windows
    /// first. Returns false, with an error queued, if the event is dropped.
    fn admit(&mut self, t_ms: u64, out: &mut Vec<ServerMessage>) -> bool {
        if t_ms >= self.config.duration_ms {
            out.push(ServerMessage::error(
                ErrorCode::OutOfRange,
                format!("t_ms={t_ms} is not before duration_ms={}", self.config.duration_ms),
            ));
            return false;
        }
        let window = assign_window(t_ms, self.config.window_ms);
        if window < self.open_window.index {
            out.push(ServerMessage::error(
                ErrorCode::StaleEvent,
                format!("t_ms={t_ms} falls in closed window {window}"),
            ));
            return false;
        }
        while self.open_window.index < window {
            self.close_open_window(out);
        }
        true
    }

    fn finish(mut self, out: &mut Vec<ServerMessage>) -> SessionLog {
        let windows = self.config.window_count();
        while self.last_closed_window.map_or(0, |w| w + 1) < windows {
            self.close_open_window(out);
        }
        self.attention_events.sort_by_key(|e| e.t_ms);
        self.score_events.sort_by_key(|e| e.t_ms);
        let summary = summarize(&self.score_events, &self.snapshots);
        out.push(ServerMessage::Summary(summary));
        SessionLog {
            config: self.config,
            attention_events: self.attention_events,
            score_events: self.score_events,
            snapshots: self.snapshots,
            commands: self.commands,
            summary,
        }
    }
}

enum Phase {
    AwaitingStart,
    Open(Box<SessionState>),
    Finished { id: String, log: Box<SessionLog> },
    Aborted,
}

/// Protocol state machine for one connection.
pub struct SessionMachine {
    defaults: SessionConfig,
    fallback_id: String,
    phase: Phase,
}

impl SessionMachine {
    pub fn new(defaults: SessionConfig, fallback_id: impl Into<String>) -> Self {
        Self {
            defaults,
            fallback_id: fallback_id.into(),
            phase: Phase::AwaitingStart,
        }
    }

    /// True once the session has ended or been aborted.
    pub fn is_closed(&self) -> bool {
        matches!(self.phase, Phase::Finished { .. } | Phase::Aborted)
    }

    pub fn state(&self) -> Option<&SessionState> {
        match &self.phase {
            Phase::Open(s) => Some(s),
            _ => None,
        }
    }

    /// The completed session, once `end` has been processed.
    pub fn finished(&self) -> Option<(&str, &SessionLog)> {
        match &self.phase {
            Phase::Finished { id, log } => Some((id, log)),
            _ => None,
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        if self.is_closed() {
            return Vec::new();
        }
        match parse_client_line(line) {
            Ok(msg) => self.handle_message(msg),
            Err(e) => self.reject_line(e),
        }
    }

    /// Aborts the session because a line could not be understood.
    pub fn reject_line(&mut self, reason: impl Into<String>) -> Vec<ServerMessage> {
        self.phase = Phase::Aborted;
        vec![ServerMessage::error(ErrorCode::MalformedLine, reason)]
    }

    pub fn handle_message(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        let phase = std::mem::replace(&mut self.phase, Phase::Aborted);
        self.phase = match (phase, msg) {
            (Phase::AwaitingStart, ClientMessage::Start(start)) => self.start(start, &mut out),
            (Phase::AwaitingStart, other) => {
                out.push(ServerMessage::error(
                    ErrorCode::ProtocolOrderViolation,
                    format!("{} before start", kind(&other)),
                ));
                Phase::AwaitingStart
            }
            (Phase::Open(state), ClientMessage::Start(_)) => {
                out.push(ServerMessage::error(
                    ErrorCode::ProtocolOrderViolation,
                    "session already started",
                ));
                Phase::Open(state)
            }
            (Phase::Open(mut state), ClientMessage::Attention(sample)) => {
                if state.admit(sample.t_ms, &mut out) {
                    state.open_window.add_attention(&sample);
                    state.attention_events.push(sample);
                }
                Phase::Open(state)
            }
            (Phase::Open(mut state), ClientMessage::Score(event)) => {
                if state.admit(event.t_ms, &mut out) {
                    state.open_window.add_score(&event);
                    state.score_events.push(event);
                }
                Phase::Open(state)
            }
            (Phase::Open(state), ClientMessage::End) => {
                let id = state.id.clone();
                let log = state.finish(&mut out);
                Phase::Finished {
                    id,
                    log: Box::new(log),
                }
            }
            (closed, _) => closed,
        };
        out
    }

    fn start(&self, start: StartMessage, out: &mut Vec<ServerMessage>) -> Phase {
        let config = match apply_overrides(&self.defaults, &start.config) {
            Ok(c) => c,
            Err(e) => {
                out.push(ServerMessage::error(ErrorCode::MalformedLine, e.to_string()));
                return Phase::Aborted;
            }
        };
        let config = match validate_config(config) {
            Ok(c) => c,
            Err(e) => {
                out.push(ServerMessage::error(ErrorCode::InvalidConfig, e.to_string()));
                return Phase::Aborted;
            }
        };
        let strategy = strategy::lookup(&config.strategy_id).expect("validated strategy id");
        let id = start.session_id.unwrap_or_else(|| self.fallback_id.clone());
        out.push(ServerMessage::Ack(AckMessage {
            session_id: id.clone(),
            config: config.clone(),
        }));
        Phase::Open(Box::new(SessionState::new(id, config, strategy)))
    }
}

fn kind(msg: &ClientMessage) -> &'static str {
    match msg {
        ClientMessage::Start(_) => "start",
        ClientMessage::Attention(_) => "attention",
        ClientMessage::Score(_) => "score",
        ClientMessage::End => "end",
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Windowing(#[from] WindowingError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Snapshots and commands produced by replaying a stream offline.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub snapshots: Vec<WindowSnapshot>,
    pub commands: Vec<SceneCommand>,
}

/// Feeds recorded events through windowing and `strategy_id` as if live.
pub fn replay_full(stream: &EventStream, strategy_id: &str) -> Result<Replay, ReplayError> {
    let strategy = strategy::lookup(strategy_id)
        .ok_or_else(|| StrategyError::UnknownStrategy(strategy_id.to_string()))?;
    let snapshots = fold_stream(&stream.attention_events, &stream.score_events, &stream.config)?;
    let mut scene = SceneState::initial(stream.config.initial_color);
    let commands = snapshots
        .iter()
        .map(|snapshot| {
            let cmd = strategy::command_for(strategy, snapshot, &scene);
            scene = scene.apply(&cmd);
            cmd
        })
        .collect();
    Ok(Replay {
        snapshots,
        commands,
    })
}

pub fn replay(stream: &EventStream, strategy_id: &str) -> Result<Vec<SceneCommand>, ReplayError> {
    replay_full(stream, strategy_id).map(|r| r.commands)
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("BindFailure: cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, Default)]
pub struct ServerConfig {
    pub defaults: SessionConfig,
    /// Where completed sessions are written; `None` disables logging.
    pub log_dir: Option<PathBuf>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Clone, Debug)]
pub struct ShutdownHandle {
    stop: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
    }
}

pub struct Server {
    listener: TcpListener,
    config: Arc<ServerConfig>,
    stop: Arc<AtomicBool>,
    next_id: Arc<AtomicU64>,
}

impl Server {
    pub fn bind(addr: &str, config: ServerConfig) -> Result<Self, ServeError> {
        let bind_failure = |source| ServeError::BindFailure {
            addr: addr.to_string(),
            source,
        };
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(bind_failure)?.collect();
        let listener = TcpListener::bind(&addrs[..]).map_err(bind_failure)?;
        if let Some(dir) = &config.log_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Self {
            listener,
            config: Arc::new(config),
            stop: Arc::new(AtomicBool::new(false)),
            next_id: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> io::Result<ShutdownHandle> {
        Ok(ShutdownHandle {
            stop: Arc::clone(&self.stop),
            addr: self.local_addr()?,
        })
    }

    /// Accepts connections until shut down, one thread per session.
    pub fn run(self) -> io::Result<()> {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let config = Arc::clone(&self.config);
            let id = format!("session-{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
            workers.retain(|w| !w.is_finished());
            workers.push(thread::spawn(move || {
                if let Err(e) = handle_connection(stream, &config, id) {
                    eprintln!("connection error: {e}");
                }
            }));
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}

/// Binds `addr` and serves until the process is stopped.
pub fn serve(addr: &str, config: ServerConfig) -> Result<(), ServeError> {
    Server::bind(addr, config)?.run()?;
    Ok(())
}

fn handle_connection(stream: TcpStream, config: &ServerConfig, fallback_id: String) -> io::Result<()> {
    let mut writer = io::BufWriter::new(stream.try_clone()?);
    let mut reader = BufReader::new(stream);
    let mut machine = SessionMachine::new(config.defaults.clone(), fallback_id);
    let mut buf = Vec::new();

    while !machine.is_closed() {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let replies = match std::str::from_utf8(&buf) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => machine.handle_line(line.trim_end_matches(['\n', '\r'])),
            Err(e) => machine.reject_line(format!("invalid UTF-8: {e}")),
        };
        for reply in &replies {
            writer.write_all(encode_line(reply).as_bytes())?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
    }

    if let (Some(dir), Some((id, log))) = (&config.log_dir, machine.finished()) {
        write_session_log(dir, id, log)?;
    }
    Ok(())
}

fn sanitize(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "session".to_string()
    } else {
        s
    }
}

/// Writes a completed session into `dir` without overwriting earlier files.
pub fn write_session_log(dir: &Path, id: &str, log: &SessionLog) -> io::Result<PathBuf> {
    let text = encode_log(log, LIVE_GENERATOR, Some(id));
    let stem = sanitize(id);
    for attempt in 0u32.. {
        let name = if attempt == 0 {
            format!("{stem}.log")
        } else {
            format!("{stem}.{attempt}.log")
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(text.as_bytes())?;
                return Ok(path);
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// Client-side transcript of a session: the `start` .. `end` lines a game
/// would send.
pub fn client_script(session_id: Option<&str>, stream: &EventStream) -> Vec<String> {
    let start = ClientMessage::Start(StartMessage {
        session_id: session_id.map(str::to_string),
        config: serde_json::to_value(&stream.config).expect("config serializes"),
    });
    let mut lines = vec![encode_line(&start)];
    lines.extend(
        crate::log::merge_events(&stream.attention_events, &stream.score_events)
            .iter()
            .map(encode_line),
    );
    lines.push(encode_line(&ClientMessage::End));
    lines
}

/// Sends `lines` over one connection and collects every reply until the
/// server closes the session.
pub fn run_script(addr: SocketAddr, lines: &[String]) -> io::Result<Vec<ServerMessage>> {
    let stream = TcpStream::connect(addr)?;
    let mut writer = io::BufWriter::new(stream.try_clone()?);
    let payload: Vec<String> = lines.to_vec();
    // Write from a separate thread so a chatty server cannot stall us.
    let sender = thread::spawn(move || -> io::Result<()> {
        for line in payload {
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    });
    let mut replies = Vec::new();
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let msg: ServerMessage = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let done = matches!(
            &msg,
            ServerMessage::Summary(_)
                | ServerMessage::Error(ErrorMessage {
                    code: ErrorCode::MalformedLine | ErrorCode::InvalidConfig,
                    ..
                })
        );
        replies.push(msg);
        if done {
            break;
        }
    }
    // The server may hang up early after an abort; that is not a client error.
    let _ = sender.join();
    Ok(replies)
}
