//! Effective configuration: built-in defaults, then the config file, then
//! environment, then flags. Later layers win.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use dsa_core::model::{merge_json, SessionConfig};
use dsa_core::Color;
use serde_json::{json, Map, Value};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

/// Keys accepted in a config file besides the session fields.
const CLI_KEYS: [&str; 4] = ["bind", "log_dir", "pairs", "seed_start"];

/// Session parameters that can be given as flags.
#[derive(Args, Debug, Default, Clone)]
pub struct SessionArgs {
    /// Config file: one JSON object with any session keys plus bind, log_dir, pairs, seed_start
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub window_ms: Option<u64>,
    #[arg(long)]
    pub attention_threshold: Option<f64>,
    #[arg(long)]
    pub duration_ms: Option<u64>,
    /// Strategy id (table1, control-fixed)
    #[arg(long = "strategy")]
    pub strategy_id: Option<String>,
    #[arg(long, value_parser = parse_color)]
    pub initial_color: Option<Color>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub base_attention: Option<f64>,
    #[arg(long)]
    pub red_drift: Option<f64>,
    #[arg(long)]
    pub red_noise_sd: Option<f64>,
    #[arg(long)]
    pub blue_reversion: Option<f64>,
    #[arg(long)]
    pub blue_noise_sd: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub fatigue_drift: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub skill_slope: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub skill_offset: Option<f64>,
    #[arg(long)]
    pub notes_per_window: Option<u32>,
    #[arg(long)]
    pub points_per_note: Option<u64>,
}

fn parse_color(s: &str) -> Result<Color, String> {
    match s.to_ascii_lowercase().as_str() {
        "red" => Ok(Color::Red),
        "blue" => Ok(Color::Blue),
        _ => Err(format!("unknown color {s:?} (expected red or blue)")),
    }
}

fn put<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), json!(v));
    }
}

impl SessionArgs {
    fn overlay(&self) -> Value {
        let mut top = Map::new();
        put(&mut top, "window_ms", &self.window_ms);
        put(&mut top, "attention_threshold", &self.attention_threshold);
        put(&mut top, "duration_ms", &self.duration_ms);
        put(&mut top, "strategy_id", &self.strategy_id);
        put(&mut top, "initial_color", &self.initial_color);
        put(&mut top, "seed", &self.seed);
        let mut um = Map::new();
        put(&mut um, "base_attention", &self.base_attention);
        put(&mut um, "red_drift", &self.red_drift);
        put(&mut um, "red_noise_sd", &self.red_noise_sd);
        put(&mut um, "blue_reversion", &self.blue_reversion);
        put(&mut um, "blue_noise_sd", &self.blue_noise_sd);
        put(&mut um, "fatigue_drift", &self.fatigue_drift);
        put(&mut um, "skill_slope", &self.skill_slope);
        put(&mut um, "skill_offset", &self.skill_offset);
        put(&mut um, "notes_per_window", &self.notes_per_window);
        put(&mut um, "points_per_note", &self.points_per_note);
        if !um.is_empty() {
            top.insert("user_model".into(), Value::Object(um));
        }
        Value::Object(top)
    }
}

/// Tool-level options that are not part of a session.
#[derive(Debug, Clone, Default)]
pub struct ToolOverrides {
    pub bind: Option<String>,
    pub log_dir: Option<PathBuf>,
    pub pairs: Option<u64>,
    pub seed_start: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub session: SessionConfig,
    pub bind: String,
    pub log_dir: Option<PathBuf>,
    pub pairs: Option<u64>,
    pub seed_start: u64,
}

fn read_config_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut merged = Value::Object(Map::new());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: not a JSON object", path.display(), i + 1))?;
        if !v.is_object() {
            bail!("{}:{}: expected a JSON object", path.display(), i + 1);
        }
        merge_json(&mut merged, &v);
    }
    Ok(merged)
}

/// Resolves the effective configuration. `tool` holds values from flags or
/// their environment variables, which both outrank the config file.
pub fn resolve(args: &SessionArgs, tool: &ToolOverrides) -> Result<CliConfig> {
    let mut merged = serde_json::to_value(SessionConfig::default())?;
    let mut bind = Value::String(DEFAULT_BIND.to_string());
    let mut log_dir = Value::Null;
    let mut pairs = Value::Null;
    let mut seed_start = json!(0);

    if let Some(path) = &args.config {
        let Value::Object(mut file) = read_config_file(path)? else {
            unreachable!()
        };
        for key in CLI_KEYS {
            if let Some(v) = file.remove(key) {
                match key {
                    "bind" => bind = v,
                    "log_dir" => log_dir = v,
                    "pairs" => pairs = v,
                    _ => seed_start = v,
                }
            }
        }
        merge_json(&mut merged, &Value::Object(file));
    }
    merge_json(&mut merged, &args.overlay());

    let session: SessionConfig =
        serde_json::from_value(merged).context("invalid session configuration")?;
    let bind = match &tool.bind {
        Some(b) => b.clone(),
        None => serde_json::from_value(bind).context("bind must be a string")?,
    };
    let log_dir = match &tool.log_dir {
        Some(d) => Some(d.clone()),
        None => serde_json::from_value(log_dir).context("log_dir must be a path")?,
    };
    let pairs = match tool.pairs {
        Some(p) => Some(p),
        None => serde_json::from_value(pairs).context("pairs must be an integer")?,
    };
    let seed_start = match tool.seed_start {
        Some(s) => s,
        None => serde_json::from_value(seed_start).context("seed_start must be an integer")?,
    };
    Ok(CliConfig {
        session,
        bind,
        log_dir,
        pairs,
        seed_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_apply_without_inputs() {
        let cfg = resolve(&SessionArgs::default(), &ToolOverrides::default()).unwrap();
        assert_eq!(cfg.session, SessionConfig::default());
        assert_eq!(cfg.bind, DEFAULT_BIND);
        assert_eq!(cfg.pairs, None);
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"seed":3,"window_ms":1000,"bind":"0.0.0.0:9000","user_model":{{"red_drift":0.1}}}}"#
        )
        .unwrap();
        let args = SessionArgs {
            config: Some(f.path().to_path_buf()),
            seed: Some(8),
            skill_offset: Some(0.2),
            ..SessionArgs::default()
        };
        let cfg = resolve(&args, &ToolOverrides::default()).unwrap();
        assert_eq!(cfg.session.seed, 8);
        assert_eq!(cfg.session.window_ms, 1000);
        assert_eq!(cfg.session.user_model.red_drift, 0.1);
        assert_eq!(cfg.session.user_model.skill_offset, 0.2);
        assert_eq!(cfg.bind, "0.0.0.0:9000");

        let tool = ToolOverrides {
            bind: Some("127.0.0.1:1".into()),
            ..ToolOverrides::default()
        };
        assert_eq!(resolve(&args, &tool).unwrap().bind, "127.0.0.1:1");
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"windw_ms":1000}}"#).unwrap();
        let args = SessionArgs {
            config: Some(f.path().to_path_buf()),
            ..SessionArgs::default()
        };
        assert!(resolve(&args, &ToolOverrides::default()).is_err());
    }
}
