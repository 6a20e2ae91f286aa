//! `dsa`: simulate, serve, replay, and analyze dynamic scene adjustment
//! sessions.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dsa_core::evaluation::{overall_performance, paired_stats_rows, PairRow, PairedReport, StatsError};
use dsa_core::log::{decode_log, encode_log, read_event_stream};
use dsa_core::model::{encode_line, validate_config};
use dsa_core::strategy::{self, CONTROL_FIXED, TABLE1};
use dsa_core::telemetry::{self, ServeError, ServerConfig};
use dsa_core::usersim::{run_session, GENERATOR_FAMILY};
use serde_json::json;

use config::{resolve, CliConfig, SessionArgs, ToolOverrides};

#[derive(Parser, Debug)]
#[command(name = "dsa", version, about = "Dynamic scene adjustment engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run simulated sessions and write their logs
    Simulate {
        #[command(flatten)]
        session: SessionArgs,
        /// Log file for a single session
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this many paired sessions (table1 vs control-fixed) instead of one
        #[arg(long)]
        pairs: Option<u64>,
        #[arg(long)]
        seed_start: Option<u64>,
        /// Directory receiving on/ and off/ logs in paired mode
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Accept live sessions over TCP
    Serve {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, env = "DSA_BIND")]
        bind: Option<String>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Re-run a recorded log or transcript through a strategy
    Replay {
        /// Session log or client transcript
        log: PathBuf,
        /// Strategy to replay under; defaults to the recorded one
        #[arg(long)]
        strategy: Option<String>,
        /// Exit with status 1 if commands differ from the recorded ones
        #[arg(long)]
        check: bool,
    },
    /// Paired comparison of treatment and control logs
    Analyze {
        /// Treatment logs (files or directories)
        #[arg(long, num_args = 1..)]
        on: Vec<PathBuf>,
        /// Control logs (files or directories)
        #[arg(long, num_args = 1..)]
        off: Vec<PathBuf>,
        /// JSON lines of {"on": path, "off": path}; replaces --on/--off
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Machine-readable report destination
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print a strategy's decision rules
    PrintStrategy { id: String },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Json,
}

/// Failure classified by exit status.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            session,
            out,
            pairs,
            seed_start,
            out_dir,
        } => cmd_simulate(&session, out, pairs, seed_start, out_dir),
        Command::Serve {
            session,
            bind,
            log_dir,
        } => cmd_serve(&session, bind, log_dir),
        Command::Replay {
            log,
            strategy,
            check,
        } => cmd_replay(&log, strategy.as_deref(), check),
        Command::Analyze {
            on,
            off,
            manifest,
            report,
            format,
        } => cmd_analyze(&on, &off, manifest.as_deref(), report.as_deref(), format),
        Command::PrintStrategy { id } => cmd_print_strategy(&id),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn effective(session: &SessionArgs, tool: ToolOverrides) -> Result<CliConfig, Failure> {
    let cfg = resolve(session, &tool).map_err(usage)?;
    let session = validate_config(cfg.session.clone()).map_err(usage)?;
    Ok(CliConfig { session, ..cfg })
}

fn write_file(path: &Path, text: &str) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)
}

fn cmd_simulate(
    session: &SessionArgs,
    out: Option<PathBuf>,
    pairs: Option<u64>,
    seed_start: Option<u64>,
    out_dir: Option<PathBuf>,
) -> CmdResult {
    let cfg = effective(
        session,
        ToolOverrides {
            pairs,
            seed_start,
            ..ToolOverrides::default()
        },
    )?;
    let mut stdout = io::stdout().lock();

    let Some(pairs) = cfg.pairs else {
        let s = &cfg.session;
        let log = run_session(s, &s.strategy_id, s.seed).map_err(|e| usage(anyhow!(e)))?;
        let path = out.unwrap_or_else(|| PathBuf::from(format!("session-{}-{}.log", s.strategy_id, s.seed)));
        write_file(&path, &encode_log(&log, GENERATOR_FAMILY, None))
            .with_context(|| format!("writing {}", path.display()))?;
        writeln!(stdout, "{}", encode_line(&log.summary))?;
        eprintln!("wrote {}", path.display());
        return Ok(());
    };

    if pairs < 2 {
        return Err(usage(anyhow!("TooFewPairs: --pairs must be at least 2")));
    }
    let dir = out_dir.ok_or_else(|| usage(anyhow!("--out-dir is required with --pairs")))?;
    for k in 0..pairs {
        let seed = cfg.seed_start + k;
        let mut row = PairRow {
            seed,
            score_on: 0.0,
            score_off: 0.0,
        };
        for (arm, strategy) in [("on", TABLE1), ("off", CONTROL_FIXED)] {
            let log = run_session(&cfg.session, strategy, seed).map_err(|e| usage(anyhow!(e)))?;
            let path = dir.join(arm).join(format!("seed-{seed:06}.log"));
            write_file(&path, &encode_log(&log, GENERATOR_FAMILY, None))
                .with_context(|| format!("writing {}", path.display()))?;
            let score = overall_performance(&log);
            if arm == "on" {
                row.score_on = score;
            } else {
                row.score_off = score;
            }
        }
        writeln!(stdout, "{}", encode_line(&row))?;
    }
    eprintln!("wrote {pairs} pairs under {}", dir.display());
    Ok(())
}

fn cmd_serve(session: &SessionArgs, bind: Option<String>, log_dir: Option<PathBuf>) -> CmdResult {
    let cfg = effective(
        session,
        ToolOverrides {
            bind,
            log_dir,
            ..ToolOverrides::default()
        },
    )?;
    let server = telemetry::Server::bind(
        &cfg.bind,
        ServerConfig {
            defaults: cfg.session.clone(),
            log_dir: cfg.log_dir.clone(),
        },
    )
    .map_err(|e: ServeError| Failure::Runtime(e.into()))?;
    eprintln!("listening on {}", server.local_addr()?);
    eprintln!("defaults {}", encode_line(&cfg.session));
    server.run()?;
    Ok(())
}

fn cmd_replay(path: &Path, strategy: Option<&str>, check: bool) -> CmdResult {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let stream = read_event_stream(&text, &dsa_core::SessionConfig::default()).map_err(usage)?;
    let strategy = strategy.unwrap_or(&stream.config.strategy_id);
    let commands = telemetry::replay(&stream, strategy).map_err(usage)?;

    let mut stdout = io::stdout().lock();
    for c in &commands {
        writeln!(stdout, "{}", encode_line(c))?;
    }
    eprintln!("config {}", encode_line(&stream.config));
    if !stream.recorded_commands.is_empty() {
        let diffs = commands
            .iter()
            .zip(&stream.recorded_commands)
            .filter(|(a, b)| a != b)
            .count()
            + commands.len().abs_diff(stream.recorded_commands.len());
        eprintln!("{diffs} command diffs vs recorded log");
        if check && diffs > 0 {
            return Err(Failure::Runtime(anyhow!("replay under {strategy} diverges from the recording")));
        }
    }
    Ok(())
}

/// Expands directories into their sorted `.log` files.
fn expand(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|f| f.extension().is_some_and(|x| x == "log"));
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn read_manifest(path: &Path) -> anyhow::Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let base = path.parent().unwrap_or(Path::new(""));
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut on = Vec::new();
    let mut off = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let field = |k: &str| {
            v.get(k)
                .and_then(|x| x.as_str())
                .map(|s| base.join(s))
                .ok_or_else(|| anyhow!("{}:{}: missing \"{k}\"", path.display(), i + 1))
        };
        on.push(field("on")?);
        off.push(field("off")?);
    }
    Ok((on, off))
}

fn load_score(path: &Path) -> anyhow::Result<(u64, f64)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let decoded = decode_log(&text).with_context(|| format!("decoding {}", path.display()))?;
    Ok((decoded.log.config.seed, overall_performance(&decoded.log)))
}

fn render_table(report: &PairedReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("{:>8} {:>12} {:>12} {:>10}\n", "seed", "score_on", "score_off", "diff"));
    for r in &report.per_pair {
        s.push_str(&format!(
            "{:>8} {:>12.4} {:>12.4} {:>10.4}\n",
            r.seed,
            r.score_on,
            r.score_off,
            r.score_on - r.score_off
        ));
    }
    s.push_str(&format!("{:-<45}\n", ""));
    s.push_str(&format!("n_pairs            {:>10}\n", report.n_pairs));
    s.push_str(&format!("mean_on (sd)       {:>10.4} ({:.4})\n", report.mean_on, report.sd_on));
    s.push_str(&format!("mean_off (sd)      {:>10.4} ({:.4})\n", report.mean_off, report.sd_off));
    s.push_str(&format!("mean_diff          {:>10.4}\n", report.mean_diff));
    s.push_str(&format!("t_stat             {:>10.4}\n", report.t_stat));
    s.push_str(&format!("df                 {:>10}\n", report.df));
    s.push_str(&format!("improved_fraction  {:>10.3}\n", report.improved_fraction));
    s
}

fn cmd_analyze(
    on: &[PathBuf],
    off: &[PathBuf],
    manifest: Option<&Path>,
    report_path: Option<&Path>,
    format: Format,
) -> CmdResult {
    let (on, off) = match manifest {
        Some(m) => read_manifest(m).map_err(usage)?,
        None => (expand(on).map_err(usage)?, expand(off).map_err(usage)?),
    };
    if on.len() != off.len() {
        return Err(usage(StatsError::LengthMismatch {
            on: on.len(),
            off: off.len(),
        }));
    }
    let rows = on
        .iter()
        .zip(&off)
        .map(|(a, b)| {
            let (seed, score_on) = load_score(a)?;
            let (_, score_off) = load_score(b)?;
            Ok(PairRow {
                seed,
                score_on,
                score_off,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(usage)?;
    let report = paired_stats_rows(rows).map_err(|e| match e {
        StatsError::DegenerateVariance(_) => Failure::Runtime(e.into()),
        e => usage(e),
    })?;

    if let Some(path) = report_path {
        let inputs = json!({
            "type": "inputs",
            "on": on.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "off": off.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let text = format!("{}\n{}\n", encode_line(&inputs), encode_line(&report));
        write_file(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut stdout = io::stdout().lock();
    match format {
        Format::Table => stdout.write_all(render_table(&report).as_bytes())?,
        Format::Json => writeln!(stdout, "{}", encode_line(&report))?,
    }
    Ok(())
}

fn cmd_print_strategy(id: &str) -> CmdResult {
    let s = strategy::lookup(id).ok_or_else(|| {
        let known: Vec<_> = strategy::builtin_ids().collect();
        usage(anyhow!("UnknownStrategy: {id:?} (known: {})", known.join(", ")))
    })?;
    let mut stdout = io::stdout().lock();
    for row in s.rules() {
        writeln!(stdout, "{}", encode_line(&row))?;
    }
    Ok(())
}
