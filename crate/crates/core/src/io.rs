//! Event file formats.
//!
//! CSV files hold one `time,node` row per event with 1-based node ids and
//! optional `# horizon=…` / `# dim=…` comment lines. JSON-lines files hold
//! one `{"t": …, "u": …}` object per event, optionally preceded by a
//! `{"horizon": …, "dim": …}` header object. Times are written in the
//! shortest decimal form that parses back to the identical float.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{Event, EventStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFormat {
    Csv,
    JsonLines,
}

impl EventFormat {
    /// `.jsonl`/`.ndjson` select JSON-lines, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => EventFormat::JsonLines,
            _ => EventFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReadOptions {
    /// Dimension to use instead of the inferred one.
    pub dim: Option<usize>,
    /// Horizon to use when the file carries none.
    pub horizon: Option<f64>,
    /// Sort rows by time instead of rejecting unsorted input.
    pub allow_unsorted: bool,
}

#[derive(Serialize, Deserialize)]
struct JsonEvent {
    t: f64,
    u: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonHeader {
    horizon: Option<f64>,
    dim: Option<usize>,
}

/// Reads an event file; `-` reads standard input.
pub fn read_events(path: &Path, format: EventFormat, opts: ReadOptions) -> Result<EventStream> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if path == Path::new("-") {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf).map_err(io_err)?;
        return parse_events(buf.as_bytes(), path, format, opts);
    }
    let file = File::open(path).map_err(io_err)?;
    parse_events(BufReader::new(file), path, format, opts)
}

/// Parses events from any reader; `path` is only used in error messages.
pub fn parse_events<R: BufRead>(reader: R, path: &Path, format: EventFormat, opts: ReadOptions) -> Result<EventStream> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut events: Vec<(Event, usize)> = Vec::new();
    let mut horizon = None;
    let mut dim_hint = None;
    let mut seen_row = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let (time, node) = match format {
            EventFormat::Csv => {
                if let Some(comment) = text.strip_prefix('#') {
                    if let Some((key, value)) = comment.split_once('=') {
                        let value = value.trim();
                        match key.trim() {
                            "horizon" => {
                                horizon = Some(
                                    value
                                        .parse::<f64>()
                                        .map_err(|e| parse_err(lineno, format!("bad horizon {value:?}: {e}")))?,
                                )
                            }
                            "dim" => {
                                dim_hint = Some(
                                    value
                                        .parse::<usize>()
                                        .map_err(|e| parse_err(lineno, format!("bad dim {value:?}: {e}")))?,
                                )
                            }
                            _ => {}
                        }
                    }
                    continue;
                }
                if !seen_row && text.replace(' ', "").eq_ignore_ascii_case("time,node") {
                    seen_row = true;
                    continue;
                }
                seen_row = true;
                let mut cols = text.split(',').map(str::trim);
                let (Some(t), Some(u), None) = (cols.next(), cols.next(), cols.next()) else {
                    return Err(parse_err(lineno, format!("expected `time,node`, got {text:?}")));
                };
                let time = t
                    .parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad time {t:?}: {e}")))?;
                let node = u
                    .parse::<i64>()
                    .map_err(|e| parse_err(lineno, format!("bad node {u:?}: {e}")))?;
                (time, node)
            }
            EventFormat::JsonLines => {
                if let Ok(h) = serde_json::from_str::<JsonHeader>(text) {
                    if h.horizon.is_some() || h.dim.is_some() {
                        horizon = h.horizon.or(horizon);
                        dim_hint = h.dim.or(dim_hint);
                        continue;
                    }
                }
                let v: serde_json::Value =
                    serde_json::from_str(text).map_err(|e| parse_err(lineno, format!("invalid JSON: {e}")))?;
                let time = v
                    .get("t")
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| parse_err(lineno, "missing numeric key `t`".into()))?;
                let node = v
                    .get("u")
                    .and_then(serde_json::Value::as_i64)
                    .ok_or_else(|| parse_err(lineno, "missing integer key `u`".into()))?;
                (time, node)
            }
        };
        if node < 1 {
            return Err(parse_err(lineno, format!("node id {node} must be at least 1")));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(parse_err(lineno, format!("time {time} must be finite and nonnegative")));
        }
        if let Some(&(prev, _)) = events.last() {
            if time < prev.time && !opts.allow_unsorted {
                return Err(parse_err(
                    lineno,
                    format!("time {time} precedes previous row at {} (unsorted input)", prev.time),
                ));
            }
        }
        events.push((Event::new(time, (node - 1) as usize), lineno));
    }
    if opts.allow_unsorted {
        events.sort_by(|a, b| a.0.time.total_cmp(&b.0.time));
    }
    let inferred = events.iter().map(|(e, _)| e.node + 1).max().unwrap_or(0);
    let dim = opts.dim.or(dim_hint).unwrap_or(inferred).max(1);
    if let Some((e, line)) = events.iter().find(|(e, _)| e.node >= dim) {
        return Err(parse_err(
            *line,
            format!("node id {} exceeds dimension {dim}", e.node + 1),
        ));
    }
    let last = events.last().map_or(0.0, |(e, _)| e.time);
    let horizon = horizon.or(opts.horizon).unwrap_or(last);
    if horizon < last {
        return Err(Error::InvalidInput(format!(
            "{}: horizon {horizon} precedes last event at {last}",
            path.display()
        )));
    }
    EventStream::new(dim, events.into_iter().map(|(e, _)| e).collect(), horizon)
}

/// Writes an event file; `-` writes to standard output.
pub fn write_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let io_err = |source| Error::Io {
        path: PathBuf::from(path),
        source,
    };
    if path == Path::new("-") {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        format_events(stream, &mut lock, format).map_err(io_err)?;
        return lock.flush().map_err(io_err);
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    format_events(stream, &mut w, format).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Serializes events to any writer.
pub fn format_events<W: Write>(stream: &EventStream, w: &mut W, format: EventFormat) -> std::io::Result<()> {
    match format {
        EventFormat::Csv => {
            writeln!(w, "# horizon={}", stream.horizon())?;
            writeln!(w, "# dim={}", stream.dim())?;
            writeln!(w, "time,node")?;
            for e in stream.events() {
                writeln!(w, "{},{}", e.time, e.node + 1)?;
            }
        }
        EventFormat::JsonLines => {
            let header = JsonHeader {
                horizon: Some(stream.horizon()).filter(|h| h.is_finite()),
                dim: Some(stream.dim()),
            };
            writeln!(w, "{}", serde_json::to_string(&header).map_err(std::io::Error::other)?)?;
            for e in stream.events() {
                let rec = JsonEvent {
                    t: e.time,
                    u: e.node + 1,
                };
                writeln!(w, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
            }
        }
    }
    Ok(())
}
