//! Plain-text event streams and sufficient-statistics tables.
//!
//! Event stream:
//!
//! ```text
//! K=1000 D=500 T=1000000 scheme=free_running
//! 370
//! 1412
//! ```
//!
//! Statistics table:
//!
//! ```text
//! # K=1000 D=500 T=1000000
//! r,N,S
//! 0,998,3
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{DedError, Result};
use crate::process::{ModelDims, PolicyKind, SufficientStats};

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub dims: ModelDims,
    pub scheme: PolicyKind,
    pub bins: Vec<u64>,
}

fn header_fields(line: &str) -> Result<Vec<(&str, &str)>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| DedError::Parse(format!("malformed header field `{tok}`")))
        })
        .collect()
}

fn parse_dims(fields: &[(&str, &str)]) -> Result<ModelDims> {
    let get = |key: &str| -> Result<u64> {
        let raw = fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| DedError::Parse(format!("header is missing `{key}=`")))?;
        raw.parse()
            .map_err(|_| DedError::Parse(format!("header field {key}={raw} is not an integer")))
    };
    ModelDims::new(get("K")? as usize, get("D")? as usize, get("T")?)
}

fn with_path(path: &Path, e: DedError) -> DedError {
    match e {
        DedError::Parse(msg) => DedError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn parse_event_stream(text: &str) -> Result<EventStream> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| DedError::Parse("event stream is empty; expected a header line".into()))?;
    let fields = header_fields(header.trim_start_matches('#'))?;
    let dims = parse_dims(&fields)?;
    let scheme = fields
        .iter()
        .find(|(k, _)| *k == "scheme")
        .map(|(_, v)| v.parse::<PolicyKind>())
        .transpose()?
        .ok_or_else(|| DedError::Parse("header is missing `scheme=`".into()))?;
    let mut bins = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        bins.push(line.parse::<u64>().map_err(|_| {
            DedError::Parse(format!("line {}: `{line}` is not a bin index", i + 1))
        })?);
    }
    Ok(EventStream { dims, scheme, bins })
}

pub fn format_event_stream(stream: &EventStream) -> String {
    let d = &stream.dims;
    let mut out = format!(
        "K={} D={} T={} scheme={}\n",
        d.period, d.dead_time, d.horizon, stream.scheme
    );
    for b in &stream.bins {
        writeln!(out, "{b}").unwrap();
    }
    out
}

pub fn read_event_stream(path: &Path) -> Result<EventStream> {
    let text = fs::read_to_string(path).map_err(|e| DedError::io(path, e))?;
    parse_event_stream(&text).map_err(|e| with_path(path, e))
}

pub fn write_event_stream(path: &Path, stream: &EventStream) -> Result<()> {
    fs::write(path, format_event_stream(stream)).map_err(|e| DedError::io(path, e))
}

pub fn format_stats(stats: &SufficientStats) -> String {
    let d = &stats.dims;
    let mut out = format!(
        "# K={} D={} T={}\nr,N,S\n",
        d.period, d.dead_time, d.horizon
    );
    for (r, (n, s)) in stats.active().iter().zip(stats.detections()).enumerate() {
        writeln!(out, "{r},{n},{s}").unwrap();
    }
    out
}

pub fn parse_stats(text: &str) -> Result<SufficientStats> {
    let mut dims = None;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if dims.is_none() {
                dims = Some(parse_dims(&header_fields(rest)?)?);
            }
            continue;
        }
        if line.eq_ignore_ascii_case("r,N,S") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || DedError::Parse(format!("line {}: expected `r,N,S`, got `{line}`", i + 1));
        if cols.len() != 3 {
            return Err(bad());
        }
        let r = cols[0].parse().map_err(|_| bad())?;
        let n = cols[1].parse().map_err(|_| bad())?;
        let s = cols[2].parse().map_err(|_| bad())?;
        rows.push((r, n, s));
    }
    let dims = dims.ok_or_else(|| DedError::Parse("missing `# K=… D=… T=…` header".into()))?;
    if rows.len() != dims.period {
        return Err(DedError::Parse(format!(
            "expected {} rows, found {}",
            dims.period,
            rows.len()
        )));
    }
    let mut active = vec![0.0; dims.period];
    let mut detections = vec![0.0; dims.period];
    let mut seen = vec![false; dims.period];
    for (r, n, s) in rows {
        if r >= dims.period || seen[r] {
            return Err(DedError::Parse(format!(
                "phase index {r} is out of range or repeated"
            )));
        }
        seen[r] = true;
        active[r] = n;
        detections[r] = s;
    }
    SufficientStats::new(dims, active, detections)
}

pub fn read_stats(path: &Path) -> Result<SufficientStats> {
    let text = fs::read_to_string(path).map_err(|e| DedError::io(path, e))?;
    parse_stats(&text).map_err(|e| with_path(path, e))
}

pub fn write_stats(path: &Path, stats: &SufficientStats) -> Result<()> {
    fs::write(path, format_stats(stats)).map_err(|e| DedError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_round_trip() {
        let stream = EventStream {
            dims: ModelDims::new(8, 3, 16).unwrap(),
            scheme: PolicyKind::Synchronous,
            bins: vec![2, 10, 15],
        };
        let text = format_event_stream(&stream);
        assert!(text.starts_with("K=8 D=3 T=16 scheme=synchronous\n"));
        assert_eq!(parse_event_stream(&text).unwrap(), stream);
    }

    #[test]
    fn stream_errors() {
        assert!(matches!(parse_event_stream(""), Err(DedError::Parse(_))));
        assert!(matches!(
            parse_event_stream("K=8 D=3 scheme=free_running\n"),
            Err(DedError::Parse(_))
        ));
        assert!(matches!(
            parse_event_stream("K=8 D=3 T=16 scheme=paralyzable\n"),
            Err(DedError::Config(_))
        ));
        assert!(matches!(
            parse_event_stream("K=8 D=3 T=16 scheme=free_running\nx1\n"),
            Err(DedError::Parse(_))
        ));
    }

    #[test]
    fn stats_round_trip() {
        let dims = ModelDims::new(3, 1, 9).unwrap();
        let stats = SufficientStats::new(dims, vec![3.0, 2.0, 2.0], vec![1.0, 0.0, 1.0]).unwrap();
        let text = format_stats(&stats);
        assert!(text.starts_with("# K=3 D=1 T=9\nr,N,S\n0,3,1\n"));
        assert_eq!(parse_stats(&text).unwrap(), stats);
    }

    #[test]
    fn stats_reject_wrong_row_count() {
        assert!(parse_stats("# K=2 D=0 T=4\nr,N,S\n0,2,1\n").is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_event_stream(Path::new("/nonexistent/stream.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/stream.txt"));
        assert_eq!(err.exit_code(), 3);
    }
}
