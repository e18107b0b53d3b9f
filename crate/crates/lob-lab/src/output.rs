//! File emission: versioned CSV schemas, JSON reports, and atomic writes.
//!
//! Figures are regenerated from these files, so the column layout is part of
//! the interface: the header carries a schema version and numeric fields are
//! printed with 12 significant digits.

use crate::error::Error;
use crate::solver::ModelParams;
use crate::sweep::{PathReport, SweepTable};
use std::fmt::Write as _;
use std::path::Path;

pub const SWEEP_CSV_HEADER: &str =
    "schema=1,n,alpha,spread0,spreadT,max_abs_la,max_abs_lb,degenerate_from";
pub const PATH_CSV_HEADER: &str = "schema=1,t,pa,pb,la,lb,drift_remaining";

/// 12 significant digits, bit-stable across runs.
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.11e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.steps,
            fmt_sig(r.alpha),
            fmt_opt(r.spread0),
            fmt_opt(r.spread_terminal),
            fmt_opt(r.max_abs_la),
            fmt_opt(r.max_abs_lb),
            r.degenerate_from.map(|n| n.to_string()).unwrap_or_default(),
        );
    }
    out
}

pub fn path_to_csv(report: &PathReport) -> String {
    let p = report.params;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# alpha={} sigma={} T={} N={} degenerate_from={}",
        fmt_sig(p.alpha),
        fmt_sig(p.sigma),
        fmt_sig(p.horizon),
        p.steps,
        report
            .degenerate_from
            .map(|n| n.to_string())
            .unwrap_or_default(),
    );
    out.push_str(PATH_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(r.t),
            fmt_opt(r.pa),
            fmt_opt(r.pb),
            fmt_opt(r.la),
            fmt_opt(r.lb),
            fmt_sig(r.drift_remaining),
        );
    }
    out
}

/// A path table read back from CSV: the embedded parameters and the
/// (possibly empty) per-step values.
#[derive(Debug, Clone)]
pub struct ParsedPathCsv {
    pub params: ModelParams,
    pub degenerate_from: Option<usize>,
    pub rows: Vec<(f64, Option<f64>, Option<f64>, Option<f64>, Option<f64>)>,
}

pub fn parse_path_csv(text: &str) -> Result<ParsedPathCsv, Error> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty path csv"))?;
    let mut alpha = None;
    let mut sigma = None;
    let mut horizon = None;
    let mut steps = None;
    let mut degenerate_from = None;
    for kv in header.trim_start_matches('#').split_whitespace() {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("malformed header field `{kv}`")))?;
        match key {
            "alpha" => alpha = Some(parse_f64(value)?),
            "sigma" => sigma = Some(parse_f64(value)?),
            "T" => horizon = Some(parse_f64(value)?),
            "N" => steps = Some(parse_usize(value)?),
            "degenerate_from" => {
                degenerate_from = if value.is_empty() {
                    None
                } else {
                    Some(parse_usize(value)?)
                }
            }
            other => return Err(Error::validation(format!("unknown header key `{other}`"))),
        }
    }
    let params = ModelParams::new(
        alpha.ok_or_else(|| Error::validation("missing alpha in header"))?,
        sigma.ok_or_else(|| Error::validation("missing sigma in header"))?,
        horizon.ok_or_else(|| Error::validation("missing T in header"))?,
        steps.ok_or_else(|| Error::validation("missing N in header"))?,
    )?;
    let schema = lines
        .next()
        .ok_or_else(|| Error::validation("missing schema line"))?;
    if schema != PATH_CSV_HEADER {
        return Err(Error::validation(format!("unexpected schema line `{schema}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::validation(format!("row {i}: expected 6 fields")));
        }
        let opt = |s: &str| -> Result<Option<f64>, Error> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s).map(Some)
            }
        };
        rows.push((
            parse_f64(fields[0])?,
            opt(fields[1])?,
            opt(fields[2])?,
            opt(fields[3])?,
            opt(fields[4])?,
        ));
    }
    if rows.len() != params.steps + 1 {
        return Err(Error::validation(format!(
            "expected {} rows, found {}",
            params.steps + 1,
            rows.len()
        )));
    }
    Ok(ParsedPathCsv {
        params,
        degenerate_from,
        rows,
    })
}

fn parse_f64(s: &str) -> Result<f64, Error> {
    s.parse()
        .map_err(|_| Error::validation(format!("not a number: `{s}`")))
}

fn parse_usize(s: &str) -> Result<usize, Error> {
    s.parse()
        .map_err(|_| Error::validation(format!("not an integer: `{s}`")))
}

/// Write via a temporary file in the same directory, then rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp_name = format!(".{file_name}.tmp{}", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, contents)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation(format!("serialization failed: {e}")))?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}
