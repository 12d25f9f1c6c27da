use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MatchError, Result};

/// One tracked frame: `frame cx cy w h scale peak`, tab-separated on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub scale: f64,
    pub peak: f64,
}

impl LogRow {
    /// A box with unit scale and zero peak.
    pub fn from_box(frame: usize, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        LogRow {
            frame,
            cx,
            cy,
            w,
            h,
            scale: 1.0,
            peak: 0.0,
        }
    }
}

pub fn write_track_log_to<W: Write>(mut w: W, rows: &[LogRow]) -> Result<()> {
    for r in rows {
        // the shortest round-tripping representation keeps logs bit-faithful
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}\t{}", r.frame, r.cx, r.cy, r.w, r.h, r.scale, r.peak)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log; blank lines and `#` comments are skipped.
pub fn read_track_log_from<R: Read>(r: R) -> Result<Vec<LogRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: String| MatchError::Log { line: i + 1, detail };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 tab-separated fields, found {}", fields.len())));
        }
        let num = |k: usize| fields[k].parse::<f64>().map_err(|_| err(format!("bad number `{}`", fields[k])));
        rows.push(LogRow {
            frame: fields[0].parse().map_err(|_| err(format!("bad frame index `{}`", fields[0])))?,
            cx: num(1)?,
            cy: num(2)?,
            w: num(3)?,
            h: num(4)?,
            scale: num(5)?,
            peak: num(6)?,
        });
    }
    Ok(rows)
}

pub fn write_track_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    write_track_log_to(BufWriter::new(File::create(path)?), rows)
}

pub fn read_track_log(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    read_track_log_from(File::open(path)?)
}
