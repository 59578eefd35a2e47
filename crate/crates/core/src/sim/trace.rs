//! Trace rows and their CSV form.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! trace parses back to exactly the values that were recorded.

use std::io::Write;

use crate::error::{Error, Result};
use crate::swarm::Mode;

pub const TRACE_HEADER: &str = "t,id,mode,px,py,vx,vy,qx_hat,qy_hat,agree_err,hop";
pub const PAIR_HEADER: &str = "t,i,j,est_err,eigen_ratio,rank";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub id: usize,
    pub mode: Mode,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub qx_hat: f64,
    pub qy_hat: f64,
    pub agree_err: f64,
    pub hop: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRow {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub est_err: f64,
    pub eigen_ratio: f64,
    pub rank: u8,
}

/// Destination for per-step records.
pub trait TraceSink {
    fn robot(&mut self, row: &TraceRow) -> Result<()>;
    fn pair(&mut self, row: &PairRow) -> Result<()>;
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn robot(&mut self, _: &TraceRow) -> Result<()> {
        Ok(())
    }
    fn pair(&mut self, _: &PairRow) -> Result<()> {
        Ok(())
    }
}

/// Keeps rows in memory.
#[derive(Default)]
pub struct MemorySink {
    pub robots: Vec<TraceRow>,
    pub pairs: Vec<PairRow>,
}

impl TraceSink for MemorySink {
    fn robot(&mut self, row: &TraceRow) -> Result<()> {
        self.robots.push(*row);
        Ok(())
    }
    fn pair(&mut self, row: &PairRow) -> Result<()> {
        self.pairs.push(*row);
        Ok(())
    }
}

/// Streams both tables as CSV.
pub struct CsvSink<A: Write, B: Write> {
    robots: A,
    pairs: Option<B>,
}

impl<A: Write, B: Write> CsvSink<A, B> {
    pub fn new(mut robots: A, pairs: Option<B>) -> Result<Self> {
        writeln!(robots, "{TRACE_HEADER}")?;
        let pairs = match pairs {
            Some(mut p) => {
                writeln!(p, "{PAIR_HEADER}")?;
                Some(p)
            }
            None => None,
        };
        Ok(CsvSink { robots, pairs })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.robots.flush()?;
        if let Some(p) = &mut self.pairs {
            p.flush()?;
        }
        Ok(())
    }
}

impl<A: Write, B: Write> TraceSink for CsvSink<A, B> {
    fn robot(&mut self, r: &TraceRow) -> Result<()> {
        writeln!(self.robots, "{}", format_trace_row(r))?;
        Ok(())
    }
    fn pair(&mut self, r: &PairRow) -> Result<()> {
        if let Some(p) = &mut self.pairs {
            writeln!(p, "{},{},{},{},{},{}", r.t, r.i, r.j, r.est_err, r.eigen_ratio, r.rank)?;
        }
        Ok(())
    }
}

pub fn format_trace_row(r: &TraceRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.t, r.id, r.mode, r.px, r.py, r.vx, r.vy, r.qx_hat, r.qy_hat, r.agree_err, r.hop
    )
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::trace(line, format!("invalid {name} {s:?}")))
}

fn float(line: usize, name: &str, s: &str) -> Result<f64> {
    let v: f64 = field(line, name, s)?;
    if v.is_nan() {
        return Err(Error::trace(line, format!("{name} is NaN")));
    }
    Ok(v)
}

/// Parses a robot trace produced by [`CsvSink`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TRACE_HEADER => {}
        Some(_) => return Err(Error::trace(1, "unexpected header")),
        None => return Err(Error::trace(0, "empty trace")),
    }
    let mut out = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 11 {
            return Err(Error::trace(line, format!("expected 11 columns, found {}", cols.len())));
        }
        let mode = Mode::parse(cols[2]).ok_or_else(|| Error::trace(line, format!("unknown mode {:?}", cols[2])))?;
        out.push(TraceRow {
            t: float(line, "t", cols[0])?,
            id: field(line, "id", cols[1])?,
            mode,
            px: float(line, "px", cols[3])?,
            py: float(line, "py", cols[4])?,
            vx: float(line, "vx", cols[5])?,
            vy: float(line, "vy", cols[6])?,
            qx_hat: float(line, "qx_hat", cols[7])?,
            qy_hat: float(line, "qy_hat", cols[8])?,
            agree_err: float(line, "agree_err", cols[9])?,
            hop: field(line, "hop", cols[10])?,
        });
    }
    Ok(out)
}

/// Parses a pair trace produced by [`CsvSink`].
pub fn parse_pair_trace(text: &str) -> Result<Vec<PairRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == PAIR_HEADER => {}
        Some(_) => return Err(Error::trace(1, "unexpected header")),
        None => return Err(Error::trace(0, "empty trace")),
    }
    let mut out = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::trace(line, format!("expected 6 columns, found {}", cols.len())));
        }
        out.push(PairRow {
            t: float(line, "t", cols[0])?,
            i: field(line, "i", cols[1])?,
            j: field(line, "j", cols[2])?,
            est_err: float(line, "est_err", cols[3])?,
            eigen_ratio: float(line, "eigen_ratio", cols[4])?,
            rank: field(line, "rank", cols[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(t: f64) -> TraceRow {
        TraceRow {
            t,
            id: 3,
            mode: Mode::Agreeing,
            px: 1.5,
            py: -2.25,
            vx: 0.1,
            vy: 1e-17,
            qx_hat: 0.3,
            qy_hat: 0.0,
            agree_err: 0.012,
            hop: 4,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let mut robots = Vec::new();
        let mut pairs = Vec::new();
        {
            let mut sink = CsvSink::new(&mut robots, Some(&mut pairs)).unwrap();
            sink.robot(&row(0.0)).unwrap();
            sink.robot(&row(0.01)).unwrap();
            let p = PairRow {
                t: 0.01,
                i: 0,
                j: 4,
                est_err: 0.5,
                eigen_ratio: 0.25,
                rank: 2,
            };
            sink.pair(&p).unwrap();
        }
        let text = String::from_utf8(robots).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(parse_trace(&text).unwrap(), vec![row(0.0), row(0.01)]);
        let ptext = String::from_utf8(pairs).unwrap();
        assert_eq!(parse_pair_trace(&ptext).unwrap()[0].j, 4);
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(parse_trace("").is_err());
        assert!(parse_trace("a,b\n").is_err());
        let bad_cols = format!("{TRACE_HEADER}\n0,1,forming,0,0\n");
        assert!(matches!(parse_trace(&bad_cols), Err(Error::TraceParse { line: 2, .. })));
        let bad_mode = format!("{TRACE_HEADER}\n0,1,dancing,0,0,0,0,0,0,0,0\n");
        assert!(parse_trace(&bad_mode).is_err());
        let nan = format!("{TRACE_HEADER}\nNaN,1,forming,0,0,0,0,0,0,0,0\n");
        assert!(parse_trace(&nan).is_err());
        assert_eq!(parse_trace(&format!("{TRACE_HEADER}\n")).unwrap(), vec![]);
    }

    proptest! {
        #[test]
        fn rows_roundtrip(t in 0.0f64..1e4, px in -1e3f64..1e3, py in -1e3f64..1e3, hop in any::<u32>()) {
            let mut r = row(t);
            r.px = px;
            r.py = py;
            r.hop = hop;
            let text = format!("{TRACE_HEADER}\n{}\n", format_trace_row(&r));
            prop_assert_eq!(parse_trace(&text).unwrap(), vec![r]);
        }
    }
}
