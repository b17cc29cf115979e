//! Word stream files, label sidecars and CSV reports.
//!
//! Stream format:
//!
//! ```text
//! rost-stream v1 V=<int>
//! <t> <x> <y> <word>
//! ...
//! ```
//!
//! Records are sorted by non-decreasing `t`. Gaps in `t` are remapped to
//! consecutive indices with a warning.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, RostError};
use crate::eval::ComparisonTable;
use crate::model::Position;
use crate::num::Scalar;
use crate::pipeline::RunReport;

pub const STREAM_MAGIC: &str = "rost-stream v1";

/// All words observed at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Observation {
    pub t: u32,
    pub words: Vec<(u32, Position)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordStream {
    pub vocab_size: usize,
    pub observations: Vec<Observation>,
}

impl WordStream {
    pub fn num_words(&self) -> usize {
        self.observations.iter().map(|o| o.words.len()).sum()
    }

    pub fn num_timesteps(&self) -> usize {
        self.observations.len()
    }
}

#[derive(Debug, Clone)]
pub struct ParsedStream {
    pub stream: WordStream,
    pub warnings: Vec<String>,
}

fn parse_int(field: &str) -> Option<i64> {
    let digits = field.strip_prefix('-').unwrap_or(field);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    field.parse().ok()
}

fn parse_header(line: Option<&str>) -> Result<usize> {
    let bad = || RostError::Parse {
        line: 1,
        msg: format!("expected header '{STREAM_MAGIC} V=<int>'"),
    };
    let rest = line
        .and_then(|l| l.strip_prefix(STREAM_MAGIC))
        .and_then(|l| l.strip_prefix(" V="))
        .ok_or_else(bad)?;
    match parse_int(rest) {
        Some(v) if v > 0 => Ok(v as usize),
        _ => Err(bad()),
    }
}

pub fn parse_stream(text: &str) -> Result<ParsedStream> {
    let mut lines = text.lines();
    let vocab_size = parse_header(lines.next())?;
    let mut observations: Vec<Observation> = Vec::new();
    let mut warnings = Vec::new();
    let mut last_t: Option<i64> = None;

    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let err = |msg: String| RostError::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(err("expected 4 fields".into()));
        }
        let mut vals = [0i64; 4];
        for (slot, f) in vals.iter_mut().zip(&fields) {
            *slot = parse_int(f).ok_or_else(|| err(format!("'{f}' is not an integer")))?;
        }
        let [t, x, y, word] = vals;
        if t < 0 || t > u32::MAX as i64 {
            return Err(err(format!("timestep {t} out of range")));
        }
        let (Ok(x), Ok(y)) = (i32::try_from(x), i32::try_from(y)) else {
            return Err(err("coordinate out of range".into()));
        };
        if word < 0 || word as u64 >= vocab_size as u64 {
            return Err(err(format!("word {word} outside vocabulary of size {vocab_size}")));
        }
        match last_t {
            Some(prev) if t < prev => {
                return Err(err(format!("timestep decreased from {prev} to {t}")));
            }
            Some(prev) if t == prev => {}
            _ => {
                let idx = observations.len() as u32;
                if let Some(prev) = last_t {
                    if t > prev + 1 {
                        warnings.push(format!(
                            "line {lineno}: timestep gap {prev} -> {t}, remapped to {idx}"
                        ));
                    }
                }
                observations.push(Observation { t: idx, words: Vec::new() });
                last_t = Some(t);
            }
        }
        let obs = observations.last_mut().expect("observation pushed above");
        obs.words.push((word as u32, Position::new(x, y, obs.t)));
    }

    Ok(ParsedStream {
        stream: WordStream { vocab_size, observations },
        warnings,
    })
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<ParsedStream> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_stream(&text)
}

pub fn write_stream<W: Write>(stream: &WordStream, mut out: W) -> Result<()> {
    writeln!(out, "{STREAM_MAGIC} V={}", stream.vocab_size)?;
    for obs in &stream.observations {
        for (word, pos) in &obs.words {
            writeln!(out, "{} {} {} {}", obs.t, pos.x, pos.y, word)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Label sidecar: same layout as a stream, with the topic in the word column
/// and `V` set to the topic count.
pub fn write_labels<W: Write>(stream: &WordStream, labels: &[Vec<u32>], topics: usize, mut out: W) -> Result<()> {
    writeln!(out, "{STREAM_MAGIC} V={topics}")?;
    for (obs, zs) in stream.observations.iter().zip(labels) {
        if obs.words.len() != zs.len() {
            return Err(RostError::LengthMismatch(obs.words.len(), zs.len()));
        }
        for ((_, pos), z) in obs.words.iter().zip(zs) {
            writeln!(out, "{} {} {} {}", obs.t, pos.x, pos.y, z)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn opt<F: Scalar>(v: Option<F>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `t,n_words,instant_ppx,r_t`, one row per timestep.
pub fn write_run_csv<F: Scalar, W: Write>(report: &RunReport<F>, mut out: W) -> Result<()> {
    writeln!(out, "t,n_words,instant_ppx,r_t")?;
    for t in 0..report.n_words.len() {
        writeln!(
            out,
            "{},{},{},{}",
            t,
            report.n_words[t],
            opt(report.instant[t]),
            report.ledger.r[t]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `scheduler,T_R_or_R,mean_instant_ppx,mean_final_ppx,instant_ratio,final_ratio`.
pub fn write_comparison_csv<F: Scalar, W: Write>(table: &ComparisonTable<F>, mut out: W) -> Result<()> {
    writeln!(out, "scheduler,T_R_or_R,mean_instant_ppx,mean_final_ppx,instant_ratio,final_ratio")?;
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.name, table.budget, row.mean_instant_ppx, row.mean_final_ppx, row.instant_ratio, row.final_ratio
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `scheduler,t,instant_ratio,final_ratio`, one row per scheduler and timestep.
pub fn write_ratio_csv<F: Scalar, W: Write>(table: &ComparisonTable<F>, mut out: W) -> Result<()> {
    writeln!(out, "scheduler,t,instant_ratio,final_ratio")?;
    for series in &table.ratio_series {
        for &(t, inst, fin) in &series.points {
            writeln!(out, "{},{},{},{}", series.name, t, inst, fin)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
