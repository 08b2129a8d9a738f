//! JSON Lines run logs: a header line, one line per objective call, and a
//! footer line once the run stops.
//!
//! ```text
//! {"header":{"schemaVersion":1,"method":"bbo",...}}
//! {"callIndex":1,"step":0,"restart":0,"smiles":"C","value":-4.2,"bestSoFar":-4.2,"cpuTimeS":0.01,"wallTimeS":0.01}
//! {"footer":{"complete":true,"stopReason":"budget",...}}
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// How the time columns are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Clock {
    /// Measured process CPU time and elapsed wall time.
    #[default]
    Wall,
    /// Both columns equal the call index, so logs are reproducible byte for
    /// byte.
    Logical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LogHeader {
    pub schema_version: u32,
    /// "bbo" or "ea"; reports group runs by this label.
    pub method: String,
    pub seed: u64,
    pub clock: Clock,
    pub objective: Value,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CallRecord {
    pub call_index: u64,
    pub step: u64,
    pub restart: u64,
    pub smiles: String,
    /// Absent when the objective failed on this molecule.
    pub value: Option<f64>,
    pub best_so_far: Option<f64>,
    pub cpu_time_s: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StopReason {
    Budget,
    /// No new molecule could be proposed.
    Exhausted,
    ObjectiveUnavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LogFooter {
    pub complete: bool,
    pub stop_reason: StopReason,
    pub calls: u64,
    pub best_smiles: Option<String>,
    pub best_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<CallRecord>,
    pub footer: Option<LogFooter>,
}

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported log schema version {0}")]
    Version(u32),
}

fn format_err(line: usize, message: impl Into<String>) -> RunLogError {
    RunLogError::Format {
        line,
        message: message.into(),
    }
}

impl RunLog {
    pub fn new(header: LogHeader) -> Self {
        RunLog {
            header,
            records: Vec::new(),
            footer: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.footer.as_ref().is_some_and(|f| f.complete)
    }

    pub fn final_best(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.best_so_far)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = header_line(&self.header);
        for r in &self.records {
            out.push_str(&record_line(r));
        }
        if let Some(f) = &self.footer {
            out.push_str(&footer_line(f));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, RunLogError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, RunLogError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, RunLogError> {
        let mut header: Option<LogHeader> = None;
        let mut records: Vec<CallRecord> = Vec::new();
        let mut footer = None;
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(format_err(n, "content after footer"));
            }
            let value: Value = serde_json::from_str(&line).map_err(|e| format_err(n, e.to_string()))?;
            if let Some(h) = value.get("header") {
                if header.is_some() || n != 1 {
                    return Err(format_err(n, "header must be the first line"));
                }
                let version = h.get("schemaVersion").and_then(Value::as_u64);
                if version != Some(u64::from(SCHEMA_VERSION)) {
                    return Err(RunLogError::Version(version.unwrap_or(0) as u32));
                }
                header = Some(serde_json::from_value(h.clone()).map_err(|e| format_err(n, e.to_string()))?);
                continue;
            }
            if header.is_none() {
                return Err(format_err(n, "missing header"));
            }
            if let Some(f) = value.get("footer") {
                footer = Some(serde_json::from_value(f.clone()).map_err(|e| format_err(n, e.to_string()))?);
                continue;
            }
            let r: CallRecord = serde_json::from_value(value).map_err(|e| format_err(n, e.to_string()))?;
            if r.call_index != records.len() as u64 + 1 {
                return Err(format_err(n, format!("call index {} out of sequence", r.call_index)));
            }
            let prev = records.last().and_then(|p| p.best_so_far);
            if let (Some(p), Some(b)) = (prev, r.best_so_far) {
                if b < p {
                    return Err(format_err(n, "bestSoFar decreased"));
                }
            } else if prev.is_some() {
                return Err(format_err(n, "bestSoFar missing"));
            }
            records.push(r);
        }
        let header = header.ok_or_else(|| format_err(0, "empty log"))?;
        Ok(RunLog {
            header,
            records,
            footer,
        })
    }
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    header: &'a LogHeader,
}

#[derive(Serialize)]
struct FooterLine<'a> {
    footer: &'a LogFooter,
}

fn header_line(h: &LogHeader) -> String {
    let mut s = serde_json::to_string(&HeaderLine { header: h }).expect("serializable");
    s.push('\n');
    s
}

fn record_line(r: &CallRecord) -> String {
    let mut s = serde_json::to_string(r).expect("serializable");
    s.push('\n');
    s
}

fn footer_line(f: &LogFooter) -> String {
    let mut s = serde_json::to_string(&FooterLine { footer: f }).expect("serializable");
    s.push('\n');
    s
}

/// Streams a log to `out` line by line while keeping it in memory.
pub struct RunLogWriter<W: Write> {
    out: W,
    log: RunLog,
}

impl<W: Write> RunLogWriter<W> {
    pub fn new(mut out: W, header: LogHeader) -> io::Result<Self> {
        out.write_all(header_line(&header).as_bytes())?;
        out.flush()?;
        Ok(RunLogWriter {
            out,
            log: RunLog::new(header),
        })
    }

    /// Continues `log` (already present in `out`).
    pub fn resume(out: W, log: RunLog) -> Self {
        RunLogWriter { out, log }
    }

    pub fn push(&mut self, record: CallRecord) -> io::Result<()> {
        self.out.write_all(record_line(&record).as_bytes())?;
        self.out.flush()?;
        self.log.records.push(record);
        Ok(())
    }

    pub fn finish(&mut self, footer: LogFooter) -> io::Result<()> {
        self.out.write_all(footer_line(&footer).as_bytes())?;
        self.out.flush()?;
        self.log.footer = Some(footer);
        Ok(())
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }
}

impl RunLogWriter<io::Sink> {
    pub fn in_memory(header: LogHeader) -> Self {
        Self::new(io::sink(), header).expect("sink never fails")
    }
}

/// CPU seconds used by this process and its reaped children.
pub fn process_cpu_time() -> f64 {
    fn usage(who: libc::c_int) -> f64 {
        // SAFETY: getrusage only writes into the zeroed struct we own.
        let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
        if unsafe { libc::getrusage(who, &mut ru) } != 0 {
            return 0.0;
        }
        let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
        tv(ru.ru_utime) + tv(ru.ru_stime)
    }
    usage(libc::RUSAGE_SELF) + usage(libc::RUSAGE_CHILDREN)
}

/// Cumulative time since a run started, carried across resumes by offsets.
#[derive(Debug, Clone)]
pub struct Stopwatch {
    clock: Clock,
    wall_start: Instant,
    cpu_start: f64,
    cpu_offset: f64,
    wall_offset: f64,
}

impl Stopwatch {
    pub fn start(clock: Clock, cpu_offset: f64, wall_offset: f64) -> Self {
        Stopwatch {
            clock,
            wall_start: Instant::now(),
            cpu_start: process_cpu_time(),
            cpu_offset,
            wall_offset,
        }
    }

    /// `(cpu, wall)` seconds, or the call index twice under the logical clock.
    pub fn read(&self, call_index: u64) -> (f64, f64) {
        match self.clock {
            Clock::Logical => (call_index as f64, call_index as f64),
            Clock::Wall => (
                self.cpu_offset + (process_cpu_time() - self.cpu_start).max(0.0),
                self.wall_offset + self.wall_start.elapsed().as_secs_f64(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> LogHeader {
        LogHeader {
            schema_version: SCHEMA_VERSION,
            method: "bbo".into(),
            seed: 1,
            clock: Clock::Logical,
            objective: serde_json::json!({"kind": "syntheticAtomCount"}),
            config: Value::Null,
        }
    }

    fn record(i: u64, value: Option<f64>, best: Option<f64>) -> CallRecord {
        CallRecord {
            call_index: i,
            step: 0,
            restart: 0,
            smiles: "C".into(),
            value,
            best_so_far: best,
            cpu_time_s: i as f64,
            wall_time_s: i as f64,
            error: None,
        }
    }

    #[test]
    fn round_trip() {
        let mut w = RunLogWriter::new(Vec::new(), header()).unwrap();
        w.push(record(1, Some(1.0), Some(1.0))).unwrap();
        w.push(CallRecord {
            error: Some("boom".into()),
            ..record(2, None, Some(1.0))
        })
        .unwrap();
        w.finish(LogFooter {
            complete: true,
            stop_reason: StopReason::Budget,
            calls: 2,
            best_smiles: Some("C".into()),
            best_value: Some(1.0),
        })
        .unwrap();
        let bytes = w.out.clone();
        let log = w.into_log();
        let text = log.to_jsonl();
        assert_eq!(String::from_utf8(bytes).unwrap(), text);
        assert_eq!(RunLog::parse(&text).unwrap(), log);
        assert!(text.lines().nth(1).unwrap().starts_with("{\"callIndex\":1,"));
    }

    #[test]
    fn rejects_bad_logs() {
        let h = header_line(&header());
        let gap = format!("{h}{}", record_line(&record(2, Some(1.0), Some(1.0))));
        assert!(RunLog::parse(&gap).is_err());
        let drop = format!(
            "{h}{}{}",
            record_line(&record(1, Some(2.0), Some(2.0))),
            record_line(&record(2, Some(1.0), Some(1.0)))
        );
        assert!(RunLog::parse(&drop).is_err());
        let v2 = h.replace("\"schemaVersion\":1", "\"schemaVersion\":2");
        assert!(matches!(RunLog::parse(&v2), Err(RunLogError::Version(2))));
        assert!(RunLog::parse(&record_line(&record(1, None, None))).is_err());
    }

    #[test]
    fn cpu_time_advances() {
        let a = process_cpu_time();
        let mut x = 0u64;
        for i in 0..20_000_000u64 {
            x = x.wrapping_mul(31).wrapping_add(i);
        }
        std::hint::black_box(x);
        assert!(process_cpu_time() > a);
    }
}
