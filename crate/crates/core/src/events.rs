//! Append-only event log: every trace, task, response, fix result, quality
//! record and report reference, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::crowd::{Microtask, WorkerResponse};
use crate::error::{Error, Result};
use crate::evaluation::QualityRecord;
use crate::fix::{RoundOutcome, RunRef};
use crate::pipeline::ExecutionTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Trace {
        run: RunRef,
        step: usize,
        trace: ExecutionTrace,
    },
    Microtask {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        run: Option<RunRef>,
        task: Microtask,
    },
    Response {
        response: WorkerResponse,
    },
    FixResult {
        run: RunRef,
        round: usize,
        fix_id: String,
        outcome: RoundOutcome,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    QualityRecord {
        workflow_id: String,
        record: QualityRecord,
    },
    ReportRef {
        name: String,
        sha256: String,
        spec: crate::analysis::ReportSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: u64,
    pub event: EventBody,
}

/// Destination for run artifacts.
pub trait EventSink: Send {
    fn emit(&mut self, event: EventBody) -> Result<u64>;
    /// Timestamp the next record will carry.
    fn now(&mut self) -> u64;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink {
    seq: u64,
}

impl EventSink for NullSink {
    fn emit(&mut self, _event: EventBody) -> Result<u64> {
        self.seq += 1;
        Ok(self.seq)
    }

    fn now(&mut self) -> u64 {
        self.seq + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Timestamps equal sequence numbers; logs are reproducible.
    Logical,
    /// Milliseconds since the Unix epoch.
    System,
}

/// In-memory event log, optionally mirrored to a JSON-lines file.
#[derive(Debug)]
pub struct EventLog {
    records: Vec<Event>,
    clock: Clock,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl EventLog {
    pub fn in_memory(clock: Clock) -> Self {
        Self {
            records: Vec::new(),
            clock,
            file: None,
        }
    }

    /// Opens (or creates) `path`, loading existing records so new ones
    /// continue the sequence.
    pub fn open(path: &Path, clock: Clock) -> Result<Self> {
        let records = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_jsonl(&text)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            records,
            clock,
            file: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    /// Truncates `path` and starts an empty log there.
    pub fn create(path: &Path, clock: Clock) -> Result<Self> {
        File::create(path).map_err(|e| Error::io(path, e))?;
        Self::open(path, clock)
    }

    pub fn records(&self) -> &[Event] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_seq(&self) -> u64 {
        self.records.last().map_or(0, |e| e.seq)
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some((path, w)) = &mut self.file {
            w.flush().map_err(|e| Error::io(path.clone(), e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.records)
    }

    fn timestamp(&self, seq: u64) -> u64 {
        match self.clock {
            Clock::Logical => seq,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

impl EventSink for EventLog {
    fn emit(&mut self, event: EventBody) -> Result<u64> {
        let seq = self.last_seq() + 1;
        let record = Event {
            seq,
            ts: self.timestamp(seq),
            event,
        };
        if let Some((path, w)) = &mut self.file {
            let line = serde_json::to_string(&record)?;
            writeln!(w, "{line}").map_err(|e| Error::io(path.clone(), e))?;
        }
        self.records.push(record);
        Ok(seq)
    }

    fn now(&mut self) -> u64 {
        self.timestamp(self.last_seq() + 1)
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// A log shared between threads; every append goes through one lock.
#[derive(Debug, Clone)]
pub struct SharedLog(pub Arc<Mutex<EventLog>>);

impl SharedLog {
    pub fn new(log: EventLog) -> Self {
        Self(Arc::new(Mutex::new(log)))
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, EventLog> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Copy of the records written so far.
    pub fn snapshot(&self) -> Vec<Event> {
        self.lock().records().to_vec()
    }
}

impl EventSink for SharedLog {
    fn emit(&mut self, event: EventBody) -> Result<u64> {
        let mut log = self.lock();
        let seq = log.emit(event)?;
        log.flush()?;
        Ok(seq)
    }

    fn now(&mut self) -> u64 {
        self.lock().now()
    }
}

pub fn to_jsonl(records: &[Event]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("events serialize"));
        out.push('\n');
    }
    out
}

/// Parses a JSON-lines log, checking that sequence numbers increase. A bad
/// line is reported with the sequence number it should have carried.
pub fn parse_jsonl(text: &str) -> Result<Vec<Event>> {
    let mut records: Vec<Event> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let expected = records.last().map_or(1, |e| e.seq + 1);
        let event: Event = serde_json::from_str(line).map_err(|e| Error::CorruptRecord {
            seq: expected,
            reason: format!("line {}: {e}", i + 1),
        })?;
        if let Some(prev) = records.last() {
            if event.seq <= prev.seq {
                return Err(Error::CorruptRecord {
                    seq: event.seq,
                    reason: format!("sequence number does not increase after {}", prev.seq),
                });
            }
        }
        records.push(event);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::Answer;

    fn response(task: &str) -> EventBody {
        EventBody::Response {
            response: WorkerResponse {
                task_id: task.into(),
                worker_id: "w".into(),
                answer: Answer::Commonsense { sensible: true },
                timestamp: 0,
            },
        }
    }

    #[test]
    fn logical_clock_and_round_trip() {
        let mut log = EventLog::in_memory(Clock::Logical);
        assert_eq!(log.now(), 1);
        log.emit(response("a")).unwrap();
        log.emit(response("b")).unwrap();
        assert_eq!(log.records()[1].ts, 2);
        let parsed = parse_jsonl(&log.to_jsonl()).unwrap();
        assert_eq!(parsed, log.records());
    }

    #[test]
    fn truncated_final_record_names_its_sequence() {
        let mut log = EventLog::in_memory(Clock::Logical);
        log.emit(response("a")).unwrap();
        log.emit(response("b")).unwrap();
        let text = log.to_jsonl();
        let cut = &text[..text.len() - 10];
        match parse_jsonl(cut) {
            Err(Error::CorruptRecord { seq, .. }) => assert_eq!(seq, 2),
            other => panic!("expected corrupt record, got {other:?}"),
        }
    }

    #[test]
    fn file_log_continues_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let mut log = EventLog::create(&path, Clock::Logical).unwrap();
            log.emit(response("a")).unwrap();
        }
        let mut log = EventLog::open(&path, Clock::Logical).unwrap();
        assert_eq!(log.emit(response("b")).unwrap(), 2);
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(parse_jsonl(&text).unwrap().len(), 2);
    }
}
