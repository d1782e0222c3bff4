//! Append-only NDJSON event log, split into segments per power cycle, with
//! replay and crash recovery.
//!
//! A run writes `<run-id>.segment-<n>.ndjson` files, `n` starting at 1. Each
//! append is one complete line followed by a flush. A torn final line (power
//! lost mid-write) is detected on recovery and its sequence number is
//! treated as consumed, so the next segment leaves a visible gap.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{EventPayload, EventRecord, Monotonic, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("log io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("timestamp {at} is earlier than the previous record at {last}")]
    OutOfOrder { at: Timestamp, last: Timestamp },
    #[error("segment is closed")]
    SegmentClosed,
    #[error("invalid run id {0:?}")]
    BadRunId(String),
    #[error("encoding record: {0}")]
    Encode(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Corrected wall clock: monotonic uptime plus the offset learned at the
/// most recent synchronisation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockModel {
    offset_ms: i64,
    sync_events: Vec<(Monotonic, i64)>,
}

impl ClockModel {
    /// A clock that has never synchronised reports bare monotonic time.
    pub fn unsynced() -> Self {
        ClockModel::default()
    }

    /// A clock synchronised at boot so that uptime zero maps to `epoch`.
    pub fn synced(epoch: Timestamp) -> Self {
        let mut c = ClockModel::default();
        c.sync(epoch, Monotonic::ZERO);
        c
    }

    /// Learns that monotonic instant `now` corresponds to wall time
    /// `reference`. Returns the change in offset.
    pub fn sync(&mut self, reference: Timestamp, now: Monotonic) -> i64 {
        let offset = reference.as_millis() - now.as_millis() as i64;
        let step = offset - self.offset_ms;
        self.offset_ms = offset;
        self.sync_events.push((now, offset));
        step
    }

    pub fn is_synced(&self) -> bool {
        !self.sync_events.is_empty()
    }

    pub fn offset_ms(&self) -> i64 {
        self.offset_ms
    }

    pub fn sync_events(&self) -> &[(Monotonic, i64)] {
        &self.sync_events
    }

    pub fn now(&self, at: Monotonic) -> Timestamp {
        Timestamp::from_millis(at.as_millis() as i64 + self.offset_ms)
    }
}

/// File name of segment `n` of a run.
pub fn segment_file_name(run_id: &str, n: u32) -> String {
    format!("{run_id}.segment-{n}.ndjson")
}

fn check_run_id(run_id: &str) -> Result<(), LogError> {
    let ok = !run_id.is_empty()
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !run_id.contains(".segment-");
    if ok {
        Ok(())
    } else {
        Err(LogError::BadRunId(run_id.to_string()))
    }
}

/// Segments of `run_id` in `dir`, ordered by segment number.
pub fn list_segments(dir: &Path, run_id: &str) -> Result<Vec<(u32, PathBuf)>, LogError> {
    let prefix = format!("{run_id}.segment-");
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(n) = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".ndjson"))
            .and_then(|n| n.parse::<u32>().ok())
        else {
            continue;
        };
        out.push((n, entry.path()));
    }
    out.sort();
    Ok(out)
}

/// Run ids with at least one segment in `dir`.
pub fn list_runs(dir: &Path) -> Result<Vec<String>, LogError> {
    let mut runs = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let name = entry.map_err(io_err(dir))?.file_name();
        if let Some((run, _)) = name.to_str().and_then(|n| n.split_once(".segment-")) {
            if !runs.iter().any(|r| r == run) {
                runs.push(run.to_string());
            }
        }
    }
    runs.sort();
    Ok(runs)
}

/// One open segment file.
#[derive(Debug)]
pub struct LogSegment {
    path: PathBuf,
    file: Option<File>,
    next_seq: u64,
    last_ts: Option<Timestamp>,
    written: u64,
    sync_each: bool,
}

impl LogSegment {
    fn create(path: PathBuf, next_seq: u64, last_ts: Option<Timestamp>, sync_each: bool) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(LogSegment {
            path,
            file: Some(file),
            next_seq,
            last_ts,
            written: 0,
            sync_each,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_seq
    }

    pub fn records_written(&self) -> u64 {
        self.written
    }

    pub fn is_open(&self) -> bool {
        self.file.is_some()
    }

    pub fn append(&mut self, timestamp: Timestamp, payload: EventPayload) -> Result<EventRecord, LogError> {
        if let Some(last) = self.last_ts {
            if timestamp < last {
                return Err(LogError::OutOfOrder { at: timestamp, last });
            }
        }
        let file = self.file.as_mut().ok_or(LogError::SegmentClosed)?;
        let record = EventRecord {
            sequence_number: self.next_seq,
            timestamp,
            payload,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        file.write_all(&line).map_err(io_err(&self.path))?;
        file.flush().map_err(io_err(&self.path))?;
        if self.sync_each {
            file.sync_data().map_err(io_err(&self.path))?;
        }
        self.next_seq += 1;
        self.last_ts = Some(timestamp);
        self.written += 1;
        Ok(record)
    }

    /// Simulates power failing half-way through writing `payload`: only the
    /// first half of its line reaches the file and the segment closes.
    pub fn tear(&mut self, timestamp: Timestamp, payload: EventPayload) -> Result<(), LogError> {
        let file = self.file.as_mut().ok_or(LogError::SegmentClosed)?;
        let record = EventRecord {
            sequence_number: self.next_seq,
            timestamp,
            payload,
        };
        let line = serde_json::to_vec(&record)?;
        file.write_all(&line[..line.len() / 2]).map_err(io_err(&self.path))?;
        file.flush().map_err(io_err(&self.path))?;
        self.file = None;
        Ok(())
    }

    /// Lets the next record carry an earlier timestamp, after the clock was
    /// stepped backwards by a synchronisation.
    pub fn accept_clock_step(&mut self) {
        self.last_ts = None;
    }

    pub fn close(&mut self) -> Result<(), LogError> {
        if let Some(file) = self.file.take() {
            file.sync_all().map_err(io_err(&self.path))?;
        }
        Ok(())
    }
}

/// What a recovery scan found in the existing segments of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecoveryScan {
    pub segments: u32,
    pub last_sequence: Option<u64>,
    pub last_timestamp: Option<Timestamp>,
    /// Lines that did not parse. Each one consumed a sequence number.
    pub corrupt_lines: u64,
}

impl RecoveryScan {
    pub fn next_sequence(&self) -> u64 {
        self.last_sequence.unwrap_or(0) + 1 + self.corrupt_lines
    }
}

/// Writer for one run: owns the current segment and opens new ones.
#[derive(Debug)]
pub struct EventLog {
    dir: PathBuf,
    run_id: String,
    segment_no: u32,
    segment: LogSegment,
    sync_each: bool,
}

impl EventLog {
    /// Starts a new run. Fails if segments for `run_id` already exist.
    pub fn create(dir: &Path, run_id: &str) -> Result<Self, LogError> {
        check_run_id(run_id)?;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(segment_file_name(run_id, 1));
        Ok(EventLog {
            dir: dir.to_path_buf(),
            run_id: run_id.to_string(),
            segment_no: 1,
            segment: LogSegment::create(path, 1, None, false)?,
            sync_each: false,
        })
    }

    /// Resumes a run after a restart: scans existing segments and opens the
    /// next one, continuing the sequence past any torn record.
    pub fn reopen(dir: &Path, run_id: &str) -> Result<(Self, RecoveryScan), LogError> {
        check_run_id(run_id)?;
        let scan = scan_run(dir, run_id)?;
        let segment_no = scan.segments + 1;
        let path = dir.join(segment_file_name(run_id, segment_no));
        let segment = LogSegment::create(path, scan.next_sequence(), scan.last_timestamp, false)?;
        Ok((
            EventLog {
                dir: dir.to_path_buf(),
                run_id: run_id.to_string(),
                segment_no,
                segment,
                sync_each: false,
            },
            scan,
        ))
    }

    /// Also fsync after every append.
    pub fn sync_each_append(&mut self, on: bool) {
        self.sync_each = on;
        self.segment.sync_each = on;
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn segment_number(&self) -> u32 {
        self.segment_no
    }

    pub fn segment(&self) -> &LogSegment {
        &self.segment
    }

    pub fn append(&mut self, timestamp: Timestamp, payload: EventPayload) -> Result<EventRecord, LogError> {
        self.segment.append(timestamp, payload)
    }

    pub fn tear(&mut self, timestamp: Timestamp, payload: EventPayload) -> Result<(), LogError> {
        self.segment.tear(timestamp, payload)
    }

    pub fn accept_clock_step(&mut self) {
        self.segment.accept_clock_step()
    }

    pub fn close(&mut self) -> Result<(), LogError> {
        self.segment.close()
    }
}

/// Scans every segment of a run without modifying it.
pub fn scan_run(dir: &Path, run_id: &str) -> Result<RecoveryScan, LogError> {
    let mut scan = RecoveryScan::default();
    for (n, path) in list_segments(dir, run_id)? {
        scan.segments = scan.segments.max(n);
        for item in Replay::open(&path)? {
            match item {
                Ok(rec) => {
                    scan.last_sequence = Some(rec.sequence_number);
                    scan.last_timestamp = Some(rec.timestamp);
                    // a corrupt line followed by valid ones was not lost
                    scan.corrupt_lines = 0;
                }
                Err(_) => scan.corrupt_lines += 1,
            }
        }
    }
    Ok(scan)
}

/// A line that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt record in {segment} at byte {offset} (line {line}): {reason}")]
pub struct CorruptRecord {
    pub segment: String,
    pub line: u64,
    pub offset: u64,
    pub reason: String,
}

/// Streams records from one segment, reporting undecodable lines in place.
pub struct Replay<R> {
    reader: R,
    segment: String,
    line: u64,
    offset: u64,
    buf: Vec<u8>,
}

impl Replay<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = File::open(path).map_err(io_err(path))?;
        Ok(Replay::new(BufReader::new(file), path.display().to_string()))
    }
}

impl<R: BufRead> Replay<R> {
    pub fn new(reader: R, segment: String) -> Self {
        Replay {
            reader,
            segment,
            line: 0,
            offset: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<EventRecord, CorruptRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            let start = self.offset;
            let n = match self.reader.by_ref().read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(n) => n,
                Err(e) => {
                    self.line += 1;
                    return Some(Err(self.corrupt(start, e.to_string())));
                }
            };
            self.offset += n as u64;
            self.line += 1;
            let complete = self.buf.last() == Some(&b'\n');
            let body = self.buf.strip_suffix(b"\n").unwrap_or(&self.buf);
            if body.iter().all(u8::is_ascii_whitespace) {
                if complete {
                    continue;
                }
                return None;
            }
            if !complete {
                return Some(Err(self.corrupt(start, "truncated line".into())));
            }
            return Some(serde_json::from_slice(body).map_err(|e| self.corrupt(start, e.to_string())));
        }
    }
}

impl<R> Replay<R> {
    fn corrupt(&self, offset: u64, reason: String) -> CorruptRecord {
        CorruptRecord {
            segment: self.segment.clone(),
            line: self.line,
            offset,
            reason,
        }
    }
}

/// All decodable records of a run plus the lines that were skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<EventRecord>,
    pub corrupt: Vec<CorruptRecord>,
    pub segments: Vec<PathBuf>,
}

impl RunLog {
    /// Records with `from <= timestamp <= to`.
    pub fn between(&self, from: Option<Timestamp>, to: Option<Timestamp>) -> impl Iterator<Item = &EventRecord> {
        self.records
            .iter()
            .filter(move |r| from.is_none_or(|f| r.timestamp >= f) && to.is_none_or(|t| r.timestamp <= t))
    }

    /// Sequence numbers missing between consecutive records.
    pub fn sequence_gaps(&self) -> Vec<(u64, u64)> {
        self.records
            .windows(2)
            .filter(|w| w[1].sequence_number > w[0].sequence_number + 1)
            .map(|w| (w[0].sequence_number, w[1].sequence_number))
            .collect()
    }
}

/// Reads every segment of a run in order.
pub fn replay_run(dir: &Path, run_id: &str) -> Result<RunLog, LogError> {
    let mut out = RunLog::default();
    for (_, path) in list_segments(dir, run_id)? {
        for item in Replay::open(&path)? {
            match item {
                Ok(rec) => out.records.push(rec),
                Err(c) => out.corrupt.push(c),
            }
        }
        out.segments.push(path);
    }
    Ok(out)
}

/// Reads a single segment file or every segment of a run, depending on
/// whether `path` names a file or a directory (then `run_id` picks the run;
/// without it the directory must hold exactly one run).
pub fn replay_path(path: &Path, run_id: Option<&str>) -> Result<RunLog, LogError> {
    if path.is_file() {
        let mut out = RunLog::default();
        let mut raw = Vec::new();
        File::open(path)
            .map_err(io_err(path))?
            .read_to_end(&mut raw)
            .map_err(io_err(path))?;
        for item in Replay::new(&raw[..], path.display().to_string()) {
            match item {
                Ok(rec) => out.records.push(rec),
                Err(c) => out.corrupt.push(c),
            }
        }
        out.segments.push(path.to_path_buf());
        return Ok(out);
    }
    let run = match run_id {
        Some(r) => r.to_string(),
        None => {
            let runs = list_runs(path)?;
            match runs.as_slice() {
                [one] => one.clone(),
                _ => return Err(LogError::BadRunId(format!("{} runs in {}", runs.len(), path.display()))),
            }
        }
    };
    replay_run(path, &run)
}
