//! Event-log ingestion, report and sweep serialization, and normalization.
//!
//! Event logs are CSV with the header `state,start,end`. `state` is `UP` or
//! `DOWN`; `start`/`end` are either decimal hours or ISO-8601 timestamps
//! (one kind per log), converted to hours relative to the first row.
//!
//! Reports are JSON documents `{"schema": "seqvar.report/v1", "report": {..}}`.
//! Sweeps are CSV with the header
//! `utilization,mu,i95_lo,i95_hi,ct0,ct0_lo,ct0_hi,verdict`.
//! Floats are written in shortest round-trip form, so both formats parse back
//! to bit-identical values.

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::SweepRow;
use crate::model::{
    ExperimentReport, Interval, ModelError, NormalizedView, ToolState, UpDownSequence, Verdict,
};

pub const REPORT_SCHEMA: &str = "seqvar.report/v1";
pub const EVENT_LOG_HEADER: [&str; 3] = ["state", "start", "end"];
pub const SWEEP_HEADER: [&str; 8] = [
    "utilization",
    "mu",
    "i95_lo",
    "i95_hi",
    "ct0",
    "ct0_lo",
    "ct0_hi",
    "verdict",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("event log has no rows")]
    EmptyLog,
    #[error("line {line}: expected header `state,start,end`, found `{found}`")]
    BadHeader { line: u64, found: String },
    #[error(
        "line {line}: gap in log, row starts at {start} but previous row ended at {previous_end}"
    )]
    GapInLog {
        line: u64,
        start: f64,
        previous_end: f64,
    },
    #[error("line {line}: row starts at {start}, before previous row ended at {previous_end}")]
    OverlapInLog {
        line: u64,
        start: f64,
        previous_end: f64,
    },
    #[error("line {line}: state {state} repeats the previous row (use coalescing to merge)")]
    NonAlternating { line: u64, state: ToolState },
    #[error("line {line}: bad timestamp `{value}`")]
    BadTimestamp { line: u64, value: String },
    #[error("line {line}: unknown state `{value}` (expected UP or DOWN)")]
    BadState { line: u64, value: String },
    #[error("line {line}: span ends at {end}, not after its start {start}")]
    EmptySpan { line: u64, start: f64, end: f64 },
    #[error("line {line}: expected 3 fields, found {found}")]
    BadRow { line: u64, found: usize },
    #[error("report mean μ must be positive to normalize, got {0}")]
    ZeroMu(f64),
    #[error("unsupported report schema `{0}` (expected `{REPORT_SCHEMA}`)")]
    UnknownSchema(String),
    #[error("line {line}: bad sweep field `{field}`: `{value}`")]
    BadSweepField {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventLogOptions {
    /// Merge consecutive rows with the same state instead of rejecting them.
    pub coalesce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeKind {
    Hours,
    Timestamp,
}

/// Raw time value: hours for decimal logs, microseconds since the epoch for
/// ISO-8601 logs.
fn parse_time(value: &str, kind: TimeKind) -> Option<f64> {
    match kind {
        TimeKind::Hours => value.parse::<f64>().ok().filter(|v| v.is_finite()),
        TimeKind::Timestamp => parse_iso8601(value).map(|us| us as f64),
    }
}

/// Microseconds since the Unix epoch. Timestamps without an offset are read
/// as UTC.
fn parse_iso8601(value: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(value) {
        return Some(dt.timestamp_micros());
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    NAIVE.iter().find_map(|fmt| {
        NaiveDateTime::parse_from_str(value, fmt)
            .ok()
            .map(|dt| dt.and_utc().timestamp_micros())
    })
}

fn detect_kind(value: &str) -> TimeKind {
    if value.parse::<f64>().is_ok() {
        TimeKind::Hours
    } else {
        TimeKind::Timestamp
    }
}

const MICROS_PER_HOUR: f64 = 3.6e9;

pub fn parse_event_log(text: &str) -> Result<UpDownSequence, IoError> {
    parse_event_log_with(text, EventLogOptions::default())
}

pub fn parse_event_log_with(
    text: &str,
    options: EventLogOptions,
) -> Result<UpDownSequence, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(IoError::EmptyLog),
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let is_header = header.len() == 3
        && header
            .iter()
            .zip(EVENT_LOG_HEADER)
            .all(|(a, b)| a.eq_ignore_ascii_case(b));
    if !is_header {
        return Err(IoError::BadHeader {
            line: header_line,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut kind = None;
    let mut origin = 0.0;
    // (state, raw start, raw end); durations are taken from raw differences
    let mut spans: Vec<(ToolState, f64, f64)> = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(IoError::BadRow {
                line,
                found: record.len(),
            });
        }
        let state = match record[0].to_ascii_uppercase().as_str() {
            "UP" => ToolState::Up,
            "DOWN" => ToolState::Down,
            _ => {
                return Err(IoError::BadState {
                    line,
                    value: record[0].to_string(),
                })
            }
        };
        let kind = *kind.get_or_insert_with(|| detect_kind(&record[1]));
        let time = |value: &str| {
            parse_time(value, kind).ok_or_else(|| IoError::BadTimestamp {
                line,
                value: value.to_string(),
            })
        };
        let (start, end) = (time(&record[1])?, time(&record[2])?);
        if spans.is_empty() {
            origin = start;
        }
        let hours = |raw: f64| to_hours(raw - origin, kind);
        if end <= start {
            return Err(IoError::EmptySpan {
                line,
                start: hours(start),
                end: hours(end),
            });
        }
        if let Some(last) = spans.last_mut() {
            let previous_end = last.2;
            if start != previous_end {
                let (start, previous_end) = (hours(start), hours(previous_end));
                return Err(if start > previous_end {
                    IoError::GapInLog {
                        line,
                        start,
                        previous_end,
                    }
                } else {
                    IoError::OverlapInLog {
                        line,
                        start,
                        previous_end,
                    }
                });
            }
            if state == last.0 {
                if !options.coalesce {
                    return Err(IoError::NonAlternating { line, state });
                }
                last.2 = end;
                continue;
            }
        }
        spans.push((state, start, end));
    }

    let (Some(&(initial, _, _)), Some(kind)) = (spans.first(), kind) else {
        return Err(IoError::EmptyLog);
    };
    let durations = spans
        .iter()
        .map(|(_, s, e)| to_hours(e - s, kind))
        .collect();
    Ok(UpDownSequence::new(initial, durations)?)
}

fn to_hours(raw: f64, kind: TimeKind) -> f64 {
    match kind {
        TimeKind::Hours => raw,
        TimeKind::Timestamp => raw / MICROS_PER_HOUR,
    }
}

/// Writes `sequence` as an event log in decimal hours starting at 0.
pub fn write_event_log(sequence: &UpDownSequence) -> Result<String, IoError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(EVENT_LOG_HEADER)?;
    let mut t = 0.0;
    for (state, d) in sequence.spans() {
        let end = t + d;
        writer.write_record([state.to_string(), t.to_string(), end.to_string()])?;
        t = end;
    }
    Ok(into_string(writer))
}

fn into_string(writer: csv::Writer<Vec<u8>>) -> String {
    let bytes = writer.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output is UTF-8")
}

/// Rescales every cycle-time quantity by 100/μ. The verdict, the triplet and
/// the seeds are unchanged; applying it twice is the same as once.
pub fn normalize_report(report: &ExperimentReport) -> Result<ExperimentReport, IoError> {
    let mu = report.effect.mu;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(IoError::ZeroMu(mu));
    }
    let mut effect = report.effect.scaled(100.0 / mu);
    // μ·(100/μ) can be off by an ulp; pinning it keeps a second pass a no-op
    effect.mu = 100.0;
    let normalized = NormalizedView::from_effect(&effect).ok_or(IoError::ZeroMu(effect.mu))?;
    Ok(ExperimentReport {
        effect,
        normalized,
        ..report.clone()
    })
}

#[derive(Serialize, Deserialize)]
struct ReportDocument<R> {
    schema: String,
    report: R,
}

pub fn write_report(report: &ExperimentReport) -> Result<String, IoError> {
    let doc = ReportDocument {
        schema: REPORT_SCHEMA.to_string(),
        report,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn parse_report(text: &str) -> Result<ExperimentReport, IoError> {
    #[derive(Deserialize)]
    struct Tag {
        schema: String,
    }
    let tag: Tag = serde_json::from_str(text)?;
    if tag.schema != REPORT_SCHEMA {
        return Err(IoError::UnknownSchema(tag.schema));
    }
    let doc: ReportDocument<ExperimentReport> = serde_json::from_str(text)?;
    Ok(doc.report)
}

pub fn write_sweep(rows: &[SweepRow]) -> Result<String, IoError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(SWEEP_HEADER)?;
    for r in rows {
        writer.write_record([
            r.utilization.to_string(),
            r.mu.to_string(),
            r.i95.lo.to_string(),
            r.i95.hi.to_string(),
            r.ct0_bar.to_string(),
            r.ct0_interval.lo.to_string(),
            r.ct0_interval.hi.to_string(),
            r.verdict.to_string(),
        ])?;
    }
    Ok(into_string(writer))
}

pub fn parse_sweep(text: &str) -> Result<Vec<SweepRow>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Ok(Vec::new()),
    };
    if header.iter().ne(SWEEP_HEADER) {
        return Err(IoError::BadHeader {
            line: 1,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != SWEEP_HEADER.len() {
            return Err(IoError::BadRow {
                line,
                found: record.len(),
            });
        }
        let num = |k: usize| {
            record[k]
                .parse::<f64>()
                .map_err(|_| IoError::BadSweepField {
                    line,
                    field: SWEEP_HEADER[k],
                    value: record[k].to_string(),
                })
        };
        let verdict = record[7]
            .parse::<Verdict>()
            .map_err(|_| IoError::BadSweepField {
                line,
                field: "verdict",
                value: record[7].to_string(),
            })?;
        rows.push(SweepRow {
            utilization: num(0)?,
            mu: num(1)?,
            i95: Interval::new(num(2)?, num(3)?),
            ct0_bar: num(4)?,
            ct0_interval: Interval::new(num(5)?, num(6)?),
            verdict,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_log() {
        let s = parse_event_log("state,start,end\nUP,0,10\nDOWN,10,12\n").unwrap();
        assert_eq!(s.initial_state(), ToolState::Up);
        assert_eq!(s.durations(), &[10.0, 2.0]);
        assert_eq!(s.total_duration(), 12.0);
    }

    #[test]
    fn rejects_gaps_overlaps_and_repeats() {
        let gap = parse_event_log("state,start,end\nUP,0,10\nDOWN,11,12\n");
        assert!(matches!(gap, Err(IoError::GapInLog { line: 3, .. })));
        let overlap = parse_event_log("state,start,end\nUP,0,10\nDOWN,9,12\n");
        assert!(matches!(overlap, Err(IoError::OverlapInLog { .. })));
        let repeat = parse_event_log("state,start,end\nUP,0,10\nUP,10,20\n");
        assert!(matches!(repeat, Err(IoError::NonAlternating { .. })));
    }

    #[test]
    fn coalesce_merges_repeated_states() {
        let opts = EventLogOptions { coalesce: true };
        let s =
            parse_event_log_with("state,start,end\nUP,0,10\nUP,10,20\nDOWN,20,21\n", opts).unwrap();
        assert_eq!(s.durations(), &[20.0, 1.0]);
    }

    #[test]
    fn other_malformed_logs() {
        assert!(matches!(parse_event_log(""), Err(IoError::EmptyLog)));
        assert!(matches!(
            parse_event_log("state,start,end\n"),
            Err(IoError::EmptyLog)
        ));
        assert!(matches!(
            parse_event_log("a,b,c\nUP,0,1\n"),
            Err(IoError::BadHeader { .. })
        ));
        assert!(matches!(
            parse_event_log("state,start,end\nUP,0,x\n"),
            Err(IoError::BadTimestamp { .. })
        ));
        assert!(matches!(
            parse_event_log("state,start,end\nIDLE,0,1\n"),
            Err(IoError::BadState { .. })
        ));
        assert!(matches!(
            parse_event_log("state,start,end\nUP,3,3\n"),
            Err(IoError::EmptySpan { .. })
        ));
    }

    #[test]
    fn iso_timestamps_become_relative_hours() {
        let text = "state,start,end\n\
                    DOWN,2024-01-01T00:00:00Z,2024-01-01T01:30:00Z\n\
                    UP,2024-01-01T01:30:00Z,2024-01-02T01:30:00Z\n";
        let s = parse_event_log(text).unwrap();
        assert_eq!(s.initial_state(), ToolState::Down);
        assert_eq!(s.durations(), &[1.5, 24.0]);

        let naive = "state,start,end\nUP,2024-03-01 06:00:00,2024-03-01 08:15:00\n";
        assert_eq!(parse_event_log(naive).unwrap().durations(), &[2.25]);

        let offset = "state,start,end\n\
                      UP,2024-01-01T00:00:00+01:00,2024-01-01T00:00:00Z\n";
        assert_eq!(parse_event_log(offset).unwrap().durations(), &[1.0]);
    }

    #[test]
    fn decimal_logs_may_start_anywhere() {
        let s = parse_event_log("state,start,end\nUP,100,110\nDOWN,110,112.5\n").unwrap();
        assert_eq!(s.durations(), &[10.0, 2.5]);
    }

    #[test]
    fn event_log_round_trip() {
        let s = UpDownSequence::new(ToolState::Down, vec![1.5, 10.25, 0.75, 20.0]).unwrap();
        let text = write_event_log(&s).unwrap();
        assert!(text.starts_with("state,start,end\nDOWN,0,1.5\nUP,1.5,11.75\n"));
        assert_eq!(parse_event_log(&text).unwrap(), s);
    }

    #[test]
    fn sweep_header_only_when_empty() {
        assert_eq!(
            write_sweep(&[]).unwrap(),
            "utilization,mu,i95_lo,i95_hi,ct0,ct0_lo,ct0_hi,verdict\n"
        );
        assert!(parse_sweep(&write_sweep(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn sweep_round_trip_is_exact() {
        let rows: Vec<SweepRow> = (1..=9)
            .map(|k| SweepRow {
                utilization: k as f64 / 10.0,
                mu: 1.0 / (1.0 - k as f64 / 10.0),
                i95: Interval::new(0.1 + k as f64, std::f64::consts::PI * k as f64),
                ct0_bar: 2.0f64.sqrt() * k as f64,
                ct0_interval: Interval::new(1.0 / 3.0, 7.0 / 3.0),
                verdict: Verdict::SignificantPositive,
            })
            .collect();
        let text = write_sweep(&rows).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(parse_sweep(&text).unwrap(), rows);
    }
}
