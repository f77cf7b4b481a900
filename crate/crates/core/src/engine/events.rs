//! Append-only event log, one JSON object per line.

use crate::mixture::MixtureParams;
use crate::routing::ModelChoice;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStarted,
    StepGenerated,
    FitComputed,
    RouteDecided,
    TraceCompleted,
    TraceFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    /// Fitted on this barrier's confidences.
    Fresh,
    /// Too few (or degenerate) samples; the last good fit was reused.
    Reused,
    /// No usable fit exists yet; every trace stays small.
    None,
}

/// Which confidences a fit was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    All,
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventParams {
    Run {
        version: String,
        config: serde_json::Value,
    },
    Mixture {
        group: usize,
        pool: Pool,
        gamma: f64,
        source: FitSource,
        sample_count: usize,
        weak_separation: bool,
        fit: Option<MixtureParams>,
    },
    Percentile {
        group: usize,
        p: f64,
        cutoff: Option<f64>,
        sample_count: usize,
    },
    Static {
        group: usize,
        model: ModelChoice,
    },
    Step {
        refined: bool,
        token_count: usize,
        completion_tokens: u64,
        prompt_tokens: u64,
        eos: bool,
    },
    Outcome {
        status: String,
        detail: Option<String>,
    },
}

/// One line of the event log. Every record carries the same field set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: EventKind,
    pub step_index: Option<usize>,
    pub trace_id: Option<String>,
    pub model: Option<ModelChoice>,
    pub phi: Option<f64>,
    pub posterior: Option<f64>,
    pub params: Option<EventParams>,
    /// Milliseconds since the Unix epoch; the only non-deterministic field.
    pub timestamp: u64,
}

impl EventRecord {
    pub fn new(event: EventKind) -> Self {
        Self {
            event,
            step_index: None,
            trace_id: None,
            model: None,
            phi: None,
            posterior: None,
            params: None,
            timestamp: 0,
        }
    }

    pub fn step(mut self, index: usize) -> Self {
        self.step_index = Some(index);
        self
    }

    pub fn trace(mut self, id: &str) -> Self {
        self.trace_id = Some(id.to_string());
        self
    }

    pub fn model(mut self, model: ModelChoice) -> Self {
        self.model = Some(model);
        self
    }

    pub fn phi(mut self, phi: f64) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn posterior(mut self, posterior: Option<f64>) -> Self {
        self.posterior = posterior;
        self
    }

    pub fn params(mut self, params: EventParams) -> Self {
        self.params = Some(params);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// Stamps every record with the same value.
    Fixed(u64),
}

impl Clock {
    fn now(self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            Clock::Fixed(t) => t,
        }
    }
}

/// In-memory event log with an optional line-delimited sink.
pub struct EventLog {
    clock: Clock,
    records: Vec<EventRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("clock", &self.clock)
            .field("records", &self.records.len())
            .field("streaming", &self.sink.is_some())
            .finish()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new(Clock::System)
    }
}

impl EventLog {
    pub fn new(clock: Clock) -> Self {
        Self { clock, records: Vec::new(), sink: None }
    }

    /// Also writes every record to `sink` as it is appended.
    pub fn with_sink(mut self, sink: impl Write + Send + 'static) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn emit(&mut self, mut record: EventRecord) -> io::Result<()> {
        record.timestamp = self.clock.now();
        if let Some(sink) = self.sink.as_mut() {
            serde_json::to_writer(&mut *sink, &record)?;
            sink.write_all(b"\n")?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EventRecord> {
        self.records
    }
}

pub fn to_jsonl(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<EventRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Zeroes the `timestamp` field of every line so logs from separate runs
/// can be compared byte for byte.
pub fn strip_timestamps(jsonl: &str) -> String {
    let mut out = String::new();
    for line in jsonl.lines() {
        match serde_json::from_str::<serde_json::Value>(line) {
            Ok(mut v) => {
                if let Some(obj) = v.as_object_mut() {
                    obj.insert("timestamp".into(), serde_json::Value::from(0));
                }
                out.push_str(&v.to_string());
            }
            Err(_) => out.push_str(line),
        }
        out.push('\n');
    }
    out
}
