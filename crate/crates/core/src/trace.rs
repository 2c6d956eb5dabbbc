//! Episode trace rows and their JSONL and CSV encodings.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::PlanningMode;

pub const TRACE_SCHEMA: &str = "episync-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Unrecoverable,
    NoFutureSync,
    Infeasible,
    PlanExhausted,
    Timeout,
    InvalidScript,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Unrecoverable => "unrecoverable",
            Self::NoFutureSync => "no_future_sync",
            Self::Infeasible => "infeasible",
            Self::PlanExhausted => "plan_exhausted",
            Self::Timeout => "timeout",
            Self::InvalidScript => "invalid_script",
        }
    }
}

/// One event of an episode. Variants are listed in their within-step order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent<S> {
    TaskUpdateApplied {
        removed: Vec<String>,
        added: Vec<String>,
    },
    Realized {
        agent: usize,
        state: S,
    },
    Disturbance {
        agent: usize,
        planned: S,
        realized: S,
        n_star: Option<usize>,
    },
    Recovery {
        agent: usize,
        steps: usize,
        rejoin_step: usize,
    },
    TaskSatisfied {
        label: String,
        agent: usize,
    },
    Sync {
        agent: usize,
        belief_changed: bool,
    },
    PlanRevision {
        mode: PlanningMode,
        pins: usize,
        sync_visits: usize,
        plan_end: usize,
        plan_hash: String,
    },
    Done {
        task_time: usize,
    },
    Abort {
        reason: AbortReason,
        detail: String,
    },
}

impl<S> TraceEvent<S> {
    pub fn priority(&self) -> u8 {
        match self {
            Self::TaskUpdateApplied { .. } => 0,
            Self::Realized { .. } => 1,
            Self::Disturbance { .. } => 2,
            Self::Recovery { .. } => 3,
            Self::TaskSatisfied { .. } => 4,
            Self::Sync { .. } => 5,
            Self::PlanRevision { .. } => 6,
            Self::Done { .. } | Self::Abort { .. } => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::TaskUpdateApplied { .. } => "task_update_applied",
            Self::Realized { .. } => "realized",
            Self::Disturbance { .. } => "disturbance",
            Self::Recovery { .. } => "recovery",
            Self::TaskSatisfied { .. } => "task_satisfied",
            Self::Sync { .. } => "sync",
            Self::PlanRevision { .. } => "plan_revision",
            Self::Done { .. } => "done",
            Self::Abort { .. } => "abort",
        }
    }

    pub fn agent(&self) -> Option<usize> {
        match self {
            Self::Realized { agent, .. }
            | Self::Disturbance { agent, .. }
            | Self::Recovery { agent, .. }
            | Self::TaskSatisfied { agent, .. }
            | Self::Sync { agent, .. } => Some(*agent),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Self::Done { .. } | Self::Abort { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow<S> {
    pub step: usize,
    #[serde(flatten)]
    pub event: TraceEvent<S>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no terminal row")]
    Incomplete,
    #[error("trace has more than one terminal row")]
    MultipleTerminals,
    #[error("trace rows out of order at row {0}")]
    OutOfOrder(usize),
    #[error("corrupt trace at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered trace rows of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpisodeTrace<S> {
    pub rows: Vec<TraceRow<S>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
}

impl<S> EpisodeTrace<S> {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    /// Appends the rows of one step, ordered by event priority.
    pub fn extend_step(&mut self, step: usize, mut events: Vec<TraceEvent<S>>) {
        events.sort_by_key(|e| e.priority());
        self.rows
            .extend(events.into_iter().map(|event| TraceRow { step, event }));
    }

    pub fn terminal(&self) -> Option<&TraceRow<S>> {
        self.rows.iter().rev().find(|r| r.event.is_terminal())
    }

    /// Checks ordering and the single-terminal invariant.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, w) in self.rows.windows(2).enumerate() {
            if (w[0].step, w[0].event.priority()) > (w[1].step, w[1].event.priority()) {
                return Err(TraceError::OutOfOrder(i + 1));
            }
        }
        match self.rows.iter().filter(|r| r.event.is_terminal()).count() {
            0 => Err(TraceError::Incomplete),
            1 if self.rows.last().is_some_and(|r| r.event.is_terminal()) => Ok(()),
            1 => Err(TraceError::OutOfOrder(self.rows.len() - 1)),
            _ => Err(TraceError::MultipleTerminals),
        }
    }
}

impl<S: Serialize> EpisodeTrace<S> {
    /// Line-delimited JSON: a schema header followed by one row per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header {
            schema: TRACE_SCHEMA.into(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Flat CSV with columns `step,event,agent,payload`; the payload holds the
    /// remaining fields as compact JSON.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "event", "agent", "payload"])?;
        for row in &self.rows {
            let mut value = serde_json::to_value(&row.event).expect("event serializes");
            if let Some(obj) = value.as_object_mut() {
                obj.remove("event");
                obj.remove("agent");
            }
            let agent = row.event.agent().map(|a| a.to_string()).unwrap_or_default();
            w.write_record([
                row.step.to_string(),
                row.event.kind().to_string(),
                agent,
                value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

impl<S: DeserializeOwned> EpisodeTrace<S> {
    /// Parses and validates a JSONL trace.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate();
        let corrupt = |line: usize, message: String| TraceError::Corrupt { line: line + 1, message };
        let (n, first) = lines.next().ok_or_else(|| corrupt(0, "empty trace".into()))?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| corrupt(n, e.to_string()))?;
        if header.schema != TRACE_SCHEMA {
            return Err(corrupt(n, format!("unsupported schema `{}`", header.schema)));
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?);
        }
        let trace = Self { rows };
        trace.validate()?;
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EpisodeTrace<i32> {
        let mut t = EpisodeTrace::new();
        t.extend_step(
            0,
            vec![
                TraceEvent::Sync { agent: 0, belief_changed: false },
                TraceEvent::Realized { agent: 0, state: 3 },
            ],
        );
        t.extend_step(1, vec![TraceEvent::Done { task_time: 1 }]);
        t
    }

    #[test]
    fn rows_sorted_within_step() {
        let t = sample();
        assert_eq!(t.rows[0].event.kind(), "realized");
        assert_eq!(t.rows[1].event.kind(), "sync");
        t.validate().unwrap();
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample();
        let text = t.to_jsonl();
        assert!(text.starts_with("{\"schema\":\"episync-trace/1\"}\n"));
        assert!(text.contains("{\"step\":0,\"event\":\"realized\",\"agent\":0,\"state\":3}"));
        let back = EpisodeTrace::<i32>::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_has_flat_columns() {
        let csv = sample().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "step,event,agent,payload");
        assert_eq!(lines[1], "0,realized,0,\"{\"\"state\"\":3}\"");
        assert_eq!(lines[3], "1,done,,\"{\"\"task_time\"\":1}\"");
    }

    #[test]
    fn incomplete_and_corrupt_traces_rejected() {
        let mut t = sample();
        t.rows.pop();
        assert!(matches!(t.validate(), Err(TraceError::Incomplete)));
        let bad = "{\"schema\":\"episync-trace/1\"}\nnot json\n";
        assert!(matches!(
            EpisodeTrace::<i32>::read_jsonl(bad.as_bytes()),
            Err(TraceError::Corrupt { line: 2, .. })
        ));
    }
}
