use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::industrial::WorkflowStatus;
use crate::model::{Tick, WorkflowClass, WorkflowId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Conflict,
    Granted,
    Rejected,
    Withdrawn,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundCause {
    CapacityChange,
    Release,
    WindowAdvance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    CapacityChange {
        capacity_kbps: u64,
    },
    Arrival {
        workflow_id: WorkflowId,
        class: WorkflowClass,
    },
    /// Payloads are not logged; the codec reproduces them.
    Message {
        kind: String,
        seq: u64,
        from: String,
        to: String,
        deliver_at: Tick,
        workflow_id: Option<WorkflowId>,
    },
    Admission {
        workflow_id: WorkflowId,
        decision: Decision,
        admission_seq: Option<u64>,
        rate_kbps: Option<u64>,
    },
    AdaptationRound {
        cause: RoundCause,
        notices: usize,
    },
    Enforcement {
        workflow_id: WorkflowId,
        effective_at: Tick,
    },
    NetworkForced {
        workflow_id: WorkflowId,
        failed: bool,
    },
    PhaseStart {
        workflow_id: WorkflowId,
        phase: usize,
    },
    Interruption {
        workflow_id: WorkflowId,
        duration: Tick,
    },
    WorkflowEnd {
        workflow_id: WorkflowId,
        status: WorkflowStatus,
    },
    Delivered {
        delivered_kbps: u64,
        capacity_kbps: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(log: &[LogRecord], mut out: W) -> io::Result<()> {
    for r in log {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
