//! The network agent: capability timeline, envelope disclosure, Stage-1
//! admission and Stage-2 adaptation rounds.

mod agent;
mod enforcement;
mod envelope;
mod timeline;

use serde::{Deserialize, Serialize};

pub use agent::{ForcedAdaptation, M4Outcome, NetworkAgent, Notice, PendingAdaptation, Stage2Config};
pub use enforcement::{EnforcementHook, EnforcementRecord, RecordingEnforcer};
pub use envelope::{CapabilityEnvelope, EnvelopeEntry, UNKNOWN_FLOOR};
pub use timeline::{CapabilityTimeline, ConflictEntry, FeasibilityVerdict};

use crate::model::{AgentId, Interval, Kbps, ModelError, ProfileCatalog, Tick, WorkflowId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Malformed(#[from] ModelError),
    #[error("no active commitment {seq} for workflow {workflow}")]
    UnknownCommitment { workflow: WorkflowId, seq: u64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Degradation,
    Improvement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectedSegment {
    pub interval: Interval,
    /// Admissible rates, highest first. May be empty.
    pub alternatives: Vec<Kbps>,
}

/// M3 payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityNotification {
    pub workflow_id: WorkflowId,
    pub direction: Direction,
    pub affected: Vec<AffectedSegment>,
}

impl CapabilityNotification {
    pub fn is_empty(&self) -> bool {
        self.affected.is_empty()
    }
}

/// Envelope for `scope` derived from the timeline's full window residual.
pub fn derive_envelope(
    timeline: &CapabilityTimeline,
    catalog: &ProfileCatalog,
    scope: AgentId,
) -> CapabilityEnvelope {
    CapabilityEnvelope::from_residual(
        &timeline.window_residual(&[]),
        catalog,
        timeline.window(),
        scope,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineDecision {
    Granted,
    Rejected,
}

/// Request-driven admission: instantaneous residual only, no look-ahead.
pub fn baseline_admit(timeline: &CapabilityTimeline, rate: Kbps, now: Tick) -> BaselineDecision {
    if timeline.residual_at(now) >= rate.signed() {
        BaselineDecision::Granted
    } else {
        BaselineDecision::Rejected
    }
}

/// Catalog rates not above `limit`, highest first.
pub(crate) fn rates_at_most(catalog: &ProfileCatalog, limit: i64) -> Vec<Kbps> {
    catalog
        .iter()
        .rev()
        .map(|p| p.rate)
        .filter(|r| r.signed() <= limit)
        .collect()
}
