use serde::{Deserialize, Serialize};

use crate::model::{Kbps, SegmentAssignment, Tick, WorkflowId};

/// Outbound policy-control call. A deployment binds this to a PCF-style
/// client; the simulator uses [`RecordingEnforcer`].
pub trait EnforcementHook {
    /// Requests enforcement of `schedule` for `workflow_id`, issued at `now`.
    fn apply_qos(&mut self, workflow_id: &WorkflowId, schedule: &[SegmentAssignment], now: Tick);

    /// Stops enforcing anything for `workflow_id`.
    fn release(&mut self, workflow_id: &WorkflowId, now: Tick) {
        let _ = (workflow_id, now);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnforcementRecord {
    pub workflow_id: WorkflowId,
    pub issued_at: Tick,
    pub effective_at: Tick,
    /// Empty for a release.
    pub segments: Vec<SegmentAssignment>,
}

impl EnforcementRecord {
    pub fn rate_at(&self, t: Tick) -> Kbps {
        self.segments
            .iter()
            .find(|s| s.interval.contains(t))
            .map_or(Kbps::ZERO, |s| s.rate)
    }
}

/// Stub enforcer: every call takes effect `latency` ticks after it is made.
#[derive(Clone, Debug, Default)]
pub struct RecordingEnforcer {
    latency: Tick,
    records: Vec<EnforcementRecord>,
}

impl RecordingEnforcer {
    /// 20 ticks, i.e. about 2 s of policy-control latency at 100 ms ticks.
    pub const DEFAULT_LATENCY: Tick = 20;

    pub fn new(latency: Tick) -> Self {
        Self {
            latency,
            records: Vec::new(),
        }
    }

    pub fn latency(&self) -> Tick {
        self.latency
    }

    pub fn records(&self) -> &[EnforcementRecord] {
        &self.records
    }

    /// Takes every record made since the last drain.
    pub fn drain(&mut self) -> Vec<EnforcementRecord> {
        std::mem::take(&mut self.records)
    }
}

impl EnforcementHook for RecordingEnforcer {
    fn apply_qos(&mut self, workflow_id: &WorkflowId, schedule: &[SegmentAssignment], now: Tick) {
        self.records.push(EnforcementRecord {
            workflow_id: workflow_id.clone(),
            issued_at: now,
            effective_at: now + self.latency,
            segments: schedule.to_vec(),
        });
    }

    fn release(&mut self, workflow_id: &WorkflowId, now: Tick) {
        self.records.push(EnforcementRecord {
            workflow_id: workflow_id.clone(),
            issued_at: now,
            effective_at: now,
            segments: Vec::new(),
        });
    }
}
