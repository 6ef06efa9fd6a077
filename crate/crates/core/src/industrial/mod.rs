//! The industrial agent: workflow state, trajectory construction and
//! validation against a cached envelope, and adaptation to notifications.

mod adapt;
mod layout;
mod validate;
mod view;

use serde::{Deserialize, Serialize};

pub use adapt::{adapt, AdaptContext, AdaptOutcome};
pub use layout::{construct_trajectory, construct_with_view, extend_trajectory, permissions_for};
pub use validate::{validate_concurrent, validate_locally, LocalConflict};
pub use view::CapabilityView;

use crate::model::{
    AdaptationPermissions, DemandTrajectory, Interval, PhaseId, Tick, WorkflowSpec,
};
use crate::network::CapabilityEnvelope;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndustrialError {
    #[error("phase {phase} has no admissible layout at {interval}")]
    InfeasibleWorkflow { phase: PhaseId, interval: Interval },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    AcceptLower,
    Defer,
    DowngradeNoncritical,
    Replan,
}

impl Strategy {
    pub fn permitted(self, p: AdaptationPermissions) -> bool {
        match self {
            Strategy::AcceptLower | Strategy::DowngradeNoncritical => p.allow_downgrade,
            Strategy::Defer => p.allow_defer,
            Strategy::Replan => p.allow_replan,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationPolicy {
    pub strategy_order: Vec<Strategy>,
}

impl Default for AdaptationPolicy {
    fn default() -> Self {
        Self {
            strategy_order: vec![
                Strategy::AcceptLower,
                Strategy::Defer,
                Strategy::DowngradeNoncritical,
                Strategy::Replan,
            ],
        }
    }
}

impl AdaptationPolicy {
    pub fn new(strategy_order: Vec<Strategy>) -> Result<Self, String> {
        if strategy_order.is_empty() {
            return Err("strategy_order must not be empty".into());
        }
        Ok(Self { strategy_order })
    }

    /// Strategies in order, minus those the trajectory does not permit.
    pub fn effective(&self, p: AdaptationPermissions) -> impl Iterator<Item = Strategy> + '_ {
        self.strategy_order.iter().copied().filter(move |s| s.permitted(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowStatus {
    Pending,
    Running,
    CompletedOptimal,
    CompletedDegraded,
    Failed,
}

impl WorkflowStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            WorkflowStatus::CompletedOptimal | WorkflowStatus::CompletedDegraded | WorkflowStatus::Failed
        )
    }
}

/// Ask for a fresh envelope and extend the trajectory from `from_phase`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resubmission {
    pub from_phase: usize,
}

#[derive(Clone, Debug)]
pub struct WorkflowState {
    pub spec: WorkflowSpec,
    pub current_phase_index: usize,
    pub phase_start_tick: Option<Tick>,
    /// Working trajectory: the draft before admission, the commitment after.
    pub trajectory: Option<DemandTrajectory>,
    pub admission_seq: Option<u64>,
    pub cached_envelope: Option<CapabilityEnvelope>,
    pub status: WorkflowStatus,
    shortfall: bool,
    deferred: bool,
}

impl WorkflowState {
    pub fn new(spec: WorkflowSpec) -> Self {
        Self {
            spec,
            current_phase_index: 0,
            phase_start_tick: None,
            trajectory: None,
            admission_seq: None,
            cached_envelope: None,
            status: WorkflowStatus::Pending,
            shortfall: false,
            deferred: false,
        }
    }

    /// Adopts a trajectory as the working one.
    pub fn set_trajectory(&mut self, t: DemandTrajectory) {
        self.deferred |= t.has_deferral();
        self.trajectory = Some(t);
    }

    pub fn start(&mut self, now: Tick) {
        if self.status == WorkflowStatus::Pending {
            self.status = WorkflowStatus::Running;
            self.phase_start_tick = Some(now);
        }
    }

    /// Records that some in-phase tick delivered less than preferred.
    pub fn mark_shortfall(&mut self) {
        self.shortfall = true;
    }

    pub fn is_degraded(&self) -> bool {
        self.shortfall || self.deferred
    }

    pub fn fail(&mut self) {
        if !self.status.is_terminal() {
            self.status = WorkflowStatus::Failed;
        }
    }

    /// Called when the current phase's last segment ends.
    pub fn on_phase_boundary(&mut self, now: Tick) -> Option<Resubmission> {
        if self.status != WorkflowStatus::Running {
            return None;
        }
        self.current_phase_index += 1;
        if self.current_phase_index >= self.spec.phases.len() {
            self.status = if self.is_degraded() {
                WorkflowStatus::CompletedDegraded
            } else {
                WorkflowStatus::CompletedOptimal
            };
            return None;
        }
        let planned = self.trajectory.as_ref().map_or(0, |t| t.phases.len());
        self.phase_start_tick = self
            .trajectory
            .as_ref()
            .and_then(|t| t.phase_interval(&self.spec.phases[self.current_phase_index].phase_id))
            .map(|iv| iv.start())
            .or(Some(now));
        (planned < self.spec.phases.len()).then_some(Resubmission { from_phase: planned })
    }

    /// The M2 view of the working trajectory. Criticality and any other
    /// workflow-internal detail never enter a `DemandTrajectory`.
    pub fn abstract_for_submission(&self) -> Option<DemandTrajectory> {
        self.trajectory.clone()
    }

    pub fn criticality_of(&self, phase: &PhaseId) -> Option<crate::model::Criticality> {
        self.spec.phase(phase).map(|p| p.criticality)
    }
}
