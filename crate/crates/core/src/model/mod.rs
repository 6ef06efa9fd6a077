//! Domain types shared by every other module, plus the pure time and
//! capacity arithmetic built on them.

mod rate;
mod time;
mod trajectory;
mod workflow;

pub use rate::{CapacitySchedule, Kbps, ProfileCatalog, ProfileId, QosProfile};
pub use time::{Interval, IntervalSet, PlanningWindow, Tick, DEFAULT_TICK_MS};
pub use trajectory::{
    demand_at, profile_for, residual_capacity, AdaptationPermissions, Commitment, CommitmentState,
    DemandTrajectory, PhaseDemand, SegmentAssignment,
};
pub use workflow::{AgentId, Criticality, PhaseId, PhaseSpec, WorkflowClass, WorkflowId, WorkflowSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("interval [{start},{end}) is empty")]
    EmptyInterval { start: Tick, end: Tick },
    #[error("planning window length must be positive")]
    EmptyWindow,
    #[error("profile catalog is empty")]
    EmptyCatalog,
    #[error("profile {0} must have a positive rate")]
    NonPositiveRate(ProfileId),
    #[error("duplicate profile {0}")]
    DuplicateProfile(String),
    #[error("capacity schedule must start at tick 0")]
    ScheduleStart,
    #[error("capacity epochs must have strictly increasing start ticks")]
    ScheduleOrder,
    #[error("phase {phase}: {reason}")]
    InvalidPhase { phase: String, reason: String },
    #[error("workflow {workflow}: {reason}")]
    InvalidWorkflow { workflow: String, reason: String },
    #[error("malformed trajectory for {workflow}: {reason}")]
    MalformedTrajectory { workflow: String, reason: String },
}
