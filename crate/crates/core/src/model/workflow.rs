use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Kbps, ModelError, ProfileCatalog, Tick};

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(AgentId);
string_id!(WorkflowId);
string_id!(PhaseId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Critical,
    Routine,
    Background,
}

impl Criticality {
    /// Phases inside an active workflow step. Idle and cooldown style phases
    /// are `Background`.
    pub fn is_active(self) -> bool {
        !matches!(self, Criticality::Background)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowClass {
    CriticalInspection,
    RoutineMonitoring,
    BackgroundSensing,
}

impl WorkflowClass {
    pub const ALL: [WorkflowClass; 3] = [
        WorkflowClass::CriticalInspection,
        WorkflowClass::RoutineMonitoring,
        WorkflowClass::BackgroundSensing,
    ];

    pub fn criticality(self) -> Criticality {
        match self {
            WorkflowClass::CriticalInspection => Criticality::Critical,
            WorkflowClass::RoutineMonitoring => Criticality::Routine,
            WorkflowClass::BackgroundSensing => Criticality::Background,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkflowClass::CriticalInspection => "critical_inspection",
            WorkflowClass::RoutineMonitoring => "routine_monitoring",
            WorkflowClass::BackgroundSensing => "background_sensing",
        }
    }
}

/// One workflow phase. Profiles are referenced by rate; rates are unique
/// within a catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub phase_id: PhaseId,
    pub order_index: u32,
    pub duration: Tick,
    pub preferred: Kbps,
    /// Lower adaptation bound.
    pub min_acceptable: Kbps,
    pub deferrable: bool,
    pub max_deferral: Tick,
    pub criticality: Criticality,
}

impl PhaseSpec {
    pub fn validate(&self, catalog: &ProfileCatalog) -> Result<(), ModelError> {
        let bad = |why: &str| ModelError::InvalidPhase {
            phase: self.phase_id.to_string(),
            reason: why.to_string(),
        };
        if self.duration == 0 {
            return Err(bad("duration must be positive"));
        }
        if self.min_acceptable > self.preferred {
            return Err(bad("min_acceptable above preferred"));
        }
        if !self.deferrable && self.max_deferral != 0 {
            return Err(bad("max_deferral must be 0 for non-deferrable phases"));
        }
        for rate in [self.preferred, self.min_acceptable] {
            if catalog.by_rate(rate).is_none() {
                return Err(bad(&format!("{rate} is not a catalog profile")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub workflow_id: WorkflowId,
    pub agent_id: AgentId,
    pub class: WorkflowClass,
    /// Higher is more important.
    pub priority: i32,
    pub phases: Vec<PhaseSpec>,
    /// Arrival tick.
    pub release_tick: Tick,
}

impl WorkflowSpec {
    pub fn validate(&self, catalog: &ProfileCatalog) -> Result<(), ModelError> {
        if self.phases.is_empty() {
            return Err(ModelError::InvalidWorkflow {
                workflow: self.workflow_id.to_string(),
                reason: "no phases".into(),
            });
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.order_index as usize != i {
                return Err(ModelError::InvalidWorkflow {
                    workflow: self.workflow_id.to_string(),
                    reason: format!("phase {} has order_index {}, expected {i}", p.phase_id, p.order_index),
                });
            }
            p.validate(catalog)?;
        }
        Ok(())
    }

    pub fn total_duration(&self) -> Tick {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn phase(&self, id: &PhaseId) -> Option<&PhaseSpec> {
        self.phases.iter().find(|p| &p.phase_id == id)
    }
}
