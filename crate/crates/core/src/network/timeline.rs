use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::model::{
    residual_capacity, CapacitySchedule, Commitment, CommitmentState, DemandTrajectory, Interval,
    IntervalSet, Kbps, PlanningWindow, ProfileCatalog, Tick, WorkflowId,
};
use crate::step::StepFn;

/// One maximal violating interval and the highest profile whose rate fits
/// under the residual over all of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictEntry {
    pub interval: Interval,
    pub max_admissible: Option<Kbps>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "conflicts", rename_all = "snake_case")]
pub enum FeasibilityVerdict {
    Accept,
    Conflict(Vec<ConflictEntry>),
}

impl FeasibilityVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, FeasibilityVerdict::Accept)
    }
}

/// Capacity schedule plus every admitted commitment. The network agent's
/// source of truth for residual capacity.
#[derive(Clone, Debug)]
pub struct CapabilityTimeline {
    schedule: CapacitySchedule,
    commitments: BTreeMap<u64, Commitment>,
    window: PlanningWindow,
    next_admission_seq: u64,
}

impl CapabilityTimeline {
    pub fn new(schedule: CapacitySchedule, window: PlanningWindow) -> Self {
        Self {
            schedule,
            commitments: BTreeMap::new(),
            window,
            next_admission_seq: 1,
        }
    }

    pub fn schedule(&self) -> &CapacitySchedule {
        &self.schedule
    }

    pub fn window(&self) -> PlanningWindow {
        self.window
    }

    pub fn commitments(&self) -> impl Iterator<Item = &Commitment> {
        self.commitments.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &Commitment> {
        self.commitments.values().filter(|c| c.is_active())
    }

    pub fn commitment(&self, seq: u64) -> Option<&Commitment> {
        self.commitments.get(&seq)
    }

    pub fn active_for(&self, workflow: &WorkflowId) -> Option<&Commitment> {
        self.active().find(|c| &c.trajectory.workflow_id == workflow)
    }

    pub fn residual_at(&self, t: Tick) -> i64 {
        residual_capacity(&self.schedule, self.commitments.values(), t)
    }

    /// Residual over `domain`, leaving out the commitments in `exclude`.
    pub fn residual_fn(&self, domain: Interval, exclude: &[u64]) -> StepFn {
        let used = self
            .active()
            .filter(|c| !exclude.contains(&c.admission_seq))
            .flat_map(|c| c.trajectory.segments.iter())
            .map(|s| (s.interval, -s.rate.signed()));
        StepFn::from_schedule(&self.schedule, domain).add_pieces(used)
    }

    pub fn window_residual(&self, exclude: &[u64]) -> StepFn {
        self.residual_fn(self.window.interval(), exclude)
    }

    pub fn assess_feasibility(
        &self,
        catalog: &ProfileCatalog,
        trajectory: &DemandTrajectory,
    ) -> Result<FeasibilityVerdict, NetworkError> {
        self.assess_excluding(catalog, trajectory, None)
    }

    /// Feasibility inside the window, with `exclude` removed from the
    /// residual first.
    pub fn assess_excluding(
        &self,
        catalog: &ProfileCatalog,
        trajectory: &DemandTrajectory,
        exclude: Option<u64>,
    ) -> Result<FeasibilityVerdict, NetworkError> {
        trajectory.validate_structure()?;
        let exclude: Vec<u64> = exclude.into_iter().collect();
        let residual = self.window_residual(&exclude);
        let slack = residual.add_pieces(
            trajectory
                .segments
                .iter()
                .map(|s| (s.interval, -s.rate.signed())),
        );
        // Ticks where the proposal asks for nothing cannot be its fault, even
        // if a capacity drop left them overcommitted.
        let below = slack.where_below(0);
        let violating = IntervalSet::from_intervals(
            trajectory
                .segments
                .iter()
                .filter(|s| s.rate > Kbps::ZERO)
                .flat_map(|s| below.intersect_interval(&s.interval).intervals().to_vec()),
        );
        if violating.is_empty() {
            return Ok(FeasibilityVerdict::Accept);
        }
        let conflicts = violating
            .iter()
            .map(|iv| ConflictEntry {
                interval: *iv,
                max_admissible: residual
                    .min_over(iv)
                    .and_then(|m| catalog.highest_at_most(m))
                    .map(|p| p.rate),
            })
            .collect();
        Ok(FeasibilityVerdict::Conflict(conflicts))
    }

    /// Records an accepted trajectory.
    pub fn commit(
        &mut self,
        catalog: &ProfileCatalog,
        trajectory: DemandTrajectory,
    ) -> Result<u64, NetworkError> {
        match self.assess_feasibility(catalog, &trajectory)? {
            FeasibilityVerdict::Accept => Ok(self.insert(trajectory)),
            FeasibilityVerdict::Conflict(c) => Err(NetworkError::PreconditionViolated(format!(
                "commit of {} with {} conflicting interval(s)",
                trajectory.workflow_id,
                c.len()
            ))),
        }
    }

    /// Records a trajectory without any feasibility check. Used for external
    /// loads and for request-driven grants.
    pub fn insert(&mut self, trajectory: DemandTrajectory) -> u64 {
        let seq = self.next_admission_seq;
        self.next_admission_seq += 1;
        self.commitments.insert(
            seq,
            Commitment {
                admission_seq: seq,
                trajectory,
                state: CommitmentState::Active,
            },
        );
        seq
    }

    pub fn set_state(&mut self, seq: u64, state: CommitmentState) {
        if let Some(c) = self.commitments.get_mut(&seq) {
            c.state = state;
        }
    }

    /// Replaces the trajectory of an active commitment, keeping its seq.
    pub fn replace_trajectory(&mut self, seq: u64, trajectory: DemandTrajectory) {
        if let Some(c) = self.commitments.get_mut(&seq) {
            c.trajectory = trajectory;
        }
    }

    pub fn set_schedule(&mut self, schedule: CapacitySchedule) {
        self.schedule = schedule;
    }

    /// Moves the window to `now` and marks every active commitment that
    /// ended by then as completed. Returns the completed seqs.
    pub fn slide(&mut self, now: Tick) -> Vec<u64> {
        self.window.start = self.window.start.max(now);
        let mut done = Vec::new();
        for c in self.commitments.values_mut() {
            if c.is_active() && c.trajectory.end().is_none_or(|e| e <= now) {
                c.state = CommitmentState::Completed;
                done.push(c.admission_seq);
            }
        }
        done
    }

    /// Drops terminal commitments that ended before `before`, keeping memory
    /// bounded on long runs.
    pub fn prune(&mut self, before: Tick) {
        self.commitments.retain(|_, c| {
            c.is_active() || c.trajectory.end().is_some_and(|e| e >= before)
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AdaptationPermissions, AgentId, PhaseDemand, PhaseId, ProfileId, SegmentAssignment,
    };

    pub(crate) fn flat(workflow: &str, a: Tick, b: Tick, mbps: u64) -> DemandTrajectory {
        let rate = Kbps::from_mbps(mbps);
        DemandTrajectory {
            workflow_id: WorkflowId::new(workflow),
            agent_id: AgentId::new(workflow),
            priority: 1,
            not_before: a,
            phases: vec![PhaseDemand {
                phase_id: PhaseId::new("p"),
                order_index: 0,
                duration: b - a,
                preferred: rate,
                min_acceptable: rate,
                max_deferral: 0,
            }],
            segments: vec![SegmentAssignment {
                phase_id: PhaseId::new("p"),
                interval: Interval::new(a, b).unwrap(),
                profile: ProfileId::new(format!("gbr-{mbps}")),
                rate,
            }],
            permissions: AdaptationPermissions::default(),
        }
    }

    fn catalog() -> ProfileCatalog {
        ProfileCatalog::from_mbps_levels(&[1, 10, 20, 30], "").unwrap()
    }

    #[test]
    fn competing_twenty_conflicts_at_ten() {
        let mut tl = CapabilityTimeline::new(
            CapacitySchedule::constant(Kbps::from_mbps(30)),
            PlanningWindow::new(0, 2000).unwrap(),
        );
        tl.commit(&catalog(), flat("a", 0, 1000, 20)).unwrap();
        let v = tl.assess_feasibility(&catalog(), &flat("b", 0, 1000, 20)).unwrap();
        assert_eq!(
            v,
            FeasibilityVerdict::Conflict(vec![ConflictEntry {
                interval: Interval::new(0, 1000).unwrap(),
                max_admissible: Some(Kbps::from_mbps(10)),
            }])
        );
        assert!(tl.commit(&catalog(), flat("b", 0, 1000, 20)).is_err());
    }

    #[test]
    fn sequential_commits_and_slide() {
        let mut tl = CapabilityTimeline::new(
            CapacitySchedule::constant(Kbps::from_mbps(30)),
            PlanningWindow::new(0, 2000).unwrap(),
        );
        tl.commit(&catalog(), flat("a", 0, 100, 10)).unwrap();
        tl.commit(&catalog(), flat("b", 0, 200, 10)).unwrap();
        assert_eq!(tl.residual_at(50), 10_000);
        let done = tl.slide(100);
        assert_eq!(done, vec![1]);
        assert_eq!(tl.residual_at(150), 20_000);
        assert_eq!(tl.window().start, 100);
    }

    #[test]
    fn only_window_is_assessed() {
        let tl = CapabilityTimeline::new(
            CapacitySchedule::new(vec![(0, Kbps::from_mbps(30)), (300, Kbps::from_mbps(1))]).unwrap(),
            PlanningWindow::new(0, 300).unwrap(),
        );
        assert!(tl.assess_feasibility(&catalog(), &flat("a", 0, 400, 30)).unwrap().is_accept());
    }
}
