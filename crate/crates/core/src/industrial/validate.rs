use serde::{Deserialize, Serialize};

use crate::model::{DemandTrajectory, Interval, Kbps, WorkflowId};
use crate::network::CapabilityEnvelope;
use crate::step::StepFn;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalConflict {
    pub workflow_id: WorkflowId,
    pub interval: Interval,
    pub rate: Kbps,
}

/// Every in-window part of every segment must lie in the validity set of its
/// profile. Necessary for acceptance, not sufficient once several workflows
/// of one agent overlap; see [`validate_concurrent`].
pub fn validate_locally(
    trajectory: &DemandTrajectory,
    envelope: &CapabilityEnvelope,
) -> Result<(), Vec<LocalConflict>> {
    let window = envelope.window.interval();
    let mut conflicts = Vec::new();
    for s in &trajectory.segments {
        let Some(inner) = s.interval.intersect(&window) else {
            continue;
        };
        let validity = envelope
            .entry(s.rate)
            .map(|e| e.validity.clone())
            .unwrap_or_default();
        for bad in validity.complement_within(&inner).iter() {
            conflicts.push(LocalConflict {
                workflow_id: trajectory.workflow_id.clone(),
                interval: *bad,
                rate: s.rate,
            });
        }
    }
    if conflicts.is_empty() {
        Ok(())
    } else {
        Err(conflicts)
    }
}

/// Sufficient check for one agent's overlapping workflows: their summed
/// demand must stay under the disclosed residual floor at every window tick.
pub fn validate_concurrent(
    trajectories: &[&DemandTrajectory],
    envelope: &CapabilityEnvelope,
) -> Result<(), Vec<Interval>> {
    let floor = envelope.residual_floor();
    let slack: StepFn = floor.add_pieces(
        trajectories
            .iter()
            .flat_map(|t| t.demand_pieces())
            .map(|(iv, r)| (iv, -r)),
    );
    // Ticks with no demand are never conflicts, even where the floor is
    // unknown.
    let demand = StepFn::constant(floor.domain(), 0)
        .add_pieces(trajectories.iter().flat_map(|t| t.demand_pieces()));
    let busy = demand.where_at_least(1);
    let bad: Vec<Interval> = slack
        .where_below(0)
        .iter()
        .flat_map(|iv| busy.intersect_interval(iv).intervals().to_vec())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}
