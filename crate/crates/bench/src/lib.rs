//! Fixtures shared by the criterion benchmarks in `benches/`.

use wfqos::industrial::{construct_trajectory, WorkflowState};
use wfqos::network::{derive_envelope, CapabilityTimeline};
use wfqos::*;

pub fn catalog() -> ProfileCatalog {
    ProfileCatalog::from_mbps_levels(&[1, 5, 10, 20, 30], "").expect("valid levels")
}

/// A cell with `n` staggered single-phase commitments over a 2000-tick window.
pub fn loaded_timeline(n: usize) -> CapabilityTimeline {
    let sched = CapacitySchedule::new(vec![
        (0, Kbps::from_mbps(450)),
        (1200, Kbps::from_mbps(220)),
    ])
    .expect("increasing epochs");
    let mut tl = CapabilityTimeline::new(sched, PlanningWindow::new(0, 2000).expect("positive"));
    for i in 0..n {
        let a = (i as Tick * 37) % 1800;
        tl.insert(flat(&format!("w{i}"), a, a + 150, Kbps::from_mbps(1 + (i as u64 % 3))));
    }
    tl
}

pub fn flat(id: &str, a: Tick, b: Tick, rate: Kbps) -> DemandTrajectory {
    let cat = catalog();
    DemandTrajectory {
        workflow_id: WorkflowId::new(id),
        agent_id: AgentId::new("bench"),
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
            interval: Interval::new(a, b).expect("non-empty"),
            profile: profile_for(&cat, rate),
            rate,
        }],
        permissions: AdaptationPermissions::default(),
    }
}

/// A four-phase workflow in the shape of the testbed inspection.
pub fn inspection_spec() -> WorkflowSpec {
    let rows = [(100, 1, 1), (370, 10, 10), (1100, 30, 10), (300, 1, 1)];
    WorkflowSpec {
        workflow_id: WorkflowId::new("inspection"),
        agent_id: AgentId::new("bench"),
        class: WorkflowClass::CriticalInspection,
        priority: 3,
        phases: rows
            .iter()
            .enumerate()
            .map(|(i, &(d, p, m))| PhaseSpec {
                phase_id: PhaseId::new(format!("p{i}")),
                order_index: i as u32,
                duration: d,
                preferred: Kbps::from_mbps(p),
                min_acceptable: Kbps::from_mbps(m),
                deferrable: false,
                max_deferral: 0,
                criticality: if p == 30 { Criticality::Critical } else { Criticality::Routine },
            })
            .collect(),
        release_tick: 0,
    }
}

/// The inspection planned against `tl`, as an admitted workflow state.
pub fn planned_state(tl: &CapabilityTimeline) -> WorkflowState {
    let cat = catalog();
    let env = derive_envelope(tl, &cat, AgentId::new("bench"));
    let spec = inspection_spec();
    let t = construct_trajectory(&spec, &env, &cat, 0).expect("feasible");
    let mut s = WorkflowState::new(spec);
    s.set_trajectory(t);
    s.admission_seq = Some(1);
    s
}
