#![allow(dead_code)]

use proptest::prelude::*;
use wfqos::industrial::WorkflowState;
use wfqos::network::CapabilityTimeline;
use wfqos::*;

pub fn iv(a: Tick, b: Tick) -> Interval {
    Interval::new(a, b).unwrap()
}

pub fn mbps(m: u64) -> Kbps {
    Kbps::from_mbps(m)
}

pub fn catalog(levels: &[u64]) -> ProfileCatalog {
    ProfileCatalog::from_mbps_levels(levels, "").unwrap()
}

pub fn testbed_catalog() -> ProfileCatalog {
    catalog(&[1, 10, 30])
}

pub fn seg(catalog: &ProfileCatalog, phase: &str, a: Tick, b: Tick, rate: Kbps) -> SegmentAssignment {
    SegmentAssignment {
        phase_id: PhaseId::new(phase),
        interval: iv(a, b),
        profile: profile_for(catalog, rate),
        rate,
    }
}

/// One phase, one segment, no adaptation freedom.
pub fn flat(workflow: &str, agent: &str, priority: i32, a: Tick, b: Tick, rate: Kbps) -> DemandTrajectory {
    let cat = catalog(&[1, 5, 10, 20, 30]);
    DemandTrajectory {
        workflow_id: WorkflowId::new(workflow),
        agent_id: AgentId::new(agent),
        priority,
        not_before: a,
        phases: vec![PhaseDemand {
            phase_id: PhaseId::new("p"),
            order_index: 0,
            duration: b - a,
            preferred: rate,
            min_acceptable: rate,
            max_deferral: 0,
        }],
        segments: vec![seg(&cat, "p", a, b, rate)],
        permissions: AdaptationPermissions {
            allow_downgrade: false,
            allow_defer: false,
            allow_replan: false,
        },
    }
}

/// `(duration, preferred, min, max_deferral, criticality)` per phase.
pub type PhaseRow = (Tick, u64, u64, Tick, Criticality);

pub fn spec(id: &str, agent: &str, class: WorkflowClass, priority: i32, release: Tick, rows: &[PhaseRow]) -> WorkflowSpec {
    WorkflowSpec {
        workflow_id: WorkflowId::new(id),
        agent_id: AgentId::new(agent),
        class,
        priority,
        phases: rows
            .iter()
            .enumerate()
            .map(|(i, &(d, p, m, defer, c))| PhaseSpec {
                phase_id: PhaseId::new(format!("{id}-p{i}")),
                order_index: i as u32,
                duration: d,
                preferred: mbps(p),
                min_acceptable: mbps(m),
                deferrable: defer > 0,
                max_deferral: defer,
                criticality: c,
            })
            .collect(),
        release_tick: release,
    }
}

/// The testbed inspection workflow: idle, patrol, inspection, cooldown.
pub fn dtb_spec() -> WorkflowSpec {
    let mut s = spec(
        "dtb",
        "dtb",
        WorkflowClass::CriticalInspection,
        3,
        0,
        &[
            (100, 1, 1, 0, Criticality::Background),
            (370, 10, 10, 0, Criticality::Routine),
            (1100, 30, 10, 0, Criticality::Critical),
            (300, 1, 1, 0, Criticality::Background),
        ],
    );
    for (p, name) in s.phases.iter_mut().zip(["idle", "patrol", "inspection", "cooldown"]) {
        p.phase_id = PhaseId::new(name);
    }
    s
}

pub fn testbed_timeline(window_len: Tick) -> CapabilityTimeline {
    CapabilityTimeline::new(
        CapacitySchedule::constant(mbps(30)),
        PlanningWindow::new(0, window_len).unwrap(),
    )
}

pub fn competitor() -> DemandTrajectory {
    flat("competitor", "external", 10, 550, 800, mbps(20))
}

pub fn state_with(spec: WorkflowSpec, t: DemandTrajectory, seq: Option<u64>) -> WorkflowState {
    let mut s = WorkflowState::new(spec);
    s.set_trajectory(t);
    s.admission_seq = seq;
    s
}

/// Per-tick oracle: capacity minus every active commitment's rate.
pub fn brute_residual(schedule: &CapacitySchedule, active: &[&DemandTrajectory], t: Tick) -> i64 {
    let mut r = schedule.capacity_at(t).0 as i64;
    for tr in active {
        for s in &tr.segments {
            if s.interval.start() <= t && t < s.interval.end() {
                r -= s.rate.0 as i64;
            }
        }
    }
    r
}

pub fn brute_active_residual(tl: &CapabilityTimeline, t: Tick) -> i64 {
    let active: Vec<&DemandTrajectory> = tl.active().map(|c| &c.trajectory).collect();
    brute_residual(tl.schedule(), &active, t)
}

/// Expands an interval set into its member ticks.
pub fn ticks_of(set: &IntervalSet) -> Vec<Tick> {
    set.iter().flat_map(|i| i.start()..i.end()).collect()
}

// Strategies for small random instances.

pub fn arb_levels() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::btree_set(1u64..40, 1..=5).prop_map(|s| s.into_iter().collect())
}

pub fn arb_schedule(horizon: Tick) -> impl Strategy<Value = CapacitySchedule> {
    (
        0u64..60,
        prop::collection::vec((1..horizon, 0u64..60), 0..3),
    )
        .prop_map(|(first, rest)| {
            let mut epochs = vec![(0, mbps(first))];
            let mut rest = rest;
            rest.sort_by_key(|(t, _)| *t);
            rest.dedup_by_key(|(t, _)| *t);
            epochs.extend(rest.into_iter().map(|(t, m)| (t, mbps(m))));
            CapacitySchedule::new(epochs).unwrap()
        })
}

/// A single-segment trajectory on `[a, a + len)` within `horizon`.
pub fn arb_flat(horizon: Tick, levels: Vec<u64>) -> impl Strategy<Value = DemandTrajectory> {
    let n = levels.len();
    (0..horizon - 1, 1..horizon, 0..n, 0i32..5).prop_map(move |(a, len, li, prio)| {
        let b = (a + len).min(horizon).max(a + 1);
        flat("w", "a", prio, a, b, mbps(levels[li]))
    })
}

/// Timeline holding the competitor, and the envelope the DTB sees from it.
pub fn contended() -> (CapabilityTimeline, wfqos::network::CapabilityEnvelope) {
    let mut tl = testbed_timeline(1870);
    tl.insert(competitor());
    let env = wfqos::network::derive_envelope(&tl, &testbed_catalog(), AgentId::new("dtb"));
    (tl, env)
}

/// The DTB plan laid out around the competitor: inspection at 30/10/30.
pub fn dtb_split() -> DemandTrajectory {
    let (_, env) = contended();
    wfqos::industrial::construct_trajectory(&dtb_spec(), &env, &testbed_catalog(), 0).unwrap()
}

pub fn rows_of(t: &DemandTrajectory) -> Vec<(Tick, Tick, u64)> {
    t.segments
        .iter()
        .map(|s| (s.interval.start(), s.interval.end(), s.rate.0 / 1000))
        .collect()
}
