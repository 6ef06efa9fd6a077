//! Pieces shared by both run modes: allocation of capacity to senders, the
//! application-side overrun model, and run bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, OverrunConfig, ScenarioConfig};
use super::log::{LogEvent, LogRecord};
use super::metrics::{compute_utilization, Interruption, RunMetrics, Utilization};
use crate::industrial::{WorkflowState, WorkflowStatus};
use crate::model::{
    AdaptationPermissions, AgentId, CapacitySchedule, DemandTrajectory, Interval, Kbps,
    PhaseDemand, PhaseId, ProfileCatalog, SegmentAssignment, Tick, WorkflowId,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated at tick {tick}: {what}")]
    InvariantViolation { tick: Tick, what: String },
}

/// Per-tick delivered rate of every stream, kept for small scenarios only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub names: Vec<String>,
    /// `(tick, capacity, delivered per name)`, all in kbps.
    pub rows: Vec<(Tick, u64, Vec<u64>)>,
}

impl FlowTrace {
    pub const MAX_STREAMS: usize = 16;

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,capacity_kbps");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, cap, v) in &self.rows {
            out.push_str(&format!("{t},{cap}"));
            for x in v {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: Vec<LogRecord>,
    pub utilization: Utilization,
    pub trace: Option<FlowTrace>,
}

/// One sender asking for capacity this tick.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Claim {
    pub priority: i32,
    /// First admission seq; earlier admissions are served first.
    pub order: u64,
    pub sending: u64,
    pub slot: usize,
}

/// Serves claims by priority (high first), then admission order, each up to
/// its sending rate. Returns delivered kbps per slot.
pub(crate) fn allocate(capacity: u64, claims: &mut [Claim], slots: usize) -> Vec<u64> {
    claims.sort_by(|a, b| b.priority.cmp(&a.priority).then(a.order.cmp(&b.order)));
    let mut left = capacity;
    let mut out = vec![0; slots];
    for c in claims.iter() {
        let d = c.sending.min(left);
        out[c.slot] = d;
        left -= d;
    }
    out
}

/// Application-side stream state under the overrun model.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Stream {
    run: Tick,
    pub stalled_until: Tick,
}

impl Stream {
    pub fn stalled(&self, now: Tick) -> bool {
        now < self.stalled_until
    }

    /// Feeds one tick. Returns the interruption length when the stream
    /// breaks; it is stalled from the next tick on.
    pub fn observe(
        &mut self,
        sending: u64,
        delivered: u64,
        now: Tick,
        model: Option<OverrunConfig>,
    ) -> Option<Tick> {
        let o = model?;
        if sending > delivered {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.run >= o.loss_to_interrupt_ticks {
            self.run = 0;
            self.stalled_until = now + 1 + o.interruption_ticks;
            return Some(o.interruption_ticks);
        }
        None
    }
}

pub(crate) struct External {
    pub id: WorkflowId,
    pub trajectory: DemandTrajectory,
    pub known_at: Tick,
    pub interval: Interval,
    pub rate: Kbps,
    pub priority: i32,
    pub seq: Option<u64>,
}

impl External {
    pub fn sending(&self, now: Tick) -> u64 {
        if self.seq.is_some() && self.interval.contains(now) {
            self.rate.0
        } else {
            0
        }
    }
}

pub(crate) fn externals(cfg: &ScenarioConfig, catalog: &ProfileCatalog) -> Vec<External> {
    cfg.external
        .iter()
        .map(|x| {
            let rate = Kbps::from_mbps_f64(x.mbps);
            let interval = Interval::new(x.start, x.end).expect("validated");
            let id = WorkflowId::new(x.id.clone());
            let phase = PhaseId::new("load");
            let trajectory = DemandTrajectory {
                workflow_id: id.clone(),
                agent_id: AgentId::new(format!("external:{}", x.id)),
                priority: x.priority,
                not_before: x.start,
                phases: vec![PhaseDemand {
                    phase_id: phase.clone(),
                    order_index: 0,
                    duration: interval.len(),
                    preferred: rate,
                    min_acceptable: rate,
                    max_deferral: 0,
                }],
                segments: vec![SegmentAssignment {
                    phase_id: phase,
                    interval,
                    profile: crate::model::profile_for(catalog, rate),
                    rate,
                }],
                permissions: AdaptationPermissions {
                    allow_downgrade: false,
                    allow_defer: false,
                    allow_replan: false,
                },
            };
            External {
                id,
                trajectory,
                known_at: x.known_at,
                interval,
                rate,
                priority: x.priority,
                seq: None,
            }
        })
        .collect()
}

/// Where a running workflow is at `now`: its phase and whether `now` lies
/// inside that phase (not in a deferral gap).
pub(crate) struct PhaseNow<'a> {
    pub phase: &'a PhaseDemand,
    pub active: bool,
}

pub(crate) fn phase_now<'a>(
    state: &WorkflowState,
    trajectory: &'a DemandTrajectory,
    now: Tick,
) -> Option<PhaseNow<'a>> {
    if state.status != WorkflowStatus::Running {
        return None;
    }
    let phase = trajectory.phases.get(state.current_phase_index)?;
    let iv = trajectory.phase_interval(&phase.phase_id)?;
    if !iv.contains(now) {
        return None;
    }
    let active = state
        .criticality_of(&phase.phase_id)
        .is_some_and(|c| c.is_active());
    Some(PhaseNow { phase, active })
}

/// Log, counters and traces common to both modes.
pub(crate) struct Recorder {
    pub log: Vec<LogRecord>,
    pub messages: BTreeMap<String, usize>,
    pub interruptions: Vec<Interruption>,
    active_kbps: u128,
    active_ticks: u64,
    pub trace: Option<FlowTrace>,
    pub max_overcommit: Tick,
}

impl Recorder {
    pub fn new(trace_names: Option<Vec<String>>) -> Self {
        Self {
            log: Vec::new(),
            messages: BTreeMap::new(),
            interruptions: Vec::new(),
            active_kbps: 0,
            active_ticks: 0,
            trace: trace_names.map(|names| FlowTrace {
                names,
                rows: Vec::new(),
            }),
            max_overcommit: 0,
        }
    }

    pub fn push(&mut self, tick: Tick, event: LogEvent) {
        self.log.push(LogRecord { tick, event });
    }

    pub fn active_sample(&mut self, delivered: u64) {
        self.active_kbps += delivered as u128;
        self.active_ticks += 1;
    }

    pub fn interruption(&mut self, workflow_id: &WorkflowId, start: Tick, duration: Tick) {
        self.interruptions.push(Interruption {
            workflow_id: workflow_id.clone(),
            start,
            duration,
        });
        self.push(
            start,
            LogEvent::Interruption {
                workflow_id: workflow_id.clone(),
                duration,
            },
        );
    }

    pub fn end_tick(&mut self, tick: Tick, capacity: u64, delivered: &[u64]) {
        let total = delivered.iter().sum();
        self.push(
            tick,
            LogEvent::Delivered {
                delivered_kbps: total,
                capacity_kbps: capacity,
            },
        );
        if let Some(t) = self.trace.as_mut() {
            t.rows.push((tick, capacity, delivered.to_vec()));
        }
    }

    /// Folds the per-workflow outcomes into the metrics document.
    pub fn finish<'a>(
        self,
        cfg: &ScenarioConfig,
        ticks: Tick,
        states: impl Iterator<Item = &'a WorkflowState>,
        actual: &CapacitySchedule,
        mut metrics: RunMetrics,
    ) -> RunOutput {
        for s in states {
            metrics.total_workflows += 1;
            let c = metrics
                .per_class
                .entry(s.spec.class.as_str().to_string())
                .or_default();
            c.total += 1;
            match s.status {
                WorkflowStatus::CompletedOptimal => {
                    metrics.completed_optimal += 1;
                    c.completed_optimal += 1;
                }
                WorkflowStatus::CompletedDegraded => {
                    metrics.completed_degraded += 1;
                    c.completed_degraded += 1;
                }
                _ => {
                    metrics.failed += 1;
                    c.failed += 1;
                }
            }
        }
        metrics.scenario = cfg.name.clone();
        metrics.mode = cfg.mode;
        metrics.seed = cfg.seed;
        metrics.agent_count = cfg.agent_count;
        metrics.ticks_simulated = ticks;
        metrics.completion_rate = if metrics.total_workflows == 0 {
            0.0
        } else {
            (metrics.completed_optimal + metrics.completed_degraded) as f64
                / metrics.total_workflows as f64
        };
        metrics.stream_interruptions = self.interruptions.len();
        metrics.interruptions = self.interruptions;
        metrics.mean_active_throughput_mbps = if self.active_ticks == 0 {
            0.0
        } else {
            self.active_kbps as f64 / self.active_ticks as f64 / 1000.0
        };
        metrics.messages = self.messages;
        metrics.max_overcommit_ticks = self.max_overcommit;
        let utilization = compute_utilization(&self.log, actual);
        metrics.utilization = utilization.scalar;
        metrics.adaptation_times_ticks = metrics
            .adaptation_rounds
            .iter()
            .filter_map(|r| r.duration())
            .collect();
        RunOutput {
            metrics,
            log: self.log,
            utilization,
            trace: self.trace,
        }
    }
}
