use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::log::{LogEvent, LogRecord, RoundCause};
use crate::model::{CapacitySchedule, Tick, WorkflowId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interruption {
    pub workflow_id: WorkflowId,
    pub start: Tick,
    pub duration: Tick,
}

/// One batch of M3s issued at the same tick.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationRound {
    pub trigger_tick: Tick,
    pub cause: RoundCause,
    pub notices: usize,
    /// When the last notified workflow had its answer enforced, abandoned,
    /// or was degraded by the network.
    pub completed_at: Option<Tick>,
}

impl AdaptationRound {
    pub fn duration(&self) -> Option<Tick> {
        self.completed_at.map(|c| c - self.trigger_tick)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub total: usize,
    pub completed_optimal: usize,
    pub completed_degraded: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub agent_count: usize,
    pub ticks_simulated: Tick,
    pub total_workflows: usize,
    pub completed_optimal: usize,
    pub completed_degraded: usize,
    pub failed: usize,
    pub completion_rate: f64,
    pub hard_rejections: usize,
    /// Stage-1 and M4 conflicts answered in coordinated mode.
    pub negotiation_conflicts: usize,
    pub network_forced: usize,
    /// Workflows still running when the drain limit was hit; counted failed.
    pub unfinished: usize,
    /// Why workflows failed, by cause.
    pub failure_causes: BTreeMap<String, usize>,
    pub stream_interruptions: usize,
    pub interruptions: Vec<Interruption>,
    /// Mean delivered rate over all workflow ticks spent in active phases.
    pub mean_active_throughput_mbps: f64,
    pub utilization: f64,
    pub adaptation_rounds: Vec<AdaptationRound>,
    pub adaptation_times_ticks: Vec<Tick>,
    pub per_class: BTreeMap<String, ClassCounts>,
    pub messages: BTreeMap<String, usize>,
    /// Longest run of ticks with committed demand above capacity.
    pub max_overcommit_ticks: Tick,
}

impl RunMetrics {
    pub fn empty(scenario: &str, mode: Mode, seed: u64, agent_count: usize) -> Self {
        Self {
            scenario: scenario.to_string(),
            mode,
            seed,
            agent_count,
            ticks_simulated: 0,
            total_workflows: 0,
            completed_optimal: 0,
            completed_degraded: 0,
            failed: 0,
            completion_rate: 0.0,
            hard_rejections: 0,
            negotiation_conflicts: 0,
            network_forced: 0,
            unfinished: 0,
            failure_causes: BTreeMap::new(),
            stream_interruptions: 0,
            interruptions: Vec::new(),
            mean_active_throughput_mbps: 0.0,
            utilization: 0.0,
            adaptation_rounds: Vec::new(),
            adaptation_times_ticks: Vec::new(),
            per_class: BTreeMap::new(),
            messages: BTreeMap::new(),
            max_overcommit_ticks: 0,
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.completed_optimal + self.completed_degraded + self.failed == self.total_workflows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationPoint {
    pub tick: Tick,
    pub delivered_kbps: u64,
    pub capacity_kbps: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub series: Vec<UtilizationPoint>,
    /// Total delivered over total capacity.
    pub scalar: f64,
}

/// Per-tick delivered/capacity from the log's `delivered` records.
pub fn compute_utilization(log: &[LogRecord], schedule: &CapacitySchedule) -> Utilization {
    let mut series = Vec::new();
    let (mut d, mut c) = (0u128, 0u128);
    for r in log {
        if let LogEvent::Delivered { delivered_kbps, .. } = r.event {
            let cap = schedule.capacity_at(r.tick).0;
            let ratio = if cap == 0 { 0.0 } else { delivered_kbps as f64 / cap as f64 };
            series.push(UtilizationPoint {
                tick: r.tick,
                delivered_kbps,
                capacity_kbps: cap,
                ratio,
            });
            d += delivered_kbps as u128;
            c += cap as u128;
        }
    }
    Utilization {
        series,
        scalar: if c == 0 { 0.0 } else { d as f64 / c as f64 },
    }
}
