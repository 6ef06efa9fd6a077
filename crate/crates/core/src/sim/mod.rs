//! Seeded discrete-event simulator. One tick is `tick_ms` of simulated time;
//! a run is fully determined by its [`ScenarioConfig`].

mod baseline;
mod config;
mod coordinated;
mod engine;
mod log;
mod metrics;
mod workload;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    BaselineConfig, CapacityConfig, ClassConfig, ClassMix, ConfigError, ExternalLoad, Mode,
    OverrunConfig, PhaseConfig, ProfileConfig, ScenarioConfig, ScriptedWorkflow, WorkloadConfig,
};
pub use engine::{FlowTrace, RunOutput, SimError};
pub use log::{write_jsonl, Decision, LogEvent, LogRecord, RoundCause};
pub use metrics::{
    compute_utilization, AdaptationRound, ClassCounts, Interruption, RunMetrics, Utilization,
    UtilizationPoint,
};
pub use workload::{agent_rng, generate};

pub const TESTBED_CFG: &str = include_str!("../../configs/testbed.cfg");
pub const HEAVY120_CFG: &str = include_str!("../../configs/heavy120.cfg");
pub const SWEEP_CFG: &str = include_str!("../../configs/sweep.cfg");

/// A bundled scenario by file name (`testbed.cfg`) or stem (`testbed`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".cfg") {
        "testbed" => Some(TESTBED_CFG),
        "heavy120" => Some(HEAVY120_CFG),
        "sweep" => Some(SWEEP_CFG),
        _ => None,
    }
}

pub fn bundled_config(name: &str) -> Option<ScenarioConfig> {
    bundled(name).map(|src| ScenarioConfig::from_toml(src).expect("bundled configs are valid"))
}

/// Runs one scenario in the mode its config names.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let planned = cfg.planned_schedule()?;
    let specs = generate(cfg, &catalog);
    match cfg.mode {
        Mode::Coordinated => coordinated::Coordinated::new(cfg, catalog, planned, specs).run(),
        Mode::Baseline => baseline::Baseline::new(cfg, catalog, planned, specs).run(),
    }
}

pub fn run_mode(cfg: &ScenarioConfig, mode: Mode) -> Result<RunOutput, SimError> {
    let mut c = cfg.clone();
    c.mode = mode;
    run(&c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerMode<T> {
    pub coordinated: T,
    pub baseline: T,
}

/// The testbed comparison record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestbedComparison {
    pub interruptions: PerMode<usize>,
    pub interruption_durations_ticks: PerMode<Vec<u64>>,
    pub mean_active_throughput_mbps: PerMode<f64>,
    pub adaptation_times_ticks: Vec<u64>,
    pub adaptation_trigger_ticks: Vec<u64>,
    pub utilization: PerMode<f64>,
    pub outcome: PerMode<String>,
}

pub struct TestbedReplay {
    pub comparison: TestbedComparison,
    pub coordinated: RunOutput,
    pub baseline: RunOutput,
}

impl TestbedReplay {
    /// Per-tick delivered rates of both modes, side by side.
    pub fn throughput_csv(&self) -> String {
        let (c, b) = (
            self.coordinated.trace.as_ref().expect("testbed is traced"),
            self.baseline.trace.as_ref().expect("testbed is traced"),
        );
        let mut out = String::from("tick,capacity_kbps");
        for n in &c.names {
            out.push_str(&format!(",coordinated_{n}"));
        }
        for n in &b.names {
            out.push_str(&format!(",baseline_{n}"));
        }
        out.push('\n');
        let len = c.rows.len().max(b.rows.len());
        for i in 0..len {
            let (t, cap) = c
                .rows
                .get(i)
                .or(b.rows.get(i))
                .map(|(t, cap, _)| (*t, *cap))
                .expect("within len");
            out.push_str(&format!("{t},{cap}"));
            for (rows, width) in [(&c.rows, c.names.len()), (&b.rows, b.names.len())] {
                match rows.get(i) {
                    Some((_, _, v)) => v.iter().for_each(|x| out.push_str(&format!(",{x}"))),
                    None => (0..width).for_each(|_| out.push_str(",0")),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn outcome_of(m: &RunMetrics) -> String {
    if m.completed_optimal == m.total_workflows {
        "completed_optimal"
    } else if m.failed > 0 {
        "failed"
    } else {
        "completed_degraded"
    }
    .to_string()
}

/// Replays `cfg` (normally the bundled testbed) in both modes.
pub fn replay_testbed(cfg: &ScenarioConfig) -> Result<TestbedReplay, SimError> {
    let coordinated = run_mode(cfg, Mode::Coordinated)?;
    let baseline = run_mode(cfg, Mode::Baseline)?;
    let (c, b) = (&coordinated.metrics, &baseline.metrics);
    let per = |f: &dyn Fn(&RunMetrics) -> f64| PerMode {
        coordinated: f(c),
        baseline: f(b),
    };
    let durations = |m: &RunMetrics| m.interruptions.iter().map(|i| i.duration).collect();
    let comparison = TestbedComparison {
        interruptions: PerMode {
            coordinated: c.stream_interruptions,
            baseline: b.stream_interruptions,
        },
        interruption_durations_ticks: PerMode {
            coordinated: durations(c),
            baseline: durations(b),
        },
        mean_active_throughput_mbps: per(&|m| m.mean_active_throughput_mbps),
        adaptation_times_ticks: c.adaptation_times_ticks.clone(),
        adaptation_trigger_ticks: c.adaptation_rounds.iter().map(|r| r.trigger_tick).collect(),
        utilization: per(&|m| m.utilization),
        outcome: PerMode {
            coordinated: outcome_of(c),
            baseline: outcome_of(b),
        },
    };
    Ok(TestbedReplay {
        comparison,
        coordinated,
        baseline,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agents: usize,
    pub mode: Mode,
    pub seed: u64,
    pub total: usize,
    pub completed_optimal: usize,
    pub completed_degraded: usize,
    pub failed: usize,
    pub completion_rate: f64,
    pub hard_rejections: usize,
    pub utilization: f64,
}

impl SweepRow {
    fn from_metrics(m: &RunMetrics) -> Self {
        Self {
            agents: m.agent_count,
            mode: m.mode,
            seed: m.seed,
            total: m.total_workflows,
            completed_optimal: m.completed_optimal,
            completed_degraded: m.completed_degraded,
            failed: m.failed,
            completion_rate: m.completion_rate,
            hard_rejections: m.hard_rejections,
            utilization: m.utilization,
        }
    }
}

/// Runs `base` at every agent count in both modes with the same seed.
/// Points run in parallel; rows come back ordered by (agents, mode).
pub fn pressure_sweep(base: &ScenarioConfig, counts: &[usize]) -> Result<Vec<SweepRow>, SimError> {
    let jobs: Vec<(usize, Mode)> = counts
        .iter()
        .flat_map(|&n| [(n, Mode::Coordinated), (n, Mode::Baseline)])
        .collect();
    jobs.par_iter()
        .map(|&(n, mode)| {
            let mut c = base.clone();
            c.agent_count = n;
            c.mode = mode;
            run(&c).map(|o| SweepRow::from_metrics(&o.metrics))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "agents,mode,seed,total,completed_optimal,completed_degraded,failed,completion_rate,hard_rejections,utilization\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6},{},{:.6}\n",
            r.agents,
            r.mode.as_str(),
            r.seed,
            r.total,
            r.completed_optimal,
            r.completed_degraded,
            r.failed,
            r.completion_rate,
            r.hard_rejections,
            r.utilization
        ));
    }
    out
}

pub fn utilization_csv(u: &Utilization) -> String {
    let mut out = String::from("tick,delivered_kbps,capacity_kbps,ratio\n");
    for p in &u.series {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            p.tick, p.delivered_kbps, p.capacity_kbps, p.ratio
        ));
    }
    out
}
