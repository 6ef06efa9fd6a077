//! Scenario files: TOML with the schema below. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::model::{
    AgentId, CapacitySchedule, Criticality, Kbps, PhaseId, PhaseSpec, ProfileCatalog, QosProfile,
    Tick, WorkflowClass, WorkflowId, WorkflowSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Coordinated,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Coordinated => "coordinated",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coordinated" => Ok(Mode::Coordinated),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?} (expected coordinated or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: None,
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub id: String,
    pub mbps: f64,
    #[serde(default)]
    pub label: String,
}

/// `[tick, mbps]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub epochs: Vec<(Tick, f64)>,
    /// Changes the network only learns about when they happen.
    #[serde(default)]
    pub events: Vec<(Tick, f64)>,
}

/// Load that bypasses negotiation, e.g. a competing slice tenant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalLoad {
    pub id: String,
    /// When the network records it.
    pub known_at: Tick,
    pub start: Tick,
    pub end: Tick,
    pub mbps: f64,
    pub priority: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub share: f64,
    pub priority: i32,
    pub preferred_mbps: Vec<f64>,
    #[serde(default)]
    pub deferrable_fraction: f64,
    #[serde(default)]
    pub max_deferral_ticks: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMix {
    pub critical_inspection: ClassConfig,
    pub routine_monitoring: ClassConfig,
    pub background_sensing: ClassConfig,
}

impl ClassMix {
    pub fn get(&self, c: WorkflowClass) -> &ClassConfig {
        match c {
            WorkflowClass::CriticalInspection => &self.critical_inspection,
            WorkflowClass::RoutineMonitoring => &self.routine_monitoring,
            WorkflowClass::BackgroundSensing => &self.background_sensing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub id: String,
    pub ticks: Tick,
    pub preferred_mbps: f64,
    pub min_mbps: f64,
    pub criticality: Criticality,
    #[serde(default)]
    pub max_deferral_ticks: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedWorkflow {
    pub id: String,
    pub agent: usize,
    pub class: WorkflowClass,
    pub priority: i32,
    /// Arrival; the first phase starts `setup_lead_ticks` later.
    pub release_tick: Tick,
    pub phases: Vec<PhaseConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadConfig {
    Poisson {
        mean_interarrival_ticks: f64,
        phases: (u32, u32),
        phase_ticks: (Tick, Tick),
        /// Catalog levels between preferred and minimum acceptable.
        min_offset_levels: usize,
        classes: ClassMix,
    },
    Scripted {
        workflows: Vec<ScriptedWorkflow>,
    },
}

/// Request-driven reference behaviour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// On rejection: fail the workflow, or retry one profile lower.
    #[serde(default)]
    pub fallback_on_reject: bool,
}

/// Application-side stream break: sending above the delivered rate for
/// `loss_to_interrupt_ticks` in a row stalls the stream for
/// `interruption_ticks`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrunConfig {
    pub loss_to_interrupt_ticks: Tick,
    pub interruption_ticks: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    /// Arrivals happen in `[0, duration_ticks)`; the run continues until
    /// every workflow has finished or `drain_ticks` more have passed.
    pub duration_ticks: Tick,
    #[serde(default = "defaults::drain")]
    pub drain_ticks: Tick,
    #[serde(default = "defaults::tick_ms")]
    pub tick_ms: u64,
    pub agent_count: usize,
    #[serde(default = "defaults::window")]
    pub window_ticks: Tick,
    #[serde(default = "defaults::refresh")]
    pub refresh_ticks: Tick,
    #[serde(default = "defaults::delay")]
    pub transport_delay_ticks: Tick,
    #[serde(default = "defaults::enforcement")]
    pub enforcement_latency_ticks: Tick,
    #[serde(default = "defaults::m4_timeout")]
    pub m4_timeout_ticks: Tick,
    #[serde(default = "defaults::rounds")]
    pub max_negotiation_rounds: u32,
    /// Lead between learning of a workflow and its first phase.
    #[serde(default = "defaults::setup_lead")]
    pub setup_lead_ticks: Tick,
    pub profiles: Vec<ProfileConfig>,
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub external: Vec<ExternalLoad>,
    pub workload: WorkloadConfig,
    #[serde(default = "defaults::baseline")]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub overrun: Option<OverrunConfig>,
}

mod defaults {
    use super::*;

    pub fn drain() -> Tick {
        20_000
    }
    pub fn tick_ms() -> u64 {
        crate::model::DEFAULT_TICK_MS
    }
    pub fn window() -> Tick {
        crate::model::PlanningWindow::DEFAULT_LENGTH
    }
    pub fn refresh() -> Tick {
        10
    }
    pub fn delay() -> Tick {
        1
    }
    pub fn enforcement() -> Tick {
        crate::network::RecordingEnforcer::DEFAULT_LATENCY
    }
    pub fn m4_timeout() -> Tick {
        100
    }
    pub fn rounds() -> u32 {
        4
    }
    pub fn setup_lead() -> Tick {
        50
    }
    pub fn baseline() -> BaselineConfig {
        BaselineConfig {
            fallback_on_reject: false,
        }
    }
}

fn mbps(v: f64, field: &str) -> Result<Kbps, ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigError::field(field, format!("rate must be a non-negative number, got {v}")));
    }
    Ok(Kbps::from_mbps_f64(v))
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl ScenarioConfig {
    /// Parses and validates a scenario file.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("").to_string();
            ConfigError {
                line: e.span().map(|s| line_of(src, s.start)),
                field: if field.is_empty() { "config".into() } else { field },
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn catalog(&self) -> Result<ProfileCatalog, ConfigError> {
        let mut v = Vec::new();
        for (i, p) in self.profiles.iter().enumerate() {
            let rate = mbps(p.mbps, &format!("profiles[{i}].mbps"))?;
            v.push(QosProfile::new(p.id.clone(), rate, p.label.clone()));
        }
        ProfileCatalog::new(v).map_err(|e| ConfigError::field("profiles", e.to_string()))
    }

    /// The schedule the network knows about up front.
    pub fn planned_schedule(&self) -> Result<CapacitySchedule, ConfigError> {
        let mut epochs = Vec::new();
        for (i, (t, m)) in self.capacity.epochs.iter().enumerate() {
            epochs.push((*t, mbps(*m, &format!("capacity.epochs[{i}]"))?));
        }
        CapacitySchedule::new(epochs).map_err(|e| ConfigError::field("capacity.epochs", e.to_string()))
    }

    /// The schedule that actually happens, events included.
    pub fn actual_schedule(&self) -> Result<CapacitySchedule, ConfigError> {
        let mut s = self.planned_schedule()?;
        for (i, (t, m)) in self.sorted_events().iter().enumerate() {
            s = s.replaced_from(*t, mbps(*m, &format!("capacity.events[{i}]"))?);
        }
        Ok(s)
    }

    pub(crate) fn sorted_events(&self) -> Vec<(Tick, f64)> {
        let mut e = self.capacity.events.clone();
        e.sort_by_key(|(t, _)| *t);
        e
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let catalog = self.catalog()?;
        self.planned_schedule()?;
        self.actual_schedule()?;
        let positive = [
            ("tick_ms", self.tick_ms),
            ("window_ticks", self.window_ticks),
            ("refresh_ticks", self.refresh_ticks),
        ];
        for (f, v) in positive {
            if v == 0 {
                return Err(ConfigError::field(f, "must be positive"));
            }
        }
        if self.max_negotiation_rounds == 0 {
            return Err(ConfigError::field("max_negotiation_rounds", "must be positive"));
        }
        if let Some(o) = self.overrun {
            if o.loss_to_interrupt_ticks == 0 || o.interruption_ticks == 0 {
                return Err(ConfigError::field("overrun", "durations must be positive"));
            }
        }
        for (i, x) in self.external.iter().enumerate() {
            let f = format!("external[{i}]");
            if x.start >= x.end {
                return Err(ConfigError::field(f, "start must be before end"));
            }
            if x.known_at > x.start {
                return Err(ConfigError::field(f, "known_at must not be after start"));
            }
            mbps(x.mbps, &format!("external[{i}].mbps"))?;
        }
        match &self.workload {
            WorkloadConfig::Poisson {
                mean_interarrival_ticks,
                phases,
                phase_ticks,
                classes,
                ..
            } => {
                if !(mean_interarrival_ticks.is_finite() && *mean_interarrival_ticks > 0.0) {
                    return Err(ConfigError::field(
                        "workload.mean_interarrival_ticks",
                        "must be a positive number",
                    ));
                }
                if phases.0 == 0 || phases.0 > phases.1 {
                    return Err(ConfigError::field("workload.phases", "need 1 <= lo <= hi"));
                }
                if phase_ticks.0 == 0 || phase_ticks.0 > phase_ticks.1 {
                    return Err(ConfigError::field("workload.phase_ticks", "need 1 <= lo <= hi"));
                }
                let mut total = 0.0;
                for c in WorkflowClass::ALL {
                    let cc = classes.get(c);
                    let f = format!("workload.classes.{}", c.as_str());
                    if !(0.0..=1.0).contains(&cc.share) {
                        return Err(ConfigError::field(format!("{f}.share"), "must be in [0, 1]"));
                    }
                    total += cc.share;
                    if cc.preferred_mbps.is_empty() {
                        return Err(ConfigError::field(format!("{f}.preferred_mbps"), "must not be empty"));
                    }
                    for m in &cc.preferred_mbps {
                        let r = mbps(*m, &format!("{f}.preferred_mbps"))?;
                        if catalog.by_rate(r).is_none() {
                            return Err(ConfigError::field(
                                format!("{f}.preferred_mbps"),
                                format!("{m} Mbps is not a catalog profile"),
                            ));
                        }
                    }
                    if !(0.0..=1.0).contains(&cc.deferrable_fraction) {
                        return Err(ConfigError::field(
                            format!("{f}.deferrable_fraction"),
                            "must be in [0, 1]",
                        ));
                    }
                    if cc.deferrable_fraction > 0.0 && cc.max_deferral_ticks == 0 {
                        return Err(ConfigError::field(
                            format!("{f}.max_deferral_ticks"),
                            "deferrable phases need a positive budget",
                        ));
                    }
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(ConfigError::field(
                        "workload.classes",
                        format!("class shares sum to {total}, expected 1"),
                    ));
                }
            }
            WorkloadConfig::Scripted { workflows } => {
                for (i, w) in workflows.iter().enumerate() {
                    if w.agent >= self.agent_count {
                        return Err(ConfigError::field(
                            format!("workload.workflows[{i}].agent"),
                            format!("agent {} out of range (agent_count {})", w.agent, self.agent_count),
                        ));
                    }
                    let spec = scripted_spec(w).map_err(|e| {
                        ConfigError::field(format!("workload.workflows[{i}]"), e)
                    })?;
                    spec.validate(&catalog)
                        .map_err(|e| ConfigError::field(format!("workload.workflows[{i}]"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn agent_name(i: usize) -> AgentId {
    AgentId::new(format!("a{i:03}"))
}

pub(crate) fn scripted_spec(w: &ScriptedWorkflow) -> Result<WorkflowSpec, String> {
    let mut phases = Vec::new();
    for (k, p) in w.phases.iter().enumerate() {
        let preferred = mbps(p.preferred_mbps, "preferred_mbps").map_err(|e| e.message)?;
        let min_acceptable = mbps(p.min_mbps, "min_mbps").map_err(|e| e.message)?;
        phases.push(PhaseSpec {
            phase_id: PhaseId::new(p.id.clone()),
            order_index: k as u32,
            duration: p.ticks,
            preferred,
            min_acceptable,
            deferrable: p.max_deferral_ticks > 0,
            max_deferral: p.max_deferral_ticks,
            criticality: p.criticality,
        });
    }
    Ok(WorkflowSpec {
        workflow_id: WorkflowId::new(w.id.clone()),
        agent_id: agent_name(w.agent),
        class: w.class,
        priority: w.priority,
        phases,
        release_tick: w.release_tick,
    })
}
