//! Coordinated mode: industrial agents and the network agent exchange
//! M1..M4 over delayed FIFO links, and senders are held to what the
//! enforcement stub has put in place.

use std::collections::{BTreeMap, VecDeque};

use super::config::{agent_name, ScenarioConfig};
use super::engine::{allocate, externals, phase_now, Claim, External, Recorder, RunOutput, SimError, Stream};
use super::log::{Decision, LogEvent, RoundCause};
use super::metrics::{AdaptationRound, RunMetrics};
use crate::industrial::{
    adapt, construct_with_view, extend_trajectory, AdaptContext, AdaptOutcome, AdaptationPolicy,
    CapabilityView, WorkflowState, WorkflowStatus,
};
use crate::model::{
    AgentId, CapacitySchedule, DemandTrajectory, Kbps, PlanningWindow, ProfileCatalog, Tick,
    WorkflowId, WorkflowSpec,
};
use crate::network::{
    rates_at_most, AffectedSegment, CapabilityEnvelope, CapabilityNotification,
    CapabilityTimeline, ConflictEntry, Direction, EnforcementRecord, FeasibilityVerdict,
    ForcedAdaptation, M4Outcome, NetworkAgent, NetworkError, Notice, RecordingEnforcer,
    Stage2Config,
};
use crate::protocol::{Ack, FifoLinks, Message, Payload, Revision};

const NETWORK: &str = "network";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    Admission,
    Degradation,
    Improvement,
    Extension,
    Sibling,
}

struct Outstanding {
    seq: u64,
    purpose: Purpose,
    trajectory: DemandTrajectory,
}

struct Flow {
    state: WorkflowState,
    agent: usize,
    order: Option<u64>,
    committed: Option<DemandTrajectory>,
    outstanding: Option<Outstanding>,
    queued: VecDeque<CapabilityNotification>,
    conflicts: u32,
    rounds: Vec<usize>,
    enforced: Vec<EnforcementRecord>,
    stream: Stream,
}

impl Flow {
    fn enforced_at(&self, now: Tick) -> Kbps {
        self.enforced
            .iter()
            .rev()
            .find(|r| r.effective_at <= now)
            .map_or(Kbps::ZERO, |r| r.rate_at(now))
    }

    /// What the application sends: the committed rate, lowered to any
    /// revision already submitted, within what is enforced.
    fn sending(&self, now: Tick) -> u64 {
        let Some(c) = self.committed.as_ref() else {
            return 0;
        };
        if self.stream.stalled(now) || phase_now(&self.state, c, now).is_none() {
            return 0;
        }
        let mut r = c.demand_at(now);
        if let Some(o) = &self.outstanding {
            r = r.min(o.trajectory.demand_at(now));
        }
        r.min(self.enforced_at(now)).0
    }

    /// Stuck at a boundary: the next phase is not planned yet.
    fn stuck(&self) -> bool {
        self.state.status == WorkflowStatus::Running
            && self
                .committed
                .as_ref()
                .is_some_and(|c| self.state.current_phase_index >= c.phases.len())
    }
}

#[derive(Default)]
struct AgentActor {
    name: String,
    envelope: Option<CapabilityEnvelope>,
    waiting: Vec<usize>,
    flows: Vec<usize>,
    seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Actor {
    Network,
    Agent(usize),
}

impl Actor {
    fn rank(self) -> usize {
        match self {
            Actor::Network => 0,
            Actor::Agent(i) => i + 1,
        }
    }
}

enum Event {
    Deliver { to: Actor, msg: Message },
    Arrival(usize),
    External(usize),
}

#[derive(Clone, Copy, Debug)]
enum FailCause {
    NetworkForced,
    NoLayout,
    NoExtension,
    CommitmentLost,
    NegotiationRounds,
    NoEnvelope,
    Abandoned,
}

impl FailCause {
    fn as_str(self) -> &'static str {
        match self {
            FailCause::NetworkForced => "network_forced",
            FailCause::NoLayout => "no_layout",
            FailCause::NoExtension => "no_extension",
            FailCause::CommitmentLost => "commitment_lost",
            FailCause::NegotiationRounds => "negotiation_rounds",
            FailCause::NoEnvelope => "no_envelope",
            FailCause::Abandoned => "abandoned",
        }
    }
}

struct RoundTrack {
    trigger: Tick,
    cause: RoundCause,
    notices: usize,
    open: usize,
    done_at: Tick,
}

pub(crate) struct Coordinated<'a> {
    cfg: &'a ScenarioConfig,
    catalog: ProfileCatalog,
    policy: AdaptationPolicy,
    network: NetworkAgent,
    flows: Vec<Flow>,
    by_id: BTreeMap<WorkflowId, usize>,
    agents: Vec<AgentActor>,
    agent_ix: BTreeMap<String, usize>,
    ext: Vec<External>,
    queue: BTreeMap<(Tick, usize, u64), Event>,
    event_seq: u64,
    links: FifoLinks,
    net_seq: u64,
    rec: Recorder,
    rounds: Vec<RoundTrack>,
    conflicts: usize,
    forced: usize,
    overcommit_run: Tick,
    fail_causes: BTreeMap<String, usize>,
}

fn message_workflow(m: &Message) -> Option<WorkflowId> {
    match &m.payload {
        Payload::Trajectory(t) => Some(t.workflow_id.clone()),
        Payload::Ack(a) => Some(a.workflow_id.clone()),
        Payload::Notification(n) => Some(n.workflow_id.clone()),
        Payload::Revision(r) => Some(r.trajectory.workflow_id.clone()),
        Payload::Envelope(_) | Payload::Opaque(_) => None,
    }
}

fn recast(workflow_id: &WorkflowId, conflicts: &[ConflictEntry], catalog: &ProfileCatalog) -> CapabilityNotification {
    CapabilityNotification {
        workflow_id: workflow_id.clone(),
        direction: Direction::Degradation,
        affected: conflicts
            .iter()
            .map(|c| AffectedSegment {
                interval: c.interval,
                alternatives: c
                    .max_admissible
                    .map_or_else(Vec::new, |m| rates_at_most(catalog, m.signed())),
            })
            .collect(),
    }
}

impl<'a> Coordinated<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        catalog: ProfileCatalog,
        planned: CapacitySchedule,
        specs: Vec<WorkflowSpec>,
    ) -> Self {
        let window = PlanningWindow::new(0, cfg.window_ticks).expect("validated window");
        let mut network = NetworkAgent::new(
            CapabilityTimeline::new(planned, window),
            catalog.clone(),
            RecordingEnforcer::new(cfg.enforcement_latency_ticks),
            Stage2Config {
                m4_timeout: cfg.m4_timeout_ticks,
            },
        );
        let agents: Vec<AgentActor> = (0..cfg.agent_count)
            .map(|i| AgentActor {
                name: agent_name(i).to_string(),
                ..AgentActor::default()
            })
            .collect();
        for a in &agents {
            network.register(AgentId::new(a.name.clone()));
        }
        let agent_ix: BTreeMap<String, usize> = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.clone(), i))
            .collect();
        let ext = externals(cfg, &catalog);
        let mut flows = Vec::with_capacity(specs.len());
        let mut by_id = BTreeMap::new();
        for spec in specs {
            let agent = agent_ix[spec.agent_id.as_str()];
            by_id.insert(spec.workflow_id.clone(), flows.len());
            flows.push(Flow {
                state: WorkflowState::new(spec),
                agent,
                order: None,
                committed: None,
                outstanding: None,
                queued: VecDeque::new(),
                conflicts: 0,
                rounds: Vec::new(),
                enforced: Vec::new(),
                stream: Stream::default(),
            });
        }
        let trace = (flows.len() + ext.len() <= super::engine::FlowTrace::MAX_STREAMS).then(|| {
            flows
                .iter()
                .map(|f| f.state.spec.workflow_id.to_string())
                .chain(ext.iter().map(|x| x.id.to_string()))
                .collect()
        });
        let mut sim = Self {
            cfg,
            catalog,
            policy: AdaptationPolicy::default(),
            network,
            flows,
            by_id,
            agents,
            agent_ix,
            ext,
            queue: BTreeMap::new(),
            event_seq: 0,
            links: FifoLinks::new(cfg.transport_delay_ticks),
            net_seq: 0,
            rec: Recorder::new(trace),
            rounds: Vec::new(),
            conflicts: 0,
            forced: 0,
            overcommit_run: 0,
            fail_causes: BTreeMap::new(),
        };
        for i in 0..sim.flows.len() {
            let (t, a) = (sim.flows[i].state.spec.release_tick, sim.flows[i].agent);
            sim.schedule(t, Actor::Agent(a), Event::Arrival(i));
        }
        for i in 0..sim.ext.len() {
            let t = sim.ext[i].known_at;
            sim.schedule(t, Actor::Network, Event::External(i));
        }
        sim
    }

    fn schedule(&mut self, at: Tick, actor: Actor, e: Event) {
        self.event_seq += 1;
        self.queue.insert((at, actor.rank(), self.event_seq), e);
    }

    fn actor_name(&self, a: Actor) -> &str {
        match a {
            Actor::Network => NETWORK,
            Actor::Agent(i) => &self.agents[i].name,
        }
    }

    fn send(&mut self, now: Tick, from: Actor, to: Actor, msg: Message) {
        let (f, t) = (self.actor_name(from).to_string(), self.actor_name(to).to_string());
        let at = self.links.delivery_tick(&f, &t, now);
        let kind = msg.kind.as_str().to_string();
        *self.rec.messages.entry(kind.clone()).or_default() += 1;
        self.rec.push(
            now,
            LogEvent::Message {
                kind,
                seq: msg.seq,
                from: f,
                to: t,
                deliver_at: at,
                workflow_id: message_workflow(&msg),
            },
        );
        self.schedule(at, to, Event::Deliver { to, msg });
    }

    fn next_net_seq(&mut self) -> u64 {
        self.net_seq += 1;
        self.net_seq
    }

    fn next_agent_seq(&mut self, a: usize) -> u64 {
        self.agents[a].seq += 1;
        self.agents[a].seq
    }

    fn invariant(now: Tick, e: NetworkError) -> SimError {
        SimError::InvariantViolation {
            tick: now,
            what: e.to_string(),
        }
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let cfg = self.cfg;
        let actual = cfg.actual_schedule()?;
        let mut events: VecDeque<(Tick, Kbps)> = cfg
            .sorted_events()
            .into_iter()
            .map(|(t, m)| (t, Kbps::from_mbps_f64(m)))
            .collect();
        let limit = cfg.duration_ticks + cfg.drain_ticks;
        let lag_bound = cfg.m4_timeout_ticks + cfg.refresh_ticks + 2 * cfg.transport_delay_ticks + 2;
        let mut now = 0;
        while now < limit {
            while events.front().is_some_and(|(t, _)| *t <= now) {
                let (_, cap) = events.pop_front().expect("checked");
                let schedule = self.network.timeline().schedule().replaced_from(now, cap);
                self.rec.push(now, LogEvent::CapacityChange { capacity_kbps: cap.0 });
                let notices = self.network.on_capacity_change(schedule, now);
                self.broadcast_envelopes(now);
                self.start_round(now, RoundCause::CapacityChange, notices);
            }
            self.network.slide(now);
            let better = self.network.improvements(now);
            self.start_round(now, RoundCause::Release, better);
            let forced = self.network.expire_pending(now);
            self.apply_forced(now, forced);
            if now % cfg.refresh_ticks == 0 {
                self.broadcast_envelopes(now);
                let notices = self.network.reassess(now);
                self.start_round(now, RoundCause::WindowAdvance, notices);
                if now % 1000 == 0 {
                    self.network.prune_before(now);
                }
            }
            while let Some(entry) = self.queue.first_entry() {
                if entry.key().0 > now {
                    break;
                }
                let e = entry.remove();
                self.dispatch(now, e)?;
            }
            self.progress(now);
            self.allocate(now, &actual);

            if self.network.timeline().residual_at(now) < 0 {
                self.overcommit_run += 1;
                self.rec.max_overcommit = self.rec.max_overcommit.max(self.overcommit_run);
                if self.overcommit_run > lag_bound {
                    return Err(SimError::InvariantViolation {
                        tick: now,
                        what: format!(
                            "committed demand above capacity for {} ticks",
                            self.overcommit_run
                        ),
                    });
                }
            } else {
                self.overcommit_run = 0;
            }
            now += 1;
            if now >= cfg.duration_ticks && self.flows.iter().all(|f| f.state.status.is_terminal()) {
                break;
            }
        }
        Ok(self.finish(now, &actual))
    }

    fn finish(mut self, ticks: Tick, actual: &CapacitySchedule) -> RunOutput {
        let mut metrics = RunMetrics::empty(&self.cfg.name, self.cfg.mode, self.cfg.seed, self.cfg.agent_count);
        for f in &mut self.flows {
            if !f.state.status.is_terminal() {
                f.state.fail();
                metrics.unfinished += 1;
            }
        }
        metrics.negotiation_conflicts = self.conflicts;
        metrics.network_forced = self.forced;
        metrics.failure_causes = std::mem::take(&mut self.fail_causes);
        metrics.adaptation_rounds = self
            .rounds
            .iter()
            .map(|r| AdaptationRound {
                trigger_tick: r.trigger,
                cause: r.cause,
                notices: r.notices,
                completed_at: (r.open == 0).then_some(r.done_at),
            })
            .collect();
        let cfg = self.cfg;
        self.rec
            .finish(cfg, ticks, self.flows.iter().map(|f| &f.state), actual, metrics)
    }

    fn broadcast_envelopes(&mut self, now: Tick) {
        for env in self.network.advance_window(now) {
            let Some(&a) = self.agent_ix.get(env.scope_agent_id.as_str()) else {
                continue;
            };
            let seq = self.next_net_seq();
            self.send(now, Actor::Network, Actor::Agent(a), Message::envelope(seq, NETWORK, env));
        }
    }

    fn start_round(&mut self, now: Tick, cause: RoundCause, notices: Vec<Notice>) {
        if notices.is_empty() {
            return;
        }
        let idx = self.rounds.len();
        let mut open = 0;
        let count = notices.len();
        let mut out = Vec::new();
        for n in notices {
            let Some(&fi) = self.by_id.get(&n.notification.workflow_id) else {
                continue;
            };
            self.flows[fi].rounds.push(idx);
            open += 1;
            out.push((self.flows[fi].agent, n.notification));
        }
        self.rounds.push(RoundTrack {
            trigger: now,
            cause,
            notices: count,
            open,
            done_at: now,
        });
        self.rec.push(now, LogEvent::AdaptationRound { cause, notices: count });
        for (a, n) in out {
            let seq = self.next_net_seq();
            self.send(now, Actor::Network, Actor::Agent(a), Message::notification(seq, NETWORK, n));
        }
    }

    fn finish_rounds(&mut self, fi: usize, at: Tick) {
        for r in std::mem::take(&mut self.flows[fi].rounds) {
            let t = &mut self.rounds[r];
            t.open -= 1;
            t.done_at = t.done_at.max(at);
        }
    }

    fn collect_enforcement(&mut self, now: Tick) {
        for r in self.network.hook_mut().drain() {
            self.rec.push(
                now,
                LogEvent::Enforcement {
                    workflow_id: r.workflow_id.clone(),
                    effective_at: r.effective_at,
                },
            );
            if let Some(&fi) = self.by_id.get(&r.workflow_id) {
                self.flows[fi].enforced.push(r);
            }
        }
    }

    fn apply_forced(&mut self, now: Tick, forced: Vec<ForcedAdaptation>) {
        if forced.is_empty() {
            return;
        }
        self.collect_enforcement(now);
        for f in forced {
            self.forced += 1;
            match f {
                ForcedAdaptation::Degraded {
                    workflow_id,
                    admission_seq,
                } => {
                    self.rec.push(now, LogEvent::NetworkForced { workflow_id: workflow_id.clone(), failed: false });
                    let Some(&fi) = self.by_id.get(&workflow_id) else { continue };
                    let t = self
                        .network
                        .timeline()
                        .commitment(admission_seq)
                        .map(|c| c.trajectory.clone());
                    if let Some(t) = t {
                        let flow = &mut self.flows[fi];
                        flow.state.set_trajectory(t.clone());
                        flow.committed = Some(t);
                    }
                    let eff = self.flows[fi].enforced.last().map_or(now, |r| r.effective_at);
                    self.finish_rounds(fi, eff);
                }
                ForcedAdaptation::Failed { workflow_id, .. } => {
                    self.rec.push(now, LogEvent::NetworkForced { workflow_id: workflow_id.clone(), failed: true });
                    if let Some(&fi) = self.by_id.get(&workflow_id) {
                        self.flows[fi].committed = None;
                        self.fail(fi, now, false, FailCause::NetworkForced);
                    }
                }
            }
        }
    }

    fn dispatch(&mut self, now: Tick, e: Event) -> Result<(), SimError> {
        match e {
            Event::Arrival(fi) => {
                let spec = &self.flows[fi].state.spec;
                self.rec.push(
                    now,
                    LogEvent::Arrival {
                        workflow_id: spec.workflow_id.clone(),
                        class: spec.class,
                    },
                );
                let a = self.flows[fi].agent;
                self.agents[a].flows.push(fi);
                if self.agents[a].envelope.is_some() {
                    self.negotiate(fi, now);
                } else {
                    self.agents[a].waiting.push(fi);
                }
            }
            Event::External(i) => {
                let seq = self.network.admit_external(self.ext[i].trajectory.clone(), now);
                self.ext[i].seq = Some(seq);
                self.collect_enforcement(now);
                self.rec.push(
                    now,
                    LogEvent::Admission {
                        workflow_id: self.ext[i].id.clone(),
                        decision: Decision::Granted,
                        admission_seq: Some(seq),
                        rate_kbps: Some(self.ext[i].rate.0),
                    },
                );
            }
            Event::Deliver { to: Actor::Network, msg } => self.network_receive(now, msg)?,
            Event::Deliver { to: Actor::Agent(a), msg } => self.agent_receive(now, a, msg),
        }
        Ok(())
    }

    fn network_receive(&mut self, now: Tick, msg: Message) -> Result<(), SimError> {
        let Some(&a) = self.agent_ix.get(&msg.sender) else {
            return Ok(());
        };
        let (ack, decision, as_m2) = match msg.payload {
            Payload::Trajectory(t) => {
                let wf = t.workflow_id.clone();
                let (verdict, seq) = self.network.handle_m2(t, now).map_err(|e| Self::invariant(now, e))?;
                let d = if seq.is_some() { Decision::Accept } else { Decision::Conflict };
                (Ack { answers: msg.seq, workflow_id: wf, admission_seq: seq, verdict }, d, true)
            }
            Payload::Revision(Revision { supersedes, trajectory }) => {
                let wf = trajectory.workflow_id.clone();
                let (verdict, seq, d) = match self.network.handle_m4(trajectory, supersedes, now) {
                    Ok(M4Outcome::Accepted(s)) => (FeasibilityVerdict::Accept, Some(s), Decision::Accept),
                    Ok(M4Outcome::Rejected(v)) => (v, None, Decision::Conflict),
                    Ok(M4Outcome::Withdrawn) => (FeasibilityVerdict::Accept, None, Decision::Withdrawn),
                    Err(NetworkError::UnknownCommitment { .. }) => {
                        (FeasibilityVerdict::Conflict(Vec::new()), None, Decision::Unknown)
                    }
                    Err(e) => return Err(Self::invariant(now, e)),
                };
                (Ack { answers: msg.seq, workflow_id: wf, admission_seq: seq, verdict }, d, false)
            }
            _ => return Ok(()),
        };
        self.collect_enforcement(now);
        if decision == Decision::Conflict {
            self.conflicts += 1;
        }
        self.rec.push(
            now,
            LogEvent::Admission {
                workflow_id: ack.workflow_id.clone(),
                decision,
                admission_seq: ack.admission_seq,
                rate_kbps: None,
            },
        );
        let seq = self.next_net_seq();
        let reply = if as_m2 {
            Message::m2_ack(seq, NETWORK, ack)
        } else {
            Message::m4_ack(seq, NETWORK, ack)
        };
        self.send(now, Actor::Network, Actor::Agent(a), reply);
        Ok(())
    }

    fn agent_receive(&mut self, now: Tick, a: usize, msg: Message) {
        match msg.payload {
            Payload::Envelope(env) => {
                self.agents[a].envelope = Some(env);
                for fi in std::mem::take(&mut self.agents[a].waiting) {
                    self.negotiate(fi, now);
                }
                self.agents[a].flows.retain(|&fi| !self.flows[fi].state.status.is_terminal());
                let flows = self.agents[a].flows.clone();
                for fi in flows {
                    let f = &self.flows[fi];
                    if f.committed.is_some() && f.outstanding.is_none() && f.queued.is_empty() {
                        self.extend(fi, now, f.stuck());
                    }
                }
            }
            Payload::Ack(ack) => self.on_ack(now, ack),
            Payload::Notification(n) => {
                let Some(&fi) = self.by_id.get(&n.workflow_id) else { return };
                let f = &self.flows[fi];
                if f.state.status.is_terminal() || f.committed.is_none() {
                    self.finish_rounds(fi, now);
                } else if f.outstanding.is_some() {
                    self.flows[fi].queued.push_back(n);
                } else {
                    self.respond(fi, n, None, now);
                }
            }
            _ => {}
        }
    }

    /// Lays out a new arrival against the cached envelope and sends M2.
    fn negotiate(&mut self, fi: usize, now: Tick) {
        let a = self.flows[fi].agent;
        let env = self.agents[a].envelope.as_ref().expect("caller checked");
        let in_flight = self.agents[a]
            .flows
            .iter()
            .filter(|&&j| j != fi && self.flows[j].committed.is_none())
            .filter_map(|&j| self.flows[j].outstanding.as_ref())
            .flat_map(|o| o.trajectory.demand_pieces().collect::<Vec<_>>());
        let view = CapabilityView::from_envelope(env).minus(in_flight);
        let spec = &self.flows[fi].state.spec;
        // Not before the ACK is back, nor before the reservation can be in force.
        let d = self.cfg.transport_delay_ticks;
        let ready = now + (2 * d).max(d + self.cfg.enforcement_latency_ticks);
        let start = (spec.release_tick + self.cfg.setup_lead_ticks).max(ready);
        match construct_with_view(spec, &view, &self.catalog, start) {
            Ok(t) => self.submit(fi, None, t, Purpose::Admission, now),
            Err(_) => self.fail(fi, now, false, FailCause::NoLayout),
        }
    }

    fn submit(&mut self, fi: usize, supersedes: Option<u64>, t: DemandTrajectory, purpose: Purpose, now: Tick) {
        let a = self.flows[fi].agent;
        let seq = self.next_agent_seq(a);
        let name = self.agents[a].name.clone();
        let msg = if purpose == Purpose::Admission {
            self.flows[fi].state.set_trajectory(t.clone());
            Message::trajectory(seq, name, t.clone())
        } else {
            Message::revision(seq, name, Revision { supersedes, trajectory: t.clone() })
        };
        self.flows[fi].outstanding = Some(Outstanding { seq, purpose, trajectory: t });
        self.send(now, Actor::Agent(a), Actor::Network, msg);
    }

    fn extend(&mut self, fi: usize, now: Tick, force: bool) {
        let a = self.flows[fi].agent;
        let Some(env) = self.agents[a].envelope.as_ref() else { return };
        let f = &self.flows[fi];
        let Some(c) = f.committed.as_ref() else { return };
        let view = CapabilityView::from_envelope(env);
        match extend_trajectory(&f.state.spec, c, &view, &self.catalog, force) {
            Ok(Some(t)) => {
                let seq = f.state.admission_seq;
                self.submit(fi, seq, t, Purpose::Extension, now);
            }
            Ok(None) => {}
            Err(_) if force => self.fail(fi, now, true, FailCause::NoExtension),
            Err(_) => {}
        }
    }

    fn on_ack(&mut self, now: Tick, ack: Ack) {
        let Some(&fi) = self.by_id.get(&ack.workflow_id) else { return };
        let matches = self.flows[fi].outstanding.as_ref().is_some_and(|o| o.seq == ack.answers);
        if self.flows[fi].state.status.is_terminal() {
            if let (FeasibilityVerdict::Accept, Some(seq)) = (&ack.verdict, ack.admission_seq) {
                self.withdraw(fi, seq, now);
            }
            return;
        }
        if !matches {
            return;
        }
        let out = self.flows[fi].outstanding.take().expect("matched");
        match ack.verdict {
            FeasibilityVerdict::Accept => {
                let Some(seq) = ack.admission_seq else { return };
                let f = &mut self.flows[fi];
                f.state.admission_seq = Some(seq);
                f.order.get_or_insert(seq);
                f.state.set_trajectory(out.trajectory.clone());
                f.committed = Some(out.trajectory);
                f.conflicts = 0;
                let eff = f.enforced.last().map_or(now, |r| r.effective_at);
                self.finish_rounds(fi, eff);
                self.drain_queue(fi, now);
            }
            FeasibilityVerdict::Conflict(c) if c.is_empty() => {
                self.flows[fi].committed = None;
                self.fail(fi, now, false, FailCause::CommitmentLost);
            }
            FeasibilityVerdict::Conflict(c) => {
                let retry = match out.purpose {
                    Purpose::Admission | Purpose::Degradation => true,
                    Purpose::Extension => self.flows[fi].stuck(),
                    Purpose::Improvement | Purpose::Sibling => false,
                };
                if !retry {
                    self.finish_rounds(fi, now);
                    self.drain_queue(fi, now);
                    return;
                }
                self.flows[fi].conflicts += 1;
                if self.flows[fi].conflicts > self.cfg.max_negotiation_rounds {
                    self.fail(fi, now, true, FailCause::NegotiationRounds);
                    return;
                }
                let n = recast(&ack.workflow_id, &c, &self.catalog);
                let purpose = out.purpose;
                self.respond(fi, n, Some((out.trajectory, purpose)), now);
            }
        }
    }

    fn drain_queue(&mut self, fi: usize, now: Tick) {
        while self.flows[fi].outstanding.is_none() && !self.flows[fi].state.status.is_terminal() {
            let Some(n) = self.flows[fi].queued.pop_front() else { break };
            self.respond(fi, n, None, now);
        }
    }

    /// Runs the adaptation policy on a notification. `attempt` replaces the
    /// working trajectory when retrying a rejected submission.
    fn respond(
        &mut self,
        fi: usize,
        n: CapabilityNotification,
        attempt: Option<(DemandTrajectory, Purpose)>,
        now: Tick,
    ) {
        let a = self.flows[fi].agent;
        let Some(env) = self.agents[a].envelope.as_ref() else {
            self.fail(fi, now, true, FailCause::NoEnvelope);
            return;
        };
        let purpose = match (&attempt, n.direction) {
            (Some((_, p)), _) => *p,
            (None, Direction::Degradation) => Purpose::Degradation,
            (None, Direction::Improvement) => Purpose::Improvement,
        };
        let outcome = {
            let siblings: Vec<&WorkflowState> = self.agents[a]
                .flows
                .iter()
                .filter(|&&j| j != fi)
                .map(|&j| &self.flows[j])
                .filter(|f| !f.state.status.is_terminal() && f.committed.is_some())
                .map(|f| &f.state)
                .collect();
            let ctx = AdaptContext {
                catalog: &self.catalog,
                envelope: env,
                now,
                siblings: &siblings,
            };
            match attempt {
                Some((t, _)) => {
                    let mut s = self.flows[fi].state.clone();
                    s.trajectory = Some(t);
                    adapt(&s, &n, &self.policy, &ctx)
                }
                None => adapt(&self.flows[fi].state, &n, &self.policy, &ctx),
            }
        };
        match outcome {
            AdaptOutcome::Revised { trajectory, siblings, .. } => {
                for s in siblings {
                    let Some(&j) = self.by_id.get(&s.workflow_id) else { continue };
                    let f = &self.flows[j];
                    if f.outstanding.is_none() && f.committed.is_some() && !f.state.status.is_terminal() {
                        let seq = f.state.admission_seq;
                        self.submit(j, seq, s, Purpose::Sibling, now);
                    }
                }
                let unchanged = self.flows[fi].committed.as_ref() == Some(&trajectory);
                if purpose == Purpose::Improvement && unchanged {
                    self.finish_rounds(fi, now);
                    return;
                }
                let supersedes = if purpose == Purpose::Admission {
                    None
                } else {
                    self.flows[fi].state.admission_seq
                };
                let p = if purpose == Purpose::Admission { Purpose::Degradation } else { purpose };
                if supersedes.is_none() {
                    self.flows[fi].state.set_trajectory(trajectory.clone());
                }
                self.submit(fi, supersedes, trajectory, p, now);
            }
            AdaptOutcome::AbandonWorkflow => self.fail(fi, now, true, FailCause::Abandoned),
        }
    }

    fn withdraw(&mut self, fi: usize, seq: u64, now: Tick) {
        let a = self.flows[fi].agent;
        let spec = &self.flows[fi].state.spec;
        let t = DemandTrajectory::withdrawal(spec.workflow_id.clone(), spec.agent_id.clone(), spec.priority);
        let msg_seq = self.next_agent_seq(a);
        let name = self.agents[a].name.clone();
        let msg = Message::revision(msg_seq, name, Revision { supersedes: Some(seq), trajectory: t });
        self.send(now, Actor::Agent(a), Actor::Network, msg);
    }

    fn fail(&mut self, fi: usize, now: Tick, withdraw: bool, cause: FailCause) {
        if self.flows[fi].state.status.is_terminal() {
            return;
        }
        *self.fail_causes.entry(cause.as_str().to_string()).or_default() += 1;
        self.flows[fi].state.fail();
        self.flows[fi].queued.clear();
        self.rec.push(
            now,
            LogEvent::WorkflowEnd {
                workflow_id: self.flows[fi].state.spec.workflow_id.clone(),
                status: WorkflowStatus::Failed,
            },
        );
        self.finish_rounds(fi, now);
        let seq = self.flows[fi].state.admission_seq;
        if withdraw && self.flows[fi].committed.is_some() {
            if let Some(seq) = seq {
                self.withdraw(fi, seq, now);
            }
        }
    }

    fn progress(&mut self, now: Tick) {
        for fi in 0..self.flows.len() {
            let f = &mut self.flows[fi];
            if f.state.status.is_terminal() {
                continue;
            }
            let Some(start) = f.committed.as_ref().and_then(|c| c.start()) else {
                continue;
            };
            if f.state.status == WorkflowStatus::Pending {
                if now < start {
                    continue;
                }
                if now > start {
                    f.state.mark_shortfall();
                }
                f.state.start(now);
                let id = f.state.spec.workflow_id.clone();
                self.rec.push(now, LogEvent::PhaseStart { workflow_id: id, phase: 0 });
            }
            loop {
                let f = &mut self.flows[fi];
                if f.state.status.is_terminal() {
                    break;
                }
                let Some(c) = f.committed.as_ref() else { break };
                let idx = f.state.current_phase_index;
                let next_end = c
                    .phases
                    .get(idx)
                    .map(|p| c.phase_interval(&p.phase_id).map_or(now, |iv| iv.end()));
                let Some(end) = next_end else {
                    if f.outstanding.is_none() {
                        self.extend(fi, now, true);
                    }
                    break;
                };
                if now < end {
                    break;
                }
                let resub = f.state.on_phase_boundary(now);
                let id = f.state.spec.workflow_id.clone();
                if f.state.status.is_terminal() {
                    let status = f.state.status;
                    self.rec.push(now, LogEvent::WorkflowEnd { workflow_id: id, status });
                    self.finish_rounds(fi, now);
                    break;
                }
                self.rec.push(now, LogEvent::PhaseStart { workflow_id: id, phase: idx + 1 });
                if resub.is_some() && self.flows[fi].outstanding.is_none() {
                    let stuck = self.flows[fi].stuck();
                    self.extend(fi, now, stuck);
                }
            }
        }
    }

    fn allocate(&mut self, now: Tick, actual: &CapacitySchedule) {
        let slots = self.flows.len() + self.ext.len();
        let mut claims = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let s = f.sending(now);
            if s > 0 {
                claims.push(Claim {
                    priority: f.state.spec.priority,
                    order: f.order.unwrap_or(u64::MAX),
                    sending: s,
                    slot: i,
                });
            }
        }
        for (i, x) in self.ext.iter().enumerate() {
            let s = x.sending(now);
            if s > 0 {
                claims.push(Claim {
                    priority: x.priority,
                    order: x.seq.unwrap_or(u64::MAX),
                    sending: s,
                    slot: self.flows.len() + i,
                });
            }
        }
        let sending: Vec<(usize, u64)> = claims.iter().map(|c| (c.slot, c.sending)).collect();
        let cap = actual.capacity_at(now).0;
        let delivered = allocate(cap, &mut claims, slots);
        let mut sent = vec![0; slots];
        for (slot, s) in sending {
            sent[slot] = s;
        }
        let overrun = self.cfg.overrun;
        for fi in 0..self.flows.len() {
            let f = &mut self.flows[fi];
            let Some(c) = f.committed.as_ref() else { continue };
            let Some(p) = phase_now(&f.state, c, now) else { continue };
            let d = delivered[fi];
            if d < p.phase.preferred.0 {
                f.state.mark_shortfall();
            }
            let active = p.active;
            if active {
                self.rec.active_sample(d);
            }
            if let Some(len) = f.stream.observe(sent[fi], d, now, overrun) {
                let id = f.state.spec.workflow_id.clone();
                self.rec.interruption(&id, now + 1, len);
            }
        }
        if self.rec.trace.is_some() {
            self.rec.end_tick(now, cap, &delivered);
        } else {
            self.rec.end_tick(now, cap, &[delivered.iter().sum()]);
        }
    }
}
