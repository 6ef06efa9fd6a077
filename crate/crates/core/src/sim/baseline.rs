//! Request-driven reference: each phase asks for its preferred rate at its
//! boundary, checked against the instantaneous residual only.

use std::collections::VecDeque;

use super::config::ScenarioConfig;
use super::engine::{allocate, externals, Claim, External, Recorder, RunOutput, SimError, Stream};
use super::log::{Decision, LogEvent};
use super::metrics::RunMetrics;
use crate::industrial::{permissions_for, WorkflowState, WorkflowStatus};
use crate::model::{
    profile_for, CapacitySchedule, CommitmentState, DemandTrajectory, Interval, Kbps, PhaseDemand,
    PlanningWindow, ProfileCatalog, SegmentAssignment, Tick, WorkflowSpec,
};
use crate::network::{baseline_admit, BaselineDecision, CapabilityTimeline};

struct Flow {
    state: WorkflowState,
    order: Option<u64>,
    grant: Option<(u64, Kbps)>,
    phase_end: Tick,
    stream: Stream,
}

impl Flow {
    fn in_phase(&self, now: Tick) -> bool {
        self.state.status == WorkflowStatus::Running && now < self.phase_end
    }

    fn sending(&self, now: Tick) -> u64 {
        match self.grant {
            Some((_, r)) if self.in_phase(now) && !self.stream.stalled(now) => r.0,
            _ => 0,
        }
    }
}

fn grant_trajectory(spec: &WorkflowSpec, phase: usize, iv: Interval, rate: Kbps, catalog: &ProfileCatalog) -> DemandTrajectory {
    let p = &spec.phases[phase];
    DemandTrajectory {
        workflow_id: spec.workflow_id.clone(),
        agent_id: spec.agent_id.clone(),
        priority: spec.priority,
        not_before: iv.start(),
        phases: vec![PhaseDemand {
            phase_id: p.phase_id.clone(),
            order_index: p.order_index,
            duration: iv.len(),
            preferred: p.preferred,
            min_acceptable: p.min_acceptable,
            max_deferral: 0,
        }],
        segments: vec![SegmentAssignment {
            phase_id: p.phase_id.clone(),
            interval: iv,
            profile: profile_for(catalog, rate),
            rate,
        }],
        permissions: permissions_for(spec),
    }
}

pub(crate) struct Baseline<'a> {
    cfg: &'a ScenarioConfig,
    catalog: ProfileCatalog,
    timeline: CapabilityTimeline,
    flows: Vec<Flow>,
    ext: Vec<External>,
    rec: Recorder,
    hard_rejections: usize,
    fail_causes: std::collections::BTreeMap<String, usize>,
}

impl<'a> Baseline<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        catalog: ProfileCatalog,
        planned: CapacitySchedule,
        specs: Vec<WorkflowSpec>,
    ) -> Self {
        let window = PlanningWindow::new(0, cfg.window_ticks).expect("validated window");
        let ext = externals(cfg, &catalog);
        let flows: Vec<Flow> = specs
            .into_iter()
            .map(|spec| Flow {
                state: WorkflowState::new(spec),
                order: None,
                grant: None,
                phase_end: 0,
                stream: Stream::default(),
            })
            .collect();
        let trace = (flows.len() + ext.len() <= super::engine::FlowTrace::MAX_STREAMS).then(|| {
            flows
                .iter()
                .map(|f| f.state.spec.workflow_id.to_string())
                .chain(ext.iter().map(|x| x.id.to_string()))
                .collect()
        });
        Self {
            cfg,
            catalog,
            timeline: CapabilityTimeline::new(planned, window),
            flows,
            ext,
            rec: Recorder::new(trace),
            hard_rejections: 0,
            fail_causes: Default::default(),
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
        let mut arrivals: Vec<usize> = (0..self.flows.len()).collect();
        arrivals.sort_by_key(|&i| self.flows[i].state.spec.release_tick);
        let mut arrivals: VecDeque<usize> = arrivals.into();
        let mut ext_order: Vec<usize> = (0..self.ext.len()).collect();
        ext_order.sort_by_key(|&i| self.ext[i].known_at);
        let mut ext_order: VecDeque<usize> = ext_order.into();
        let mut started: Vec<usize> = Vec::new();

        let limit = cfg.duration_ticks + cfg.drain_ticks;
        let mut now = 0;
        while now < limit {
            while events.front().is_some_and(|(t, _)| *t <= now) {
                let (_, cap) = events.pop_front().expect("checked");
                let s = self.timeline.schedule().replaced_from(now, cap);
                self.timeline.set_schedule(s);
                self.rec.push(now, LogEvent::CapacityChange { capacity_kbps: cap.0 });
            }
            self.timeline.slide(now);
            if now % 1000 == 0 {
                self.timeline.prune(now);
            }
            while ext_order.front().is_some_and(|&i| self.ext[i].known_at <= now) {
                let i = ext_order.pop_front().expect("checked");
                let seq = self.timeline.insert(self.ext[i].trajectory.clone());
                self.ext[i].seq = Some(seq);
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
            while arrivals
                .front()
                .is_some_and(|&i| self.flows[i].state.spec.release_tick <= now)
            {
                let i = arrivals.pop_front().expect("checked");
                let spec = &self.flows[i].state.spec;
                self.rec.push(
                    now,
                    LogEvent::Arrival {
                        workflow_id: spec.workflow_id.clone(),
                        class: spec.class,
                    },
                );
                started.push(i);
            }
            for &i in &started {
                self.progress(i, now);
            }
            started.retain(|&i| !self.flows[i].state.status.is_terminal());
            self.allocate(now, &actual);
            now += 1;
            if now >= cfg.duration_ticks && self.flows.iter().all(|f| f.state.status.is_terminal()) {
                break;
            }
        }
        let mut metrics = RunMetrics::empty(&cfg.name, cfg.mode, cfg.seed, cfg.agent_count);
        for f in &mut self.flows {
            if !f.state.status.is_terminal() {
                f.state.fail();
                metrics.unfinished += 1;
            }
        }
        metrics.hard_rejections = self.hard_rejections;
        metrics.failure_causes = std::mem::take(&mut self.fail_causes);
        Ok(self
            .rec
            .finish(cfg, now, self.flows.iter().map(|f| &f.state), &actual, metrics))
    }

    fn progress(&mut self, fi: usize, now: Tick) {
        let first = self.flows[fi].state.spec.release_tick + self.cfg.setup_lead_ticks;
        let f = &mut self.flows[fi];
        match f.state.status {
            WorkflowStatus::Pending if now >= first => {
                f.state.start(now);
                f.phase_end = now + f.state.spec.phases[0].duration;
                self.phase_started(fi, now);
            }
            WorkflowStatus::Running => {
                if now >= f.phase_end {
                    if let Some((seq, _)) = f.grant.take() {
                        self.timeline.set_state(seq, CommitmentState::Completed);
                    }
                    let f = &mut self.flows[fi];
                    f.state.on_phase_boundary(now);
                    if f.state.status.is_terminal() {
                        let (id, status) = (f.state.spec.workflow_id.clone(), f.state.status);
                        self.rec.push(now, LogEvent::WorkflowEnd { workflow_id: id, status });
                        return;
                    }
                    f.phase_end = now + f.state.spec.phases[f.state.current_phase_index].duration;
                    self.phase_started(fi, now);
                } else if f.grant.is_none() && f.stream.stalled_until == now && now > 0 {
                    self.request(fi, now);
                }
            }
            _ => {}
        }
    }

    fn phase_started(&mut self, fi: usize, now: Tick) {
        let f = &self.flows[fi];
        let id = f.state.spec.workflow_id.clone();
        let phase = f.state.current_phase_index;
        self.rec.push(now, LogEvent::PhaseStart { workflow_id: id, phase });
        self.request(fi, now);
    }

    /// Asks for the preferred rate; with fallback enabled, walks down the
    /// catalog to the phase minimum.
    fn request(&mut self, fi: usize, now: Tick) {
        let f = &self.flows[fi];
        let p = &f.state.spec.phases[f.state.current_phase_index];
        let (pref, min) = (p.preferred, p.min_acceptable);
        let Some(iv) = Interval::try_new(now, f.phase_end) else { return };
        let mut rate = Some(pref);
        while let Some(r) = rate.filter(|r| *r >= min) {
            let decision = baseline_admit(&self.timeline, r, now);
            let id = self.flows[fi].state.spec.workflow_id.clone();
            if decision == BaselineDecision::Granted {
                let t = grant_trajectory(&self.flows[fi].state.spec, self.flows[fi].state.current_phase_index, iv, r, &self.catalog);
                let seq = self.timeline.insert(t);
                let f = &mut self.flows[fi];
                f.grant = Some((seq, r));
                f.order.get_or_insert(seq);
                self.rec.push(
                    now,
                    LogEvent::Admission {
                        workflow_id: id,
                        decision: Decision::Granted,
                        admission_seq: Some(seq),
                        rate_kbps: Some(r.0),
                    },
                );
                return;
            }
            self.hard_rejections += 1;
            self.rec.push(
                now,
                LogEvent::Admission {
                    workflow_id: id,
                    decision: Decision::Rejected,
                    admission_seq: None,
                    rate_kbps: Some(r.0),
                },
            );
            if !self.cfg.baseline.fallback_on_reject {
                break;
            }
            rate = self.catalog.next_lower(r).map(|p| p.rate);
        }
        *self.fail_causes.entry("rejected".into()).or_default() += 1;
        let f = &mut self.flows[fi];
        f.state.fail();
        let id = f.state.spec.workflow_id.clone();
        self.rec.push(
            now,
            LogEvent::WorkflowEnd {
                workflow_id: id,
                status: WorkflowStatus::Failed,
            },
        );
    }

    fn allocate(&mut self, now: Tick, actual: &CapacitySchedule) {
        let n = self.flows.len();
        let slots = n + self.ext.len();
        let mut claims = Vec::new();
        let mut sent = vec![0; slots];
        for (i, f) in self.flows.iter().enumerate() {
            let s = f.sending(now);
            sent[i] = s;
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
            sent[n + i] = s;
            if s > 0 {
                claims.push(Claim {
                    priority: x.priority,
                    order: x.seq.unwrap_or(u64::MAX),
                    sending: s,
                    slot: n + i,
                });
            }
        }
        let cap = actual.capacity_at(now).0;
        let delivered = allocate(cap, &mut claims, slots);
        let overrun = self.cfg.overrun;
        for fi in 0..n {
            let f = &mut self.flows[fi];
            if !f.in_phase(now) {
                continue;
            }
            let p = &f.state.spec.phases[f.state.current_phase_index];
            let (pref, active) = (p.preferred.0, p.criticality.is_active());
            let d = delivered[fi];
            if d < pref {
                f.state.mark_shortfall();
            }
            if active {
                self.rec.active_sample(d);
            }
            if let Some(len) = f.stream.observe(sent[fi], d, now, overrun) {
                if let Some((seq, _)) = f.grant.take() {
                    self.timeline.set_state(seq, CommitmentState::Completed);
                }
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
