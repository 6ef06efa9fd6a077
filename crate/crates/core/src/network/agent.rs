use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    derive_envelope, rates_at_most, AffectedSegment, CapabilityEnvelope, CapabilityNotification,
    CapabilityTimeline, Direction, EnforcementHook, FeasibilityVerdict, NetworkError,
    RecordingEnforcer,
};
use crate::model::{
    AgentId, CapacitySchedule, Commitment, CommitmentState, DemandTrajectory, Interval,
    IntervalSet, ProfileCatalog, Tick, WorkflowId,
};
use crate::step::StepFn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Config {
    /// Ticks an agent has to answer a degradation M3 before the network
    /// degrades the commitment itself.
    pub m4_timeout: Tick,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { m4_timeout: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingAdaptation {
    pub agent_id: AgentId,
    pub admission_seq: u64,
    pub issued_at: Tick,
    pub deadline: Tick,
    pub affected: Vec<AffectedSegment>,
}

/// One outgoing M3 with the keys it was ordered by.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Notice {
    pub agent_id: AgentId,
    pub priority: i32,
    pub admission_seq: u64,
    pub notification: CapabilityNotification,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum M4Outcome {
    Accepted(u64),
    Rejected(FeasibilityVerdict),
    /// Empty revision: the superseded commitment (if any) is dropped.
    Withdrawn,
}

/// Outcome of an unanswered degradation notice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForcedAdaptation {
    Degraded { workflow_id: WorkflowId, admission_seq: u64 },
    Failed { workflow_id: WorkflowId, admission_seq: u64 },
}

pub struct NetworkAgent<H: EnforcementHook = RecordingEnforcer> {
    timeline: CapabilityTimeline,
    catalog: ProfileCatalog,
    hook: H,
    config: Stage2Config,
    pending: BTreeMap<WorkflowId, PendingAdaptation>,
    improved: BTreeSet<(WorkflowId, u64, usize)>,
    replacements: u64,
    registered: BTreeSet<AgentId>,
    dirty: bool,
}

fn importance_order(a: &Commitment, b: &Commitment) -> std::cmp::Ordering {
    b.trajectory
        .priority
        .cmp(&a.trajectory.priority)
        .then(a.admission_seq.cmp(&b.admission_seq))
}

fn adaptable(c: &Commitment) -> bool {
    let p = c.trajectory.permissions;
    p.allow_downgrade || p.allow_defer || p.allow_replan
}

/// `min over iv of (f + demand of traj)`, without rebuilding `f`.
fn min_with_own(f: &StepFn, iv: &Interval, traj: &DemandTrajectory) -> Option<i64> {
    let clip = iv.intersect(&f.domain())?;
    let mut best: Option<i64> = None;
    let mut take = |v: Option<i64>| {
        if let Some(v) = v {
            best = Some(best.map_or(v, |b| b.min(v)));
        }
    };
    let mut cursor = clip.start();
    for s in &traj.segments {
        let Some(ov) = s.interval.intersect(&clip) else {
            continue;
        };
        if let Some(gap) = Interval::try_new(cursor, ov.start()) {
            take(f.min_over(&gap));
        }
        take(f.min_over(&ov).map(|m| m + s.rate.signed()));
        cursor = ov.end();
    }
    if let Some(gap) = Interval::try_new(cursor, clip.end()) {
        take(f.min_over(&gap));
    }
    best
}

impl<H: EnforcementHook> NetworkAgent<H> {
    pub fn new(
        timeline: CapabilityTimeline,
        catalog: ProfileCatalog,
        hook: H,
        config: Stage2Config,
    ) -> Self {
        Self {
            timeline,
            catalog,
            hook,
            config,
            pending: BTreeMap::new(),
            improved: BTreeSet::new(),
            replacements: 0,
            registered: BTreeSet::new(),
            dirty: false,
        }
    }

    pub fn timeline(&self) -> &CapabilityTimeline {
        &self.timeline
    }

    pub fn catalog(&self) -> &ProfileCatalog {
        &self.catalog
    }

    pub fn hook(&self) -> &H {
        &self.hook
    }

    pub fn hook_mut(&mut self) -> &mut H {
        &mut self.hook
    }

    pub fn pending(&self) -> &BTreeMap<WorkflowId, PendingAdaptation> {
        &self.pending
    }

    /// Adds an agent to the M1 refresh set.
    pub fn register(&mut self, agent: AgentId) {
        self.registered.insert(agent);
    }

    pub fn envelope_for(&self, agent: &AgentId) -> CapabilityEnvelope {
        derive_envelope(&self.timeline, &self.catalog, agent.clone())
    }

    /// Housekeeping: moves the window start and completes finished
    /// commitments.
    pub fn slide(&mut self, now: Tick) -> Vec<u64> {
        let done = self.timeline.slide(now);
        if !done.is_empty() {
            self.dirty = true;
            for seq in &done {
                if let Some(c) = self.timeline.commitment(*seq) {
                    let wf = c.trajectory.workflow_id.clone();
                    if self.pending.get(&wf).is_some_and(|p| p.admission_seq == *seq) {
                        self.pending.remove(&wf);
                    }
                }
            }
            self.timeline.prune(now.saturating_sub(self.timeline.window().length));
        }
        done
    }

    /// Slides the window and returns one fresh envelope per registered agent.
    pub fn advance_window(&mut self, now: Tick) -> Vec<CapabilityEnvelope> {
        self.slide(now);
        let base = derive_envelope(&self.timeline, &self.catalog, AgentId::new(""));
        self.registered
            .iter()
            .map(|a| base.rescoped(a.clone()))
            .collect()
    }

    /// Stage 1: assess an M2 and commit it when feasible.
    pub fn handle_m2(
        &mut self,
        trajectory: DemandTrajectory,
        now: Tick,
    ) -> Result<(FeasibilityVerdict, Option<u64>), NetworkError> {
        let verdict = self.timeline.assess_feasibility(&self.catalog, &trajectory)?;
        if !verdict.is_accept() {
            return Ok((verdict, None));
        }
        self.hook
            .apply_qos(&trajectory.workflow_id, &trajectory.segments, now);
        let seq = self.timeline.insert(trajectory);
        Ok((verdict, Some(seq)))
    }

    /// Records load that is not subject to negotiation.
    pub fn admit_external(&mut self, trajectory: DemandTrajectory, now: Tick) -> u64 {
        self.hook
            .apply_qos(&trajectory.workflow_id, &trajectory.segments, now);
        self.timeline.insert(trajectory)
    }

    /// M4. `supersedes` is `None` for a revision of a draft that Stage 1
    /// never admitted.
    pub fn handle_m4(
        &mut self,
        revised: DemandTrajectory,
        supersedes: Option<u64>,
        now: Tick,
    ) -> Result<M4Outcome, NetworkError> {
        if let Some(seq) = supersedes {
            let ok = self.timeline.commitment(seq).is_some_and(|c| {
                c.is_active() && c.trajectory.workflow_id == revised.workflow_id
            });
            if !ok {
                return Err(NetworkError::UnknownCommitment {
                    workflow: revised.workflow_id.clone(),
                    seq,
                });
            }
        }
        if revised.is_withdrawal() {
            if let Some(seq) = supersedes {
                self.timeline.set_state(seq, CommitmentState::Failed);
                self.hook.release(&revised.workflow_id, now);
                self.dirty = true;
            }
            self.pending.remove(&revised.workflow_id);
            return Ok(M4Outcome::Withdrawn);
        }
        let verdict = self
            .timeline
            .assess_excluding(&self.catalog, &revised, supersedes)?;
        if !verdict.is_accept() {
            return Ok(M4Outcome::Rejected(verdict));
        }
        if let Some(seq) = supersedes {
            self.timeline.set_state(seq, CommitmentState::Superseded);
            self.dirty = true;
        }
        self.pending.remove(&revised.workflow_id);
        self.hook.apply_qos(&revised.workflow_id, &revised.segments, now);
        Ok(M4Outcome::Accepted(self.timeline.insert(revised)))
    }

    /// Drops a commitment whose workflow was abandoned.
    pub fn release(&mut self, workflow: &WorkflowId, now: Tick) {
        if let Some(seq) = self.timeline.active_for(workflow).map(|c| c.admission_seq) {
            self.timeline.set_state(seq, CommitmentState::Failed);
            self.hook.release(workflow, now);
            self.dirty = true;
        }
        self.pending.remove(workflow);
    }

    /// Replaces the schedule and runs a Stage-2 round.
    pub fn on_capacity_change(&mut self, new_schedule: CapacitySchedule, now: Tick) -> Vec<Notice> {
        self.replacements += 1;
        self.timeline.set_schedule(new_schedule);
        self.dirty = true;
        let mut out = self.reassess(now);
        out.extend(self.improvements(now));
        out.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(b.admission_seq.cmp(&a.admission_seq))
        });
        out
    }

    fn projected_residual(&self, domain: Interval) -> StepFn {
        let mut proj = self.timeline.residual_fn(domain, &[]);
        for p in self.pending.values() {
            let Some(c) = self.timeline.commitment(p.admission_seq) else {
                continue;
            };
            proj = proj.add_pieces(adoption_delta(c, &p.affected));
        }
        proj
    }

    /// Greedy degradation round over `[now, window end)`: asks the least
    /// important commitments to adapt until the projected residual is
    /// non-negative. Commitments with an outstanding notice are assumed to
    /// adopt their best alternative and are not asked again.
    pub fn reassess(&mut self, now: Tick) -> Vec<Notice> {
        let Some(domain) = Interval::try_new(now, self.timeline.window().end()) else {
            return Vec::new();
        };
        let mut proj = self.projected_residual(domain);
        if proj.where_below(0).is_empty() {
            return Vec::new();
        }
        let mut order: Vec<&Commitment> = self
            .timeline
            .active()
            .filter(|c| adaptable(c) && !self.pending.contains_key(&c.trajectory.workflow_id))
            .collect();
        order.sort_by(|a, b| importance_order(b, a));
        let mut notices = Vec::new();
        for c in order {
            let violating = proj.where_below(0);
            if violating.is_empty() {
                break;
            }
            let mut affected = Vec::new();
            for s in &c.trajectory.segments {
                for iv in violating.intersect_interval(&s.interval).iter() {
                    let room = min_with_own(&proj, iv, &c.trajectory).unwrap_or(i64::MIN);
                    affected.push(AffectedSegment {
                        interval: *iv,
                        alternatives: rates_at_most(&self.catalog, room),
                    });
                }
            }
            if affected.is_empty() {
                continue;
            }
            merge_affected(&mut affected);
            proj = proj.add_pieces(adoption_delta(c, &affected));
            notices.push(Notice {
                agent_id: c.trajectory.agent_id.clone(),
                priority: c.trajectory.priority,
                admission_seq: c.admission_seq,
                notification: CapabilityNotification {
                    workflow_id: c.trajectory.workflow_id.clone(),
                    direction: Direction::Degradation,
                    affected: affected.clone(),
                },
            });
        }
        for n in &notices {
            self.pending.insert(
                n.notification.workflow_id.clone(),
                PendingAdaptation {
                    agent_id: n.agent_id.clone(),
                    admission_seq: n.admission_seq,
                    issued_at: now,
                    deadline: now + self.config.m4_timeout,
                    affected: n.notification.affected.clone(),
                },
            );
        }
        notices
    }

    /// Offers preferred profiles back to downgraded segments once they fit
    /// again over the rest of the segment. At most once per workflow and
    /// capability epoch; evaluated only after capacity was released.
    pub fn improvements(&mut self, now: Tick) -> Vec<Notice> {
        if !std::mem::take(&mut self.dirty) {
            return Vec::new();
        }
        let Some(domain) = Interval::try_new(now, self.timeline.window().end()) else {
            return Vec::new();
        };
        let epoch = (
            self.replacements,
            self.timeline.schedule().epoch_index_at(now),
        );
        let mut proj = self.projected_residual(domain);
        let mut order: Vec<&Commitment> = self
            .timeline
            .active()
            .filter(|c| {
                !self.pending.contains_key(&c.trajectory.workflow_id)
                    && !self.improved.contains(&(c.trajectory.workflow_id.clone(), epoch.0, epoch.1))
            })
            .collect();
        order.sort_by(|a, b| importance_order(a, b));
        let mut notices = Vec::new();
        for c in order {
            let mut affected = Vec::new();
            let mut delta = Vec::new();
            for s in &c.trajectory.segments {
                let Some(phase) = c.trajectory.phase(&s.phase_id) else {
                    continue;
                };
                if s.rate >= phase.preferred {
                    continue;
                }
                let Some(rest) = s.interval.intersect(&domain) else {
                    continue;
                };
                let Some(room) = min_with_own(&proj, &rest, &c.trajectory) else {
                    continue;
                };
                if room < phase.preferred.signed() {
                    continue;
                }
                let alternatives: Vec<_> = rates_at_most(&self.catalog, room)
                    .into_iter()
                    .filter(|r| *r > s.rate)
                    .collect();
                delta.push((rest, s.rate.signed() - phase.preferred.signed()));
                affected.push(AffectedSegment {
                    interval: rest,
                    alternatives,
                });
            }
            if affected.is_empty() {
                continue;
            }
            proj = proj.add_pieces(delta);
            notices.push(Notice {
                agent_id: c.trajectory.agent_id.clone(),
                priority: c.trajectory.priority,
                admission_seq: c.admission_seq,
                notification: CapabilityNotification {
                    workflow_id: c.trajectory.workflow_id.clone(),
                    direction: Direction::Improvement,
                    affected,
                },
            });
        }
        for n in &notices {
            self.improved
                .insert((n.notification.workflow_id.clone(), epoch.0, epoch.1));
        }
        notices.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(b.admission_seq.cmp(&a.admission_seq))
        });
        notices
    }

    /// Applies the network-side fallback to every notice whose deadline has
    /// passed: the best alternative over each affected interval, in place,
    /// or failure when no alternative reaches the phase minimum.
    pub fn expire_pending(&mut self, now: Tick) -> Vec<ForcedAdaptation> {
        let due: Vec<WorkflowId> = self
            .pending
            .iter()
            .filter(|(_, p)| p.deadline <= now)
            .map(|(w, _)| w.clone())
            .collect();
        let mut out = Vec::new();
        for wf in due {
            let p = self.pending.remove(&wf).expect("listed above");
            let Some(c) = self.timeline.commitment(p.admission_seq).filter(|c| c.is_active()) else {
                continue;
            };
            let mut traj = c.trajectory.clone();
            let mut failed = false;
            for a in &p.affected {
                traj.rerate_over(&a.interval, &self.catalog, |phase, cur| {
                    match a
                        .alternatives
                        .iter()
                        .copied()
                        .find(|r| *r >= phase.min_acceptable && *r <= cur)
                    {
                        Some(r) => r,
                        None => {
                            failed = true;
                            cur
                        }
                    }
                });
            }
            self.dirty = true;
            if failed {
                self.timeline.set_state(p.admission_seq, CommitmentState::Failed);
                self.hook.release(&wf, now);
                out.push(ForcedAdaptation::Failed {
                    workflow_id: wf,
                    admission_seq: p.admission_seq,
                });
            } else {
                self.hook.apply_qos(&wf, &traj.segments, now);
                self.timeline.replace_trajectory(p.admission_seq, traj);
                out.push(ForcedAdaptation::Degraded {
                    workflow_id: wf,
                    admission_seq: p.admission_seq,
                });
            }
        }
        out
    }

    /// Forgets terminal commitments that ended before `before`.
    pub fn prune_before(&mut self, before: Tick) {
        self.timeline.prune(before);
        self.improved.retain(|(w, _, _)| self.pending.contains_key(w) || self.timeline.active_for(w).is_some());
    }

    /// Ticks in `[now, window end)` where committed demand exceeds capacity.
    pub fn overcommitted(&self, now: Tick) -> IntervalSet {
        match Interval::try_new(now, self.timeline.window().end()) {
            Some(d) => self.timeline.residual_fn(d, &[]).where_below(0),
            None => IntervalSet::new(),
        }
    }
}

/// Residual change if `c` adopts its best alternative on each affected
/// interval (zero where it has none).
fn adoption_delta(c: &Commitment, affected: &[AffectedSegment]) -> Vec<(Interval, i64)> {
    let mut out = Vec::new();
    for a in affected {
        let best = a.alternatives.first().map_or(0, |r| r.signed());
        for s in &c.trajectory.segments {
            if let Some(iv) = s.interval.intersect(&a.interval) {
                let freed = s.rate.signed() - best.min(s.rate.signed());
                if freed > 0 {
                    out.push((iv, freed));
                }
            }
        }
    }
    out
}

/// Sorts and merges touching entries that offer the same alternatives.
fn merge_affected(v: &mut Vec<AffectedSegment>) {
    v.sort_by_key(|a| a.interval);
    let mut out: Vec<AffectedSegment> = Vec::with_capacity(v.len());
    for a in v.drain(..) {
        match out.last_mut() {
            Some(last)
                if last.interval.end() == a.interval.start() && last.alternatives == a.alternatives =>
            {
                last.interval = Interval::new(last.interval.start(), a.interval.end()).expect("ordered");
            }
            _ => out.push(a),
        }
    }
    *v = out;
}
