use serde::{Deserialize, Serialize};

use super::{
    AgentId, CapacitySchedule, Interval, Kbps, ModelError, PhaseId, ProfileCatalog, ProfileId,
    Tick, WorkflowId,
};

/// One contiguous stretch of a phase at a single profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentAssignment {
    pub phase_id: PhaseId,
    pub interval: Interval,
    pub profile: ProfileId,
    pub rate: Kbps,
}

/// The per-phase part of a submitted trajectory: ordering, expected
/// duration, and the permitted adaptation range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDemand {
    pub phase_id: PhaseId,
    pub order_index: u32,
    pub duration: Tick,
    pub preferred: Kbps,
    pub min_acceptable: Kbps,
    pub max_deferral: Tick,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationPermissions {
    pub allow_downgrade: bool,
    pub allow_defer: bool,
    pub allow_replan: bool,
}

/// Phase-ordered profile assignment submitted in M2 and M4.
///
/// `phases` lists the planned phases (a prefix of the workflow); later
/// phases are appended as the planning window rolls forward. A trajectory
/// with no phases and no segments is a withdrawal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandTrajectory {
    pub workflow_id: WorkflowId,
    pub agent_id: AgentId,
    pub priority: i32,
    /// Nominal start of the first phase; its deferral is measured from here.
    pub not_before: Tick,
    pub phases: Vec<PhaseDemand>,
    pub segments: Vec<SegmentAssignment>,
    pub permissions: AdaptationPermissions,
}

impl DemandTrajectory {
    pub fn withdrawal(workflow_id: WorkflowId, agent_id: AgentId, priority: i32) -> Self {
        Self {
            workflow_id,
            agent_id,
            priority,
            not_before: 0,
            phases: Vec::new(),
            segments: Vec::new(),
            permissions: AdaptationPermissions::default(),
        }
    }

    pub fn is_withdrawal(&self) -> bool {
        self.phases.is_empty() && self.segments.is_empty()
    }

    /// Rate of the segment containing `t`, or zero.
    pub fn demand_at(&self, t: Tick) -> Kbps {
        let idx = self.segments.partition_point(|s| s.interval.end() <= t);
        match self.segments.get(idx) {
            Some(s) if s.interval.contains(t) => s.rate,
            _ => Kbps::ZERO,
        }
    }

    pub fn start(&self) -> Option<Tick> {
        self.segments.first().map(|s| s.interval.start())
    }

    pub fn end(&self) -> Option<Tick> {
        self.segments.last().map(|s| s.interval.end())
    }

    pub fn phase(&self, id: &PhaseId) -> Option<&PhaseDemand> {
        self.phases.iter().find(|p| &p.phase_id == id)
    }

    pub fn phase_index(&self, id: &PhaseId) -> Option<usize> {
        self.phases.iter().position(|p| &p.phase_id == id)
    }

    /// Index range into `segments` for one phase.
    pub fn phase_segment_range(&self, id: &PhaseId) -> std::ops::Range<usize> {
        let first = self.segments.iter().position(|s| &s.phase_id == id);
        match first {
            None => 0..0,
            Some(a) => {
                let len = self.segments[a..]
                    .iter()
                    .take_while(|s| &s.phase_id == id)
                    .count();
                a..a + len
            }
        }
    }

    pub fn phase_interval(&self, id: &PhaseId) -> Option<Interval> {
        let r = self.phase_segment_range(id);
        if r.is_empty() {
            return None;
        }
        Interval::try_new(
            self.segments[r.start].interval.start(),
            self.segments[r.end - 1].interval.end(),
        )
    }

    /// Gap between a phase and its predecessor (or `not_before`).
    pub fn deferral_of(&self, phase_idx: usize) -> Tick {
        let Some(start) = self.phase_interval(&self.phases[phase_idx].phase_id) else {
            return 0;
        };
        let prev_end = if phase_idx == 0 {
            self.not_before
        } else {
            self.phase_interval(&self.phases[phase_idx - 1].phase_id)
                .map_or(self.not_before, |iv| iv.end())
        };
        start.start().saturating_sub(prev_end)
    }

    pub fn has_deferral(&self) -> bool {
        (0..self.phases.len()).any(|i| self.deferral_of(i) > 0)
    }

    /// Some segment sits below its phase's preferred profile.
    pub fn has_downgrade(&self) -> bool {
        self.segments.iter().any(|s| {
            self.phase(&s.phase_id)
                .is_some_and(|p| s.rate < p.preferred)
        })
    }

    /// Re-rates the part of every segment that lies inside `iv`, splitting
    /// segments at the edges. `rate_for` gets the segment's phase and
    /// current rate.
    pub fn rerate_over(
        &mut self,
        iv: &Interval,
        catalog: &ProfileCatalog,
        mut rate_for: impl FnMut(&PhaseDemand, Kbps) -> Kbps,
    ) {
        let mut out = Vec::with_capacity(self.segments.len() + 2);
        for seg in std::mem::take(&mut self.segments) {
            let Some(mid) = seg.interval.intersect(iv) else {
                out.push(seg);
                continue;
            };
            let Some(phase) = self.phases.iter().find(|p| p.phase_id == seg.phase_id) else {
                out.push(seg);
                continue;
            };
            let rate = rate_for(phase, seg.rate);
            if let Some(head) = Interval::try_new(seg.interval.start(), mid.start()) {
                out.push(SegmentAssignment {
                    interval: head,
                    ..seg.clone()
                });
            }
            out.push(SegmentAssignment {
                phase_id: seg.phase_id.clone(),
                interval: mid,
                profile: profile_for(catalog, rate),
                rate,
            });
            if let Some(tail) = Interval::try_new(mid.end(), seg.interval.end()) {
                out.push(SegmentAssignment {
                    interval: tail,
                    ..seg
                });
            }
        }
        self.segments = out;
        self.normalize_segments();
    }

    /// `(interval, rate)` pieces of the demand, for residual arithmetic.
    pub fn demand_pieces(&self) -> impl Iterator<Item = (Interval, i64)> + '_ {
        self.segments.iter().map(|s| (s.interval, s.rate.signed()))
    }

    /// Merges touching segments of the same phase and profile.
    pub fn normalize_segments(&mut self) {
        let mut out: Vec<SegmentAssignment> = Vec::with_capacity(self.segments.len());
        for seg in self.segments.drain(..) {
            match out.last_mut() {
                Some(last)
                    if last.phase_id == seg.phase_id
                        && last.rate == seg.rate
                        && last.interval.end() == seg.interval.start() =>
                {
                    last.interval =
                        Interval::new(last.interval.start(), seg.interval.end()).expect("non-empty");
                }
                _ => out.push(seg),
            }
        }
        self.segments = out;
    }

    /// Checks every structural invariant: ordering, disjointness, per-phase
    /// totals, no gaps inside a phase, deferral bounds, and rate bounds.
    pub fn validate_structure(&self) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::MalformedTrajectory {
            workflow: self.workflow_id.to_string(),
            reason,
        };
        if self.is_withdrawal() {
            return Ok(());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.order_index as usize != i {
                return Err(bad(format!("phase {} out of order", p.phase_id)));
            }
            if p.duration == 0 {
                return Err(bad(format!("phase {} has zero duration", p.phase_id)));
            }
            if p.min_acceptable > p.preferred {
                return Err(bad(format!("phase {} has inverted adaptation range", p.phase_id)));
            }
        }
        for w in self.segments.windows(2) {
            if w[0].interval.end() > w[1].interval.start() {
                return Err(bad(format!(
                    "segments {} and {} overlap or are unordered",
                    w[0].interval, w[1].interval
                )));
            }
        }
        let mut seen = 0usize;
        let mut prev_end = self.not_before;
        for p in &self.phases {
            let r = self.phase_segment_range(&p.phase_id);
            if r.is_empty() {
                return Err(bad(format!("phase {} has no segments", p.phase_id)));
            }
            if r.start != seen {
                return Err(bad(format!("phase {} segments are not grouped in order", p.phase_id)));
            }
            seen = r.end;
            let segs = &self.segments[r];
            let mut total = 0;
            for (j, s) in segs.iter().enumerate() {
                if j > 0 && segs[j - 1].interval.end() != s.interval.start() {
                    return Err(bad(format!("gap inside phase {}", p.phase_id)));
                }
                if s.rate < p.min_acceptable || s.rate > p.preferred {
                    return Err(bad(format!(
                        "segment {} of phase {} at {} outside [{}, {}]",
                        s.interval, p.phase_id, s.rate, p.min_acceptable, p.preferred
                    )));
                }
                total += s.interval.len();
            }
            if total != p.duration {
                return Err(bad(format!(
                    "phase {} covers {total} ticks, expected {}",
                    p.phase_id, p.duration
                )));
            }
            let start = segs[0].interval.start();
            if start < prev_end {
                return Err(bad(format!("phase {} starts before its predecessor ends", p.phase_id)));
            }
            if start - prev_end > p.max_deferral {
                return Err(bad(format!(
                    "phase {} deferred {} ticks, max {}",
                    p.phase_id,
                    start - prev_end,
                    p.max_deferral
                )));
            }
            prev_end = segs[segs.len() - 1].interval.end();
        }
        if seen != self.segments.len() {
            return Err(bad("segments reference unknown phases".into()));
        }
        Ok(())
    }
}

/// Catalog id for `rate`, or a synthetic `<n>kbps` id for off-catalog rates.
pub fn profile_for(catalog: &ProfileCatalog, rate: Kbps) -> ProfileId {
    catalog
        .by_rate(rate)
        .map_or_else(|| ProfileId::new(rate.to_string()), |p| p.id.clone())
}

/// Free-function form of [`DemandTrajectory::demand_at`].
pub fn demand_at(trajectory: &DemandTrajectory, t: Tick) -> Kbps {
    trajectory.demand_at(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentState {
    Active,
    Superseded,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub admission_seq: u64,
    pub trajectory: DemandTrajectory,
    pub state: CommitmentState,
}

impl Commitment {
    pub fn is_active(&self) -> bool {
        self.state == CommitmentState::Active
    }
}

/// `capacity(t)` minus the rate every active commitment holds at `t`.
/// Negative only while an external capacity drop awaits Stage-2 resolution.
pub fn residual_capacity<'a>(
    schedule: &CapacitySchedule,
    commitments: impl IntoIterator<Item = &'a Commitment>,
    t: Tick,
) -> i64 {
    let used: i64 = commitments
        .into_iter()
        .filter(|c| c.is_active())
        .map(|c| c.trajectory.demand_at(t).signed())
        .sum();
    schedule.capacity_at(t).signed() - used
}
