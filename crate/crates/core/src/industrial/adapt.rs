use super::layout::{best_rate, lay_out, phase_pieces};
use super::{AdaptationPolicy, CapabilityView, Strategy, WorkflowState};
use crate::model::{
    Criticality, DemandTrajectory, Interval, PhaseDemand, ProfileCatalog, Tick,
};
use crate::network::{CapabilityEnvelope, CapabilityNotification, Direction};
use crate::step::StepFn;

pub struct AdaptContext<'a> {
    pub catalog: &'a ProfileCatalog,
    /// Latest envelope the agent holds.
    pub envelope: &'a CapabilityEnvelope,
    pub now: Tick,
    /// Other committed workflows of the same agent.
    pub siblings: &'a [&'a WorkflowState],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdaptOutcome {
    Revised {
        trajectory: DemandTrajectory,
        /// `None` for no-ops and upgrades.
        strategy: Option<Strategy>,
        /// Sibling revisions `DowngradeNoncritical` relies on; submit first.
        siblings: Vec<DemandTrajectory>,
    },
    AbandonWorkflow,
}

/// Responds to an M3 (or a Stage-1 conflict recast as one).
pub fn adapt(
    state: &WorkflowState,
    notification: &CapabilityNotification,
    policy: &AdaptationPolicy,
    ctx: &AdaptContext<'_>,
) -> AdaptOutcome {
    let Some(current) = state.trajectory.as_ref() else {
        return AdaptOutcome::AbandonWorkflow;
    };
    let revised = |trajectory, strategy| AdaptOutcome::Revised {
        trajectory,
        strategy,
        siblings: Vec::new(),
    };
    if notification.is_empty() {
        return revised(current.clone(), None);
    }
    if notification.direction == Direction::Improvement {
        return revised(upgrade(current, notification, ctx.catalog, ctx.now), None);
    }
    let view = if state.admission_seq.is_some() {
        CapabilityView::excluding(ctx.envelope, current)
    } else {
        CapabilityView::from_envelope(ctx.envelope)
    }
    .with_notification(notification);
    for strategy in policy.effective(current.permissions) {
        let attempt = match strategy {
            Strategy::AcceptLower => accept_lower(current, notification, ctx.catalog, ctx.now)
                .map(|t| (t, Vec::new())),
            Strategy::Defer => {
                defer(current, notification, &view, ctx.catalog, ctx.now).map(|t| (t, Vec::new()))
            }
            Strategy::DowngradeNoncritical => {
                downgrade_noncritical(state, current, notification, &view, ctx)
            }
            Strategy::Replan => {
                replan(current, &view, ctx.catalog, ctx.now).map(|t| (t, Vec::new()))
            }
        };
        if let Some((trajectory, siblings)) = attempt {
            if trajectory.validate_structure().is_ok() {
                return AdaptOutcome::Revised {
                    trajectory,
                    strategy: Some(strategy),
                    siblings,
                };
            }
        }
    }
    AdaptOutcome::AbandonWorkflow
}

/// Part of `seg` an affected interval starting at `from` reaches, cut at
/// `now`: from there to the end of the segment.
fn downgrade_span(seg: &Interval, from: Tick, now: Tick) -> Option<Interval> {
    Interval::try_new(from.max(seg.start()).max(now), seg.end())
}

fn phase_of<'a>(t: &'a DemandTrajectory, id: &crate::model::PhaseId) -> &'a PhaseDemand {
    t.phase(id).expect("segment references a planned phase")
}

/// Best offered alternative within bounds on each affected segment, held
/// from the start of the affected interval to the end of the segment.
fn accept_lower(
    current: &DemandTrajectory,
    n: &CapabilityNotification,
    catalog: &ProfileCatalog,
    now: Tick,
) -> Option<DemandTrajectory> {
    let mut edits = Vec::new();
    for a in &n.affected {
        for s in current.segments.iter().filter(|s| s.interval.overlaps(&a.interval)) {
            let Some(span) = downgrade_span(&s.interval, a.interval.start(), now) else {
                continue;
            };
            let phase = phase_of(current, &s.phase_id);
            let best = a
                .alternatives
                .iter()
                .copied()
                .find(|r| *r <= s.rate && *r >= phase.min_acceptable)?;
            edits.push((span, best));
        }
    }
    let mut out = current.clone();
    for (span, r) in edits {
        out.rerate_over(&span, catalog, |_, cur| cur.min(r));
    }
    Some(out)
}

fn upgrade(
    current: &DemandTrajectory,
    n: &CapabilityNotification,
    catalog: &ProfileCatalog,
    now: Tick,
) -> DemandTrajectory {
    let mut out = current.clone();
    for a in &n.affected {
        let Some(span) = Interval::try_new(a.interval.start().max(now), a.interval.end()) else {
            continue;
        };
        out.rerate_over(&span, catalog, |phase, cur| {
            a.alternatives
                .iter()
                .copied()
                .find(|r| *r <= phase.preferred)
                .map_or(cur, |r| cur.max(r))
        });
    }
    out
}

/// Index of the earliest planned phase with a segment hit by `n` after `now`.
fn first_hit_phase(current: &DemandTrajectory, n: &CapabilityNotification, now: Tick) -> Option<usize> {
    current
        .segments
        .iter()
        .filter(|s| s.interval.end() > now)
        .filter(|s| n.affected.iter().any(|a| a.interval.overlaps(&s.interval)))
        .filter_map(|s| current.phase_index(&s.phase_id))
        .min()
}

/// Shifts the first affected phase and everything after it by the smallest
/// `d` for which each shifted phase admits at least its minimum throughout.
pub(crate) fn defer(
    current: &DemandTrajectory,
    n: &CapabilityNotification,
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    now: Tick,
) -> Option<DemandTrajectory> {
    let k = first_hit_phase(current, n, now)?;
    let ivs: Vec<Interval> = current.phases[k..]
        .iter()
        .map(|p| current.phase_interval(&p.phase_id))
        .collect::<Option<_>>()?;
    if ivs[0].start() <= now {
        return None;
    }
    let used = current.deferral_of(k);
    let budget = current.phases[k].max_deferral.checked_sub(used)?;
    if budget == 0 {
        return None;
    }
    let mut candidates = vec![1];
    for (p, iv) in current.phases[k..].iter().zip(&ivs) {
        for v in view.admissible(p.min_acceptable).iter() {
            if v.start() > iv.start() {
                candidates.push(v.start() - iv.start());
            }
        }
    }
    candidates.retain(|d| *d >= 1 && *d <= budget);
    candidates.sort_unstable();
    candidates.dedup();
    'next: for d in candidates {
        let mut segs = Vec::new();
        for (p, iv) in current.phases[k..].iter().zip(&ivs) {
            match phase_pieces(view, catalog, p, iv.shifted(d)) {
                Ok(s) => segs.extend(s),
                Err(_) => continue 'next,
            }
        }
        let keep = current.phase_segment_range(&current.phases[k].phase_id).start;
        let mut out = current.clone();
        out.segments.truncate(keep);
        out.segments.extend(segs);
        out.normalize_segments();
        return Some(out);
    }
    None
}

/// Lowers overlapping non-critical phases of sibling workflows to their
/// minimum so an affected critical phase can keep a higher rate.
fn downgrade_noncritical(
    state: &WorkflowState,
    current: &DemandTrajectory,
    n: &CapabilityNotification,
    view: &CapabilityView,
    ctx: &AdaptContext<'_>,
) -> Option<(DemandTrajectory, Vec<DemandTrajectory>)> {
    let mut spans = Vec::new();
    for a in &n.affected {
        for s in current.segments.iter().filter(|s| s.interval.overlaps(&a.interval)) {
            let Some(span) = downgrade_span(&s.interval, a.interval.start(), ctx.now) else {
                continue;
            };
            if state.criticality_of(&s.phase_id) != Some(Criticality::Critical) {
                return None;
            }
            spans.push((span, s.rate, phase_of(current, &s.phase_id).min_acceptable));
        }
    }
    if spans.is_empty() {
        return None;
    }
    let mut freed = Vec::new();
    let mut sibling_out = Vec::new();
    for sib in ctx.siblings {
        let Some(t) = sib.trajectory.as_ref() else {
            continue;
        };
        if sib.admission_seq.is_none() || !t.permissions.allow_downgrade {
            continue;
        }
        let mut edited = t.clone();
        let mut touched = false;
        for seg in &t.segments {
            let phase = phase_of(t, &seg.phase_id);
            if sib.criticality_of(&seg.phase_id) == Some(Criticality::Critical)
                || seg.rate <= phase.min_acceptable
            {
                continue;
            }
            for (span, _, _) in &spans {
                if let Some(ov) = seg.interval.intersect(span) {
                    freed.push((ov, seg.rate.signed() - phase.min_acceptable.signed()));
                    edited.rerate_over(&ov, ctx.catalog, |p, _| p.min_acceptable);
                    touched = true;
                }
            }
        }
        if touched {
            sibling_out.push(edited);
        }
    }
    if sibling_out.is_empty() {
        return None;
    }
    let bound: StepFn = view.floor().add_pieces(freed);
    let mut out = current.clone();
    for (span, rate, min) in spans {
        let limit = span
            .intersect(&bound.domain())
            .and_then(|inner| bound.min_over(&inner))
            .unwrap_or(i64::MAX);
        let r = best_rate(ctx.catalog, min, rate, limit)?;
        out.rerate_over(&span, ctx.catalog, |_, cur| cur.min(r));
    }
    Some((out, sibling_out))
}

/// Keeps what already ran and lays out the rest again from `now`.
pub(crate) fn replan(
    current: &DemandTrajectory,
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    now: Tick,
) -> Option<DemandTrajectory> {
    let running = current
        .phases
        .iter()
        .position(|p| current.phase_interval(&p.phase_id).is_some_and(|iv| iv.contains(now)));
    let mut kept: Vec<_> = Vec::new();
    for s in &current.segments {
        if s.interval.end() <= now {
            kept.push(s.clone());
        } else if s.interval.start() < now {
            let mut head = s.clone();
            head.interval = Interval::new(s.interval.start(), now).expect("start < now");
            kept.push(head);
        }
    }
    let (phases, start) = match running {
        Some(c) => {
            let p = &current.phases[c];
            let done = now - current.phase_interval(&p.phase_id)?.start();
            let rest = PhaseDemand {
                duration: p.duration - done,
                max_deferral: 0,
                ..p.clone()
            };
            let mut v = vec![rest];
            v.extend(current.phases[c + 1..].iter().cloned());
            (v, now)
        }
        None => {
            let f = current.phases.iter().position(|p| {
                current
                    .phase_interval(&p.phase_id)
                    .is_none_or(|iv| iv.start() >= now)
            })?;
            let prev_end = if f == 0 {
                current.not_before
            } else {
                current.phase_interval(&current.phases[f - 1].phase_id)?.end()
            };
            kept.retain(|s| current.phase_index(&s.phase_id).is_some_and(|i| i < f));
            (current.phases[f..].to_vec(), prev_end)
        }
    };
    let new = lay_out(view, catalog, &phases, start).ok()?;
    let mut out = current.clone();
    out.segments = kept;
    out.segments.extend(new);
    out.normalize_segments();
    Some(out)
}
