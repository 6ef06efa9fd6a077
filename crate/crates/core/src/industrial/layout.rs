use super::{CapabilityView, IndustrialError};
use crate::model::{
    profile_for, AdaptationPermissions, DemandTrajectory, Interval, Kbps, PhaseDemand, PhaseId,
    ProfileCatalog, SegmentAssignment, Tick, WorkflowSpec,
};

/// Highest catalog rate in `[lo, hi]` not above `limit`.
pub(crate) fn best_rate(catalog: &ProfileCatalog, lo: Kbps, hi: Kbps, limit: i64) -> Option<Kbps> {
    catalog
        .iter()
        .rev()
        .map(|p| p.rate)
        .find(|r| *r >= lo && *r <= hi && r.signed() <= limit)
}

/// Splits `iv` at the view's boundaries and gives each piece the highest
/// admissible rate in the phase's range. Fails with the first piece that
/// admits nothing.
pub(crate) fn phase_pieces(
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    phase: &PhaseDemand,
    iv: Interval,
) -> Result<Vec<SegmentAssignment>, Interval> {
    let w = view.window();
    let mut cuts = vec![iv.start(), iv.end()];
    for t in [w.start(), w.end()] {
        if t > iv.start() && t < iv.end() {
            cuts.push(t);
        }
    }
    cuts.extend(
        view.floor()
            .pieces()
            .map(|(p, _)| p.start())
            .filter(|&t| t > iv.start() && t < iv.end()),
    );
    cuts.sort_unstable();
    cuts.dedup();
    let mut out: Vec<SegmentAssignment> = Vec::new();
    for w2 in cuts.windows(2) {
        let piece = Interval::new(w2[0], w2[1]).expect("cuts strictly increase");
        let rate = best_rate(
            catalog,
            phase.min_acceptable,
            phase.preferred,
            view.floor_at(piece.start()),
        )
        .ok_or(piece)?;
        match out.last_mut() {
            Some(last) if last.rate == rate => {
                last.interval = Interval::new(last.interval.start(), piece.end()).expect("ordered");
            }
            _ => out.push(SegmentAssignment {
                phase_id: phase.phase_id.clone(),
                interval: piece,
                profile: profile_for(catalog, rate),
                rate,
            }),
        }
    }
    Ok(out)
}

/// Smallest shift `d <= max_deferral` such that `[start+d, start+d+len)`
/// lies in ticks admitting `min_acceptable`.
pub(crate) fn smallest_shift(
    view: &CapabilityView,
    phase: &PhaseDemand,
    start: Tick,
    max: Tick,
) -> Option<Tick> {
    for iv in view.admissible(phase.min_acceptable).iter() {
        if iv.end() <= start {
            continue;
        }
        let d = iv.start().saturating_sub(start);
        if d > max {
            break;
        }
        if start + d + phase.duration <= iv.end() {
            return Some(d);
        }
    }
    None
}

/// Lays phases out back to back from `start`. A phase that does not fit is
/// deferred within its own budget; otherwise the layout fails.
pub(crate) fn lay_out(
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    phases: &[PhaseDemand],
    start: Tick,
) -> Result<Vec<SegmentAssignment>, (PhaseId, Interval)> {
    let mut segments = Vec::new();
    let mut cursor = start;
    for p in phases {
        let iv = Interval::new(cursor, cursor + p.duration).expect("positive duration");
        let placed = match phase_pieces(view, catalog, p, iv) {
            Ok(segs) => segs,
            Err(bad) => {
                let d = smallest_shift(view, p, cursor, p.max_deferral)
                    .ok_or_else(|| (p.phase_id.clone(), bad))?;
                phase_pieces(view, catalog, p, iv.shifted(d))
                    .map_err(|bad| (p.phase_id.clone(), bad))?
            }
        };
        cursor = placed.last().expect("non-empty phase").interval.end();
        segments.extend(placed);
    }
    Ok(segments)
}

pub(crate) fn phase_demand(spec: &WorkflowSpec, idx: usize) -> PhaseDemand {
    let p = &spec.phases[idx];
    PhaseDemand {
        phase_id: p.phase_id.clone(),
        order_index: p.order_index,
        duration: p.duration,
        preferred: p.preferred,
        min_acceptable: p.min_acceptable,
        max_deferral: p.max_deferral,
    }
}

pub fn permissions_for(spec: &WorkflowSpec) -> AdaptationPermissions {
    AdaptationPermissions {
        allow_downgrade: spec.phases.iter().any(|p| p.min_acceptable < p.preferred),
        allow_defer: spec.phases.iter().any(|p| p.deferrable),
        allow_replan: true,
    }
}

/// Number of phases from `first` on whose nominal layout from `start` ends
/// inside the window. Deferral slack is ignored.
fn phases_in_window(spec: &WorkflowSpec, first: usize, start: Tick, window_end: Tick) -> usize {
    let mut end = start;
    let mut n = 0;
    for p in &spec.phases[first..] {
        end += p.duration;
        if end > window_end {
            break;
        }
        n += 1;
    }
    n
}

/// Plans the workflow from `start_tick` against `view`. Only phases that end
/// inside the window are included, and always at least the first one.
pub fn construct_with_view(
    spec: &WorkflowSpec,
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    start_tick: Tick,
) -> Result<DemandTrajectory, IndustrialError> {
    let n = phases_in_window(spec, 0, start_tick, view.window().end()).max(1);
    let phases: Vec<PhaseDemand> = (0..n).map(|i| phase_demand(spec, i)).collect();
    let segments = lay_out(view, catalog, &phases, start_tick).map_err(|(phase, interval)| {
        IndustrialError::InfeasibleWorkflow { phase, interval }
    })?;
    let mut out = DemandTrajectory {
        workflow_id: spec.workflow_id.clone(),
        agent_id: spec.agent_id.clone(),
        priority: spec.priority,
        not_before: start_tick,
        phases,
        segments,
        permissions: permissions_for(spec),
    };
    out.normalize_segments();
    Ok(out)
}

pub fn construct_trajectory(
    spec: &WorkflowSpec,
    envelope: &crate::network::CapabilityEnvelope,
    catalog: &ProfileCatalog,
    start_tick: Tick,
) -> Result<DemandTrajectory, IndustrialError> {
    construct_with_view(spec, &CapabilityView::from_envelope(envelope), catalog, start_tick)
}

/// Appends the next unplanned phases that fit in the window after the
/// planned end. `force` lays out at least one phase even if it overhangs.
/// `Ok(None)` when nothing new fits yet.
pub fn extend_trajectory(
    spec: &WorkflowSpec,
    current: &DemandTrajectory,
    view: &CapabilityView,
    catalog: &ProfileCatalog,
    force: bool,
) -> Result<Option<DemandTrajectory>, IndustrialError> {
    let first = current.phases.len();
    if first >= spec.phases.len() {
        return Ok(None);
    }
    let start = current.end().unwrap_or(current.not_before);
    let mut n = phases_in_window(spec, first, start, view.window().end());
    if n == 0 && force {
        n = 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let phases: Vec<PhaseDemand> = (first..first + n).map(|i| phase_demand(spec, i)).collect();
    let segments = lay_out(view, catalog, &phases, start).map_err(|(phase, interval)| {
        IndustrialError::InfeasibleWorkflow { phase, interval }
    })?;
    let mut out = current.clone();
    out.phases.extend(phases);
    out.segments.extend(segments);
    out.normalize_segments();
    Ok(Some(out))
}
