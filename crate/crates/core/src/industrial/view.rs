use crate::model::{DemandTrajectory, Interval, IntervalSet, Kbps, Tick};
use crate::network::{CapabilityEnvelope, CapabilityNotification, ConflictEntry, UNKNOWN_FLOOR};
use crate::step::StepFn;

/// What an industrial agent may assume about residual capacity: a sound
/// per-tick lower bound inside the window, and anything at all beyond it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapabilityView {
    floor: StepFn,
}

impl CapabilityView {
    /// Exactly the validity sets of `envelope`.
    pub fn from_envelope(envelope: &CapabilityEnvelope) -> Self {
        Self {
            floor: envelope.residual_floor(),
        }
    }

    /// The envelope with `own` demand handed back, for re-planning a
    /// trajectory the network already holds.
    pub fn excluding(envelope: &CapabilityEnvelope, own: &DemandTrajectory) -> Self {
        Self {
            floor: envelope.residual_floor().add_pieces(own.demand_pieces()),
        }
    }

    /// Takes the network's word for each affected interval: the highest
    /// offered alternative, or nothing.
    pub fn with_notification(mut self, n: &CapabilityNotification) -> Self {
        for a in &n.affected {
            let v = a.alternatives.first().map_or(UNKNOWN_FLOOR, |r| r.signed());
            self.floor = self.floor.set_over(&a.interval, v);
        }
        self
    }

    pub fn with_conflicts(mut self, conflicts: &[ConflictEntry]) -> Self {
        for c in conflicts {
            let v = c.max_admissible.map_or(UNKNOWN_FLOOR, |r| r.signed());
            self.floor = self.floor.set_over(&c.interval, v);
        }
        self
    }

    pub fn floor(&self) -> &StepFn {
        &self.floor
    }

    pub fn window(&self) -> Interval {
        self.floor.domain()
    }

    /// Lower bound on the residual at `t`. Past ticks count as unbounded,
    /// ticks beyond the window likewise.
    pub fn floor_at(&self, t: Tick) -> i64 {
        if self.window().contains(t) {
            self.floor.at(t)
        } else {
            i64::MAX
        }
    }

    /// Ticks (inside the window) at which `rate` fits.
    pub fn valid(&self, rate: Kbps) -> IntervalSet {
        self.floor.where_at_least(rate.signed())
    }

    /// `valid(rate)` plus everything outside the window.
    pub fn admissible(&self, rate: Kbps) -> IntervalSet {
        let w = self.window();
        let mut s = self.valid(rate);
        if w.start() > 0 {
            s.insert(Interval::new(0, w.start()).expect("non-empty"));
        }
        s.insert(Interval::new(w.end(), Tick::MAX).expect("non-empty"));
        s
    }

    pub fn admits(&self, rate: Kbps, iv: &Interval) -> bool {
        match iv.intersect(&self.window()) {
            Some(inner) => self.floor.min_over(&inner).is_some_and(|m| m >= rate.signed()),
            None => true,
        }
    }

    /// Restricts the view to ticks where an extra `load` also fits; used
    /// when one agent stacks several workflows.
    pub fn minus(&self, pieces: impl IntoIterator<Item = (Interval, i64)>) -> Self {
        Self {
            floor: self
                .floor
                .add_pieces(pieces.into_iter().map(|(iv, v)| (iv, -v))),
        }
    }
}
