use serde::{Deserialize, Serialize};

use crate::model::{AgentId, Interval, IntervalSet, Kbps, PlanningWindow, ProfileCatalog, ProfileId};
use crate::step::StepFn;

/// Marks ticks where no profile is disclosed as valid. The true residual
/// there is below the lowest profile and may be negative.
pub const UNKNOWN_FLOOR: i64 = i64::MIN / 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeEntry {
    pub profile_id: ProfileId,
    pub rate: Kbps,
    /// Ticks of the window at which `rate` is sustainable.
    pub validity: IntervalSet,
    /// Minimum residual over `validity`; zero when `validity` is empty.
    pub headroom: Kbps,
}

/// M1 payload. Carries no per-commitment data and no agent identifier other
/// than the scope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityEnvelope {
    pub scope_agent_id: AgentId,
    pub window: PlanningWindow,
    pub entries: Vec<EnvelopeEntry>,
}

impl CapabilityEnvelope {
    /// Derives every entry from a residual function over the window.
    pub fn from_residual(
        residual: &StepFn,
        catalog: &ProfileCatalog,
        window: PlanningWindow,
        scope_agent_id: AgentId,
    ) -> Self {
        let entries = catalog
            .iter()
            .map(|p| {
                let validity = residual.where_at_least(p.rate.signed());
                let headroom = validity
                    .iter()
                    .filter_map(|iv| residual.min_over(iv))
                    .min()
                    .map_or(Kbps::ZERO, |m| Kbps(m.max(0) as u64));
                EnvelopeEntry {
                    profile_id: p.id.clone(),
                    rate: p.rate,
                    validity,
                    headroom,
                }
            })
            .collect();
        Self {
            scope_agent_id,
            window,
            entries,
        }
    }

    pub fn rescoped(&self, scope_agent_id: AgentId) -> Self {
        Self {
            scope_agent_id,
            ..self.clone()
        }
    }

    pub fn entry(&self, rate: Kbps) -> Option<&EnvelopeEntry> {
        self.entries.iter().find(|e| e.rate == rate)
    }

    pub fn is_valid_over(&self, rate: Kbps, iv: &Interval) -> bool {
        self.entry(rate).is_some_and(|e| e.validity.covers(iv))
    }

    /// Sound lower bound on the residual at each window tick: the headroom of
    /// the highest profile valid there, or [`UNKNOWN_FLOOR`].
    pub fn residual_floor(&self) -> StepFn {
        let mut entries: Vec<&EnvelopeEntry> = self.entries.iter().collect();
        entries.sort_by_key(|e| e.rate);
        // Validity sets are nested and headroom grows with rate, so the floor
        // telescopes into one increment per level.
        let mut pieces = Vec::new();
        let mut prev = UNKNOWN_FLOOR;
        for e in entries {
            if e.validity.is_empty() {
                break;
            }
            let h = e.headroom.signed();
            for iv in e.validity.iter() {
                pieces.push((*iv, h - prev));
            }
            prev = h;
        }
        StepFn::constant(self.window.interval(), UNKNOWN_FLOOR).add_pieces(pieces)
    }
}
