use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ModelError, Tick};

/// Bit rate in kilobits per second. All capacity arithmetic is integral.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Kbps(pub u64);

impl Kbps {
    pub const ZERO: Kbps = Kbps(0);

    pub const fn from_mbps(mbps: u64) -> Kbps {
        Kbps(mbps * 1000)
    }

    /// Rounds to the nearest kbps. Config files carry Mbps as decimals.
    pub fn from_mbps_f64(mbps: f64) -> Kbps {
        Kbps((mbps * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_mbps(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn signed(self) -> i64 {
        self.0 as i64
    }
}

impl fmt::Display for Kbps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}kbps", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileId(pub String);

impl ProfileId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A guaranteed-bit-rate level the network can enforce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosProfile {
    pub id: ProfileId,
    pub rate: Kbps,
    /// Informational class label, e.g. `5QI=4`.
    pub label: String,
}

impl QosProfile {
    pub fn new(id: impl Into<String>, rate: Kbps, label: impl Into<String>) -> Self {
        Self {
            id: ProfileId::new(id),
            rate,
            label: label.into(),
        }
    }
}

/// Profiles sorted by ascending rate. Ids and rates are unique, so a profile
/// can be named on the wire by its rate alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<QosProfile>", into = "Vec<QosProfile>")]
pub struct ProfileCatalog {
    profiles: Vec<QosProfile>,
}

impl ProfileCatalog {
    pub fn new(mut profiles: Vec<QosProfile>) -> Result<Self, ModelError> {
        if profiles.is_empty() {
            return Err(ModelError::EmptyCatalog);
        }
        profiles.sort_by_key(|p| p.rate);
        for p in &profiles {
            if p.rate == Kbps::ZERO {
                return Err(ModelError::NonPositiveRate(p.id.clone()));
            }
        }
        for (i, p) in profiles.iter().enumerate() {
            if profiles[..i].iter().any(|q| q.id == p.id) {
                return Err(ModelError::DuplicateProfile(p.id.to_string()));
            }
            if i > 0 && profiles[i - 1].rate == p.rate {
                return Err(ModelError::DuplicateProfile(format!("rate {}", p.rate)));
            }
        }
        Ok(Self { profiles })
    }

    /// Builds `gbr-<n>` profiles from whole-Mbps levels.
    pub fn from_mbps_levels(levels: &[u64], label: &str) -> Result<Self, ModelError> {
        Self::new(
            levels
                .iter()
                .map(|&m| QosProfile::new(format!("gbr-{m}"), Kbps::from_mbps(m), label))
                .collect(),
        )
    }

    pub fn profiles(&self) -> &[QosProfile] {
        &self.profiles
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &QosProfile> {
        self.profiles.iter()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, id: &ProfileId) -> Option<&QosProfile> {
        self.profiles.iter().find(|p| &p.id == id)
    }

    pub fn by_rate(&self, rate: Kbps) -> Option<&QosProfile> {
        self.profiles
            .binary_search_by_key(&rate, |p| p.rate)
            .ok()
            .map(|i| &self.profiles[i])
    }

    pub fn lowest(&self) -> &QosProfile {
        &self.profiles[0]
    }

    /// Highest profile whose rate does not exceed `limit`.
    pub fn highest_at_most(&self, limit: i64) -> Option<&QosProfile> {
        self.profiles.iter().rev().find(|p| p.rate.signed() <= limit)
    }

    /// Index of the profile `levels` steps below `rate`, floored at
    /// the lowest profile.
    pub fn levels_below(&self, rate: Kbps, levels: usize) -> Option<&QosProfile> {
        let idx = self.profiles.iter().position(|p| p.rate == rate)?;
        Some(&self.profiles[idx.saturating_sub(levels)])
    }

    pub fn next_lower(&self, rate: Kbps) -> Option<&QosProfile> {
        self.profiles.iter().rev().find(|p| p.rate < rate)
    }
}

impl TryFrom<Vec<QosProfile>> for ProfileCatalog {
    type Error = ModelError;

    fn try_from(v: Vec<QosProfile>) -> Result<Self, Self::Error> {
        ProfileCatalog::new(v)
    }
}

impl From<ProfileCatalog> for Vec<QosProfile> {
    fn from(c: ProfileCatalog) -> Self {
        c.profiles
    }
}

/// Piecewise-constant capacity. The first epoch starts at tick 0 and the
/// last one extends forever.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(Tick, Kbps)>", into = "Vec<(Tick, Kbps)>")]
pub struct CapacitySchedule {
    epochs: Vec<(Tick, Kbps)>,
}

impl CapacitySchedule {
    pub fn new(epochs: Vec<(Tick, Kbps)>) -> Result<Self, ModelError> {
        match epochs.first() {
            Some((0, _)) => {}
            _ => return Err(ModelError::ScheduleStart),
        }
        if epochs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ModelError::ScheduleOrder);
        }
        Ok(Self { epochs })
    }

    pub fn constant(capacity: Kbps) -> Self {
        Self {
            epochs: vec![(0, capacity)],
        }
    }

    pub fn epochs(&self) -> &[(Tick, Kbps)] {
        &self.epochs
    }

    pub fn epoch_index_at(&self, t: Tick) -> usize {
        self.epochs.partition_point(|(s, _)| *s <= t) - 1
    }

    pub fn capacity_at(&self, t: Tick) -> Kbps {
        self.epochs[self.epoch_index_at(t)].1
    }

    /// Epoch starts strictly inside `(from, to)`.
    pub fn boundaries_in(&self, from: Tick, to: Tick) -> impl Iterator<Item = (Tick, Kbps)> + '_ {
        self.epochs
            .iter()
            .copied()
            .filter(move |(s, _)| *s > from && *s < to)
    }

    /// Keeps the schedule before `at` and replaces everything from `at` on
    /// with a single open-ended epoch.
    pub fn replaced_from(&self, at: Tick, capacity: Kbps) -> CapacitySchedule {
        let mut epochs: Vec<(Tick, Kbps)> =
            self.epochs.iter().copied().filter(|(s, _)| *s < at).collect();
        if epochs.is_empty() {
            epochs.push((0, capacity));
        } else {
            epochs.push((at, capacity));
        }
        CapacitySchedule { epochs }
    }
}

impl TryFrom<Vec<(Tick, Kbps)>> for CapacitySchedule {
    type Error = ModelError;

    fn try_from(v: Vec<(Tick, Kbps)>) -> Result<Self, Self::Error> {
        CapacitySchedule::new(v)
    }
}

impl From<CapacitySchedule> for Vec<(Tick, Kbps)> {
    fn from(s: CapacitySchedule) -> Self {
        s.epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_sorts_and_rejects_duplicates() {
        let c = ProfileCatalog::from_mbps_levels(&[30, 1, 10], "5QI=4").unwrap();
        let rates: Vec<_> = c.iter().map(|p| p.rate.0).collect();
        assert_eq!(rates, vec![1000, 10_000, 30_000]);
        assert!(ProfileCatalog::from_mbps_levels(&[1, 1], "x").is_err());
        assert!(ProfileCatalog::new(vec![]).is_err());
        assert_eq!(c.highest_at_most(29_999).unwrap().rate, Kbps(10_000));
        assert!(c.highest_at_most(999).is_none());
    }

    #[test]
    fn two_levels_below_floors_at_lowest() {
        let c = ProfileCatalog::from_mbps_levels(&[1, 5, 10, 20, 30], "").unwrap();
        let below = |m| c.levels_below(Kbps::from_mbps(m), 2).unwrap().rate;
        assert_eq!(below(30), Kbps::from_mbps(10));
        assert_eq!(below(20), Kbps::from_mbps(5));
        assert_eq!(below(5), Kbps::from_mbps(1));
        assert_eq!(below(1), Kbps::from_mbps(1));
    }

    #[test]
    fn schedule_lookup_and_replacement() {
        let s = CapacitySchedule::new(vec![
            (0, Kbps::from_mbps(450)),
            (1200, Kbps::from_mbps(220)),
        ])
        .unwrap();
        assert_eq!(s.capacity_at(1199), Kbps::from_mbps(450));
        assert_eq!(s.capacity_at(1200), Kbps::from_mbps(220));
        assert_eq!(s.capacity_at(99_999), Kbps::from_mbps(220));
        let r = s.replaced_from(600, Kbps::from_mbps(10));
        assert_eq!(r.epochs(), &[(0, Kbps::from_mbps(450)), (600, Kbps::from_mbps(10))]);
        assert!(CapacitySchedule::new(vec![(5, Kbps(1))]).is_err());
        assert!(CapacitySchedule::new(vec![(0, Kbps(1)), (0, Kbps(2))]).is_err());
    }
}
