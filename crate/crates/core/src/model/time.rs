use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Simulation time in ticks. One tick is [`DEFAULT_TICK_MS`] milliseconds
/// unless a scenario says otherwise.
pub type Tick = u64;

pub const DEFAULT_TICK_MS: u64 = 100;

/// Half-open tick interval `[start, end)`. Always non-empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[Tick; 2]", into = "[Tick; 2]")]
pub struct Interval {
    start: Tick,
    end: Tick,
}

impl Interval {
    pub fn new(start: Tick, end: Tick) -> Result<Self, ModelError> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(ModelError::EmptyInterval { start, end })
        }
    }

    /// Like [`Interval::new`] but returns `None` for empty ranges; handy when
    /// clipping.
    pub fn try_new(start: Tick, end: Tick) -> Option<Self> {
        (start < end).then_some(Self { start, end })
    }

    pub fn start(&self) -> Tick {
        self.start
    }

    pub fn end(&self) -> Tick {
        self.end
    }

    pub fn len(&self) -> Tick {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: Tick) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::try_new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn shifted(&self, by: Tick) -> Interval {
        Interval {
            start: self.start + by,
            end: self.end + by,
        }
    }
}

impl TryFrom<[Tick; 2]> for Interval {
    type Error = ModelError;

    fn try_from([start, end]: [Tick; 2]) -> Result<Self, Self::Error> {
        Interval::new(start, end)
    }
}

impl From<Interval> for [Tick; 2] {
    fn from(iv: Interval) -> Self {
        [iv.start, iv.end]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// A set of ticks stored as sorted, pairwise disjoint, non-adjacent intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(iv: Interval) -> Self {
        Self {
            intervals: vec![iv],
        }
    }

    pub fn from_intervals(intervals: impl IntoIterator<Item = Interval>) -> Self {
        Self {
            intervals: normalize(intervals.into_iter().collect()),
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.intervals.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_len(&self) -> Tick {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn insert(&mut self, iv: Interval) {
        self.intervals.push(iv);
        self.intervals = normalize(std::mem::take(&mut self.intervals));
    }

    pub fn contains(&self, t: Tick) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(t))
    }

    /// True when every tick of `iv` is in the set.
    pub fn covers(&self, iv: &Interval) -> bool {
        let idx = self.intervals.partition_point(|x| x.end <= iv.start);
        self.intervals.get(idx).is_some_and(|x| x.covers(iv))
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_intervals(self.intervals.iter().chain(other.intervals.iter()).copied())
    }

    pub fn intersect_interval(&self, iv: &Interval) -> IntervalSet {
        IntervalSet {
            intervals: self.intervals.iter().filter_map(|x| x.intersect(iv)).collect(),
        }
    }

    /// The part of `within` not covered by the set.
    pub fn complement_within(&self, within: &Interval) -> IntervalSet {
        let mut out = Vec::new();
        let mut cursor = within.start;
        for iv in self.intervals.iter().filter(|x| x.overlaps(within)) {
            if let Some(gap) = Interval::try_new(cursor, iv.start) {
                out.push(gap);
            }
            cursor = cursor.max(iv.end);
        }
        if let Some(tail) = Interval::try_new(cursor, within.end) {
            out.push(tail);
        }
        IntervalSet { intervals: out }
    }
}

impl From<Vec<Interval>> for IntervalSet {
    fn from(v: Vec<Interval>) -> Self {
        IntervalSet::from_intervals(v)
    }
}

impl From<IntervalSet> for Vec<Interval> {
    fn from(s: IntervalSet) -> Self {
        s.intervals
    }
}

fn normalize(mut v: Vec<Interval>) -> Vec<Interval> {
    v.sort();
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            // `<=` merges adjacent intervals as well as overlapping ones.
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Rolling coordination horizon `[start, start + length)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningWindow {
    pub start: Tick,
    pub length: Tick,
}

impl PlanningWindow {
    pub const DEFAULT_LENGTH: Tick = 2000;

    pub fn new(start: Tick, length: Tick) -> Result<Self, ModelError> {
        if length == 0 {
            return Err(ModelError::EmptyWindow);
        }
        Ok(Self { start, length })
    }

    pub fn end(&self) -> Tick {
        self.start + self.length
    }

    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start,
            end: self.end(),
        }
    }
}
