//! Piecewise-constant integer functions over a tick domain. Residual
//! capacity, aggregate demand and envelope validity are all built on this.

use std::collections::BTreeMap;

use crate::model::{CapacitySchedule, Interval, IntervalSet, Tick};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFn {
    domain: Interval,
    /// `(start, value)`; the first start is `domain.start`, starts strictly
    /// increase and consecutive values differ.
    steps: Vec<(Tick, i64)>,
}

impl StepFn {
    pub fn constant(domain: Interval, value: i64) -> Self {
        Self {
            domain,
            steps: vec![(domain.start(), value)],
        }
    }

    pub fn from_schedule(schedule: &CapacitySchedule, domain: Interval) -> Self {
        let initial = schedule.capacity_at(domain.start()).signed();
        let mut deltas = BTreeMap::new();
        let mut prev = initial;
        for (start, cap) in schedule.boundaries_in(domain.start(), domain.end()) {
            *deltas.entry(start).or_insert(0) += cap.signed() - prev;
            prev = cap.signed();
        }
        Self::from_deltas(domain, initial, &deltas)
    }

    fn from_deltas(domain: Interval, initial: i64, deltas: &BTreeMap<Tick, i64>) -> Self {
        let mut steps = vec![(domain.start(), initial)];
        let mut value = initial;
        for (&t, &d) in deltas.range(domain.start() + 1..domain.end()) {
            if d == 0 {
                continue;
            }
            value += d;
            match steps.last_mut() {
                Some(last) if last.0 == t => last.1 = value,
                _ => steps.push((t, value)),
            }
        }
        steps.dedup_by(|b, a| a.1 == b.1);
        Self { domain, steps }
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Interval, i64)> + '_ {
        self.steps.iter().enumerate().map(move |(i, &(start, v))| {
            let end = self.steps.get(i + 1).map_or(self.domain.end(), |s| s.0);
            (Interval::new(start, end).expect("steps strictly increase"), v)
        })
    }

    /// Value at `t`; `t` must lie in the domain.
    pub fn at(&self, t: Tick) -> i64 {
        debug_assert!(self.domain.contains(t), "{t} outside {}", self.domain);
        let idx = self.steps.partition_point(|s| s.0 <= t);
        self.steps[idx.max(1) - 1].1
    }

    /// Minimum over `iv ∩ domain`, or `None` when they do not intersect.
    pub fn min_over(&self, iv: &Interval) -> Option<i64> {
        let clip = iv.intersect(&self.domain)?;
        let first = self.steps.partition_point(|s| s.0 <= clip.start()).max(1) - 1;
        self.steps[first..]
            .iter()
            .take_while(|s| s.0 < clip.end())
            .map(|s| s.1)
            .min()
    }

    pub fn where_at_least(&self, threshold: i64) -> IntervalSet {
        IntervalSet::from_intervals(
            self.pieces()
                .filter(|(_, v)| *v >= threshold)
                .map(|(iv, _)| iv),
        )
    }

    pub fn where_below(&self, threshold: i64) -> IntervalSet {
        IntervalSet::from_intervals(
            self.pieces()
                .filter(|(_, v)| *v < threshold)
                .map(|(iv, _)| iv),
        )
    }

    /// Overwrites the function with `value` on `iv` (clipped to the domain).
    pub fn set_over(&self, iv: &Interval, value: i64) -> StepFn {
        let edits: Vec<(Interval, i64)> = self
            .pieces()
            .filter_map(|(p, v)| p.intersect(iv).map(|x| (x, value - v)))
            .collect();
        self.add_pieces(edits)
    }

    /// Adds `value` over each interval (clipped to the domain).
    pub fn add_pieces(&self, pieces: impl IntoIterator<Item = (Interval, i64)>) -> StepFn {
        let mut deltas: BTreeMap<Tick, i64> = BTreeMap::new();
        let mut prev = self.steps[0].1;
        for &(t, v) in &self.steps[1..] {
            *deltas.entry(t).or_insert(0) += v - prev;
            prev = v;
        }
        let mut initial = self.steps[0].1;
        for (iv, v) in pieces {
            let Some(clip) = iv.intersect(&self.domain) else {
                continue;
            };
            if clip.start() == self.domain.start() {
                initial += v;
            } else {
                *deltas.entry(clip.start()).or_insert(0) += v;
            }
            if clip.end() < self.domain.end() {
                *deltas.entry(clip.end()).or_insert(0) -= v;
            }
        }
        Self::from_deltas(self.domain, initial, &deltas)
    }
}
