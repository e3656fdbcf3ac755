//! Sliding-window request counts and the learner state vector.
//!
//! The tracker keeps the last `long` request IDs in a ring and, for every
//! content seen inside that horizon, its count in the short, medium and long
//! windows. Each observation is `O(1)`: the new ID increments all three counts
//! and the IDs falling off each window edge decrement theirs.

use std::collections::{HashMap, VecDeque};

use crate::cache::CacheState;
use crate::error::{Error, Result};
use crate::trace::ContentId;

/// Short, medium and long window lengths in requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Windows {
    pub short: usize,
    pub medium: usize,
    pub long: usize,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            short: 10,
            medium: 100,
            long: 1000,
        }
    }
}

impl Windows {
    fn lengths(&self) -> [usize; 3] {
        [self.short, self.medium, self.long]
    }

    pub fn validate(&self) -> Result<()> {
        if self.short == 0 || self.short > self.medium || self.medium > self.long {
            return Err(Error::invalid(format!(
                "feature windows must satisfy 0 < short <= medium <= long, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How counts are written into the state vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FeatureScaling {
    /// Count divided by its window length, so every entry is in `[0, 1]`.
    #[default]
    WindowFraction,
    RawCounts,
}

/// Layout `[f_s0..f_sC, f_m0..f_mC, f_l0..f_lC]`; index 0 is the requested
/// content and `1..=C` are the cache slots.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn zeros(capacity: usize) -> Self {
        StateVector(vec![0.0; 3 * (capacity + 1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cache capacity this vector was laid out for.
    pub fn capacity(&self) -> usize {
        self.0.len() / 3 - 1
    }

    /// Feature `window` (0 short, 1 medium, 2 long) of position `j`.
    pub fn get(&self, window: usize, j: usize) -> f64 {
        self.0[window * (self.capacity() + 1) + j]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct FeatureTracker {
    windows: Windows,
    scaling: FeatureScaling,
    history: VecDeque<ContentId>,
    counts: HashMap<ContentId, [u32; 3]>,
    observed: u64,
}

impl FeatureTracker {
    pub fn new(windows: Windows, scaling: FeatureScaling) -> Result<Self> {
        windows.validate()?;
        Ok(Self {
            windows,
            scaling,
            history: VecDeque::with_capacity(windows.long + 1),
            counts: HashMap::new(),
            observed: 0,
        })
    }

    pub fn windows(&self) -> Windows {
        self.windows
    }

    pub fn observations(&self) -> u64 {
        self.observed
    }

    pub fn observe(&mut self, content: ContentId) {
        self.history.push_back(content);
        self.observed += 1;
        let entry = self.counts.entry(content).or_default();
        for c in entry.iter_mut() {
            *c += 1;
        }
        let len = self.history.len();
        if len > self.windows.short {
            let leaving = self.history[len - 1 - self.windows.short];
            self.decrement(leaving, 0);
        }
        if len > self.windows.medium {
            let leaving = self.history[len - 1 - self.windows.medium];
            self.decrement(leaving, 1);
        }
        if len > self.windows.long {
            let leaving = self.history.pop_front().expect("history longer than window");
            self.decrement(leaving, 2);
            if self.counts.get(&leaving).is_some_and(|c| c[2] == 0) {
                self.counts.remove(&leaving);
            }
        }
    }

    fn decrement(&mut self, content: ContentId, window: usize) {
        if let Some(c) = self.counts.get_mut(&content) {
            c[window] -= 1;
        }
    }

    /// Raw `[short, medium, long]` counts for `content`.
    pub fn counts(&self, content: ContentId) -> [u32; 3] {
        self.counts.get(&content).copied().unwrap_or_default()
    }

    /// Assemble the state for a decision on `requested` against `cache`.
    pub fn extract_state(&self, cache: &CacheState, requested: ContentId) -> StateVector {
        let capacity = cache.capacity();
        let stride = capacity + 1;
        let mut values = vec![0.0; 3 * stride];
        let lengths = self.windows.lengths();
        let ids = std::iter::once(requested).chain(cache.contents().iter().copied());
        for (j, id) in ids.enumerate() {
            let counts = self.counts(id);
            for w in 0..3 {
                let raw = counts[w] as f64;
                values[w * stride + j] = match self.scaling {
                    FeatureScaling::WindowFraction => raw / lengths[w] as f64,
                    FeatureScaling::RawCounts => raw,
                };
            }
        }
        StateVector(values)
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.counts.clear();
        self.observed = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tracker() -> FeatureTracker {
        FeatureTracker::new(Windows::default(), FeatureScaling::WindowFraction).unwrap()
    }

    fn recount(history: &[ContentId], window: usize, id: ContentId) -> u32 {
        let start = history.len().saturating_sub(window);
        history[start..].iter().filter(|&&x| x == id).count() as u32
    }

    #[test]
    fn short_window_saturates_then_slides() {
        let mut t = tracker();
        for _ in 0..10 {
            t.observe(3);
        }
        assert_eq!(t.counts(3)[0], 10);
        t.observe(4);
        assert_eq!(t.counts(3), [9, 10, 10]);
    }

    #[test]
    fn long_window_warmup_counts_everything() {
        let mut t = tracker();
        for i in 0..700 {
            t.observe(if i % 7 == 0 { 1 } else { 2 });
        }
        assert_eq!(t.counts(1)[2], 100);
        assert_eq!(t.counts(2)[2], 600);
    }

    #[test]
    fn empty_tracker_gives_zero_state() {
        let t = tracker();
        let mut cache = CacheState::new(3).unwrap();
        for c in [1, 2, 3] {
            cache.admit_when_not_full(c).unwrap();
        }
        let s = t.extract_state(&cache, 9);
        assert_eq!(s.len(), 12);
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn requested_content_fraction() {
        let mut t = tracker();
        for i in 0..10 {
            t.observe(if i % 2 == 0 { 5 } else { 6 });
        }
        let mut cache = CacheState::new(2).unwrap();
        cache.admit_when_not_full(6).unwrap();
        cache.admit_when_not_full(7).unwrap();
        let s = t.extract_state(&cache, 5);
        assert_eq!(s.get(0, 0), 0.5);
        assert_eq!(s.get(1, 0), 0.05);
        assert_eq!(s.get(2, 0), 0.005);
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s, t.extract_state(&cache, 5));
    }

    #[test]
    fn raw_counts_scaling() {
        let mut t = FeatureTracker::new(Windows::default(), FeatureScaling::RawCounts).unwrap();
        for _ in 0..4 {
            t.observe(1);
        }
        let mut cache = CacheState::new(1).unwrap();
        cache.admit_when_not_full(1).unwrap();
        let s = t.extract_state(&cache, 2);
        assert_eq!(s.as_slice(), &[0.0, 4.0, 0.0, 4.0, 0.0, 4.0]);
    }

    #[test]
    fn invalid_windows_rejected() {
        let w = Windows {
            short: 10,
            medium: 5,
            long: 100,
        };
        assert!(FeatureTracker::new(w, FeatureScaling::default()).is_err());
    }

    proptest! {
        #[test]
        fn incremental_counts_match_recount(ids in prop::collection::vec(1u32..12, 1..2500)) {
            let mut t = tracker();
            for (i, &id) in ids.iter().enumerate() {
                t.observe(id);
                // Spot-check all contents every few steps to keep the test fast.
                if i % 97 == 0 || i + 1 == ids.len() {
                    let seen = &ids[..=i];
                    for c in 1..12 {
                        let counts = t.counts(c);
                        prop_assert_eq!(counts[0], recount(seen, 10, c));
                        prop_assert_eq!(counts[1], recount(seen, 100, c));
                        prop_assert_eq!(counts[2], recount(seen, 1000, c));
                    }
                }
            }
        }

        #[test]
        fn state_entries_bounded(ids in prop::collection::vec(1u32..20, 10..1500)) {
            let mut t = tracker();
            let mut cache = CacheState::new(4).unwrap();
            for &id in &ids {
                t.observe(id);
                if !cache.lookup(id) && !cache.is_full() {
                    cache.admit_when_not_full(id).unwrap();
                }
            }
            let s = t.extract_state(&cache, ids[ids.len() - 1]);
            prop_assert_eq!(s.len(), 15);
            prop_assert!(s.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
