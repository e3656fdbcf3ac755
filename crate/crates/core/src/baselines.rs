//! Classical replacement policies: LRU, LFU (in-cache counts) and FIFO, plus
//! a null policy that never replaces once the cache is full.
//!
//! Each policy keeps an ordered index of `(criterion, slot)` over the cached
//! contents, so a decision is the minimum element. Ties fall through to the
//! least-recent request and then the lowest slot index.

use std::collections::{BTreeSet, HashMap};

use crate::cache::{CacheEvent, CacheState, Policy, PolicyDecision, Request};
use crate::error::{Error, Result};
use crate::trace::ContentId;

/// Ordered `(key, slot)` index over cached contents.
#[derive(Debug, Clone, Default)]
struct SlotOrder<K: Ord + Copy> {
    by_content: HashMap<ContentId, (K, usize)>,
    order: BTreeSet<(K, usize)>,
}

impl<K: Ord + Copy> SlotOrder<K> {
    fn insert(&mut self, content: ContentId, key: K, slot: usize) {
        if let Some(old) = self.by_content.insert(content, (key, slot)) {
            self.order.remove(&old);
        }
        self.order.insert((key, slot));
    }

    fn remove(&mut self, content: ContentId) -> Option<K> {
        let entry = self.by_content.remove(&content)?;
        self.order.remove(&entry);
        Some(entry.0)
    }

    fn get(&self, content: ContentId) -> Option<(K, usize)> {
        self.by_content.get(&content).copied()
    }

    fn min_slot(&self) -> Option<usize> {
        self.order.first().map(|&(_, slot)| slot)
    }

    fn len(&self) -> usize {
        self.by_content.len()
    }
}

fn victim<K: Ord + Copy>(order: &SlotOrder<K>, cache: &CacheState, policy: &str) -> Result<PolicyDecision> {
    if order.len() != cache.len() {
        return Err(Error::Contract(format!(
            "{policy} tracks {} contents but cache holds {}",
            order.len(),
            cache.len()
        )));
    }
    order
        .min_slot()
        .map(PolicyDecision::replace)
        .ok_or_else(|| Error::Contract(format!("{policy} asked to evict from an empty cache")))
}

/// Least recently used.
#[derive(Debug, Clone, Default)]
pub struct Lru {
    recency: SlotOrder<usize>,
}

impl Lru {
    pub fn new() -> Self {
        Self::default()
    }

    /// Epoch of the last request for a cached content.
    pub fn last_request(&self, content: ContentId) -> Option<usize> {
        self.recency.get(content).map(|(k, _)| k)
    }
}

impl Policy for Lru {
    fn name(&self) -> String {
        "lru".into()
    }

    fn decide(&mut self, _request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        victim(&self.recency, cache, "lru")
    }

    fn on_update(&mut self, request: &Request, event: CacheEvent, _cache: &CacheState) {
        match event {
            CacheEvent::Hit => {
                if let Some((_, slot)) = self.recency.get(request.content) {
                    self.recency.insert(request.content, request.epoch, slot);
                }
            }
            CacheEvent::Admitted { slot } => self.recency.insert(request.content, request.epoch, slot),
            CacheEvent::Replaced { slot, evicted } => {
                self.recency.remove(evicted);
                self.recency.insert(request.content, request.epoch, slot);
            }
            CacheEvent::Bypassed => {}
        }
    }
}

/// Least frequently used, counting requests only while a content is cached.
///
/// A content's count starts at one on admission and is discarded on eviction.
#[derive(Debug, Clone, Default)]
pub struct Lfu {
    /// Key is `(count, last request epoch)`.
    frequency: SlotOrder<(u64, usize)>,
}

impl Lfu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, content: ContentId) -> Option<u64> {
        self.frequency.get(content).map(|((c, _), _)| c)
    }
}

impl Policy for Lfu {
    fn name(&self) -> String {
        "lfu".into()
    }

    fn decide(&mut self, _request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        victim(&self.frequency, cache, "lfu")
    }

    fn on_update(&mut self, request: &Request, event: CacheEvent, _cache: &CacheState) {
        match event {
            CacheEvent::Hit => {
                if let Some(((count, _), slot)) = self.frequency.get(request.content) {
                    self.frequency
                        .insert(request.content, (count + 1, request.epoch), slot);
                }
            }
            CacheEvent::Admitted { slot } => self.frequency.insert(request.content, (1, request.epoch), slot),
            CacheEvent::Replaced { slot, evicted } => {
                self.frequency.remove(evicted);
                self.frequency.insert(request.content, (1, request.epoch), slot);
            }
            CacheEvent::Bypassed => {}
        }
    }
}

/// First in, first out by admission epoch.
#[derive(Debug, Clone, Default)]
pub struct Fifo {
    /// Key is `(insertion epoch, last request epoch)`.
    insertion: SlotOrder<(usize, usize)>,
}

impl Fifo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inserted_at(&self, content: ContentId) -> Option<usize> {
        self.insertion.get(content).map(|((i, _), _)| i)
    }
}

impl Policy for Fifo {
    fn name(&self) -> String {
        "fifo".into()
    }

    fn decide(&mut self, _request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        victim(&self.insertion, cache, "fifo")
    }

    fn on_update(&mut self, request: &Request, event: CacheEvent, _cache: &CacheState) {
        match event {
            CacheEvent::Hit => {
                if let Some(((inserted, _), slot)) = self.insertion.get(request.content) {
                    self.insertion
                        .insert(request.content, (inserted, request.epoch), slot);
                }
            }
            CacheEvent::Admitted { slot } => {
                self.insertion
                    .insert(request.content, (request.epoch, request.epoch), slot)
            }
            CacheEvent::Replaced { slot, evicted } => {
                self.insertion.remove(evicted);
                self.insertion
                    .insert(request.content, (request.epoch, request.epoch), slot);
            }
            CacheEvent::Bypassed => {}
        }
    }
}

/// Never replaces once full.
///
/// Under shifting popularity this is a floor for the other policies. On a
/// static Zipf trace it is not: the first `C` distinct contents are already
/// popular, and freezing them beats LRU and FIFO.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverReplace;

impl Policy for NeverReplace {
    fn name(&self) -> String {
        "null".into()
    }

    fn decide(&mut self, _request: &Request, _cache: &CacheState) -> Result<PolicyDecision> {
        Ok(PolicyDecision::BYPASS)
    }
}
