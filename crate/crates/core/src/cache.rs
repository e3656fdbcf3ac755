//! Fixed-capacity base-station cache and the simulation loop that drives a
//! replacement policy over a request sequence.
//!
//! Each request is one epoch. A hit or an admission into a not-yet-full cache
//! ends the epoch without consulting the policy; only a miss against a full
//! cache is a *decision epoch*, where the policy picks an action in `0..=C`:
//! `0` leaves the cache untouched and `v >= 1` overwrites slot `v`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::trace::{ContentId, Trace};

/// Action chosen on a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyDecision {
    pub action: usize,
}

impl PolicyDecision {
    pub const BYPASS: PolicyDecision = PolicyDecision { action: 0 };

    pub fn replace(slot: usize) -> Self {
        PolicyDecision { action: slot }
    }
}

/// Slots are 1-based and stable: a replacement never moves other occupants.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    capacity: usize,
    slots: Vec<ContentId>,
    index: HashMap<ContentId, usize>,
}

impl CacheState {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("cache capacity must be at least 1"));
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            index: HashMap::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    /// The hit indicator: true iff `content` occupies some slot.
    pub fn lookup(&self, content: ContentId) -> bool {
        self.index.contains_key(&content)
    }

    pub fn slot_of(&self, content: ContentId) -> Option<usize> {
        self.index.get(&content).map(|&i| i + 1)
    }

    /// Occupant of 1-based slot `slot`.
    pub fn at(&self, slot: usize) -> Option<ContentId> {
        slot.checked_sub(1).and_then(|i| self.slots.get(i)).copied()
    }

    /// Occupants in slot order.
    pub fn contents(&self) -> &[ContentId] {
        &self.slots
    }

    /// Place `content` in the lowest-index empty slot and return that slot.
    pub fn admit_when_not_full(&mut self, content: ContentId) -> Result<usize> {
        if self.is_full() {
            return Err(Error::Contract(format!(
                "cannot admit {content}: all {} slots occupied",
                self.capacity
            )));
        }
        if self.lookup(content) {
            return Err(Error::Contract(format!("content {content} already cached")));
        }
        self.index.insert(content, self.slots.len());
        self.slots.push(content);
        Ok(self.slots.len())
    }

    /// Apply `decision` for uncached `content`; returns the evicted occupant.
    pub fn apply_decision(&mut self, content: ContentId, decision: PolicyDecision) -> Result<Option<ContentId>> {
        if self.lookup(content) {
            return Err(Error::Contract(format!("content {content} already cached")));
        }
        if decision.action == 0 {
            return Ok(None);
        }
        let idx = decision.action - 1;
        let Some(slot) = self.slots.get_mut(idx) else {
            return Err(Error::InvalidAction {
                action: decision.action,
                occupied: self.slots.len(),
                capacity: self.capacity,
            });
        };
        let evicted = std::mem::replace(slot, content);
        self.index.remove(&evicted);
        self.index.insert(content, idx);
        Ok(Some(evicted))
    }

    /// Index/slot agreement, no duplicates, never over capacity.
    pub fn invariants_hold(&self) -> bool {
        self.slots.len() <= self.capacity
            && self.index.len() == self.slots.len()
            && self
                .slots
                .iter()
                .enumerate()
                .all(|(i, c)| self.index.get(c) == Some(&i))
    }
}

/// Cumulative and windowed hit-rate bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRateAccumulator {
    window: usize,
    total_requests: u64,
    total_hits: u64,
    window_requests: u64,
    window_hits: u64,
    series: Vec<WindowPoint>,
}

/// Hit rate over the window ending (exclusively) at request index `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPoint {
    pub end: usize,
    pub chr: f64,
}

impl HitRateAccumulator {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("hit-rate window must be at least 1"));
        }
        Ok(Self {
            window,
            total_requests: 0,
            total_hits: 0,
            window_requests: 0,
            window_hits: 0,
            series: Vec::new(),
        })
    }

    pub fn record(&mut self, hit: bool) {
        self.total_requests += 1;
        self.window_requests += 1;
        if hit {
            self.total_hits += 1;
            self.window_hits += 1;
        }
        if self.window_requests as usize == self.window {
            self.close_window();
        }
    }

    fn close_window(&mut self) {
        if self.window_requests == 0 {
            return;
        }
        self.series.push(WindowPoint {
            end: self.total_requests as usize,
            chr: self.window_hits as f64 / self.window_requests as f64,
        });
        self.window_requests = 0;
        self.window_hits = 0;
    }

    /// Flush a trailing partial window into the series.
    pub fn finish(&mut self) {
        self.close_window();
    }

    pub fn total_requests(&self) -> u64 {
        self.total_requests
    }

    pub fn total_hits(&self) -> u64 {
        self.total_hits
    }

    pub fn chr(&self) -> f64 {
        if self.total_requests == 0 {
            0.0
        } else {
            self.total_hits as f64 / self.total_requests as f64
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn series(&self) -> &[WindowPoint] {
        &self.series
    }
}

/// What happened to the cache in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEvent {
    Hit,
    Admitted { slot: usize },
    Replaced { slot: usize, evicted: ContentId },
    Bypassed,
}

/// One request as seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub epoch: usize,
    pub content: ContentId,
    pub hit: bool,
}

/// Greedy-evaluation accounting reported by learned policies.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalStats {
    pub greedy_epochs: u64,
    pub evaluations: u64,
}

impl EvalStats {
    pub fn mean(&self) -> f64 {
        if self.greedy_epochs == 0 {
            0.0
        } else {
            self.evaluations as f64 / self.greedy_epochs as f64
        }
    }
}

/// A replacement policy driven by [`run_policy`].
///
/// `on_request` sees every request before the cache changes, `decide` is called
/// only on decision epochs, and `on_update` sees the epoch's cache event.
pub trait Policy {
    fn name(&self) -> String;

    fn on_request(&mut self, _request: &Request, _cache: &CacheState) -> Result<()> {
        Ok(())
    }

    fn decide(&mut self, request: &Request, cache: &CacheState) -> Result<PolicyDecision>;

    fn on_update(&mut self, _request: &Request, _event: CacheEvent, _cache: &CacheState) {}

    /// Called once after the last request.
    fn on_finish(&mut self) -> Result<()> {
        Ok(())
    }

    fn eval_stats(&self) -> Option<EvalStats> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn name(&self) -> String {
        (**self).name()
    }
    fn on_request(&mut self, request: &Request, cache: &CacheState) -> Result<()> {
        (**self).on_request(request, cache)
    }
    fn decide(&mut self, request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        (**self).decide(request, cache)
    }
    fn on_update(&mut self, request: &Request, event: CacheEvent, cache: &CacheState) {
        (**self).on_update(request, event, cache)
    }
    fn on_finish(&mut self) -> Result<()> {
        (**self).on_finish()
    }
    fn eval_stats(&self) -> Option<EvalStats> {
        (**self).eval_stats()
    }
}

/// Per-request record for offline recounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub epoch: usize,
    pub content: ContentId,
    pub hit: bool,
    /// Action taken on decision epochs, `None` otherwise.
    pub action: Option<usize>,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.hit { "hit" } else { "miss" };
        match self.action {
            Some(a) => write!(f, "{},{},{},{}", self.epoch, self.content, kind, a),
            None => write!(f, "{},{},{},-", self.epoch, self.content, kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub window: usize,
    pub record_outcomes: bool,
    /// End the run early once this many decision epochs have completed.
    pub max_decision_epochs: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            window: 1000,
            record_outcomes: false,
            max_decision_epochs: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub hit_rate: HitRateAccumulator,
    pub decision_epochs: u64,
    /// Wall-clock seconds spent inside `decide` plus applying its decision.
    pub decision_seconds: f64,
    pub eval_stats: Option<EvalStats>,
    pub outcomes: Vec<Outcome>,
    pub final_cache: CacheState,
}

impl RunReport {
    pub fn chr(&self) -> f64 {
        self.hit_rate.chr()
    }

    pub fn sec_per_decision(&self) -> f64 {
        if self.decision_epochs == 0 {
            0.0
        } else {
            self.decision_seconds / self.decision_epochs as f64
        }
    }
}

/// Simulate `trace` through a cache of `capacity` under `policy`.
pub fn run_policy(trace: &Trace, capacity: usize, policy: &mut dyn Policy, window: usize) -> Result<RunReport> {
    trace.require_nonempty()?;
    run_requests(
        &trace.requests,
        capacity,
        policy,
        RunOptions {
            window,
            ..RunOptions::default()
        },
    )
}

/// Simulation loop over a raw request slice, starting from an empty cache.
pub fn run_requests(
    requests: &[ContentId],
    capacity: usize,
    policy: &mut dyn Policy,
    options: RunOptions,
) -> Result<RunReport> {
    if requests.is_empty() {
        return Err(Error::invalid("request sequence is empty"));
    }
    let mut cache = CacheState::new(capacity)?;
    let mut hit_rate = HitRateAccumulator::new(options.window)?;
    let mut outcomes = Vec::with_capacity(if options.record_outcomes { requests.len() } else { 0 });
    let mut decision_epochs = 0;
    let mut decision_seconds = 0.0;

    for (epoch, &content) in requests.iter().enumerate() {
        let wrap = |e: Error| Error::Policy {
            epoch,
            source: Box::new(e),
        };
        let hit = cache.lookup(content);
        let request = Request { epoch, content, hit };
        policy.on_request(&request, &cache).map_err(wrap)?;
        hit_rate.record(hit);

        let mut action = None;
        let event = if hit {
            CacheEvent::Hit
        } else if !cache.is_full() {
            let slot = cache.admit_when_not_full(content)?;
            CacheEvent::Admitted { slot }
        } else {
            let started = Instant::now();
            let decision = policy.decide(&request, &cache).map_err(wrap)?;
            let evicted = cache.apply_decision(content, decision).map_err(wrap)?;
            decision_seconds += started.elapsed().as_secs_f64();
            decision_epochs += 1;
            action = Some(decision.action);
            match evicted {
                Some(evicted) => CacheEvent::Replaced {
                    slot: decision.action,
                    evicted,
                },
                None => CacheEvent::Bypassed,
            }
        };
        debug_assert!(cache.invariants_hold(), "cache invariants broken at epoch {epoch}");
        policy.on_update(&request, event, &cache);
        if options.record_outcomes {
            outcomes.push(Outcome {
                epoch,
                content,
                hit,
                action,
            });
        }
        if options.max_decision_epochs.is_some_and(|m| decision_epochs >= m) {
            break;
        }
    }
    policy.on_finish()?;
    hit_rate.finish();

    Ok(RunReport {
        hit_rate,
        decision_epochs,
        decision_seconds,
        eval_stats: policy.eval_stats(),
        outcomes,
        final_cache: cache,
    })
}

pub fn write_outcome_log(outcomes: &[Outcome], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for outcome in outcomes {
        writeln!(out, "{outcome}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_outcome_log(path: impl AsRef<Path>) -> Result<Vec<Outcome>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| parse_outcome(i + 1, line))
        .collect()
}

fn parse_outcome(line_no: usize, line: &str) -> Result<Outcome> {
    let bad = || Error::parse(line_no, format!("malformed outcome line {line:?}"));
    let mut parts = line.trim().split(',');
    let epoch = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
    let content = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
    let hit = match parts.next() {
        Some("hit") => true,
        Some("miss") => false,
        _ => return Err(bad()),
    };
    let action = match parts.next() {
        Some("-") => None,
        Some(a) => Some(a.parse().map_err(|_| bad())?),
        None => return Err(bad()),
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(Outcome {
        epoch,
        content,
        hit,
        action,
    })
}
