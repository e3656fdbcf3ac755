//! Delayed reward resolution for decision transitions.
//!
//! A transition opened at a decision epoch stays pending while the next
//! `horizon` requests play out. The first of them sets the short-term reward
//! (1 on a hit) and the successor state; the hit count over all of them is the
//! long-term reward. Only fully resolved transitions leave the ledger.

use std::collections::VecDeque;

use crate::features::StateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    /// 1 if the request right after the decision hit, else 0.
    pub short: f64,
    /// Hits among the following `horizon` requests.
    pub long: f64,
    /// `short + weight * long`.
    pub total: f64,
}

impl Reward {
    pub fn new(short: f64, long: f64, weight: f64) -> Self {
        Self {
            short,
            long,
            total: short + weight * long,
        }
    }
}

/// A resolved `(s_t, a_t, r_t, s_{t+1})` record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: Reward,
    pub next_state: StateVector,
}

#[derive(Debug, Clone)]
struct Pending {
    state: StateVector,
    action: usize,
    short: f64,
    hits: u32,
    seen: u32,
    next_state: Option<StateVector>,
}

#[derive(Debug, Clone)]
pub struct RewardLedger {
    horizon: u32,
    weight: f64,
    pending: VecDeque<Pending>,
}

impl RewardLedger {
    pub fn new(horizon: usize, weight: f64) -> Self {
        assert!(horizon >= 1, "reward horizon must be at least one request");
        Self {
            horizon: horizon as u32,
            weight,
            pending: VecDeque::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon as usize
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn open(&mut self, state: StateVector, action: usize) {
        self.pending.push_back(Pending {
            state,
            action,
            short: 0.0,
            hits: 0,
            seen: 0,
            next_state: None,
        });
    }

    /// Account one subsequent request. `next_state` is evaluated only if some
    /// pending transition is seeing its first request.
    pub fn advance(&mut self, hit: bool, next_state: impl FnOnce() -> StateVector) -> Vec<Transition> {
        let mut next_state = Some(next_state);
        for p in &mut self.pending {
            p.seen += 1;
            if hit {
                p.hits += 1;
            }
            if p.seen == 1 {
                p.short = if hit { 1.0 } else { 0.0 };
                p.next_state = next_state.take().map(|f| f());
            }
        }
        let mut resolved = Vec::new();
        while self.pending.front().is_some_and(|p| p.seen >= self.horizon) {
            let p = self.pending.pop_front().expect("front checked");
            resolved.push(self.resolve(p, 1.0));
        }
        resolved
    }

    /// Resolve everything still pending over its truncated horizon, scaling the
    /// long-term count by `horizon / seen`. Transitions that never saw a
    /// following request have no reward and are dropped.
    pub fn flush_truncated(&mut self) -> Vec<Transition> {
        let horizon = self.horizon as f64;
        let drained: Vec<Pending> = self.pending.drain(..).collect();
        drained
            .into_iter()
            .filter(|p| p.seen > 0)
            .map(|p| {
                let scale = horizon / p.seen as f64;
                self.resolve(p, scale)
            })
            .collect()
    }

    fn resolve(&self, p: Pending, scale: f64) -> Transition {
        let long = p.hits as f64 * scale;
        Transition {
            state: p.state,
            action: p.action,
            reward: Reward::new(p.short, long, self.weight),
            next_state: p.next_state.expect("successor recorded on first request"),
        }
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}
