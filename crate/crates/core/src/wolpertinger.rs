//! Actor-critic caching agent with nearest-neighbour action refinement.
//!
//! The actor maps a state to a continuous proto-action in `[0, C]`; the `k`
//! integer actions closest to it are scored by the critic and the best one is
//! executed. Both networks are trained with deterministic policy gradients
//! against slowly tracking target copies.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::agent::{DrlPolicy, Learner, LearningConfig, Selection, TrainReport};
use crate::error::{Error, Result};
use crate::features::StateVector;
use crate::nn::{Activation, Adam, AdamConfig, Gradients, BatchTape, Mlp, TargetNetwork};
use crate::reward::Transition;

pub const ACTOR_FILE: &str = "actor.mlp";
pub const CRITIC_FILE: &str = "critic.mlp";
pub const DIGEST_FILE: &str = "config.digest";

/// Size of the expanded action set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighbors {
    Fixed(usize),
    /// `k = ⌈fraction · C⌉`, clamped to `1..=C+1`.
    Fraction(f64),
}

impl Neighbors {
    pub fn resolve(&self, capacity: usize) -> Result<usize> {
        match *self {
            Neighbors::Fixed(k) => {
                if k == 0 || k > capacity + 1 {
                    return Err(Error::invalid(format!("k = {k} must be in 1..={}", capacity + 1)));
                }
                Ok(k)
            }
            Neighbors::Fraction(f) => {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(Error::invalid(format!("k fraction must be positive, got {f}")));
                }
                // Guard against products like 0.15 * 300 landing a hair above an integer.
                let k = (f * capacity as f64 - 1e-9).ceil() as usize;
                Ok(k.clamp(1, capacity + 1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub learning: LearningConfig,
    pub neighbors: Neighbors,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl AgentConfig {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            learning: LearningConfig::new(capacity, seed),
            neighbors: Neighbors::Fraction(0.15),
            actor_hidden: vec![256, 128],
            critic_hidden: vec![64, 32],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
        }
    }

    pub fn capacity(&self) -> usize {
        self.learning.capacity
    }

    pub fn k(&self) -> Result<usize> {
        self.neighbors.resolve(self.capacity())
    }

    pub fn validate(&self) -> Result<()> {
        self.learning.validate()?;
        self.k()?;
        for lr in [self.actor_lr, self.critic_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.learning.state_dim()];
        sizes.extend(&self.actor_hidden);
        sizes.push(1);
        sizes
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.learning.state_dim() + 1];
        sizes.extend(&self.critic_hidden);
        sizes.push(1);
        sizes
    }

    /// Short fingerprint of every field, stored next to checkpoints.
    pub fn digest(&self) -> String {
        config_digest(&format!("{self:?}"))
    }
}

pub(crate) fn config_digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// The `min(k, C+1)` integers in `0..=C` closest to `proto`, nearest first;
/// equal distances go to the smaller integer.
pub fn knn_expand(proto: f64, k: usize, capacity: usize) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(0.0..=capacity as f64).contains(&proto) {
        return Err(Error::invalid(format!("proto-action {proto} outside [0, {capacity}]")));
    }
    let count = k.min(capacity + 1);
    let dist = |a: usize| (a as f64 - proto).powi(2);
    let mut out = Vec::with_capacity(count);
    // `lo` walks down from floor(proto), `hi` up from the next integer.
    let mut lo = Some((proto.floor() as usize).min(capacity));
    let mut hi = lo.map(|l| l + 1).filter(|&h| h <= capacity);
    while out.len() < count {
        let take_lo = match (lo, hi) {
            (Some(l), Some(h)) => dist(l) <= dist(h),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("fewer than C+1 actions emitted"),
        };
        if take_lo {
            let l = lo.expect("checked");
            out.push(l);
            lo = l.checked_sub(1);
        } else {
            let h = hi.expect("checked");
            out.push(h);
            hi = Some(h + 1).filter(|&n| n <= capacity);
        }
    }
    Ok(out)
}

/// Index of the largest value; ties resolve to the earliest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub struct Wolpertinger {
    config: AgentConfig,
    k: usize,
    actor: Mlp,
    critic: Mlp,
    target_actor: TargetNetwork,
    target_critic: TargetNetwork,
    actor_opt: Adam,
    critic_opt: Adam,
    // Reused scratch space for training.
    actor_tape: BatchTape,
    critic_tape: BatchTape,
}

impl Wolpertinger {
    pub fn new(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.learning.seed;
        let actor = Mlp::new(&config.actor_sizes(), Activation::Logistic, seed.wrapping_mul(2).wrapping_add(11))?;
        let critic = Mlp::new(&config.critic_sizes(), Activation::Identity, seed.wrapping_mul(2).wrapping_add(12))?;
        Self::from_networks(config, actor, critic)
    }

    /// Build around given networks; targets start as exact copies.
    pub fn from_networks(config: AgentConfig, actor: Mlp, critic: Mlp) -> Result<Self> {
        config.validate()?;
        check_sizes("actor", &actor, &config.actor_sizes())?;
        check_sizes("critic", &critic, &config.critic_sizes())?;
        if actor.output_activation() != Activation::Logistic {
            return Err(Error::invalid("actor output must be logistic"));
        }
        let k = config.k()?;
        Ok(Self {
            k,
            target_actor: TargetNetwork::from_source(&actor),
            target_critic: TargetNetwork::from_source(&critic),
            actor_opt: Adam::new(&actor, AdamConfig::with_learning_rate(config.actor_lr)),
            critic_opt: Adam::new(&critic, AdamConfig::with_learning_rate(config.critic_lr)),
            actor,
            critic,
            config,
            actor_tape: BatchTape::default(),
            critic_tape: BatchTape::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity()
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    /// `C · μ(s)`, always in `[0, C]`.
    pub fn proto_action(&self, state: &StateVector) -> Result<f64> {
        let out = self.actor.forward(state.as_slice())?;
        Ok(self.capacity() as f64 * out[0])
    }

    /// `Q(s, a)` with the action encoded as `a / C`.
    pub fn critic_q(&self, state: &StateVector, action: usize) -> Result<f64> {
        let capacity = self.capacity();
        if action > capacity {
            return Err(Error::invalid(format!("action {action} outside 0..={capacity}")));
        }
        let mut input = Vec::with_capacity(state.len() + 1);
        input.extend_from_slice(state.as_slice());
        input.push(action as f64 / capacity as f64);
        Ok(self.critic.forward(&input)?[0])
    }

    /// Candidate set for `state` and the critic score of each candidate.
    pub fn scored_candidates(&self, state: &StateVector) -> Result<Vec<(usize, f64)>> {
        let proto = self.proto_action(state)?;
        let candidates = knn_expand(proto, self.k, self.capacity())?;
        candidates
            .into_iter()
            .map(|a| Ok((a, self.critic_q(state, a)?)))
            .collect()
    }

    /// Mean squared critic error over `batch` against the current targets.
    pub fn critic_loss(&self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        let ys = self.target_values(batch, gamma)?;
        let mut total = 0.0;
        for (t, y) in batch.iter().zip(ys) {
            total += (self.critic_q(&t.state, t.action)? - y).powi(2);
        }
        Ok(total / batch.len() as f64)
    }

    /// `r + γ·Q'(s', μ'(s'))` for every transition of `batch`.
    fn target_values(&self, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
        let rows = batch.len();
        let mut next = Vec::with_capacity(rows * self.config.learning.state_dim());
        for t in batch {
            next.extend_from_slice(t.next_state.as_slice());
        }
        let mut tape = BatchTape::default();
        let mu = self.target_actor.forward_batch(&next, rows, &mut tape)?.to_vec();
        let input = stack_with_action(batch.iter().map(|t| &t.next_state), &mu);
        let q = self.target_critic.forward_batch(&input, rows, &mut tape)?;
        Ok(batch.iter().zip(q).map(|(t, q)| t.reward.total + gamma * q).collect())
    }

    /// Gradient of the mean squared critic error on `batch`, and that error.
    pub fn critic_gradient(&mut self, batch: &[&Transition], gamma: f64) -> Result<(Gradients, f64)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        let n = batch.len() as f64;
        let capacity = self.capacity() as f64;
        let ys = self.target_values(batch, gamma)?;
        let actions: Vec<f64> = batch.iter().map(|t| t.action as f64 / capacity).collect();
        let input = stack_with_action(batch.iter().map(|t| &t.state), &actions);
        let q = self.critic.forward_batch(&input, batch.len(), &mut self.critic_tape)?;
        let mut loss = 0.0;
        let d: Vec<f64> = q
            .iter()
            .zip(&ys)
            .map(|(q, y)| {
                loss += (q - y).powi(2);
                2.0 * (q - y) / n
            })
            .collect();
        let mut grads = self.critic.gradients();
        self.critic.backward_batch(&self.critic_tape, &d, Some(&mut grads), false)?;
        Ok((grads, loss / n))
    }

    /// Gradient of `−mean Q(s, μ(s))` over `batch` with respect to the actor.
    pub fn actor_gradient(&mut self, batch: &[&Transition]) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        let rows = batch.len();
        let n = rows as f64;
        let mut states = Vec::with_capacity(rows * self.config.learning.state_dim());
        for t in batch {
            states.extend_from_slice(t.state.as_slice());
        }
        let mu = self.actor.forward_batch(&states, rows, &mut self.actor_tape)?.to_vec();
        let input = stack_with_action(batch.iter().map(|t| &t.state), &mu);
        self.critic.forward_batch(&input, rows, &mut self.critic_tape)?;
        let dq = self
            .critic
            .backward_batch(&self.critic_tape, &vec![1.0; rows], None, true)?
            .expect("input gradient requested");
        let width = self.critic.input_dim();
        let d: Vec<f64> = (0..rows).map(|r| -dq[r * width + width - 1] / n).collect();
        let mut grads = self.actor.gradients();
        self.actor.backward_batch(&self.actor_tape, &d, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// One critic step then one actor step on `batch`; targets untouched.
    /// Returns the critic loss before the step.
    pub fn update_networks(&mut self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        let (critic_grads, loss) = self.critic_gradient(batch, gamma)?;
        self.critic_opt.step(&mut self.critic, &critic_grads)?;
        let actor_grads = self.actor_gradient(batch)?;
        self.actor_opt.step(&mut self.actor, &actor_grads)?;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        self.target_actor.soft_update(&self.actor, tau)?;
        self.target_critic.soft_update(&self.critic, tau)
    }

    /// Writes actor, critic and the config digest into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.actor.save(dir.join(ACTOR_FILE))?;
        self.critic.save(dir.join(CRITIC_FILE))?;
        fs::write(dir.join(DIGEST_FILE), format!("{}\n", self.config.digest()))?;
        Ok(())
    }

    /// Restores networks saved under a config with the same digest.
    pub fn load(dir: impl AsRef<Path>, config: AgentConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let stored = fs::read_to_string(dir.join(DIGEST_FILE))?;
        if stored.trim() != config.digest() {
            return Err(Error::invalid(format!(
                "checkpoint digest {} does not match config digest {}",
                stored.trim(),
                config.digest()
            )));
        }
        let actor = Mlp::load(dir.join(ACTOR_FILE))?;
        let critic = Mlp::load(dir.join(CRITIC_FILE))?;
        Self::from_networks(config, actor, critic)
    }
}

/// Rows of `[state, action]`, row-major.
pub(crate) fn stack_with_action<'a>(states: impl Iterator<Item = &'a StateVector>, actions: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for (s, &a) in states.zip(actions) {
        out.extend_from_slice(s.as_slice());
        out.push(a);
    }
    out
}

pub(crate) fn check_sizes(what: &'static str, net: &Mlp, expected: &[usize]) -> Result<()> {
    let sizes = net.sizes();
    if sizes != expected {
        return Err(Error::invalid(format!("{what} sizes {sizes:?}, expected {expected:?}")));
    }
    Ok(())
}

impl Learner for Wolpertinger {
    fn label(&self) -> String {
        "drl".to_string()
    }

    fn greedy(&mut self, state: &StateVector) -> Result<Selection> {
        let scored = self.scored_candidates(state)?;
        let mut best = scored[0];
        for &(a, q) in &scored[1..] {
            if q > best.1 || (q == best.1 && a < best.0) {
                best = (a, q);
            }
        }
        Ok(Selection {
            action: best.0,
            evaluations: scored.len(),
        })
    }

    fn train(&mut self, batch: &[&Transition], gamma: f64, tau: f64) -> Result<TrainReport> {
        let loss = self.update_networks(batch, gamma)?;
        self.soft_update_targets(tau)?;
        Ok(TrainReport { loss })
    }
}

pub type WolpertingerAgent = DrlPolicy<Wolpertinger>;

pub fn wolpertinger_agent(config: AgentConfig) -> Result<WolpertingerAgent> {
    let learning = config.learning.clone();
    DrlPolicy::new(learning, Wolpertinger::new(config)?)
}
