//! Machinery shared by the learned caching agents.
//!
//! [`DrlPolicy`] owns the feature tracker, the reward ledger, the replay buffer
//! and the ε-greedy wrapper, and implements [`Policy`]. The value model behind
//! it is a [`Learner`]: the Wolpertinger actor-critic or the DQN baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::{run_requests, CacheState, EvalStats, Policy, PolicyDecision, Request, RunOptions};
use crate::error::{Error, Result};
use crate::features::{FeatureScaling, FeatureTracker, StateVector, Windows};
use crate::replay::ReplayBuffer;
use crate::reward::{RewardLedger, Transition};
use crate::trace::ContentId;

const EXPLORATION_STREAM: u64 = 2;

/// Linear decay from `start` to `end` over `decay_epochs` decision epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_epochs: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.1,
            decay_epochs: 3000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            decay_epochs: 0,
        }
    }

    pub fn value(&self, decision_epoch: u64) -> f64 {
        if decision_epoch >= self.decay_epochs {
            return self.end;
        }
        let frac = decision_epoch as f64 / self.decay_epochs as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Settings common to every learned agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub capacity: usize,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub epsilon: EpsilonSchedule,
    pub reward_weight: f64,
    pub horizon: usize,
    pub windows: Windows,
    pub scaling: FeatureScaling,
    pub seed: u64,
}

impl LearningConfig {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            gamma: 0.9,
            buffer_capacity: 10_000,
            batch_size: 100,
            tau: 0.001,
            epsilon: EpsilonSchedule::default(),
            reward_weight: 0.01,
            horizon: 100,
            windows: Windows::default(),
            scaling: FeatureScaling::WindowFraction,
            seed,
        }
    }

    pub fn state_dim(&self) -> usize {
        3 * (self.capacity + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::invalid("capacity must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::invalid(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.buffer_capacity
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        let eps = self.epsilon;
        if !(0.0..=1.0).contains(&eps.start) || !(0.0..=1.0).contains(&eps.end) {
            return Err(Error::invalid("epsilon values must lie in [0, 1]"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("reward horizon must be at least 1"));
        }
        self.windows.validate()
    }
}

/// Greedy choice of a learner plus the number of value evaluations it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub action: usize,
    pub evaluations: usize,
}

/// Executed action: greedy or exploratory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionChoice {
    pub action: usize,
    pub evaluations: usize,
    pub explored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    /// Critic (or Q) loss measured before the update.
    pub loss: f64,
}

/// A value model that picks greedy actions and learns from minibatches.
pub trait Learner {
    fn label(&self) -> String;

    fn greedy(&mut self, state: &StateVector) -> Result<Selection>;

    fn train(&mut self, batch: &[&Transition], gamma: f64, tau: f64) -> Result<TrainReport>;
}

/// ε-greedy caching agent over a [`Learner`].
pub struct DrlPolicy<L> {
    config: LearningConfig,
    learner: L,
    tracker: FeatureTracker,
    ledger: RewardLedger,
    buffer: ReplayBuffer<Transition>,
    rng: ChaCha8Rng,
    decisions: u64,
    eval: EvalStats,
    epsilon_override: Option<f64>,
    learning: bool,
    train_steps: u64,
    last_loss: Option<f64>,
}

impl<L: Learner> DrlPolicy<L> {
    pub fn new(config: LearningConfig, learner: L) -> Result<Self> {
        config.validate()?;
        let tracker = FeatureTracker::new(config.windows, config.scaling)?;
        let ledger = RewardLedger::new(config.horizon, config.reward_weight);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(EXPLORATION_STREAM);
        Ok(Self {
            config,
            learner,
            tracker,
            ledger,
            buffer,
            rng,
            decisions: 0,
            eval: EvalStats::default(),
            epsilon_override: None,
            learning: true,
            train_steps: 0,
            last_loss: None,
        })
    }

    pub fn config(&self) -> &LearningConfig {
        &self.config
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn learner_mut(&mut self) -> &mut L {
        &mut self.learner
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition> {
        &self.buffer
    }

    pub fn tracker(&self) -> &FeatureTracker {
        &self.tracker
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Fix ε regardless of the schedule (`None` restores the schedule).
    pub fn set_epsilon_override(&mut self, epsilon: Option<f64>) {
        self.epsilon_override = epsilon;
    }

    /// Enable or disable minibatch updates on newly resolved transitions.
    pub fn set_learning(&mut self, learning: bool) {
        self.learning = learning;
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_override
            .unwrap_or_else(|| self.config.epsilon.value(self.decisions))
    }

    pub fn reset_eval_stats(&mut self) {
        self.eval = EvalStats::default();
    }

    /// Forget per-run state (features, pending rewards) but keep networks,
    /// replay memory and the ε clock.
    pub fn start_episode(&mut self) {
        self.tracker.reset();
        self.ledger.clear();
    }

    /// ε-greedy selection; evaluation counts are recorded for greedy picks.
    pub fn select_action(&mut self, state: &StateVector) -> Result<ActionChoice> {
        let epsilon = self.epsilon();
        if epsilon > 0.0 && self.rng.random::<f64>() < epsilon {
            let action = self.rng.random_range(0..=self.config.capacity);
            return Ok(ActionChoice {
                action,
                evaluations: 0,
                explored: true,
            });
        }
        let Selection { action, evaluations } = self.learner.greedy(state)?;
        if action > self.config.capacity {
            return Err(Error::Contract(format!(
                "learner chose action {action} beyond capacity {}",
                self.config.capacity
            )));
        }
        self.eval.greedy_epochs += 1;
        self.eval.evaluations += evaluations as u64;
        Ok(ActionChoice {
            action,
            evaluations,
            explored: false,
        })
    }

    /// One minibatch update; `None` while the buffer is smaller than a batch.
    pub fn train_batch(&mut self) -> Result<Option<TrainReport>> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
        let report = self.learner.train(&batch, self.config.gamma, self.config.tau)?;
        self.train_steps += 1;
        self.last_loss = Some(report.loss);
        Ok(Some(report))
    }

    fn store(&mut self, transitions: Vec<Transition>) -> Result<()> {
        for t in transitions {
            self.buffer.push(t);
            if self.learning {
                self.train_batch()?;
            }
        }
        Ok(())
    }
}

impl<L: Learner> Policy for DrlPolicy<L> {
    fn name(&self) -> String {
        self.learner.label()
    }

    fn on_request(&mut self, request: &Request, cache: &CacheState) -> Result<()> {
        self.tracker.observe(request.content);
        if self.ledger.pending() > 0 {
            let tracker = &self.tracker;
            let resolved = self
                .ledger
                .advance(request.hit, || tracker.extract_state(cache, request.content));
            self.store(resolved)?;
        }
        Ok(())
    }

    fn decide(&mut self, request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        if cache.capacity() != self.config.capacity {
            return Err(Error::Contract(format!(
                "agent built for capacity {} driven with capacity {}",
                self.config.capacity,
                cache.capacity()
            )));
        }
        let state = self.tracker.extract_state(cache, request.content);
        let choice = self.select_action(&state)?;
        self.decisions += 1;
        self.ledger.open(state, choice.action);
        Ok(PolicyDecision {
            action: choice.action,
        })
    }

    fn on_finish(&mut self) -> Result<()> {
        let tail = self.ledger.flush_truncated();
        let learning = self.learning;
        self.learning = false;
        let stored = self.store(tail);
        self.learning = learning;
        stored
    }

    fn eval_stats(&self) -> Option<EvalStats> {
        Some(self.eval)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PretrainOptions {
    /// Minibatch updates after collection; `None` means one per collected transition.
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PretrainReport {
    pub decision_epochs: u64,
    pub transitions: u64,
    pub batches: u64,
}

/// Offline phase: explore with ε = 1 over `segment`, collecting resolved
/// transitions, then run minibatch updates on the filled memory.
pub fn pretrain_offline<L: Learner>(
    agent: &mut DrlPolicy<L>,
    segment: &[ContentId],
    options: PretrainOptions,
) -> Result<PretrainReport> {
    if segment.len() < agent.config.horizon {
        return Err(Error::invalid(format!(
            "warmup segment of {} requests is shorter than the {}-request reward horizon",
            segment.len(),
            agent.config.horizon
        )));
    }
    let saved_override = agent.epsilon_override;
    let saved_learning = agent.learning;
    agent.start_episode();
    agent.set_epsilon_override(Some(1.0));
    agent.set_learning(false);
    let inserted_before = agent.buffer.total_inserted();
    let decisions_before = agent.decisions;

    let capacity = agent.config.capacity;
    let run = run_requests(segment, capacity, agent, RunOptions::default());

    agent.set_epsilon_override(saved_override);
    agent.set_learning(saved_learning);
    run?;

    let transitions = agent.buffer.total_inserted() - inserted_before;
    let batches = options.batches.unwrap_or(transitions as usize);
    let mut done = 0;
    for _ in 0..batches {
        if agent.train_batch()?.is_some() {
            done += 1;
        }
    }
    agent.start_episode();
    agent.reset_eval_stats();
    Ok(PretrainReport {
        decision_epochs: agent.decisions - decisions_before,
        transitions,
        batches: done,
    })
}
