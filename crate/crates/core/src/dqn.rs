//! Deep Q-network baseline: one network scoring all `C + 1` actions at once.

use std::fs;
use std::path::Path;

use crate::agent::{DrlPolicy, Learner, LearningConfig, Selection, TrainReport};
use crate::error::{Error, Result};
use crate::features::StateVector;
use crate::nn::{Activation, Adam, AdamConfig, BatchTape, Mlp, TargetNetwork};
use crate::reward::Transition;
use crate::wolpertinger::{argmax, check_sizes, config_digest, DIGEST_FILE};

pub const Q_FILE: &str = "q.mlp";

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub learning: LearningConfig,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl DqnConfig {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            learning: LearningConfig::new(capacity, seed),
            hidden: vec![256, 128],
            learning_rate: 1e-3,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.learning.state_dim()];
        sizes.extend(&self.hidden);
        sizes.push(self.learning.capacity + 1);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        self.learning.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        config_digest(&format!("{self:?}"))
    }
}

pub struct Dqn {
    config: DqnConfig,
    net: Mlp,
    target: TargetNetwork,
    opt: Adam,
    tape: BatchTape,
}

impl Dqn {
    pub fn new(config: DqnConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.learning.seed.wrapping_mul(2).wrapping_add(13);
        let net = Mlp::new(&config.sizes(), Activation::Identity, seed)?;
        Self::from_network(config, net)
    }

    pub fn from_network(config: DqnConfig, net: Mlp) -> Result<Self> {
        config.validate()?;
        check_sizes("q-network", &net, &config.sizes())?;
        Ok(Self {
            target: TargetNetwork::from_source(&net),
            opt: Adam::new(&net, AdamConfig::with_learning_rate(config.learning_rate)),
            net,
            config,
            tape: BatchTape::default(),
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn q_values(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.net.forward(state.as_slice())
    }

    pub fn loss(&self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        let ys = self.target_values(batch, gamma)?;
        let mut total = 0.0;
        for (t, y) in batch.iter().zip(ys) {
            let q = self.net.forward(t.state.as_slice())?[t.action];
            total += (q - y).powi(2);
        }
        Ok(total / batch.len() as f64)
    }

    fn stack_states<'a>(&self, states: impl Iterator<Item = &'a StateVector>) -> Vec<f64> {
        let mut out = Vec::new();
        for s in states {
            out.extend_from_slice(s.as_slice());
        }
        out
    }

    /// `r + γ·max_a Q'(s', a)` for every transition of `batch`.
    fn target_values(&self, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
        let outputs = self.config.learning.capacity + 1;
        let next = self.stack_states(batch.iter().map(|t| &t.next_state));
        let mut tape = BatchTape::default();
        let q = self.target.forward_batch(&next, batch.len(), &mut tape)?;
        Ok(batch
            .iter()
            .zip(q.chunks(outputs))
            .map(|(t, row)| t.reward.total + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect())
    }

    /// Gradient step on the taken actions' outputs; no target update.
    pub fn update_network(&mut self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        let n = batch.len() as f64;
        let outputs = self.config.learning.capacity + 1;
        let ys = self.target_values(batch, gamma)?;
        let states = self.stack_states(batch.iter().map(|t| &t.state));
        let q = self.net.forward_batch(&states, batch.len(), &mut self.tape)?;
        let mut d_out = vec![0.0; batch.len() * outputs];
        let mut loss = 0.0;
        for (r, (t, y)) in batch.iter().zip(&ys).enumerate() {
            let diff = q[r * outputs + t.action] - y;
            loss += diff * diff;
            d_out[r * outputs + t.action] = 2.0 * diff / n;
        }
        let mut grads = self.net.gradients();
        self.net.backward_batch(&self.tape, &d_out, Some(&mut grads), false)?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(loss / n)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.net.save(dir.join(Q_FILE))?;
        fs::write(dir.join(DIGEST_FILE), format!("{}\n", self.config.digest()))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, config: DqnConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let stored = fs::read_to_string(dir.join(DIGEST_FILE))?;
        if stored.trim() != config.digest() {
            return Err(Error::invalid(format!(
                "checkpoint digest {} does not match config digest {}",
                stored.trim(),
                config.digest()
            )));
        }
        let net = Mlp::load(dir.join(Q_FILE))?;
        Self::from_network(config, net)
    }
}

impl Learner for Dqn {
    fn label(&self) -> String {
        "dqn".to_string()
    }

    fn greedy(&mut self, state: &StateVector) -> Result<Selection> {
        let q = self.q_values(state)?;
        Ok(Selection {
            action: argmax(&q),
            evaluations: q.len(),
        })
    }

    fn train(&mut self, batch: &[&Transition], gamma: f64, tau: f64) -> Result<TrainReport> {
        let loss = self.update_network(batch, gamma)?;
        self.target.soft_update(&self.net, tau)?;
        Ok(TrainReport { loss })
    }
}

pub type DqnAgent = DrlPolicy<Dqn>;

pub fn dqn_agent(config: DqnConfig) -> Result<DqnAgent> {
    let learning = config.learning.clone();
    DrlPolicy::new(learning, Dqn::new(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tape;

    #[test]
    fn zero_network_picks_bypass() {
        let config = DqnConfig::new(5, 0);
        let net = Mlp::zeroed(&config.sizes(), Activation::Identity).unwrap();
        let mut dqn = Dqn::from_network(config, net).unwrap();
        let sel = dqn.greedy(&StateVector::zeros(5)).unwrap();
        assert_eq!(sel, Selection { action: 0, evaluations: 6 });
    }

    #[test]
    fn hand_set_bias_selects_unit() {
        let config = DqnConfig::new(5, 0);
        let mut net = Mlp::zeroed(&config.sizes(), Activation::Identity).unwrap();
        let last = net.layers().len() - 1;
        net.layers_mut()[last].biases_mut()[4] = 1.0;
        let mut dqn = Dqn::from_network(config, net).unwrap();
        assert_eq!(dqn.greedy(&StateVector::zeros(5)).unwrap().action, 4);
    }

    #[test]
    fn eval_count_at_300() {
        let mut dqn = Dqn::new(DqnConfig::new(300, 1)).unwrap();
        let sel = dqn.greedy(&StateVector::zeros(300)).unwrap();
        assert_eq!(sel.evaluations, 301);
    }

    #[test]
    fn untaken_outputs_get_no_gradient() {
        let config = DqnConfig::new(3, 2);
        let dqn = Dqn::new(config).unwrap();
        let state = StateVector::from_values(vec![0.2; 12]);
        let mut tape = Tape::default();
        dqn.network().forward_tape(state.as_slice(), &mut tape).unwrap();
        let mut grads = dqn.network().gradients();
        dqn.network()
            .backward_params(&tape, &[0.0, 0.7, 0.0, 0.0], &mut grads)
            .unwrap();
        let last = grads.weights.len() - 1;
        let cols = dqn.network().layers()[last].inputs();
        for (o, row) in grads.weights[last].chunks(cols).enumerate() {
            assert_eq!(row.iter().any(|&g| g != 0.0), o == 1, "output {o}");
        }
    }
}
