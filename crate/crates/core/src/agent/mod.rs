//! DQN learner: ε-greedy behaviour, TD(0) regression against a hard-synced
//! target network.

mod network;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use network::{NetworkSpec, QNetwork};

use crate::error::{Error, Result};
use crate::numerics::{self, Optimizer, Tape, Tensor, Var};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::RunRng;

/// When the target network is refreshed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSync {
    /// After every `n` completed episodes.
    Episodes(usize),
    /// After every `n` environment steps.
    Steps(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub start_epsilon: f64,
    pub stop_epsilon: f64,
    pub epsilon_decay: f64,
    pub max_buffer_size: usize,
    pub min_buffer_size: usize,
    pub copy_step: TargetSync,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    /// Derived from the observation kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
}

fn default_optimizer() -> String {
    "adam".into()
}

impl AgentConfig {
    /// Gridworld defaults.
    pub fn grid() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-3,
            batch_size: 32,
            start_epsilon: 1.0,
            stop_epsilon: 1e-3,
            epsilon_decay: 1e-3,
            max_buffer_size: 10_000,
            min_buffer_size: 1_000,
            copy_step: TargetSync::Episodes(5),
            optimizer: default_optimizer(),
            network: None,
        }
    }

    /// Classic-control defaults.
    pub fn classic_control() -> Self {
        Self {
            batch_size: 64,
            max_buffer_size: 5_000,
            min_buffer_size: 100,
            copy_step: TargetSync::Steps(25),
            ..Self::grid()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("agent: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, v) in [
            ("start_epsilon", self.start_epsilon),
            ("stop_epsilon", self.stop_epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.epsilon_decay.is_nan() || self.epsilon_decay < 0.0 {
            return bad(format!(
                "epsilon_decay must be non-negative, got {}",
                self.epsilon_decay
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.min_buffer_size == 0 || self.min_buffer_size > self.max_buffer_size {
            return bad(format!(
                "need 0 < min_buffer_size <= max_buffer_size, got {} and {}",
                self.min_buffer_size, self.max_buffer_size
            ));
        }
        match self.copy_step {
            TargetSync::Episodes(0) | TargetSync::Steps(0) => bad("copy_step must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// `stop + (start − stop) · exp(−decay · episode)`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        epsilon_schedule(self.start_epsilon, self.stop_epsilon, self.epsilon_decay, episode)
    }
}

pub fn epsilon_schedule(start: f64, stop: f64, decay: f64, episode: usize) -> f64 {
    stop + (start - stop) * (-decay * episode as f64).exp()
}

/// Index of the largest value; the lowest index wins ties.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

pub struct DqnAgent {
    online: QNetwork,
    target: QNetwork,
    optimizer: Box<dyn Optimizer>,
    cfg: AgentConfig,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, online: QNetwork) -> Result<Self> {
        cfg.validate()?;
        let target = online.deep_clone()?;
        let optimizer = numerics::optimizer_by_name(&cfg.optimizer, online.params(), cfg.learning_rate)?;
        Ok(Self {
            online,
            target,
            optimizer,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn num_actions(&self) -> usize {
        self.online.num_actions()
    }

    /// ε-greedy action. The exploration coin is always drawn first.
    pub fn act(&self, obs: &Tensor, epsilon: f64, rng: &mut RunRng) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.num_actions()));
        }
        let q = self.online.q_values(Tensor::stack(&[obs])?)?;
        Ok(greedy(q.data()))
    }

    /// Mean squared TD error over `batch`, recorded on `tape`. Targets come
    /// from the target network and carry no gradient.
    pub fn td_loss(&self, tape: &mut Tape, batch: &[&Transition]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Usage("td_loss over an empty minibatch".into()));
        }
        let next: Vec<&Tensor> = batch.iter().map(|t| &t.next_state).collect();
        let next_q = self.target.q_values(Tensor::stack(&next)?)?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let bootstrap = if t.terminated {
                    0.0
                } else {
                    next_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                t.reward + self.cfg.gamma * bootstrap
            })
            .collect();
        let states: Vec<&Tensor> = batch.iter().map(|t| &t.state).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let x = tape.input(Tensor::stack(&states)?);
        let q = self.online.forward(tape, x)?;
        let q_taken = tape.gather(q, &actions)?;
        tape.mse_to_target(q_taken, &targets)
    }

    /// One optimizer step on a uniform minibatch. `Ok(None)` while the
    /// buffer is below its minimum size.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut RunRng) -> Result<Option<f64>> {
        let batch = match buffer.sample_uniform(rng, self.cfg.batch_size) {
            Ok(b) => b,
            Err(Error::NotReady { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.train_on(&batch).map(Some)
    }

    /// One optimizer step on a given minibatch.
    pub fn train_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.td_loss(&mut tape, batch)?;
        self.optimizer.zero_grad();
        tape.backward(loss)?;
        self.optimizer.step();
        Ok(tape.value(loss).item())
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }
}
