//! Locally constrained representations: every state's representation should
//! be a nonnegative linear combination of its temporal neighbours'.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::QNetwork;
use crate::error::{Error, Result};
use crate::numerics::{Adam, Optimizer, Param, Tape, Tensor, Var, WindowIndex};
use crate::replay::{self, ReplayBuffer, Transition};
use crate::rng::RunRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcrConfig {
    /// Neighbours per window; the window spans `k + 1` states.
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "lcr_batch_size")]
    pub batch_size: usize,
    pub gradient_steps: usize,
    #[serde(rename = "lcr_learning_rate")]
    pub learning_rate: f64,
    /// Keep W between invocations instead of redrawing it.
    #[serde(default)]
    pub reuse_w: bool,
    /// When false only W is optimized.
    #[serde(default = "yes")]
    pub train_encoder: bool,
}

fn yes() -> bool {
    true
}

impl Default for LcrConfig {
    fn default() -> Self {
        Self {
            k: 10,
            batch_size: 5000,
            gradient_steps: 100,
            learning_rate: 1e-4,
            reuse_w: false,
            train_encoder: true,
        }
    }
}

impl LcrConfig {
    pub fn validate(&self) -> Result<()> {
        replay::check_window_size(self.k)?;
        if self.batch_size < self.k + 1 {
            return Err(Error::Config(format!(
                "lcr_batch_size {} is smaller than the window length {}",
                self.batch_size,
                self.k + 1
            )));
        }
        if self.gradient_steps == 0 {
            return Err(Error::Config("gradient_steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "lcr_learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Fresh coefficients, each Uniform(0, 1).
pub fn init_w(k: usize, rng: &mut RunRng) -> Param {
    let data = (0..k).map(|_| rng.random::<f64>()).collect();
    Param::new(Tensor::new(&[1, k], data).expect("k >= 1"))
}

pub fn should_trigger(total_env_steps: u64, batch_size: usize) -> bool {
    total_env_steps > 0 && batch_size > 0 && total_env_steps.is_multiple_of(batch_size as u64)
}

/// Windows over the most recent transitions. Identical observations share
/// one row of `states`, so each distinct state is encoded once.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub states: Tensor,
    pub index: WindowIndex,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Distinct observations referenced by the windows.
    pub fn num_states(&self) -> usize {
        self.states.shape()[0]
    }

    /// Center observation and its neighbours, in temporal order, for window `t`.
    pub fn window(&self, t: usize) -> (&[f64], Vec<&[f64]>) {
        let k = self.index.k;
        let nbrs = self.index.neighbors[t * k..(t + 1) * k]
            .iter()
            .map(|&r| self.states.row(r))
            .collect();
        (self.states.row(self.index.centers[t]), nbrs)
    }
}

/// Every center among the last `b` transitions whose full same-episode
/// window also lies within those `b`. `None` when there is none.
pub fn build_windows(buffer: &ReplayBuffer, b: usize, k: usize) -> Result<Option<WindowBatch>> {
    build_windows_from(&buffer.last_window(b), k)
}

/// [`build_windows`] over an explicit transition sequence.
pub fn build_windows_from(seq: &[&Transition], k: usize) -> Result<Option<WindowBatch>> {
    replay::check_window_size(k)?;
    let mut rows: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<&Tensor> = Vec::new();
    let mut row_at: Vec<Option<usize>> = vec![None; seq.len()];
    let mut intern = |pos: usize| -> usize {
        if let Some(r) = row_at[pos] {
            return r;
        }
        let s = &seq[pos].state;
        let key: Vec<u64> = s.data().iter().map(|v| v.to_bits()).collect();
        let r = *rows.entry(key).or_insert_with(|| {
            distinct.push(s);
            distinct.len() - 1
        });
        row_at[pos] = Some(r);
        r
    };
    let (mut centers, mut neighbors) = (Vec::new(), Vec::new());
    for c in 0..seq.len() {
        let Some(ps) = replay::neighbor_positions(seq, c, k)? else {
            continue;
        };
        centers.push(intern(c));
        neighbors.extend(ps.into_iter().map(&mut intern));
    }
    if centers.is_empty() {
        return Ok(None);
    }
    Ok(Some(WindowBatch {
        states: Tensor::stack(&distinct)?,
        index: WindowIndex { k, centers, neighbors },
    }))
}

/// Mean over windows of `‖W · φ_nearest − φ_center‖²`.
pub fn lcr_loss(tape: &mut Tape, net: &QNetwork, w: Var, batch: &WindowBatch) -> Result<Var> {
    let x = tape.input(batch.states.clone());
    let phi = net.encode(tape, x)?;
    tape.neighbor_reconstruction(phi, w, &batch.index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LcrReport {
    /// Loss before the first step.
    pub first_loss: f64,
    /// Loss before the last step.
    pub last_loss: f64,
    pub windows: usize,
    pub states: usize,
    /// W after the last step.
    pub w: Vec<f64>,
    /// Smallest entry of W seen after any step.
    pub w_min: f64,
    /// Largest value-head gradient norm seen after any backward pass.
    pub head_grad_norm: f64,
}

/// `cfg.gradient_steps` Adam steps on `{W, encoder}` (or W alone), clipping
/// W at zero after each.
pub fn optimize(net: &QNetwork, batch: &WindowBatch, w: &Param, cfg: &LcrConfig) -> Result<LcrReport> {
    if batch.is_empty() {
        return Err(Error::Usage("LCR over zero windows".into()));
    }
    net.zero_grad();
    w.zero_grad();
    let mut params = vec![w.clone()];
    if cfg.train_encoder {
        params.extend(net.encoder_params());
    }
    let mut opt = Adam::new(params, cfg.learning_rate)?;
    let frozen_phi = if cfg.train_encoder {
        None
    } else {
        Some(net.representations(batch.states.clone())?)
    };
    let head = net.head_params();
    let (mut first, mut last) = (f64::NAN, f64::NAN);
    let (mut w_min, mut head_norm) = (f64::INFINITY, 0.0f64);
    for step in 0..cfg.gradient_steps {
        let mut tape = Tape::new();
        let wv = tape.param(w);
        let loss = match &frozen_phi {
            Some(phi) => {
                let phi = tape.input(phi.clone());
                tape.neighbor_reconstruction(phi, wv, &batch.index)?
            }
            None => lcr_loss(&mut tape, net, wv, batch)?,
        };
        last = tape.value(loss).item();
        if step == 0 {
            first = last;
        }
        opt.zero_grad();
        tape.backward(loss)?;
        head_norm = head_norm.max(head.iter().map(Param::grad_norm_sq).sum::<f64>().sqrt());
        opt.step();
        w.update(|v, _| v.iter_mut().filter(|x| **x < 0.0).for_each(|x| *x = 0.0));
        let m = w.value().data().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(m >= 0.0, "W has a negative entry after clipping: {m}");
        w_min = w_min.min(m);
    }
    Ok(LcrReport {
        first_loss: first,
        last_loss: last,
        windows: batch.len(),
        states: batch.num_states(),
        w: w.value().data().to_vec(),
        w_min,
        head_grad_norm: head_norm,
    })
}

/// Per-run LCR state: the configuration, W when it is reused, and a count
/// of invocations.
#[derive(Debug)]
pub struct Lcr {
    cfg: LcrConfig,
    w: Option<Param>,
    calls: u64,
}

impl Lcr {
    pub fn new(cfg: LcrConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, w: None, calls: 0 })
    }

    pub fn config(&self) -> &LcrConfig {
        &self.cfg
    }

    /// Number of [`Lcr::run`] invocations, including those with no windows.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Run on the last batch of `buffer`. `Ok(None)` when no full window exists.
    pub fn run(&mut self, net: &QNetwork, buffer: &ReplayBuffer, rng: &mut RunRng) -> Result<Option<LcrReport>> {
        self.calls += 1;
        let Some(batch) = build_windows(buffer, self.cfg.batch_size, self.cfg.k)? else {
            return Ok(None);
        };
        let w = match (&self.w, self.cfg.reuse_w) {
            (Some(w), true) => w.clone(),
            _ => init_w(self.cfg.k, rng),
        };
        let report = optimize(net, &batch, &w, &self.cfg)?;
        if self.cfg.reuse_w {
            self.w = Some(w);
        }
        Ok(Some(report))
    }
}

/// One invocation with a freshly drawn W.
pub fn lcr_update(
    net: &QNetwork,
    buffer: &ReplayBuffer,
    cfg: &LcrConfig,
    rng: &mut RunRng,
) -> Result<Option<LcrReport>> {
    Lcr::new(cfg.clone())?.run(net, buffer, rng)
}
