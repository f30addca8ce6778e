//! Ring-buffer experience storage with episode-aware neighbourhoods.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RunRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Tensor,
    pub action: usize,
    pub reward: f64,
    pub next_state: Tensor,
    pub terminated: bool,
    pub episode_id: u64,
    /// 0-based position within the episode.
    pub step_index: usize,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    min_size: usize,
    items: Vec<Transition>,
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_size: usize) -> Result<Self> {
        if capacity == 0 || min_size > capacity {
            return Err(Error::Config(format!(
                "replay capacity {capacity} must be positive and at least min size {min_size}"
            )));
        }
        Ok(Self {
            capacity,
            min_size,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            pushes: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of pushes since construction.
    pub fn total_pushes(&self) -> u64 {
        self.pushes
    }

    pub fn is_ready(&self) -> bool {
        self.items.len() >= self.min_size
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.pushes % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.pushes += 1;
    }

    /// Transition at logical position `pos`, where 0 is the oldest stored.
    pub fn get(&self, pos: usize) -> &Transition {
        assert!(pos < self.items.len(), "replay position {pos} out of range");
        let start = if self.items.len() < self.capacity {
            0
        } else {
            (self.pushes % self.capacity as u64) as usize
        };
        &self.items[(start + pos) % self.capacity]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.len()).map(move |p| self.get(p))
    }

    /// `n` draws with replacement, uniform over stored transitions.
    pub fn sample_uniform(&self, rng: &mut RunRng, n: usize) -> Result<Vec<&Transition>> {
        if !self.is_ready() || self.is_empty() {
            return Err(Error::NotReady {
                len: self.len(),
                required: self.min_size.max(1),
            });
        }
        Ok((0..n).map(|_| self.get(rng.random_range(0..self.len()))).collect())
    }

    /// The `min(b, len)` most recent transitions, oldest first.
    pub fn last_window(&self, b: usize) -> Vec<&Transition> {
        let n = b.min(self.len());
        (self.len() - n..self.len()).map(|p| self.get(p)).collect()
    }

    /// The `k/2` transitions before and after position `center` from the
    /// same episode, in temporal order and excluding the center. `None` when
    /// the window would leave the episode or the buffer.
    pub fn neighbor_window(&self, center: usize, k: usize) -> Result<Option<Vec<&Transition>>> {
        let seq: Vec<&Transition> = self.iter().collect();
        Ok(neighbor_positions(&seq, center, k)?.map(|ps| ps.into_iter().map(|p| seq[p]).collect()))
    }
}

pub fn check_window_size(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "neighbourhood size K must be even and >= 2, got {k}"
        )));
    }
    Ok(())
}

/// Positions of the neighbours of `seq[center]` within `seq`.
pub fn neighbor_positions(seq: &[&Transition], center: usize, k: usize) -> Result<Option<Vec<usize>>> {
    check_window_size(k)?;
    let half = k / 2;
    if center < half || center + half >= seq.len() {
        return Ok(None);
    }
    let c = seq[center];
    let same_episode = (center - half..=center + half)
        .all(|p| seq[p].episode_id == c.episode_id && seq[p].step_index + center == c.step_index + p);
    if !same_episode {
        return Ok(None);
    }
    Ok(Some(
        (center - half..center).chain(center + 1..=center + half).collect(),
    ))
}
