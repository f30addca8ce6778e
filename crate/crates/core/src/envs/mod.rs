//! Environments behind one interface, looked up by name.

mod acrobot;
mod cartpole;
mod grid;

use serde::{Deserialize, Serialize};

pub use acrobot::{Acrobot, AcrobotState};
pub use cartpole::CartPole;
pub use grid::{Direction, GridConfig, GridWorld, Layout, GRID_CHANNELS};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RunRng;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Tensor,
    pub reward: f64,
    /// Goal reached or failure state entered.
    pub terminated: bool,
    /// Step limit hit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    /// `[C, H, W]` planes.
    Grid,
    /// Flat vector of physical state variables.
    Vector,
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn num_actions(&self) -> usize;
    fn observation_shape(&self) -> Vec<usize>;
    fn observation_kind(&self) -> ObservationKind;
    /// Smallest and largest possible undiscounted episode return.
    fn return_bounds(&self) -> (f64, f64);
    fn reset(&mut self, rng: &mut RunRng) -> Tensor;
    /// Fails with a usage error when the episode already ended or the
    /// action is out of range.
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

/// Environment name plus the knobs that apply to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    /// Interior side length for grid environments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

impl EnvSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            size: None,
        }
    }
}

type Constructor = fn(&EnvSpec) -> Result<Box<dyn Environment>>;

const REGISTRY: &[(&str, Constructor)] = &[
    ("random_goal", |spec| {
        let cfg = GridConfig::new(spec.size.unwrap_or(8), Layout::Empty)?;
        Ok(Box::new(GridWorld::new(cfg)))
    }),
    ("four_rooms", |spec| {
        let cfg = GridConfig::new(spec.size.unwrap_or(9), Layout::FourRooms)?;
        Ok(Box::new(GridWorld::new(cfg)))
    }),
    ("cartpole", |spec| {
        reject_size(spec)?;
        Ok(Box::new(CartPole::new()))
    }),
    ("acrobot", |spec| {
        reject_size(spec)?;
        Ok(Box::new(Acrobot::new()))
    }),
];

fn reject_size(spec: &EnvSpec) -> Result<()> {
    match spec.size {
        Some(_) => Err(Error::Config(format!("`size` does not apply to {}", spec.name))),
        None => Ok(()),
    }
}

pub fn names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(n, _)| *n)
}

pub fn make(spec: &EnvSpec) -> Result<Box<dyn Environment>> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == spec.name)
        .map(|(_, ctor)| ctor(spec))
        .unwrap_or_else(|| {
            Err(Error::Config(format!(
                "unknown environment `{}` (expected one of: {})",
                spec.name,
                names().collect::<Vec<_>>().join(", ")
            )))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn registry_builds_every_name() {
        for name in names() {
            let env = make(&EnvSpec::named(name)).unwrap();
            assert_eq!(env.name(), name);
        }
        assert!(make(&EnvSpec::named("mountain_car")).is_err());
        assert!(make(&EnvSpec {
            name: "cartpole".into(),
            size: Some(3)
        })
        .is_err());
    }

    #[test]
    fn fixed_action_replay_is_identical() {
        for name in names() {
            let roll = || {
                let mut env = make(&EnvSpec::named(name)).unwrap();
                let mut r = rng::seeded(99);
                let mut actions = rng::seeded(5);
                let mut trace = vec![env.reset(&mut r)];
                for _ in 0..200 {
                    let a = actions.random_range(0..env.num_actions());
                    let step = env.step(a).unwrap();
                    let done = step.done();
                    trace.push(step.observation);
                    if done {
                        trace.push(env.reset(&mut r));
                    }
                }
                trace
            };
            assert_eq!(roll(), roll(), "{name}");
        }
    }

    #[test]
    fn returns_stay_in_bounds_under_random_play() {
        for name in names() {
            let mut env = make(&EnvSpec::named(name)).unwrap();
            let (lo, hi) = env.return_bounds();
            let mut r = rng::seeded(3);
            for _ in 0..20 {
                env.reset(&mut r);
                let mut ret = 0.0;
                loop {
                    let a = r.random_range(0..env.num_actions());
                    let s = env.step(a).unwrap();
                    assert!(s.reward.is_finite() && s.observation.all_finite());
                    ret += s.reward;
                    if s.done() {
                        break;
                    }
                }
                assert!(ret >= lo - 1e-9 && ret <= hi + 1e-9, "{name}: {ret}");
            }
        }
    }
}
