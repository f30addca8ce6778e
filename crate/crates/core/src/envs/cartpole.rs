use rand::Rng;

use super::{Environment, ObservationKind, StepResult};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RunRng;

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const MAX_STEPS: usize = 500;

/// Cart-pole balancing with explicit Euler integration.
///
/// State is `[x, ẋ, θ, θ̇]`; action 0 pushes left, 1 pushes right.
#[derive(Clone, Debug)]
pub struct CartPole {
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// `(ẍ, θ̈)` for a state and applied horizontal force.
    pub fn accelerations(state: &[f64; 4], force: f64) -> (f64, f64) {
        let total_mass = CART_MASS + POLE_MASS;
        let pole_ml = POLE_MASS * HALF_LENGTH;
        let (sin, cos) = state[2].sin_cos();
        let temp = (force + pole_ml * state[3] * state[3] * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
        (x_acc, theta_acc)
    }

    fn observe(&self) -> Tensor {
        Tensor::new(&[4], self.state.to_vec()).expect("cartpole observation")
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn observation_shape(&self) -> Vec<usize> {
        vec![4]
    }

    fn observation_kind(&self) -> ObservationKind {
        ObservationKind::Vector
    }

    fn return_bounds(&self) -> (f64, f64) {
        (1.0, MAX_STEPS as f64)
    }

    fn reset(&mut self, rng: &mut RunRng) -> Tensor {
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished cartpole episode".into()));
        }
        let force = match action {
            0 => -FORCE,
            1 => FORCE,
            other => return Err(Error::Usage(format!("cartpole action {other} out of range 0..2"))),
        };
        let (x_acc, theta_acc) = Self::accelerations(&self.state, force);
        let [x, x_dot, theta, theta_dot] = self.state;
        self.state = [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ];
        self.steps += 1;
        let [x, _, theta, _] = self.state;
        let terminated = !(-X_LIMIT..=X_LIMIT).contains(&x) || !(-THETA_LIMIT..=THETA_LIMIT).contains(&theta);
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward: 1.0,
            terminated,
            truncated,
        })
    }
}
