use std::f64::consts::PI;

use rand::Rng;

use super::{Environment, ObservationKind, StepResult};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RunRng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
const MAX_STEPS: usize = 500;

/// `[θ1, θ2, θ̇1, θ̇2]`; θ1 = 0 is hanging straight down.
pub type AcrobotState = [f64; 4];

/// Two-link underactuated pendulum, torque applied at the elbow.
#[derive(Clone, Debug)]
pub struct Acrobot {
    state: AcrobotState,
    steps: usize,
    done: bool,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Acrobot {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    pub fn state(&self) -> AcrobotState {
        self.state
    }

    pub fn set_state(&mut self, state: AcrobotState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// Time derivative of the state under elbow torque `torque`.
    pub fn derivatives(s: &AcrobotState, torque: f64) -> AcrobotState {
        let (m1, m2, l1, lc1, lc2) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
        let (i1, i2, g) = (LINK_MOI, LINK_MOI, GRAVITY);
        let [th1, th2, dth1, dth2] = *s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * th2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * th2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (th1 + th2).sin();
        let phi1 = -m2 * l1 * lc2 * dth2 * dth2 * th2.sin() - 2.0 * m2 * l1 * lc2 * dth2 * dth1 * th2.sin()
            + (m1 * lc1 + m2 * l1) * g * th1.sin()
            + phi2;
        let ddth2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dth1 * dth1 * th2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddth1 = -(d2 * ddth2 + phi1) / d1;
        [dth1, dth2, ddth1, ddth2]
    }

    /// One classical Runge-Kutta step of length `dt`, no wrapping or clipping.
    pub fn rk4(s: &AcrobotState, torque: f64, dt: f64) -> AcrobotState {
        let add = |a: &AcrobotState, b: &AcrobotState, h: f64| -> AcrobotState {
            [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
        };
        let k1 = Self::derivatives(s, torque);
        let k2 = Self::derivatives(&add(s, &k1, dt / 2.0), torque);
        let k3 = Self::derivatives(&add(s, &k2, dt / 2.0), torque);
        let k4 = Self::derivatives(&add(s, &k3, dt), torque);
        let mut out = *s;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Kinetic plus potential energy.
    pub fn energy(s: &AcrobotState) -> f64 {
        let (m1, m2, l1, lc1, lc2) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
        let [th1, th2, dth1, dth2] = *s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * th2.cos()) + 2.0 * LINK_MOI;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * th2.cos()) + LINK_MOI;
        let d3 = m2 * lc2 * lc2 + LINK_MOI;
        let kinetic = 0.5 * (d1 * dth1 * dth1 + 2.0 * d2 * dth1 * dth2 + d3 * dth2 * dth2);
        let potential = -(m1 * lc1 + m2 * l1) * GRAVITY * th1.cos() - m2 * lc2 * GRAVITY * (th1 + th2).cos();
        kinetic + potential
    }

    /// Tip above the bar by more than one link length.
    pub fn reached_height(s: &AcrobotState) -> bool {
        -s[0].cos() - (s[1] + s[0]).cos() > 1.0
    }

    fn observe(&self) -> Tensor {
        let [th1, th2, dth1, dth2] = self.state;
        Tensor::new(&[6], vec![th1.cos(), th1.sin(), th2.cos(), th2.sin(), dth1, dth2]).expect("acrobot observation")
    }
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for Acrobot {
    fn name(&self) -> &'static str {
        "acrobot"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn observation_shape(&self) -> Vec<usize> {
        vec![6]
    }

    fn observation_kind(&self) -> ObservationKind {
        ObservationKind::Vector
    }

    fn return_bounds(&self) -> (f64, f64) {
        (-(MAX_STEPS as f64), -1.0)
    }

    fn reset(&mut self, rng: &mut RunRng) -> Tensor {
        for v in &mut self.state {
            *v = rng.random_range(-0.1..0.1);
        }
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished acrobot episode".into()));
        }
        let torque = *TORQUES
            .get(action)
            .ok_or_else(|| Error::Usage(format!("acrobot action {action} out of range 0..3")))?;
        let s = Self::rk4(&self.state, torque, DT);
        self.state = [
            wrap(s[0]),
            wrap(s[1]),
            s[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            s[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        ];
        self.steps += 1;
        let terminated = Self::reached_height(&self.state);
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward: -1.0,
            terminated,
            truncated,
        })
    }
}
