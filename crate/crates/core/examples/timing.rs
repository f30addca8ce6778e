//! Per-call cost of the hot paths on the default grid network.
//!
//! `cargo run --release -p lcr-core --example timing`

use std::time::Instant;

use lcr_core::agent::{AgentConfig, DqnAgent, NetworkSpec, QNetwork};
use lcr_core::envs::{self, EnvSpec, ObservationKind};
use lcr_core::lcr::{self, LcrConfig};
use lcr_core::numerics::{Tape, Tensor};
use lcr_core::replay::{ReplayBuffer, Transition};
use lcr_core::rng;
use rand::Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn per_call(label: &str, reps: usize, mut f: impl FnMut()) {
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    println!("{label:<20} {:>9.3} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);
}

fn main() {
    let mut env = envs::make(&EnvSpec::named("random_goal")).unwrap();
    let mut r = rng::seeded(0);
    let spec = NetworkSpec::default_for(ObservationKind::Grid);
    let net = QNetwork::build(&spec, &env.observation_shape(), env.num_actions(), &mut r).unwrap();
    let mut agent = DqnAgent::new(AgentConfig::grid(), net).unwrap();
    let mut buf = ReplayBuffer::new(10_000, 1000).unwrap();

    let mut obs = env.reset(&mut r);
    let (mut episode, mut step) = (0u64, 0usize);
    for _ in 0..6000 {
        let action = r.random_range(0..env.num_actions());
        let sr = env.step(action).unwrap();
        let done = sr.done();
        buf.push(Transition {
            state: obs,
            action,
            reward: sr.reward,
            next_state: sr.observation.clone(),
            terminated: sr.terminated,
            episode_id: episode,
            step_index: step,
        });
        step += 1;
        obs = sr.observation;
        if done {
            obs = env.reset(&mut r);
            episode += 1;
            step = 0;
        }
    }

    per_call("train_step", 500, || {
        agent.train_step(&buf, &mut r).unwrap();
    });
    per_call("act", 2000, || {
        agent.act(&obs, 0.0, &mut r).unwrap();
    });
    let states: Vec<&Tensor> = (0..32).map(|i| &buf.get(i).state).collect();
    let x = Tensor::stack(&states).unwrap();
    per_call("forward x32", 500, || {
        agent.online().q_values(x.clone()).unwrap();
    });
    per_call("forward+backward x32", 500, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let q = agent.online().forward(&mut tape, xi).unwrap();
        let l = tape.mean(q).unwrap();
        tape.backward(l).unwrap();
    });
    let cfg = LcrConfig {
        gradient_steps: 10,
        ..LcrConfig::default()
    };
    let t = Instant::now();
    let rep = lcr::lcr_update(agent.online(), &buf, &cfg, &mut r).unwrap().unwrap();
    println!(
        "{:<20} {:>9.3} ms ({} windows, {} distinct states)",
        "lcr gradient step",
        t.elapsed().as_secs_f64() * 1e3 / cfg.gradient_steps as f64,
        rep.windows,
        rep.states
    );
}
