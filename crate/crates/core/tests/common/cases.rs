//! Random gradient-check instances, one generator per layer kind and loss.

use lcr_core::agent::{AgentConfig, DqnAgent, NetworkSpec, QNetwork};
use lcr_core::envs::{self, EnvSpec, ObservationKind};
use lcr_core::lcr::{self, WindowBatch};
use lcr_core::numerics::{LayerSpec, Param, Sequential, Tensor};
use lcr_core::replay::Transition;
use lcr_core::rng::RunRng;
use rand::Rng;

use super::{grad_check, random_tensor, scramble};

pub const KINDS: [&str; 10] = [
    "dense",
    "conv2d",
    "maxpool2d",
    "relu",
    "flatten",
    "qnetwork_conv",
    "qnetwork_mlp",
    "td_loss",
    "lcr_loss_mlp",
    "lcr_loss_conv",
];

#[derive(Debug, Default, Clone, Copy)]
pub struct Summary {
    pub instances: usize,
    pub redraws: usize,
    pub max_rel_err: f64,
}

/// Check `instances` accepted instances of `kind`, redrawing any that land
/// near a kink.
pub fn run(kind: &str, instances: usize, rng: &mut RunRng) -> Summary {
    let mut s = Summary::default();
    while s.instances < instances {
        match one(kind, rng) {
            Some(e) => {
                s.instances += 1;
                s.max_rel_err = s.max_rel_err.max(e);
            }
            None => {
                s.redraws += 1;
                assert!(s.redraws < 20 * instances, "{kind}: too many instances near kinks");
            }
        }
    }
    s
}

fn one(kind: &str, r: &mut RunRng) -> Option<f64> {
    match kind {
        "dense" => {
            let (b, i, o) = (r.random_range(1..5), r.random_range(1..7), r.random_range(1..6));
            let x = Param::new(random_tensor(r, &[b, i], 1.0));
            let w = Param::new(random_tensor(r, &[i, o], 1.0));
            let bias = Param::new(random_tensor(r, &[o], 1.0));
            let target = random_tensor(r, &[b * o], 1.0).into_data();
            let ps = [x, w, bias];
            grad_check(&ps, r, |t| {
                let (x, w, b) = (t.param(&ps[0]), t.param(&ps[1]), t.param(&ps[2]));
                let y = t.dense(x, w, b).unwrap();
                t.mse_to_target(y, &target).unwrap()
            })
        }
        "conv2d" => {
            let k = r.random_range(1..4);
            let (b, c, f) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
            let (h, w) = (r.random_range(k..k + 5), r.random_range(k..k + 5));
            let x = Param::new(random_tensor(r, &[b, c, h, w], 1.0));
            let kern = Param::new(random_tensor(r, &[f, c, k, k], 1.0));
            let bias = Param::new(random_tensor(r, &[f], 1.0));
            let target = random_tensor(r, &[b * f * (h - k + 1) * (w - k + 1)], 1.0).into_data();
            let ps = [x, kern, bias];
            grad_check(&ps, r, |t| {
                let (x, k, b) = (t.param(&ps[0]), t.param(&ps[1]), t.param(&ps[2]));
                let y = t.conv2d(x, k, b).unwrap();
                t.mse_to_target(y, &target).unwrap()
            })
        }
        "maxpool2d" => {
            let (b, c) = (r.random_range(1..3), r.random_range(1..4));
            let (h, w) = (r.random_range(2..8), r.random_range(2..8));
            let x = Param::new(random_tensor(r, &[b, c, h, w], 1.0));
            let target = random_tensor(r, &[b * c * (h / 2) * (w / 2)], 1.0).into_data();
            let ps = [x];
            grad_check(&ps, r, |t| {
                let x = t.param(&ps[0]);
                let y = t.maxpool2d(x).unwrap();
                t.mse_to_target(y, &target).unwrap()
            })
        }
        "relu" => {
            let (b, n) = (r.random_range(1..5), r.random_range(1..12));
            let x = Param::new(random_tensor(r, &[b, n], 1.0));
            let target = random_tensor(r, &[b * n], 1.0).into_data();
            let ps = [x];
            grad_check(&ps, r, |t| {
                let x = t.param(&ps[0]);
                let y = t.relu(x).unwrap();
                t.mse_to_target(y, &target).unwrap()
            })
        }
        "flatten" => {
            let (b, c, h, w) = (
                r.random_range(1..3),
                r.random_range(1..3),
                r.random_range(1..4),
                r.random_range(1..4),
            );
            let x = Param::new(random_tensor(r, &[b, c, h, w], 1.0));
            let wt = Param::new(random_tensor(r, &[c * h * w, 2], 1.0));
            let bias = Param::new(random_tensor(r, &[2], 1.0));
            let target = random_tensor(r, &[b * 2], 1.0).into_data();
            let ps = [x, wt, bias];
            grad_check(&ps, r, |t| {
                let x = t.param(&ps[0]);
                let flat = t.flatten(x).unwrap();
                let (w, b) = (t.param(&ps[1]), t.param(&ps[2]));
                let y = t.dense(flat, w, b).unwrap();
                t.mse_to_target(y, &target).unwrap()
            })
        }
        "qnetwork_conv" | "qnetwork_mlp" => {
            let conv = kind == "qnetwork_conv";
            let (net, states) = if conv { grid_net(r) } else { mlp_net(r) };
            let b = states.len();
            let target = random_tensor(r, &[b * net.num_actions()], 1.0).into_data();
            let x = stack(&states);
            grad_check(&net.params(), r, |t| {
                let xi = t.input(x.clone());
                let q = net.forward(t, xi).unwrap();
                t.mse_to_target(q, &target).unwrap()
            })
        }
        "td_loss" => {
            let (net, states) = if r.random_bool(0.5) { grid_net(r) } else { mlp_net(r) };
            let actions = net.num_actions();
            let mut cfg = if states[0].shape().len() == 3 {
                AgentConfig::grid()
            } else {
                AgentConfig::classic_control()
            };
            cfg.gamma = r.random_range(0.0..1.0);
            let agent = DqnAgent::new(cfg, net).unwrap();
            // target network differs from the online one
            scramble(&agent.target().params(), r, 0.3);
            let batch: Vec<Transition> = (0..states.len() - 1)
                .map(|i| Transition {
                    state: states[i].clone(),
                    action: r.random_range(0..actions),
                    reward: r.random_range(-1.0..1.0),
                    next_state: states[i + 1].clone(),
                    terminated: r.random_bool(0.3),
                    episode_id: 0,
                    step_index: i,
                })
                .collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            grad_check(&agent.online().params(), r, |t| agent.td_loss(t, &refs).unwrap())
        }
        "lcr_loss_mlp" | "lcr_loss_conv" => {
            let (net, states) = if kind == "lcr_loss_conv" {
                grid_net(r)
            } else {
                mlp_net(r)
            };
            let k = if states.len() > 4 { 2 * r.random_range(1..3) } else { 2 };
            let seq: Vec<Transition> = states
                .iter()
                .enumerate()
                .map(|(i, s)| Transition {
                    state: s.clone(),
                    action: 0,
                    reward: 0.0,
                    next_state: s.clone(),
                    terminated: false,
                    episode_id: 0,
                    step_index: i,
                })
                .collect();
            let refs: Vec<&Transition> = seq.iter().collect();
            let batch: WindowBatch = lcr::build_windows_from(&refs, k).unwrap().expect("enough states");
            let w = Param::new(random_tensor(r, &[1, k], 1.0));
            let mut ps = net.encoder_params();
            ps.push(w.clone());
            grad_check(&ps, r, |t| {
                let wv = t.param(&w);
                lcr::lcr_loss(t, &net, wv, &batch).unwrap()
            })
        }
        other => panic!("unknown gradient case {other}"),
    }
}

fn stack(states: &[Tensor]) -> Tensor {
    let refs: Vec<&Tensor> = states.iter().collect();
    Tensor::stack(&refs).unwrap()
}

/// Default grid network with scrambled weights, plus a short random-policy
/// trajectory of real observations.
fn grid_net(r: &mut RunRng) -> (QNetwork, Vec<Tensor>) {
    let mut env = envs::make(&EnvSpec::named("random_goal")).unwrap();
    let spec = NetworkSpec::default_for(ObservationKind::Grid);
    let net = QNetwork::build(&spec, &env.observation_shape(), env.num_actions(), r).unwrap();
    scramble(&net.params(), r, 0.4);
    // break the exact pooling ties that sparse observations produce
    let states = rollout(env.as_mut(), r, 3)
        .into_iter()
        .map(|s| {
            let noise = random_tensor(r, s.shape(), 0.05);
            let data = s.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect();
            Tensor::new(s.shape(), data).unwrap()
        })
        .collect();
    (net, states)
}

fn mlp_net(r: &mut RunRng) -> (QNetwork, Vec<Tensor>) {
    let name = if r.random_bool(0.5) { "cartpole" } else { "acrobot" };
    let mut env = envs::make(&EnvSpec::named(name)).unwrap();
    let spec = NetworkSpec::default_for(ObservationKind::Vector);
    let net = QNetwork::build(&spec, &env.observation_shape(), env.num_actions(), r).unwrap();
    scramble(&net.params(), r, 0.5);
    // widen the state distribution beyond the reset range
    let states = (0..7)
        .map(|_| random_tensor(r, &env.observation_shape(), 1.0))
        .collect();
    let _ = env.reset(r);
    (net, states)
}

fn rollout(env: &mut dyn envs::Environment, r: &mut RunRng, n: usize) -> Vec<Tensor> {
    let mut out = vec![env.reset(r)];
    while out.len() < n {
        let sr = env.step(r.random_range(0..env.num_actions())).unwrap();
        if sr.done() {
            out.push(env.reset(r));
        } else {
            out.push(sr.observation);
        }
    }
    out
}

/// A network used only to exercise the layer-spec registry end to end.
pub fn tiny_sequential(r: &mut RunRng) -> Sequential {
    let specs = [
        LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Maxpool2d,
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: 12, outputs: 2 },
    ];
    Sequential::build(&specs, &[2, 5, 5], r).unwrap()
}
