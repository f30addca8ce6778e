use std::path::Path;

use rand::Rng;

use crate::agent::QNetwork;
use crate::envs::{self, EnvSpec};
use crate::error::Result;
use crate::numerics::Tensor;
use crate::rng::{self, Stream};

/// Representations of every state in which a uniform-random policy acted.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprDump {
    /// `(trajectory_id, step)` per row.
    pub keys: Vec<(usize, usize)>,
    pub phi: Vec<Vec<f64>>,
}

/// Roll out `trajectories` random-policy episodes and encode each visited
/// state. Resets and actions come from the rollout stream of `seed` only,
/// so any two models see exactly the same states.
pub fn collect_representations(net: &QNetwork, env: &EnvSpec, trajectories: usize, seed: u64) -> Result<ReprDump> {
    let mut env = envs::make(env)?;
    let mut r = rng::stream(seed, Stream::Rollout);
    let mut keys = Vec::new();
    let mut states = Vec::new();
    for traj in 0..trajectories {
        let mut obs = env.reset(&mut r);
        for step in 0.. {
            let sr = env.step(r.random_range(0..env.num_actions()))?;
            keys.push((traj, step));
            states.push(obs);
            let done = sr.done();
            obs = sr.observation;
            if done {
                break;
            }
        }
    }
    let mut phi = Vec::with_capacity(states.len());
    for chunk in states.chunks(512) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let out = net.representations(Tensor::stack(&refs)?)?;
        phi.extend((0..chunk.len()).map(|i| out.row(i).to_vec()));
    }
    Ok(ReprDump { keys, phi })
}

/// Write `trajectory_id,step,phi_1..phi_D`. Returns the number of rows.
pub fn dump_representations(
    net: &QNetwork,
    env: &EnvSpec,
    trajectories: usize,
    seed: u64,
    out: &Path,
) -> Result<usize> {
    let dump = collect_representations(net, env, trajectories, seed)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["trajectory_id".to_string(), "step".to_string()];
    header.extend((1..=net.phi_dim()).map(|i| format!("phi_{i}")));
    w.write_record(&header)?;
    for ((traj, step), phi) in dump.keys.iter().zip(&dump.phi) {
        let mut rec = vec![traj.to_string(), step.to_string()];
        rec.extend(phi.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(dump.phi.len())
}

/// Mean Euclidean distance over all unordered pairs. 0 for fewer than two points.
pub fn mean_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += d2.sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}
