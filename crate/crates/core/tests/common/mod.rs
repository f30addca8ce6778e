//! Oracles shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

pub mod cases;

use lcr_core::numerics::{Param, Tape, Tensor, Var};
use lcr_core::replay::Transition;
use lcr_core::rng::RunRng;
use rand::Rng;

/// Central-difference probe step.
pub const FD_STEP: f64 = 1e-5;
/// Instances whose kink margin is below this are redrawn.
pub const KINK_MARGIN: f64 = 10.0 * FD_STEP;
/// Gradient elements probed per parameter tensor.
pub const PROBES_PER_PARAM: usize = 24;

/// `|a − n| / max(|a|, |n|, 1e-3)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative error between backprop and central differences over
/// `params`, or `None` when the instance sits too close to a kink.
pub fn grad_check<F>(params: &[Param], rng: &mut RunRng, loss: F) -> Option<f64>
where
    F: Fn(&mut Tape) -> Var,
{
    for p in params {
        p.zero_grad();
    }
    let mut tape = Tape::new();
    let l = loss(&mut tape);
    if tape.kink_margin() < KINK_MARGIN {
        return None;
    }
    tape.backward(l).unwrap();
    let eval = || {
        let mut t = Tape::new();
        let l = loss(&mut t);
        t.value(l).item()
    };
    let mut worst: f64 = 0.0;
    for p in params {
        let grad = p.grad().clone();
        let n = grad.len();
        let idx: Vec<usize> = if n <= PROBES_PER_PARAM {
            (0..n).collect()
        } else {
            (0..PROBES_PER_PARAM).map(|_| rng.random_range(0..n)).collect()
        };
        for i in idx {
            let orig = p.value().data()[i];
            p.update(|v, _| v[i] = orig + FD_STEP);
            let plus = eval();
            p.update(|v, _| v[i] = orig - FD_STEP);
            let minus = eval();
            p.update(|v, _| v[i] = orig);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad.data()[i], numeric));
        }
    }
    Some(worst)
}

pub fn random_tensor(rng: &mut RunRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Overwrite every parameter with fresh uniform values, biases included,
/// so no ReLU input sits at exactly zero.
pub fn scramble(params: &[Param], rng: &mut RunRng, scale: f64) {
    for p in params {
        p.update(|v, _| v.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale)));
    }
}

/// `‖Σ_j w_j φ(nbr_j) − φ(center)‖²` averaged over windows, straight from
/// the definition.
pub fn reconstruction_oracle(centers: &[&[f64]], neighbors: &[Vec<&[f64]>], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (c, nb) in centers.iter().zip(neighbors) {
        for d in 0..c.len() {
            let mut pred = 0.0;
            for (j, row) in nb.iter().enumerate() {
                pred += w[j] * row[d];
            }
            let r = pred - c[d];
            total += r * r;
        }
    }
    total / centers.len() as f64
}

/// Windows by scanning each episode separately: a center qualifies when the
/// `k/2` steps on both sides exist in the same episode run, contiguous in
/// both buffer order and step index.
pub fn naive_windows<'a>(seq: &[&'a Transition], k: usize) -> Vec<(&'a Transition, Vec<&'a Transition>)> {
    let half = k / 2;
    // split into maximal runs of one episode with consecutive step indices
    let mut runs: Vec<Vec<&Transition>> = Vec::new();
    for &t in seq {
        match runs.last_mut() {
            Some(run)
                if run.last().unwrap().episode_id == t.episode_id
                    && run.last().unwrap().step_index + 1 == t.step_index =>
            {
                run.push(t)
            }
            _ => runs.push(vec![t]),
        }
    }
    let mut out = Vec::new();
    for run in runs {
        if run.len() < k + 1 {
            continue;
        }
        for c in half..run.len() - half {
            let mut nb = Vec::with_capacity(k);
            nb.extend_from_slice(&run[c - half..c]);
            nb.extend_from_slice(&run[c + 1..=c + half]);
            out.push((run[c], nb));
        }
    }
    out
}

/// Nested-loop valid cross-correlation: per output, sum over `(c, ki, kj)`
/// in order, then add the bias.
pub fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor) -> Tensor {
    let (xs, ks) = (x.shape(), k.shape());
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (f, kk) = (ks[0], ks[2]);
    let (oh, ow) = (h - kk + 1, w - kk + 1);
    let mut out = vec![0.0; n * f * oh * ow];
    for s in 0..n {
        for o in 0..f {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..kk {
                            for kj in 0..kk {
                                acc += x.data()[((s * c + ci) * h + i + ki) * w + j + kj]
                                    * k.data()[((o * c + ci) * kk + ki) * kk + kj];
                            }
                        }
                    }
                    out[((s * f + o) * oh + i) * ow + j] = acc + b.data()[o];
                }
            }
        }
    }
    Tensor::new(&[n, f, oh, ow], out).unwrap()
}
