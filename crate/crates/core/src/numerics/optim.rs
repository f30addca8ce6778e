use crate::error::{Error, Result};

use super::{Param, Tensor};

/// First-order update rule over a fixed list of parameters.
pub trait Optimizer {
    fn name(&self) -> &'static str;
    fn params(&self) -> &[Param];
    /// Apply one update from the currently accumulated gradients.
    fn step(&mut self);

    fn zero_grad(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    Ok(())
}

pub struct Sgd {
    params: Vec<Param>,
    lr: f64,
}

impl Sgd {
    pub fn new(params: Vec<Param>, lr: f64) -> Result<Self> {
        check_lr(lr)?;
        Ok(Self { params, lr })
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn params(&self) -> &[Param] {
        &self.params
    }

    fn step(&mut self) {
        let lr = self.lr;
        for p in &self.params {
            p.update(|v, g| {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi -= lr * gi;
                }
            });
        }
    }
}

/// Adam with bias-corrected moments. Moment buffers are owned here, keyed
/// by position in the parameter list.
pub struct Adam {
    params: Vec<Param>,
    lr: f64,
    hyper: AdamHyper,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: Vec<Param>, lr: f64) -> Result<Self> {
        Self::with_hyper(params, lr, AdamHyper::default())
    }

    pub fn with_hyper(params: Vec<Param>, lr: f64, hyper: AdamHyper) -> Result<Self> {
        check_lr(lr)?;
        let first = params.iter().map(|p| Tensor::zeros(&p.shape())).collect();
        let second = params.iter().map(|p| Tensor::zeros(&p.shape())).collect();
        Ok(Self {
            params,
            lr,
            hyper,
            first,
            second,
            t: 0,
        })
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn params(&self) -> &[Param] {
        &self.params
    }

    fn step(&mut self) {
        self.t += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let lr = self.lr;
        for ((p, m), v) in self.params.iter().zip(&mut self.first).zip(&mut self.second) {
            let (m, v) = (m.data_mut(), v.data_mut());
            p.update(|value, grad| {
                for i in 0..value.len() {
                    let g = grad[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    value[i] -= lr * mh / (vh.sqrt() + eps);
                }
            });
        }
    }
}

/// Look up an optimizer by name.
pub fn by_name(name: &str, params: Vec<Param>, lr: f64) -> Result<Box<dyn Optimizer>> {
    match name {
        "sgd" => Ok(Box::new(Sgd::new(params, lr)?)),
        "adam" => Ok(Box::new(Adam::new(params, lr)?)),
        other => Err(Error::Config(format!(
            "unknown optimizer `{other}` (expected one of: sgd, adam)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Param {
        let p = Param::new(Tensor::scalar(v));
        p.accumulate_grad(&Tensor::scalar(g));
        p
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let p = scalar_param(1.0, 0.5);
        let mut opt = Sgd::new(vec![p.clone()], 0.1).unwrap();
        opt.step();
        assert!((p.value().item() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        for g in [3.0, -0.02, 250.0] {
            let p = scalar_param(0.0, g);
            let mut opt = Adam::new(vec![p.clone()], 1e-3).unwrap();
            opt.step();
            // m̂ = g, v̂ = g², so the move is lr·g/(|g| + eps)
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((p.value().item() - expected).abs() < 1e-15);
            assert!((p.value().item() + 1e-3 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        for name in ["sgd", "adam"] {
            let p = scalar_param(0.7, 0.0);
            let mut opt = by_name(name, vec![p.clone()], 0.1).unwrap();
            opt.step();
            opt.step();
            assert_eq!(p.value().item(), 0.7, "{name}");
        }
    }

    #[test]
    fn non_positive_lr_rejected() {
        assert!(matches!(Sgd::new(vec![], 0.0), Err(Error::Config(_))));
        assert!(matches!(Adam::new(vec![], -1e-3), Err(Error::Config(_))));
        assert!(by_name("rmsprop", vec![], 0.1).is_err());
    }
}
