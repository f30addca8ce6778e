use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvGeom};
use super::{Param, Tensor};
use crate::error::{dim_err, Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape: u64,
}

/// Windows for the neighbour reconstruction loss, as row indices into the
/// representation matrix. `neighbors` holds `k` indices per center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowIndex {
    pub k: usize,
    pub centers: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl WindowIndex {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

enum Op {
    Input,
    Param(Param),
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
    Conv2d {
        x: usize,
        k: usize,
        b: usize,
        geom: ConvGeom,
    },
    MaxPool2d {
        x: usize,
        argmax: Vec<usize>,
    },
    Relu {
        x: usize,
    },
    Reshape {
        x: usize,
    },
    Gather {
        x: usize,
        index: Vec<usize>,
    },
    MseToTarget {
        x: usize,
        target: Vec<f64>,
    },
    Sum {
        x: usize,
    },
    Mean {
        x: usize,
    },
    NeighborRecon {
        phi: usize,
        w: usize,
        windows: WindowIndex,
        residual: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records one forward computation so gradients can be propagated back to
/// the parameters it touched. A tape is meant to be used for a single
/// forward/backward pass and then dropped.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            idx: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Usage("variable does not belong to this tape".into()));
        }
        Ok(v.idx)
    }

    fn node(&self, v: Var) -> Result<&Node> {
        let i = self.check(v)?;
        Ok(&self.nodes[i])
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable does not belong to this tape");
        &self.nodes[v.idx].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients never flow into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, p: &Param) -> Var {
        let value = p.value().clone();
        self.push(value, Op::Param(p.clone()), true)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xn, wn, bn) = (self.node(x)?, self.node(w)?, self.node(b)?);
        let (xs, ws, bs) = (xn.value.shape(), wn.value.shape(), bn.value.shape());
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
            return Err(dim_err("dense", format!("x {xs:?}, weights {ws:?}, bias {bs:?}")));
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[1]);
        let data = kernels::dense_forward(xn.value.data(), wn.value.data(), bn.value.data(), batch, inp);
        let needs = xn.needs_grad || wn.needs_grad || bn.needs_grad;
        let value = Tensor::new(&[batch, out], data)?;
        Ok(self.push(
            value,
            Op::Dense {
                x: x.idx,
                w: w.idx,
                b: b.idx,
            },
            needs,
        ))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xn, kn, bn) = (self.node(x)?, self.node(k)?, self.node(b)?);
        let (xs, ks, bs) = (xn.value.shape(), kn.value.shape(), bn.value.shape());
        if xs.len() != 4 || ks.len() != 4 || bs.len() != 1 {
            return Err(dim_err(
                "conv2d",
                format!("expected 4-d input and kernel, got {xs:?} and {ks:?}"),
            ));
        }
        if ks[1] != xs[1] || ks[2] != ks[3] || bs[0] != ks[0] {
            return Err(dim_err("conv2d", format!("input {xs:?}, kernel {ks:?}, bias {bs:?}")));
        }
        if ks[2] > xs[2] || ks[3] > xs[3] {
            return Err(dim_err(
                "conv2d",
                format!("kernel {}x{} larger than input {}x{}", ks[2], ks[3], xs[2], xs[3]),
            ));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            height: xs[2],
            width: xs[3],
            out_ch: ks[0],
            kernel: ks[2],
        };
        let data = kernels::conv2d_forward(xn.value.data(), kn.value.data(), bn.value.data(), &geom);
        let needs = xn.needs_grad || kn.needs_grad || bn.needs_grad;
        let value = Tensor::new(&[geom.batch, geom.out_ch, geom.out_h(), geom.out_w()], data)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: x.idx,
                k: k.idx,
                b: b.idx,
                geom,
            },
            needs,
        ))
    }

    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let xn = self.node(x)?;
        let s = xn.value.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(dim_err("maxpool2d", format!("need [B, C, H>=2, W>=2], got {s:?}")));
        }
        let (data, argmax) = kernels::maxpool2d_forward(xn.value.data(), s[0] * s[1], s[2], s[3]);
        let value = Tensor::new(&[s[0], s[1], s[2] / 2, s[3] / 2], data)?;
        let needs = xn.needs_grad;
        Ok(self.push(value, Op::MaxPool2d { x: x.idx, argmax }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xn = self.node(x)?;
        let data = xn.value.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xn.value.shape(), data)?;
        let needs = xn.needs_grad;
        Ok(self.push(value, Op::Relu { x: x.idx }, needs))
    }

    /// Keep the leading (batch) axis and merge the rest.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xn = self.node(x)?;
        let s = xn.value.shape();
        let rest: usize = s[1..].iter().product();
        let shape = [s[0], rest.max(1)];
        self.reshape(x, &shape)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xn = self.node(x)?;
        let value = xn.value.clone().reshape(shape)?;
        let needs = xn.needs_grad;
        Ok(self.push(value, Op::Reshape { x: x.idx }, needs))
    }

    /// `out[b] = x[b, index[b]]` for a `[B, A]` input.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xn = self.node(x)?;
        let s = xn.value.shape();
        if s.len() != 2 || s[0] != index.len() || index.iter().any(|&a| a >= s[1]) {
            return Err(dim_err("gather", format!("input {s:?} with {} indices", index.len())));
        }
        let data = index
            .iter()
            .enumerate()
            .map(|(b, &a)| xn.value.data()[b * s[1] + a])
            .collect();
        let value = Tensor::new(&[index.len()], data)?;
        let needs = xn.needs_grad;
        Ok(self.push(
            value,
            Op::Gather {
                x: x.idx,
                index: index.to_vec(),
            },
            needs,
        ))
    }

    /// Mean of `(x - target)^2` over all elements.
    pub fn mse_to_target(&mut self, x: Var, target: &[f64]) -> Result<Var> {
        let xn = self.node(x)?;
        if xn.value.len() != target.len() {
            return Err(dim_err(
                "mse",
                format!("{} predictions vs {} targets", xn.value.len(), target.len()),
            ));
        }
        let n = target.len() as f64;
        let loss = xn
            .value
            .data()
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let needs = xn.needs_grad;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MseToTarget {
                x: x.idx,
                target: target.to_vec(),
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xn = self.node(x)?;
        let s = xn.value.data().iter().sum();
        let needs = xn.needs_grad;
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: x.idx }, needs))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xn = self.node(x)?;
        let s = xn.value.data().iter().sum::<f64>() / xn.value.len() as f64;
        let needs = xn.needs_grad;
        Ok(self.push(Tensor::scalar(s), Op::Mean { x: x.idx }, needs))
    }

    /// Mean over windows of `‖w · Φ[neighbors] − Φ[center]‖²`, where `phi`
    /// is `[N, D]` and `w` holds `k` coefficients.
    pub fn neighbor_reconstruction(&mut self, phi: Var, w: Var, windows: &WindowIndex) -> Result<Var> {
        let (pn, wn) = (self.node(phi)?, self.node(w)?);
        let ps = pn.value.shape();
        if ps.len() != 2 {
            return Err(dim_err(
                "neighbor_reconstruction",
                format!("phi must be [N, D], got {ps:?}"),
            ));
        }
        let (rows, d) = (ps[0], ps[1]);
        let k = windows.k;
        if wn.value.len() != k || windows.neighbors.len() != k * windows.centers.len() {
            return Err(dim_err(
                "neighbor_reconstruction",
                format!("{} coefficients for windows of {k}", wn.value.len()),
            ));
        }
        if windows.is_empty() {
            return Err(Error::Usage("neighbor reconstruction over zero windows".into()));
        }
        if windows.centers.iter().chain(&windows.neighbors).any(|&r| r >= rows) {
            return Err(dim_err("neighbor_reconstruction", "window row out of range"));
        }
        let phi_v = pn.value.data();
        let wv = wn.value.data();
        let n = windows.len();
        let mut residual = vec![0.0; n * d];
        let mut total = 0.0;
        for t in 0..n {
            let r = &mut residual[t * d..(t + 1) * d];
            for (j, &row) in windows.neighbors[t * k..(t + 1) * k].iter().enumerate() {
                let src = &phi_v[row * d..(row + 1) * d];
                for (ri, si) in r.iter_mut().zip(src) {
                    *ri += wv[j] * si;
                }
            }
            let c = windows.centers[t];
            for (ri, ci) in r.iter_mut().zip(&phi_v[c * d..(c + 1) * d]) {
                *ri -= ci;
            }
            total += r.iter().map(|v| v * v).sum::<f64>();
        }
        let needs = pn.needs_grad || wn.needs_grad;
        Ok(self.push(
            Tensor::scalar(total / n as f64),
            Op::NeighborRecon {
                phi: phi.idx,
                w: w.idx,
                windows: windows.clone(),
                residual,
            },
            needs,
        ))
    }

    /// Smallest distance of any recorded ReLU input from 0 and of any max-pool
    /// winner from its runner-up. Finite-difference checks are only meaningful
    /// when this exceeds the probe step. Pool windows tied at exactly zero are
    /// skipped: such zeros come out of a ReLU and carry no gradient.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for v in self.nodes[*x].value.data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPool2d { x, .. } => {
                    let s = self.nodes[*x].value.shape();
                    let (h, w) = (s[2], s[3]);
                    let data = self.nodes[*x].value.data();
                    for p in 0..s[0] * s[1] {
                        for i in 0..h / 2 {
                            for j in 0..w / 2 {
                                let mut vals = [0.0; 4];
                                for (n, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                                    vals[n] = data[p * h * w + (2 * i + di) * w + 2 * j + dj];
                                }
                                vals.sort_by(|a, b| b.total_cmp(a));
                                if vals[0] != 0.0 || vals[1] != 0.0 {
                                    margin = margin.min(vals[0] - vals[1]);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Propagate d`loss` back through the tape, adding each reachable
    /// parameter's gradient into its `grad` buffer.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let root = self.check(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(1.0));

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(p) => p.accumulate_grad(&g),
                Op::Dense { x, w, b } => {
                    let xs = self.nodes[*x].value.shape();
                    let dg = kernels::dense_backward(
                        self.nodes[*x].value.data(),
                        self.nodes[*w].value.data(),
                        g.data(),
                        xs[0],
                        xs[1],
                        self.nodes[*x].needs_grad,
                    );
                    self.accumulate(&mut grads, *w, dg.weight);
                    self.accumulate(&mut grads, *b, dg.bias);
                    if let Some(dx) = dg.input {
                        self.accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Conv2d { x, k, b, geom } => {
                    let cg = kernels::conv2d_backward(
                        self.nodes[*x].value.data(),
                        self.nodes[*k].value.data(),
                        g.data(),
                        geom,
                        self.nodes[*x].needs_grad,
                    );
                    self.accumulate(&mut grads, *k, cg.kernel);
                    self.accumulate(&mut grads, *b, cg.bias);
                    if let Some(dx) = cg.input {
                        self.accumulate(&mut grads, *x, dx);
                    }
                }
                Op::MaxPool2d { x, argmax } => {
                    let mut dx = vec![0.0; self.nodes[*x].value.len()];
                    for (&src, &d) in argmax.iter().zip(g.data()) {
                        dx[src] += d;
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Relu { x } => {
                    let mut dx = g.into_data();
                    for (d, &v) in dx.iter_mut().zip(self.nodes[*x].value.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Reshape { x } => self.accumulate(&mut grads, *x, g.into_data()),
                Op::Gather { x, index } => {
                    let a = self.nodes[*x].value.shape()[1];
                    let mut dx = vec![0.0; self.nodes[*x].value.len()];
                    for (b, (&col, &d)) in index.iter().zip(g.data()).enumerate() {
                        dx[b * a + col] += d;
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::MseToTarget { x, target } => {
                    let scale = 2.0 * g.item() / target.len() as f64;
                    let dx: Vec<f64> = self.nodes[*x]
                        .value
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(p, t)| scale * (p - t))
                        .collect();
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Sum { x } => {
                    let dx = vec![g.item(); self.nodes[*x].value.len()];
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Mean { x } => {
                    let n = self.nodes[*x].value.len();
                    let dx = vec![g.item() / n as f64; n];
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::NeighborRecon {
                    phi,
                    w,
                    windows,
                    residual,
                } => {
                    let phi_v = self.nodes[*phi].value.data();
                    let d = self.nodes[*phi].value.shape()[1];
                    let wv = self.nodes[*w].value.data();
                    let k = windows.k;
                    let n = windows.len();
                    let scale = 2.0 * g.item() / n as f64;
                    let mut dw = vec![0.0; k];
                    let mut dphi = self.nodes[*phi].needs_grad.then(|| vec![0.0; phi_v.len()]);
                    for t in 0..n {
                        let r = &residual[t * d..(t + 1) * d];
                        for (j, &row) in windows.neighbors[t * k..(t + 1) * k].iter().enumerate() {
                            let src = &phi_v[row * d..(row + 1) * d];
                            dw[j] += scale * src.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(dp) = dphi.as_mut() {
                                for (o, ri) in dp[row * d..(row + 1) * d].iter_mut().zip(r) {
                                    *o += scale * wv[j] * ri;
                                }
                            }
                        }
                        if let Some(dp) = dphi.as_mut() {
                            let c = windows.centers[t];
                            for (o, ri) in dp[c * d..(c + 1) * d].iter_mut().zip(r) {
                                *o -= scale * ri;
                            }
                        }
                    }
                    if self.nodes[*w].needs_grad {
                        self.accumulate(&mut grads, *w, dw);
                    }
                    if let Some(dp) = dphi {
                        self.accumulate(&mut grads, *phi, dp);
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], idx: usize, g: Vec<f64>) {
        if !self.nodes[idx].needs_grad {
            return;
        }
        match &mut grads[idx] {
            Some(t) => {
                for (a, b) in t.data_mut().iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[idx].value.shape();
                *slot = Some(Tensor::new(shape, g).expect("gradient matches node shape"));
            }
        }
    }
}
