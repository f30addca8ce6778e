//! Raw forward/backward loops over flat slices.
//!
//! Shapes are validated by the tape before these run. Forward loops skip
//! exact-zero inputs, which is bit-exact because adding `±0.0` to a running
//! sum that started at `+0.0` never changes it. Convolution gradients go
//! through im2col and `matrixmultiply`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height - self.kernel + 1
    }

    pub fn out_w(&self) -> usize {
        self.width - self.kernel + 1
    }

    fn in_plane(&self) -> usize {
        self.in_ch * self.height * self.width
    }

    fn out_plane(&self) -> usize {
        self.out_ch * self.out_h() * self.out_w()
    }

    /// Valid kernel offsets along one axis for input coordinate `pos`.
    #[inline]
    fn taps(&self, pos: usize, out_len: usize) -> std::ops::RangeInclusive<usize> {
        let lo = (pos + 1).saturating_sub(out_len);
        let hi = pos.min(self.kernel - 1);
        lo..=hi
    }
}

/// `[F, C, k, k]` → `[C, k, k, F]`, so the output-channel axis is contiguous.
pub fn kernel_to_ckkf(kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    let kk = g.kernel * g.kernel;
    let mut out = vec![0.0; kernel.len()];
    for f in 0..g.out_ch {
        for c in 0..g.in_ch {
            for t in 0..kk {
                out[(c * kk + t) * g.out_ch + f] = kernel[(f * g.in_ch + c) * kk + t];
            }
        }
    }
    out
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Valid, stride-1 cross-correlation. Each output is accumulated over
/// `(c, ki, kj)` in lexicographic order and the bias is added last.
pub fn conv2d_forward(x: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (oh, ow, f) = (g.out_h(), g.out_w(), g.out_ch);
    let kt = kernel_to_ckkf(kernel, g);
    let mut out = vec![0.0; g.batch * g.out_plane()];
    let mut acc = vec![0.0; oh * ow * f];
    for s in 0..g.batch {
        acc.fill(0.0);
        let xs = &x[s * g.in_plane()..(s + 1) * g.in_plane()];
        for c in 0..g.in_ch {
            for y in 0..g.height {
                let row = &xs[(c * g.height + y) * g.width..][..g.width];
                for (xx, &v) in row.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for ki in g.taps(y, oh) {
                        let i = y - ki;
                        for kj in g.taps(xx, ow) {
                            let j = xx - kj;
                            let k_off = ((c * g.kernel + ki) * g.kernel + kj) * f;
                            axpy(&mut acc[(i * ow + j) * f..][..f], v, &kt[k_off..k_off + f]);
                        }
                    }
                }
            }
        }
        let os = &mut out[s * g.out_plane()..(s + 1) * g.out_plane()];
        for p in 0..oh * ow {
            for ch in 0..f {
                os[ch * oh * ow + p] = acc[p * f + ch] + bias[ch];
            }
        }
    }
    out
}

/// Samples per im2col block in the backward pass.
const COL_CHUNK: usize = 64;

/// Unfold `nb` samples into `cols` laid out `[C·k·k, nb·P]`.
fn im2col(x: &[f64], nb: usize, g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let (p, n) = (oh * ow, nb * oh * ow);
    for c in 0..g.in_ch {
        for ki in 0..k {
            for kj in 0..k {
                let r = (c * k + ki) * k + kj;
                for s in 0..nb {
                    let xs = &x[s * g.in_plane()..];
                    let dst = &mut cols[r * n + s * p..][..p];
                    for i in 0..oh {
                        let src = &xs[(c * g.height + i + ki) * g.width + kj..][..ow];
                        dst[i * ow..(i + 1) * ow].copy_from_slice(src);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back into `dx`.
fn col2im(cols: &[f64], nb: usize, g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let (p, n) = (oh * ow, nb * oh * ow);
    for c in 0..g.in_ch {
        for ki in 0..k {
            for kj in 0..k {
                let r = (c * k + ki) * k + kj;
                for s in 0..nb {
                    let src = &cols[r * n + s * p..][..p];
                    let ds = &mut dx[s * g.in_plane()..];
                    for i in 0..oh {
                        let dst = &mut ds[(c * g.height + i + ki) * g.width + kj..][..ow];
                        for (d, v) in dst.iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c ← alpha·a·b + beta·c` for row-major `a: [m, kk]` given by strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, kk: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize), beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    assert!(a.0.len() > (m - 1) * a.1 + (kk - 1) * a.2);
    assert!(b.0.len() > (kk - 1) * b.1 + (n - 1) * b.2);
    // SAFETY: the asserts above bound every index the routine touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            kk,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub struct ConvGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Gradients of [`conv2d_forward`] via im2col and matrix products.
pub fn conv2d_backward(x: &[f64], kernel: &[f64], dout: &[f64], g: &ConvGeom, need_input: bool) -> ConvGrads {
    let (p, f) = (g.out_h() * g.out_w(), g.out_ch);
    let r = g.in_ch * g.kernel * g.kernel;
    let mut dk = vec![0.0; f * r];
    let mut dbias = vec![0.0; f];
    let mut dx = need_input.then(|| vec![0.0; x.len()]);
    let chunk = COL_CHUNK.min(g.batch);
    let mut cols = vec![0.0; r * chunk * p];
    let mut dmat = vec![0.0; f * chunk * p];
    let mut dcols = if need_input {
        vec![0.0; r * chunk * p]
    } else {
        Vec::new()
    };
    for start in (0..g.batch).step_by(chunk) {
        let nb = chunk.min(g.batch - start);
        let n = nb * p;
        im2col(&x[start * g.in_plane()..], nb, g, &mut cols[..r * n]);
        for s in 0..nb {
            let ds = &dout[(start + s) * g.out_plane()..];
            for ch in 0..f {
                let src = &ds[ch * p..(ch + 1) * p];
                dmat[ch * n + s * p..][..p].copy_from_slice(src);
                dbias[ch] += src.iter().sum::<f64>();
            }
        }
        // dK[F, R] += dmat[F, n] · colsᵀ[n, R]
        gemm(f, n, r, (&dmat, n, 1), (&cols, 1, n), 1.0, &mut dk);
        if let Some(dx) = dx.as_mut() {
            // dcols[R, n] = Kᵀ[R, F] · dmat[F, n]
            gemm(r, f, n, (kernel, 1, r), (&dmat, n, 1), 0.0, &mut dcols[..r * n]);
            col2im(&dcols[..r * n], nb, g, &mut dx[start * g.in_plane()..]);
        }
    }
    ConvGrads {
        kernel: dk,
        bias: dbias,
        input: dx,
    }
}

/// 2×2 / stride-2 max pooling over `[B, C, H, W]`. Ties go to the first
/// maximum in row-major window order. Returns values and flat argmax indices.
pub fn maxpool2d_forward(x: &[f64], planes: usize, height: usize, width: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * height * width;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * width + 2 * j;
                let (mut best, mut bv) = (top, x[top]);
                for idx in [top + 1, top + width, top + width + 1] {
                    let v = x[idx];
                    let better = v > bv;
                    best = if better { idx } else { best };
                    bv = if better { v } else { bv };
                }
                out.push(bv);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// `out[b, :] = bias + Σ_i x[b, i] · w[i, :]` with `w` laid out `[I, O]`.
pub fn dense_forward(x: &[f64], w: &[f64], bias: &[f64], batch: usize, inp: usize) -> Vec<f64> {
    let o = bias.len();
    let mut out = Vec::with_capacity(batch * o);
    for b in 0..batch {
        let start = out.len();
        out.extend_from_slice(bias);
        let row = &mut out[start..];
        for (i, &xv) in x[b * inp..(b + 1) * inp].iter().enumerate() {
            if xv != 0.0 {
                axpy(row, xv, &w[i * o..(i + 1) * o]);
            }
        }
    }
    out
}

pub struct DenseGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

pub fn dense_backward(x: &[f64], w: &[f64], dout: &[f64], batch: usize, inp: usize, need_input: bool) -> DenseGrads {
    let o = dout.len() / batch;
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; o];
    let mut dx = need_input.then(|| vec![0.0; x.len()]);
    for b in 0..batch {
        let d = &dout[b * o..(b + 1) * o];
        for (acc, v) in db.iter_mut().zip(d) {
            *acc += v;
        }
        for i in 0..inp {
            let xv = x[b * inp + i];
            let wi = &w[i * o..(i + 1) * o];
            if xv != 0.0 {
                axpy(&mut dw[i * o..(i + 1) * o], xv, d);
            }
            if let Some(dx) = dx.as_mut() {
                dx[b * inp + i] = dot(wi, d);
            }
        }
    }
    DenseGrads {
        weight: dw,
        bias: db,
        input: dx,
    }
}
