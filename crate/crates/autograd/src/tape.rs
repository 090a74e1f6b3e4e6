//! Recorded operation tape and reverse sweep.
//!
//! Every builder method evaluates its forward value immediately and appends a
//! node; [`Tape::backward`] walks the nodes in reverse order. Leading axis of
//! every batched operand is the sample axis.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{AutogradError, Result};
use crate::kernels::{col2im, im2col, sigmoid, softplus, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::scalar::{matmul, Scalar};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-defined differentiable operation.
pub trait CustomOp<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>>;
    /// Gradients for each input given the gradient of the output; `None`
    /// means "no contribution".
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>>;
}

/// Contiguous column groups `[start, end)` covering `0..width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    ranges: Vec<Range<usize>>,
    width: usize,
}

impl Segments {
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut start = 0;
        let ranges = lengths
            .iter()
            .map(|&l| {
                let r = start..start + l;
                start += l;
                r
            })
            .collect();
        Segments { ranges, width: start }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn get(&self, i: usize) -> Range<usize> {
        self.ranges[i].clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNormConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

enum Op<T: Scalar> {
    Leaf,
    Param(ParamId),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Relu(Var),
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Scale {
        x: Var,
        factor: T,
    },
    Add {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Mul(Var, Var),
    Reshape(Var),
    Bilinear {
        x1: Var,
        x2: Var,
        w: Var,
        b: Option<Var>,
        proj: Vec<T>,
    },
    Softmax(Var),
    SegmentSoftmax {
        x: Var,
        segments: Arc<Segments>,
    },
    SegmentLogSumExp {
        x: Var,
        weights: Option<Var>,
        segments: Arc<Segments>,
    },
    SegmentWeightedSum {
        x: Var,
        w: Var,
        segments: Arc<Segments>,
    },
    BroadcastRows(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

impl<T: Scalar> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param(_) => vec![],
            Dense { x, w, b } | Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter());
                v
            }
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Dropout { x, .. }
            | Relu(x)
            | LeakyRelu { x, .. }
            | Sigmoid(x)
            | Softplus(x)
            | Exp(x)
            | Log(x)
            | Scale { x, .. }
            | Reshape(x)
            | Softmax(x)
            | SegmentSoftmax { x, .. }
            | BroadcastRows(x)
            | Sum(x)
            | Mean(x) => vec![*x],
            SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Add { a, b, .. } => vec![*a, *b],
            Mul(a, b) => vec![*a, *b],
            Bilinear { x1, x2, w, b, .. } => {
                let mut v = vec![*x1, *x2, *w];
                v.extend(b.iter());
                v
            }
            SegmentLogSumExp { x, weights, .. } => {
                let mut v = vec![*x];
                v.extend(weights.iter());
                v
            }
            SegmentWeightedSum { x, w, .. } => vec![*x, *w],
            Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of a scalar output with respect to every node of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Operation tape for one forward/backward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> AutogradError {
    AutogradError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn invalid(op: &'static str, shape: &[usize], expected: &str) -> AutogradError {
    AutogradError::InvalidShape {
        op,
        shape: shape.to_vec(),
        expected: expected.to_string(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = match op {
            Op::Leaf => false,
            Op::Param(_) => true,
            ref other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Free variable whose gradient is reported by [`Gradients::get`].
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Fails with [`AutogradError::NonFinite`] naming `stage` if any value of `v` is not finite.
    pub fn ensure_finite(&self, v: Var, stage: &str) -> Result<()> {
        if self.value(v).all_finite() {
            Ok(())
        } else {
            Err(AutogradError::NonFinite(stage.to_string()))
        }
    }

    /// Affine map `x W^T + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ndim() != 2 {
            return Err(invalid("dense", xv.shape(), "[batch, in]"));
        }
        if wv.ndim() != 2 || wv.shape()[1] != xv.shape()[1] {
            return Err(mismatch("dense", xv.shape(), wv.shape()));
        }
        let (n, k, o) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
        let mut out = vec![T::zero(); n * o];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != o {
                return Err(mismatch("dense bias", wv.shape(), bv.shape()));
            }
            for row in out.chunks_mut(o) {
                row.copy_from_slice(bv.data());
            }
        }
        matmul(xv.data(), false, wv.data(), true, &mut out, n, k, o, b.is_some());
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(value, Op::Dense { x, w, b }))
    }

    /// Stride-1 convolution, `x: [N, C, H, W]`, `w: [O, C, kh, kw]`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ndim() != 4 {
            return Err(invalid("conv2d", xv.shape(), "[batch, channels, height, width]"));
        }
        if wv.ndim() != 4 || wv.shape()[1] != xv.shape()[1] {
            return Err(mismatch("conv2d", xv.shape(), wv.shape()));
        }
        let geom = ConvGeom {
            batch: xv.shape()[0],
            in_channels: xv.shape()[1],
            height: xv.shape()[2],
            width: xv.shape()[3],
            out_channels: wv.shape()[0],
            kernel_h: wv.shape()[2],
            kernel_w: wv.shape()[3],
            padding,
        };
        if geom.kernel_h > geom.height + 2 * padding || geom.kernel_w > geom.width + 2 * padding {
            return Err(mismatch("conv2d kernel", xv.shape(), wv.shape()));
        }
        if let Some(b) = b {
            if self.value(b).len() != geom.out_channels {
                return Err(mismatch("conv2d bias", wv.shape(), self.value(b).shape()));
            }
        }
        let cols = im2col(xv.data(), &geom);
        let (o, p) = (geom.out_channels, geom.positions());
        let mut tmp = vec![T::zero(); o * p];
        matmul(wv.data(), false, &cols, false, &mut tmp, o, geom.patch_len(), p, false);
        let plane = geom.out_h() * geom.out_w();
        let mut out = vec![T::zero(); o * p];
        let bias = b.map(|b| self.value(b).data().to_vec());
        for n in 0..geom.batch {
            for c in 0..o {
                let bc = bias.as_ref().map_or(T::zero(), |b| b[c]);
                let src = &tmp[c * p + n * plane..][..plane];
                let dst = &mut out[(n * o + c) * plane..][..plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bc;
                }
            }
        }
        let value = Tensor::new(vec![geom.batch, o, geom.out_h(), geom.out_w()], out)?;
        // The unfolded input is only needed for the weight gradient.
        let cols = if self.requires_grad(w) { cols } else { Vec::new() };
        Ok(self.push(value, Op::Conv2d { x, w, b, geom, cols }))
    }

    /// Batch normalisation over `[N, F]`. With `training` the batch statistics
    /// are used and `running` (`[2, F]`: mean row, variance row) is updated;
    /// otherwise the stored running statistics are applied.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut Tensor<T>,
        training: bool,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() != 2 {
            return Err(invalid("batch_norm", xv.shape(), "[batch, features]"));
        }
        let (n, f) = (xv.shape()[0], xv.shape()[1]);
        if self.value(gamma).len() != f || self.value(beta).len() != f {
            return Err(mismatch("batch_norm", xv.shape(), self.value(gamma).shape()));
        }
        if running.shape() != [2, f] {
            return Err(mismatch("batch_norm running stats", xv.shape(), running.shape()));
        }
        if training && n < 2 {
            return Err(invalid("batch_norm", xv.shape(), "at least 2 samples in training mode"));
        }
        let eps = T::of(cfg.eps);
        let x = x;
        let data = xv.data();
        let mut mean = vec![T::zero(); f];
        let mut inv_std = vec![T::zero(); f];
        if training {
            let nn = T::of(n as f64);
            for row in data.chunks(f) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nn);
            let mut var = vec![T::zero(); f];
            for row in data.chunks(f) {
                for j in 0..f {
                    let d = row[j] - mean[j];
                    var[j] = var[j] + d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / nn);
            let mom = T::of(cfg.momentum);
            let unbias = nn / T::of((n - 1) as f64);
            let (rm, rv) = running.data_mut().split_at_mut(f);
            for j in 0..f {
                rm[j] = (T::one() - mom) * rm[j] + mom * mean[j];
                rv[j] = (T::one() - mom) * rv[j] + mom * var[j] * unbias;
                inv_std[j] = T::one() / (var[j] + eps).sqrt();
            }
        } else {
            let (rm, rv) = running.data().split_at(f);
            mean.copy_from_slice(rm);
            for j in 0..f {
                inv_std[j] = T::one() / (rv[j] + eps).sqrt();
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); n * f];
        let mut out = vec![T::zero(); n * f];
        for i in 0..n {
            for j in 0..f {
                let h = (data[i * f + j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = h;
                out[i * f + j] = g[j] * h + b[j];
            }
        }
        let value = Tensor::new(vec![n, f], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: training,
            },
        ))
    }

    /// Inverted dropout; the identity when `training` is false.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutogradError::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, negative_slope: f64) -> Var {
        let slope = T::of(negative_slope);
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { v * slope },
            Op::LeakyRelu { x, slope },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), Op::Log(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let factor = T::of(factor);
        self.unary(x, move |v| v * factor, Op::Scale { x, factor })
    }

    /// Elementwise sum; `b` may also be a vector broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.ndim() == 1 && av.ndim() >= 2 && bv.len() == av.row_len() {
            true
        } else {
            return Err(mismatch("add", av.shape(), bv.shape()));
        };
        let w = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[if broadcast { i % w } else { i }])
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b, broadcast }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let shape = vec![v.rows(), v.row_len()];
        self.reshape(x, shape)
    }

    /// Bilinear form `y[n, o] = x1[n]^T W[o] x2[n] + b[o]` with
    /// `x1: [N, A]`, `x2: [N, B]`, `W: [O, A, B]`.
    pub fn bilinear(&mut self, x1: Var, x2: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (v1, v2, wv) = (self.value(x1), self.value(x2), self.value(w));
        if v1.ndim() != 2 || v2.ndim() != 2 || v1.shape()[0] != v2.shape()[0] {
            return Err(mismatch("bilinear", v1.shape(), v2.shape()));
        }
        let (n, a, bdim) = (v1.shape()[0], v1.shape()[1], v2.shape()[1]);
        if wv.ndim() != 3 || wv.shape()[1] != a || wv.shape()[2] != bdim {
            return Err(mismatch("bilinear weight", &[a, bdim], wv.shape()));
        }
        let o = wv.shape()[0];
        // proj[n, o*A + a] = sum_b W[o, a, b] x2[n, b]
        let mut proj = vec![T::zero(); n * o * a];
        matmul(v2.data(), false, wv.data(), true, &mut proj, n, bdim, o * a, false);
        let mut out = vec![T::zero(); n * o];
        for i in 0..n {
            let x1r = &v1.data()[i * a..(i + 1) * a];
            for k in 0..o {
                let pr = &proj[(i * o + k) * a..][..a];
                out[i * o + k] = x1r.iter().zip(pr).map(|(&p, &q)| p * q).sum();
            }
        }
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != o {
                return Err(mismatch("bilinear bias", wv.shape(), bv.shape()));
            }
            for row in out.chunks_mut(o) {
                for (y, &bb) in row.iter_mut().zip(bv.data()) {
                    *y = *y + bb;
                }
            }
        }
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(value, Op::Bilinear { x1, x2, w, b, proj }))
    }

    /// Row-wise softmax over the last axis of `[N, K]`.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() != 2 {
            return Err(invalid("softmax", xv.shape(), "[batch, classes]"));
        }
        let k = xv.shape()[1];
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(k) {
            softmax_in_place(row);
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Softmax(x)))
    }

    /// Softmax taken separately inside each segment of a flat vector. Maps
    /// unconstrained logits onto a product of simplices.
    pub fn segment_softmax(&mut self, x: Var, segments: Arc<Segments>) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != segments.width() {
            return Err(mismatch("segment_softmax", xv.shape(), &[segments.width()]));
        }
        let mut out = xv.data().to_vec();
        for r in segments.ranges() {
            softmax_in_place(&mut out[r.clone()]);
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SegmentSoftmax { x, segments }))
    }

    /// `out[n, s] = ln(sum_{k in s} w_k exp(x[n, k]))` over `x: [N, K]`,
    /// evaluated with a max shift. Weights default to 1. Empty segments yield 0.
    pub fn segment_logsumexp(
        &mut self,
        x: Var,
        weights: Option<Var>,
        segments: Arc<Segments>,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() != 2 || xv.shape()[1] != segments.width() {
            return Err(mismatch("segment_logsumexp", xv.shape(), &[segments.width()]));
        }
        let wv = match weights {
            Some(w) => {
                let wv = self.value(w);
                if wv.len() != segments.width() {
                    return Err(mismatch("segment_logsumexp weights", xv.shape(), wv.shape()));
                }
                Some(wv.data())
            }
            None => None,
        };
        let (n, k, s) = (xv.shape()[0], xv.shape()[1], segments.len());
        let mut out = vec![T::zero(); n * s];
        for i in 0..n {
            let row = &xv.data()[i * k..(i + 1) * k];
            for (j, r) in segments.ranges().iter().enumerate() {
                if r.is_empty() {
                    continue;
                }
                out[i * s + j] = weighted_lse(&row[r.clone()], wv.map(|w| &w[r.clone()]));
            }
        }
        let value = Tensor::new(vec![n, s], out)?;
        Ok(self.push(value, Op::SegmentLogSumExp { x, weights, segments }))
    }

    /// `out[n, s] = sum_{k in s} w_k x[n, k]`.
    pub fn segment_weighted_sum(&mut self, x: Var, w: Var, segments: Arc<Segments>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ndim() != 2 || xv.shape()[1] != segments.width() || wv.len() != segments.width() {
            return Err(mismatch("segment_weighted_sum", xv.shape(), wv.shape()));
        }
        let (n, k, s) = (xv.shape()[0], xv.shape()[1], segments.len());
        let mut out = vec![T::zero(); n * s];
        for i in 0..n {
            let row = &xv.data()[i * k..(i + 1) * k];
            for (j, r) in segments.ranges().iter().enumerate() {
                out[i * s + j] = r.clone().map(|c| row[c] * wv.data()[c]).sum();
            }
        }
        let value = Tensor::new(vec![n, s], out)?;
        Ok(self.push(value, Op::SegmentWeightedSum { x, w, segments }))
    }

    /// Weighted sum with simplex weights obtained from free logits through a
    /// per-segment softmax.
    pub fn simplex_weighted_sum(&mut self, x: Var, logits: Var, segments: Arc<Segments>) -> Result<Var> {
        let w = self.segment_softmax(logits, segments.clone())?;
        self.segment_weighted_sum(x, w, segments)
    }

    /// Repeat a vector `[K]` into `[rows, K]`.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Var {
        let xv = self.value(x);
        let k = xv.len();
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            data.extend_from_slice(xv.data());
        }
        let value = Tensor::new(vec![rows, k], data).expect("rows * k values");
        self.push(value, Op::BroadcastRows(x))
    }

    /// Mean cross-entropy of row-wise softmax(logits) against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.ndim() != 2 || lv.shape()[0] != targets.len() {
            return Err(mismatch("softmax_cross_entropy", lv.shape(), &[targets.len()]));
        }
        let k = lv.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(AutogradError::InvalidArgument(format!(
                "target class {bad} out of range for {k} logits"
            )));
        }
        let mut probs = lv.data().to_vec();
        let mut loss = T::zero();
        for (row, &t) in probs.chunks_mut(k).zip(targets) {
            let (l, _) = row_cross_entropy(row, t);
            loss = loss + l;
        }
        let n = T::of(targets.len().max(1) as f64);
        let value = Tensor::scalar(loss / n);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / T::of(v.len().max(1) as f64));
        self.push(value, Op::Mean(x))
    }

    pub fn custom(&mut self, inputs: &[Var], op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = op.forward(&values)?;
        Ok(self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        ))
    }

    /// Reverse sweep from a single-valued node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(invalid("backward", lv.shape(), "a single-valued output"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of every parameter node into `store`.
    pub fn accumulate_param_grads(&self, grads: &Gradients<T>, store: &mut ParamStore<T>) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads[i].as_ref()) {
                store.grad_mut(*id).add_assign(g);
            }
        }
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let gd = g.data();
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Dense { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, o) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); n * k];
                    matmul(gd, false, wv.data(), false, &mut dx, n, o, k, false);
                    self.acc(grads, *x, dx)?;
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![T::zero(); o * k];
                    matmul(gd, true, xv.data(), false, &mut dw, o, n, k, false);
                    self.acc(grads, *w, dw)?;
                }
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        self.acc(grads, *b, column_sums(gd, o))?;
                    }
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let (o, p) = (geom.out_channels, geom.positions());
                let plane = geom.out_h() * geom.out_w();
                // gradient rearranged as [O, N*plane]
                let mut gp = vec![T::zero(); o * p];
                for n in 0..geom.batch {
                    for c in 0..o {
                        gp[c * p + n * plane..][..plane]
                            .copy_from_slice(&gd[(n * o + c) * plane..][..plane]);
                    }
                }
                if self.requires_grad(*w) {
                    let mut dw = vec![T::zero(); o * geom.patch_len()];
                    matmul(&gp, false, cols, true, &mut dw, o, p, geom.patch_len(), false);
                    self.acc(grads, *w, dw)?;
                }
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        let db = gp.chunks(p).map(|r| r.iter().copied().sum()).collect();
                        self.acc(grads, *b, db)?;
                    }
                }
                if self.requires_grad(*x) {
                    let wv = self.value(*w);
                    let mut dcols = vec![T::zero(); geom.patch_len() * p];
                    matmul(wv.data(), true, &gp, false, &mut dcols, geom.patch_len(), o, p, false);
                    let mut dx = vec![T::zero(); self.value(*x).len()];
                    col2im(&dcols, geom, &mut dx);
                    self.acc(grads, *x, dx)?;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let f = inv_std.len();
                let n = gd.len() / f;
                let gam = self.value(*gamma).data();
                if self.requires_grad(*gamma) {
                    let mut dg = vec![T::zero(); f];
                    for i in 0..n {
                        for j in 0..f {
                            dg[j] = dg[j] + gd[i * f + j] * xhat[i * f + j];
                        }
                    }
                    self.acc(grads, *gamma, dg)?;
                }
                if self.requires_grad(*beta) {
                    self.acc(grads, *beta, column_sums(gd, f))?;
                }
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); n * f];
                    if *batch_stats {
                        let nn = T::of(n as f64);
                        for j in 0..f {
                            let mut s1 = T::zero();
                            let mut s2 = T::zero();
                            for i in 0..n {
                                let dh = gd[i * f + j] * gam[j];
                                s1 = s1 + dh;
                                s2 = s2 + dh * xhat[i * f + j];
                            }
                            for i in 0..n {
                                let dh = gd[i * f + j] * gam[j];
                                dx[i * f + j] = inv_std[j] / nn * (nn * dh - s1 - xhat[i * f + j] * s2);
                            }
                        }
                    } else {
                        for i in 0..n {
                            for j in 0..f {
                                dx[i * f + j] = gd[i * f + j] * gam[j] * inv_std[j];
                            }
                        }
                    }
                    self.acc(grads, *x, dx)?;
                }
            }
            Op::Dropout { x, mask } => {
                let dx = gd.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = gd
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                self.acc(grads, *x, dx)?;
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let dx = gd
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > T::zero() { g } else { g * *slope })
                    .collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Sigmoid(x) => {
                let dx = gd
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Softplus(x) => {
                let xv = self.value(*x).data();
                let dx = gd.iter().zip(xv).map(|(&g, &v)| g * sigmoid(v)).collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Exp(x) => {
                let dx = gd.iter().zip(out.data()).map(|(&g, &y)| g * y).collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                let dx = gd.iter().zip(xv).map(|(&g, &v)| g / v).collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Scale { x, factor } => {
                let dx = gd.iter().map(|&g| g * *factor).collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Add { a, b, broadcast } => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, gd.to_vec())?;
                }
                if self.requires_grad(*b) {
                    let db = if *broadcast {
                        column_sums(gd, self.value(*b).len())
                    } else {
                        gd.to_vec()
                    };
                    self.acc(grads, *b, db)?;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    self.acc(grads, *a, gd.iter().zip(bv).map(|(&g, &y)| g * y).collect())?;
                }
                if self.requires_grad(*b) {
                    self.acc(grads, *b, gd.iter().zip(av).map(|(&g, &y)| g * y).collect())?;
                }
            }
            Op::Reshape(x) => self.acc(grads, *x, gd.to_vec())?,
            Op::Bilinear { x1, x2, w, b, proj } => {
                let (v1, v2, wv) = (self.value(*x1), self.value(*x2), self.value(*w));
                let (n, a, bdim, o) = (v1.shape()[0], v1.shape()[1], v2.shape()[1], wv.shape()[0]);
                if self.requires_grad(*x1) {
                    let mut dx1 = vec![T::zero(); n * a];
                    for i in 0..n {
                        let d = &mut dx1[i * a..(i + 1) * a];
                        for k in 0..o {
                            let gk = gd[i * o + k];
                            let pr = &proj[(i * o + k) * a..][..a];
                            for (dd, &pp) in d.iter_mut().zip(pr) {
                                *dd = *dd + gk * pp;
                            }
                        }
                    }
                    self.acc(grads, *x1, dx1)?;
                }
                if self.requires_grad(*x2) || self.requires_grad(*w) {
                    // dproj[n, o*A + a] = g[n, o] x1[n, a]
                    let mut dproj = vec![T::zero(); n * o * a];
                    for i in 0..n {
                        let x1r = &v1.data()[i * a..(i + 1) * a];
                        for k in 0..o {
                            let gk = gd[i * o + k];
                            let dst = &mut dproj[(i * o + k) * a..][..a];
                            for (dd, &xx) in dst.iter_mut().zip(x1r) {
                                *dd = gk * xx;
                            }
                        }
                    }
                    if self.requires_grad(*w) {
                        let mut dw = vec![T::zero(); o * a * bdim];
                        matmul(&dproj, true, v2.data(), false, &mut dw, o * a, n, bdim, false);
                        self.acc(grads, *w, dw)?;
                    }
                    if self.requires_grad(*x2) {
                        let mut dx2 = vec![T::zero(); n * bdim];
                        matmul(&dproj, false, wv.data(), false, &mut dx2, n, o * a, bdim, false);
                        self.acc(grads, *x2, dx2)?;
                    }
                }
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        self.acc(grads, *b, column_sums(gd, o))?;
                    }
                }
            }
            Op::Softmax(x) => {
                let k = out.shape()[1];
                let mut dx = vec![T::zero(); gd.len()];
                for ((d, y), g) in dx.chunks_mut(k).zip(out.data().chunks(k)).zip(gd.chunks(k)) {
                    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    for j in 0..k {
                        d[j] = y[j] * (g[j] - dot);
                    }
                }
                self.acc(grads, *x, dx)?;
            }
            Op::SegmentSoftmax { x, segments } => {
                let y = out.data();
                let mut dx = vec![T::zero(); gd.len()];
                for r in segments.ranges() {
                    let dot: T = r.clone().map(|c| y[c] * gd[c]).sum();
                    for c in r.clone() {
                        dx[c] = y[c] * (gd[c] - dot);
                    }
                }
                self.acc(grads, *x, dx)?;
            }
            Op::SegmentLogSumExp { x, weights, segments } => {
                let xv = self.value(*x);
                let (n, k, s) = (xv.shape()[0], xv.shape()[1], segments.len());
                let wv = weights.map(|w| self.value(w).data());
                let mut dx = vec![T::zero(); n * k];
                let mut dw = vec![T::zero(); k];
                for i in 0..n {
                    let row = &xv.data()[i * k..(i + 1) * k];
                    for (j, r) in segments.ranges().iter().enumerate() {
                        let (gs, ls) = (gd[i * s + j], out.data()[i * s + j]);
                        for c in r.clone() {
                            let e = (row[c] - ls).exp();
                            let wc = wv.map_or(T::one(), |w| w[c]);
                            dx[i * k + c] = gs * wc * e;
                            dw[c] = dw[c] + gs * e;
                        }
                    }
                }
                if self.requires_grad(*x) {
                    self.acc(grads, *x, dx)?;
                }
                if let Some(w) = weights {
                    if self.requires_grad(*w) {
                        self.acc(grads, *w, dw)?;
                    }
                }
            }
            Op::SegmentWeightedSum { x, w, segments } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, s) = (xv.shape()[0], xv.shape()[1], segments.len());
                let mut dx = vec![T::zero(); n * k];
                let mut dw = vec![T::zero(); k];
                for i in 0..n {
                    for (j, r) in segments.ranges().iter().enumerate() {
                        let gs = gd[i * s + j];
                        for c in r.clone() {
                            dx[i * k + c] = gs * wv.data()[c];
                            dw[c] = dw[c] + gs * xv.data()[i * k + c];
                        }
                    }
                }
                if self.requires_grad(*x) {
                    self.acc(grads, *x, dx)?;
                }
                if self.requires_grad(*w) {
                    self.acc(grads, *w, dw)?;
                }
            }
            Op::BroadcastRows(x) => {
                let k = self.value(*x).len();
                self.acc(grads, *x, column_sums(gd, k))?;
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let k = self.value(*logits).shape()[1];
                let scale = gd[0] / T::of(targets.len().max(1) as f64);
                let mut dx = probs.clone();
                for (row, &t) in dx.chunks_mut(k).zip(targets) {
                    row[t] = row[t] - T::one();
                    row.iter_mut().for_each(|v| *v = *v * scale);
                }
                self.acc(grads, *logits, dx)?;
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.acc(grads, *x, vec![gd[0]; n])?;
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.acc(grads, *x, vec![gd[0] / T::of(n.max(1) as f64); n])?;
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = op.backward(&values, out, g);
                for (&v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        if self.requires_grad(v) {
                            if gi.len() != self.value(v).len() {
                                return Err(mismatch("custom backward", self.value(v).shape(), gi.shape()));
                            }
                            self.acc(grads, v, gi.into_data())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Vec<T>) -> Result<()> {
        if !self.requires_grad(v) {
            return Ok(());
        }
        let t = Tensor::new(self.value(v).shape().to_vec(), g)?;
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        }
        Ok(())
    }
}

fn column_sums<T: Scalar>(data: &[T], width: usize) -> Vec<T> {
    let mut s = vec![T::zero(); width];
    for row in data.chunks(width) {
        for (a, &b) in s.iter_mut().zip(row) {
            *a = *a + b;
        }
    }
    s
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z = z + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / z);
}

/// Turns `row` into softmax probabilities and returns `(-ln p[target], ln Z)`.
pub(crate) fn row_cross_entropy<T: Scalar>(row: &mut [T], target: usize) -> (T, T) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let z: T = row.iter().map(|&v| (v - m).exp()).sum();
    let log_z = m + z.ln();
    let loss = log_z - row[target];
    for v in row.iter_mut() {
        *v = (*v - log_z).exp();
    }
    (loss, log_z)
}

fn weighted_lse<T: Scalar>(x: &[T], w: Option<&[T]>) -> T {
    let active = |i: usize| w.is_none_or(|w| w[i] > T::zero());
    let mut m = T::neg_infinity();
    for (i, &v) in x.iter().enumerate() {
        if active(i) && v > m {
            m = v;
        }
    }
    if m == T::neg_infinity() {
        m = x.iter().copied().fold(T::neg_infinity(), T::max);
    }
    let s: T = x
        .iter()
        .enumerate()
        .map(|(i, &v)| w.map_or(T::one(), |w| w[i]) * (v - m).exp())
        .sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let w = tape.input(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let b = tape.input(t(&[3], &[0., 0., 0.]));
        let y = tape.dense(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::full(vec![4, 4], 2.0));
        let mut rng = rand::rng();
        let y = tape.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(vec![2, 3]));
        let w = tape.input(Tensor::zeros(vec![4, 5]));
        let err = tape.dense(x, w, None).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 5]"), "{err}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::from_f64(vec![2, 3], &[1000., 0., -1000., 1., 2., 3.]).unwrap());
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).data().chunks(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn segment_logsumexp_matches_direct_formula() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[1, 3], &[0.2, 0.9, 0.4]));
        let w = tape.input(t(&[3], &[0.5, 0.5, 1.0]));
        let seg = Arc::new(Segments::from_lengths(&[2, 1, 0]));
        let y = tape.segment_logsumexp(x, Some(w), seg).unwrap();
        let v = tape.value(y).data();
        let want0 = (0.5 * 0.2f64.exp() + 0.5 * 0.9f64.exp()).ln();
        assert!((v[0] - want0).abs() < 1e-14);
        assert!((v[1] - 0.4).abs() < 1e-14);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn eval_batch_norm_uses_running_stats_only() {
        let mut running = t(&[2, 2], &[1.0, -1.0, 4.0, 0.25]);
        let run = |rows: &[f64], running: &mut Tensor<f64>| {
            let mut tape = Tape::<f64>::new();
            let x = tape.input(t(&[rows.len() / 2, 2], rows));
            let g = tape.input(t(&[2], &[1.0, 1.0]));
            let b = tape.input(t(&[2], &[0.0, 0.0]));
            let y = tape
                .batch_norm(x, g, b, running, false, BatchNormConfig { momentum: 0.1, eps: 0.0 })
                .unwrap();
            tape.value(y).row(0).to_vec()
        };
        let a = run(&[3.0, 0.0], &mut running);
        let b = run(&[3.0, 0.0, 100.0, -50.0, 7.0, 7.0], &mut running);
        assert_eq!(a, b);
        assert_eq!(a, vec![1.0, 2.0]);
    }
}
