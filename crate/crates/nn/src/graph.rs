//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records nodes in creation order, which is a topological
//! order; [`Graph::backward`] visits them in exact reverse. Every op keeps
//! whatever forward state its adjoint needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::kernels::{col2im, conv_output_size, gemm, im2col, ConvGeom};
use crate::store::{ParamGrads, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    /// Weight of the old running moment in each update.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.9,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Sigmoid {
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Upsample {
        x: NodeId,
        factor: usize,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Slice {
        x: NodeId,
        axis: usize,
        start: usize,
    },
    L2Normalize {
        x: NodeId,
        norms: Vec<f64>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Reshape {
        x: NodeId,
    },
    RepeatRows {
        x: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Sum {
        x: NodeId,
    },
    MaskedL1 {
        x: NodeId,
        target: Tensor,
        mask: Tensor,
    },
    MaskedCosine {
        x: NodeId,
        target: Tensor,
        mask: Tensor,
    },
    Bce {
        x: NodeId,
        target: Tensor,
        clamp: f64,
    },
    WeightedMse {
        x: NodeId,
        labels: Tensor,
        weights: Tensor,
    },
    Mse {
        x: NodeId,
        target: Tensor,
    },
    Dot {
        x: NodeId,
        weights: Tensor,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "input",
            Op::Param(_) => "param",
            Op::Linear { .. } => "dense",
            Op::Conv { .. } => "conv",
            Op::BatchNorm { .. } => "batch_norm",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Tanh { .. } => "tanh",
            Op::Upsample { .. } => "upsample",
            Op::Dropout { .. } => "dropout",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::L2Normalize { .. } => "l2_normalize",
            Op::Add { .. } => "add",
            Op::Reshape { .. } => "reshape",
            Op::RepeatRows { .. } => "repeat_rows",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::MaskedL1 { .. } => "masked_l1",
            Op::MaskedCosine { .. } => "masked_cosine",
            Op::Bce { .. } => "bce",
            Op::WeightedMse { .. } => "weighted_mse",
            Op::Mse { .. } => "mse",
            Op::Dot { .. } => "dot",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient flowing into `id`, if the loss depends on it.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }
}

#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    buffer_updates: Vec<(String, Tensor)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NnError {
    NnError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::with_seed(0)
    }

    /// The seed drives dropout masks.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer_updates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Running-moment updates produced by training-mode batch norms.
    pub fn take_buffer_updates(&mut self) -> Vec<(String, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(NnError::NonFinite(op.name()));
        }
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, value)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        let value = store.value(name)?.clone();
        self.push(Op::Param(name.to_string()), value)
    }

    /// `x·w (+ b)` for `x: B×I`, `w: I×O`, `b: O`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("dense", &xs, &ws));
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[1]);
        let mut y = vec![0.0; batch * out];
        gemm(
            batch,
            inp,
            out,
            self.value(x).data(),
            inp,
            1,
            self.value(w).data(),
            out,
            1,
            &mut y,
            0.0,
        );
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs.iter().product::<usize>() != out {
                return Err(shape_err("dense bias", bs, &[out]));
            }
            let bias = self.value(b).data();
            for row in y.chunks_mut(out) {
                for (v, bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                }
            }
        }
        let value = Tensor::new(vec![batch, out], y)?;
        self.push(Op::Linear { x, w, b }, value)
    }

    /// Dense layer reading `<name>.weight` (I×O) and optionally `<name>.bias`.
    pub fn layer_dense(&mut self, store: &ParamStore, x: NodeId, name: &str, bias: bool) -> Result<NodeId> {
        let w = self.param(store, &format!("{name}.weight"))?;
        let b = if bias {
            Some(self.param(store, &format!("{name}.bias"))?)
        } else {
            None
        };
        self.linear(x, w, b)
    }

    /// Cross-correlation over `B×C×H×W` (2-D) or `B×C×D×H×W` (3-D) input
    /// with weight `O×C×K…`.
    pub fn conv(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if !(xs.len() == 4 || xs.len() == 5) || ws.len() != xs.len() || ws[1] != xs[1] {
            return Err(shape_err("conv", &xs, &ws));
        }
        let three_d = xs.len() == 5;
        let (input, kernel, strides, pads) = if three_d {
            (
                [xs[2], xs[3], xs[4]],
                [ws[2], ws[3], ws[4]],
                [stride; 3],
                [pad; 3],
            )
        } else {
            (
                [1, xs[2], xs[3]],
                [1, ws[2], ws[3]],
                [1, stride, stride],
                [0, pad, pad],
            )
        };
        let mut output = [0; 3];
        for d in 0..3 {
            output[d] = conv_output_size(input[d], kernel[d], strides[d], pads[d]).ok_or(NnError::ConvOutput {
                op: "conv",
                input: xs.clone(),
                kernel: kernel[d],
                stride,
                pad,
            })?;
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ws[0],
            input,
            kernel,
            stride: strides,
            pad: pads,
            output,
        };
        let rows = geom.col_rows();
        let cols_n = geom.col_cols();
        let in_len = geom.in_ch * geom.in_volume();
        let out_len = geom.out_ch * cols_n;
        let mut cols = vec![0.0; rows * cols_n];
        let mut y = vec![0.0; geom.batch * out_len];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for bi in 0..geom.batch {
                im2col(&xv[bi * in_len..(bi + 1) * in_len], &geom, &mut cols);
                gemm(
                    geom.out_ch,
                    rows,
                    cols_n,
                    wv,
                    rows,
                    1,
                    &cols,
                    cols_n,
                    1,
                    &mut y[bi * out_len..(bi + 1) * out_len],
                    0.0,
                );
            }
        }
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs.iter().product::<usize>() != geom.out_ch {
                return Err(shape_err("conv bias", bs, &[geom.out_ch]));
            }
            let bias = self.value(b).data();
            for chunk in y.chunks_mut(cols_n).enumerate() {
                let o = chunk.0 % geom.out_ch;
                chunk.1.iter_mut().for_each(|v| *v += bias[o]);
            }
        }
        let mut shape = vec![geom.batch, geom.out_ch];
        if three_d {
            shape.extend_from_slice(&output);
        } else {
            shape.extend_from_slice(&output[1..]);
        }
        let value = Tensor::new(shape, y)?;
        self.push(Op::Conv { x, w, b, geom }, value)
    }

    /// Convolution reading `<name>.weight` and optionally `<name>.bias`.
    pub fn layer_conv(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        name: &str,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Result<NodeId> {
        let w = self.param(store, &format!("{name}.weight"))?;
        let b = if bias {
            Some(self.param(store, &format!("{name}.bias"))?)
        } else {
            None
        };
        self.conv(x, w, b, stride, pad)
    }

    /// Per-channel batch normalization over axis 1 of `B×C×…`.
    ///
    /// Reads `<name>.gamma`/`<name>.beta` and the buffers
    /// `<name>.running_mean`/`<name>.running_var`. In train mode the
    /// biased batch variance normalizes, and running-moment updates are
    /// queued for [`Graph::take_buffer_updates`].
    pub fn layer_batchnorm(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        name: &str,
        mode: Mode,
        cfg: BatchNormConfig,
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(shape_err("batch_norm", &xs, &[]));
        }
        let (batch, ch) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        let gamma = self.param(store, &format!("{name}.gamma"))?;
        let beta = self.param(store, &format!("{name}.beta"))?;
        if self.value(gamma).len() != ch || self.value(beta).len() != ch {
            return Err(shape_err("batch_norm", &xs, self.shape(gamma)));
        }
        let mean_name = format!("{name}.running_mean");
        let var_name = format!("{name}.running_var");
        let count = (batch * inner) as f64;
        let xv = self.value(x).data();
        let (mean, var) = match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(NnError::BatchTooSmall(batch));
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for b in 0..batch {
                    for (c, m) in mean.iter_mut().enumerate() {
                        let s = &xv[(b * ch + c) * inner..(b * ch + c + 1) * inner];
                        *m += s.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for b in 0..batch {
                    for (c, v) in var.iter_mut().enumerate() {
                        let s = &xv[(b * ch + c) * inner..(b * ch + c + 1) * inner];
                        *v += s.iter().map(|x| (x - mean[c]) * (x - mean[c])).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                (mean, var)
            }
            Mode::Eval => (
                store.buffer(&mean_name)?.data().to_vec(),
                store.buffer(&var_name)?.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + cfg.eps).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for b in 0..batch {
            for c in 0..ch {
                let off = (b * ch + c) * inner;
                for i in off..off + inner {
                    xhat[i] = (xv[i] - mean[c]) * inv_std[c];
                    y[i] = gv[c] * xhat[i] + bv[c];
                }
            }
        }
        if mode == Mode::Train {
            let rm = store.buffer(&mean_name)?;
            let rv = store.buffer(&var_name)?;
            let k = cfg.momentum;
            let new_mean = Tensor::from_fn(rm.shape(), |c| k * rm.data()[c] + (1.0 - k) * mean[c]);
            let new_var = Tensor::from_fn(rv.shape(), |c| k * rv.data()[c] + (1.0 - k) * var[c]);
            self.buffer_updates.push((mean_name, new_mean));
            self.buffer_updates.push((var_name, new_var));
        }
        let value = Tensor::new(xs, y)?;
        self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: mode == Mode::Train,
            },
            value,
        )
    }

    fn map(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&v| f(v)).collect())?;
        self.push(op, value)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        self.map(x, Op::LeakyRelu { x, slope }, |v| if v >= 0.0 { v } else { slope * v })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.map(x, Op::Sigmoid { x }, sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.map(x, Op::Tanh { x }, f64::tanh)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.map(x, Op::Scale { x, c }, |v| c * v)
    }

    /// Nearest-neighbour upsampling of the two trailing axes of `B×C×H×W`.
    pub fn upsample_nearest(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || factor == 0 {
            return Err(NnError::InvalidArgument(format!(
                "upsample needs a rank-4 input and factor >= 1, got {xs:?} and {factor}"
            )));
        }
        if factor == 1 {
            return Ok(x);
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(x).data();
        let mut y = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            for i in 0..oh {
                for j in 0..ow {
                    y[(p * oh + i) * ow + j] = src[(p * h + i / factor) * w + j / factor];
                }
            }
        }
        let value = Tensor::new(vec![xs[0], xs[1], oh, ow], y)?;
        self.push(Op::Upsample { x, factor }, value)
    }

    /// Inverted dropout: active only in train mode, scaled by `1/(1-rate)`.
    pub fn dropout(&mut self, x: NodeId, rate: f64, mode: Mode) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let value = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        )?;
        self.push(Op::Dropout { x, mask }, value)
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = self
            .shape(*inputs.first().ok_or_else(|| NnError::InvalidArgument("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(NnError::InvalidArgument(format!("concat axis {axis} for shape {first:?}")));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &id in inputs {
            let s = self.shape(id);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &first, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let mut y = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &id in inputs {
                let t = self.value(id);
                let chunk: usize = t.shape()[axis..].iter().product();
                y.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, y)?;
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
        )
    }

    /// Channel concatenation (axis 1).
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.concat(&[a, b], 1)
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || len == 0 || start + len > xs[axis] {
            return Err(NnError::InvalidArgument(format!(
                "slice {start}..{} on axis {axis} of {xs:?}",
                start + len
            )));
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * xs[axis] + start) * inner;
            y.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = xs;
        shape[axis] = len;
        let value = Tensor::new(shape, y)?;
        self.push(Op::Slice { x, axis, start }, value)
    }

    /// Normalize each axis-1 vector of `B×C×…` to unit length,
    /// `x / sqrt(|x|² + 1e-12)`.
    pub fn l2_normalize_channels(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(shape_err("l2_normalize", &xs, &[]));
        }
        let (batch, ch) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        let src = self.value(x).data();
        let mut norms = vec![0.0; batch * inner];
        for b in 0..batch {
            for c in 0..ch {
                for r in 0..inner {
                    let v = src[(b * ch + c) * inner + r];
                    norms[b * inner + r] += v * v;
                }
            }
        }
        norms.iter_mut().for_each(|n| *n = (*n + 1e-12).sqrt());
        let mut y = vec![0.0; src.len()];
        for b in 0..batch {
            for c in 0..ch {
                for r in 0..inner {
                    let i = (b * ch + c) * inner + r;
                    y[i] = src[i] / norms[b * inner + r];
                }
            }
        }
        let value = Tensor::new(xs, y)?;
        self.push(Op::L2Normalize { x, norms }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let value = Tensor::new(
            self.shape(a).to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect(),
        )?;
        self.push(Op::Add { a, b }, value)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(Op::Reshape { x }, value)
    }

    /// Tile a `1×F` row into `n×F`.
    pub fn repeat_rows(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || xs[0] != 1 || n == 0 {
            return Err(shape_err("repeat_rows", &xs, &[n]));
        }
        let row = self.value(x).data();
        let mut y = Vec::with_capacity(n * xs[1]);
        for _ in 0..n {
            y.extend_from_slice(row);
        }
        let value = Tensor::new(vec![n, xs[1]], y)?;
        self.push(Op::RepeatRows { x }, value)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).sum();
        self.push(Op::Sum { x }, Tensor::scalar(s))
    }

    fn check_same(&self, op: &'static str, x: NodeId, t: &Tensor) -> Result<()> {
        if self.shape(x) != t.shape() {
            return Err(shape_err(op, self.shape(x), t.shape()));
        }
        Ok(())
    }

    /// `Σ |x − target| · mask`; `mask` is either `x`-shaped or has a
    /// single channel on axis 1 broadcast over the channels of `x`.
    pub fn masked_l1_sum(&mut self, x: NodeId, target: Tensor, mask: Tensor) -> Result<NodeId> {
        self.check_same("masked_l1", x, &target)?;
        let mi = MaskIndex::new(self.shape(x), &mask)?;
        let xv = self.value(x).data();
        let total: f64 = xv
            .iter()
            .zip(target.data())
            .enumerate()
            .map(|(i, (a, b))| (a - b).abs() * mask.data()[mi.at(i)])
            .sum();
        self.push(Op::MaskedL1 { x, target, mask }, Tensor::scalar(total))
    }

    /// `Σ_{b,pixel} (1 − ⟨x, target⟩_channels) · mask` for `x: B×C×…`
    /// and a single-channel mask `B×1×…`.
    pub fn masked_cosine_sum(&mut self, x: NodeId, target: Tensor, mask: Tensor) -> Result<NodeId> {
        self.check_same("masked_cosine", x, &target)?;
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || mask.shape()[0] != xs[0] || mask.len() * xs[1] != self.value(x).len() {
            return Err(shape_err("masked_cosine", &xs, mask.shape()));
        }
        let (batch, ch) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        let xv = self.value(x).data();
        let tv = target.data();
        let mut total = 0.0;
        for b in 0..batch {
            for r in 0..inner {
                let m = mask.data()[b * inner + r];
                let dot: f64 = (0..ch)
                    .map(|c| {
                        let i = (b * ch + c) * inner + r;
                        xv[i] * tv[i]
                    })
                    .sum();
                total += (1.0 - dot) * m;
            }
        }
        self.push(Op::MaskedCosine { x, target, mask }, Tensor::scalar(total))
    }

    /// Summed binary cross-entropy with `x` clamped to `[clamp, 1 − clamp]`.
    pub fn bce_sum(&mut self, x: NodeId, target: Tensor, clamp: f64) -> Result<NodeId> {
        self.check_same("bce", x, &target)?;
        let total: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let p = p.clamp(clamp, 1.0 - clamp);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        self.push(Op::Bce { x, target, clamp }, Tensor::scalar(total))
    }

    /// `Σ w·(x − label)² / Σ w`.
    pub fn weighted_mse(&mut self, x: NodeId, labels: Tensor, weights: Tensor) -> Result<NodeId> {
        let n = self.value(x).len();
        if labels.len() != n || weights.len() != n {
            return Err(shape_err("weighted_mse", self.shape(x), labels.shape()));
        }
        let wsum: f64 = weights.data().iter().sum();
        if wsum <= 0.0 {
            return Err(NnError::InvalidArgument("weights must have a positive sum".into()));
        }
        let num: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(labels.data())
            .zip(weights.data())
            .map(|((p, l), w)| (p - l) * (p - l) * w)
            .sum();
        self.push(Op::WeightedMse { x, labels, weights }, Tensor::scalar(num / wsum))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, x: NodeId, target: Tensor) -> Result<NodeId> {
        self.check_same("mse", x, &target)?;
        let n = target.len() as f64;
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push(Op::Mse { x, target }, Tensor::scalar(s / n))
    }

    /// `Σ x·weights` against a constant tensor of the same shape.
    pub fn dot(&mut self, x: NodeId, weights: Tensor) -> Result<NodeId> {
        self.check_same("dot", x, &weights)?;
        let s: f64 = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        self.push(Op::Dot { x, weights }, Tensor::scalar(s))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(NnError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(ls, 1.0));
        let mut params = ParamGrads::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !g.all_finite() {
                return Err(NnError::NonFinite(self.nodes[i].op.name()));
            }
            self.backprop_node(i, &g, &mut grads, &mut params)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    /// Backward pass whose parameter gradients land in `store`.
    pub fn backward_into(&self, loss: NodeId, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        store.set_grads(grads.params())?;
        Ok(grads)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        params: &mut ParamGrads,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let gd = g.data();
        let mut acc = |id: NodeId, t: Tensor| match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        };
        let like = |id: NodeId, data: Vec<f64>| Tensor::new(self.shape(id).to_vec(), data);
        match &node.op {
            Op::Leaf => {}
            Op::Param(name) => match params.get_mut(name) {
                Some(existing) => existing.add_assign(g),
                None => {
                    params.insert(name.clone(), g.clone());
                }
            },
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (batch, inp) = (xs[0], xs[1]);
                let out = self.shape(*w)[1];
                let mut dx = vec![0.0; batch * inp];
                gemm(batch, out, inp, gd, out, 1, self.value(*w).data(), 1, out, &mut dx, 0.0);
                let mut dw = vec![0.0; inp * out];
                gemm(inp, batch, out, self.value(*x).data(), 1, inp, gd, out, 1, &mut dw, 0.0);
                acc(*x, like(*x, dx)?);
                acc(*w, like(*w, dw)?);
                if let Some(b) = b {
                    let mut db = vec![0.0; out];
                    for row in gd.chunks(out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, like(*b, db)?);
                }
            }
            Op::Conv { x, w, b, geom } => {
                let rows = geom.col_rows();
                let cols_n = geom.col_cols();
                let in_len = geom.in_ch * geom.in_volume();
                let out_len = geom.out_ch * cols_n;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut cols = vec![0.0; rows * cols_n];
                let mut dcols = vec![0.0; rows * cols_n];
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                for bi in 0..geom.batch {
                    let gy = &gd[bi * out_len..(bi + 1) * out_len];
                    im2col(&xv[bi * in_len..(bi + 1) * in_len], geom, &mut cols);
                    gemm(geom.out_ch, cols_n, rows, gy, cols_n, 1, &cols, 1, cols_n, &mut dw, 1.0);
                    gemm(rows, geom.out_ch, cols_n, wv, 1, rows, gy, cols_n, 1, &mut dcols, 0.0);
                    col2im(&dcols, geom, &mut dx[bi * in_len..(bi + 1) * in_len]);
                }
                acc(*x, like(*x, dx)?);
                acc(*w, like(*w, dw)?);
                if let Some(b) = b {
                    let mut db = vec![0.0; geom.out_ch];
                    for (k, chunk) in gd.chunks(cols_n).enumerate() {
                        db[k % geom.out_ch] += chunk.iter().sum::<f64>();
                    }
                    acc(*b, like(*b, db)?);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let xs = self.shape(*x);
                let (batch, ch) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let count = (batch * inner) as f64;
                let gv = self.value(*gamma).data();
                let mut dgamma = vec![0.0; ch];
                let mut dbeta = vec![0.0; ch];
                for b in 0..batch {
                    for c in 0..ch {
                        let off = (b * ch + c) * inner;
                        for k in off..off + inner {
                            dgamma[c] += gd[k] * xhat[k];
                            dbeta[c] += gd[k];
                        }
                    }
                }
                let mut dx = vec![0.0; gd.len()];
                for b in 0..batch {
                    for c in 0..ch {
                        let off = (b * ch + c) * inner;
                        let scale = gv[c] * inv_std[c];
                        for k in off..off + inner {
                            dx[k] = if *train {
                                scale / count * (count * gd[k] - dbeta[c] - xhat[k] * dgamma[c])
                            } else {
                                scale * gd[k]
                            };
                        }
                    }
                }
                acc(*x, like(*x, dx)?);
                acc(*gamma, like(*gamma, dgamma)?);
                acc(*beta, like(*beta, dbeta)?);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let dx = xv
                    .iter()
                    .zip(gd)
                    .map(|(&v, &d)| if v >= 0.0 { d } else { slope * d })
                    .collect();
                acc(*x, like(*x, dx)?);
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let dx = y.iter().zip(gd).map(|(&s, &d)| d * s * (1.0 - s)).collect();
                acc(*x, like(*x, dx)?);
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let dx = y.iter().zip(gd).map(|(&t, &d)| d * (1.0 - t * t)).collect();
                acc(*x, like(*x, dx)?);
            }
            Op::Scale { x, c } => {
                acc(*x, like(*x, gd.iter().map(|d| d * c).collect())?);
            }
            Op::Upsample { x, factor } => {
                let xs = self.shape(*x);
                let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
                let (oh, ow) = (h * factor, w * factor);
                let mut dx = vec![0.0; planes * h * w];
                for p in 0..planes {
                    for i in 0..oh {
                        for j in 0..ow {
                            dx[(p * h + i / factor) * w + j / factor] += gd[(p * oh + i) * ow + j];
                        }
                    }
                }
                acc(*x, like(*x, dx)?);
            }
            Op::Dropout { x, mask } => {
                acc(*x, like(*x, gd.iter().zip(mask).map(|(d, m)| d * m).collect())?);
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let mut parts: Vec<Vec<f64>> = inputs.iter().map(|id| Vec::with_capacity(self.value(*id).len())).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (k, id) in inputs.iter().enumerate() {
                        let chunk: usize = self.shape(*id)[*axis..].iter().product();
                        parts[k].extend_from_slice(&gd[pos..pos + chunk]);
                        pos += chunk;
                    }
                }
                for (id, part) in inputs.iter().zip(parts) {
                    acc(*id, like(*id, part)?);
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let len = node.value.shape()[*axis];
                let outer: usize = xs[..*axis].iter().product();
                let inner: usize = xs[axis + 1..].iter().product();
                let mut dx = vec![0.0; self.value(*x).len()];
                for o in 0..outer {
                    let base = (o * xs[*axis] + start) * inner;
                    dx[base..base + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*x, like(*x, dx)?);
            }
            Op::L2Normalize { x, norms } => {
                let xs = self.shape(*x);
                let (batch, ch) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let y = node.value.data();
                let mut dx = vec![0.0; y.len()];
                for b in 0..batch {
                    for r in 0..inner {
                        let idx = |c: usize| (b * ch + c) * inner + r;
                        let dot: f64 = (0..ch).map(|c| gd[idx(c)] * y[idx(c)]).sum();
                        let n = norms[b * inner + r];
                        for c in 0..ch {
                            dx[idx(c)] = (gd[idx(c)] - y[idx(c)] * dot) / n;
                        }
                    }
                }
                acc(*x, like(*x, dx)?);
            }
            Op::Add { a, b } => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Reshape { x } => {
                acc(*x, like(*x, gd.to_vec())?);
            }
            Op::RepeatRows { x } => {
                let f = self.shape(*x)[1];
                let mut dx = vec![0.0; f];
                for row in gd.chunks(f) {
                    for (d, v) in dx.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*x, like(*x, dx)?);
            }
            Op::Sum { x } => {
                acc(*x, Tensor::full(self.shape(*x), gd[0]));
            }
            Op::MaskedL1 { x, target, mask } => {
                let mi = MaskIndex::new(self.shape(*x), mask)?;
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(target.data())
                    .enumerate()
                    .map(|(i, (a, b))| {
                        let s = if a > b {
                            1.0
                        } else if a < b {
                            -1.0
                        } else {
                            0.0
                        };
                        gd[0] * s * mask.data()[mi.at(i)]
                    })
                    .collect();
                acc(*x, like(*x, dx)?);
            }
            Op::MaskedCosine { x, target, mask } => {
                let xs = self.shape(*x);
                let (ch, inner) = (xs[1], xs[2..].iter().product::<usize>());
                let dx = target
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let b = i / (ch * inner);
                        let r = i % inner;
                        -gd[0] * t * mask.data()[b * inner + r]
                    })
                    .collect();
                acc(*x, like(*x, dx)?);
            }
            Op::Bce { x, target, clamp } => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| {
                        if p < *clamp || p > 1.0 - clamp {
                            0.0
                        } else {
                            gd[0] * (-t / p + (1.0 - t) / (1.0 - p))
                        }
                    })
                    .collect();
                acc(*x, like(*x, dx)?);
            }
            Op::WeightedMse { x, labels, weights } => {
                let wsum: f64 = weights.data().iter().sum();
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(labels.data())
                    .zip(weights.data())
                    .map(|((p, l), w)| gd[0] * 2.0 * (p - l) * w / wsum)
                    .collect();
                acc(*x, like(*x, dx)?);
            }
            Op::Dot { x, weights } => {
                acc(*x, like(*x, weights.data().iter().map(|w| gd[0] * w).collect())?);
            }
            Op::Mse { x, target } => {
                let n = target.len() as f64;
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| gd[0] * 2.0 * (a - b) / n)
                    .collect();
                acc(*x, like(*x, dx)?);
            }
        }
        Ok(())
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Maps a flat index of `x` to the matching mask element.
struct MaskIndex {
    broadcast: bool,
    ch: usize,
    inner: usize,
}

impl MaskIndex {
    fn new(xs: &[usize], mask: &Tensor) -> Result<Self> {
        let n: usize = xs.iter().product();
        if mask.len() == n {
            return Ok(Self {
                broadcast: false,
                ch: 1,
                inner: 1,
            });
        }
        if xs.len() >= 2 && mask.shape()[0] == xs[0] && mask.len() * xs[1] == n {
            return Ok(Self {
                broadcast: true,
                ch: xs[1],
                inner: xs[2..].iter().product(),
            });
        }
        Err(shape_err("mask", xs, mask.shape()))
    }

    #[inline]
    fn at(&self, i: usize) -> usize {
        if self.broadcast {
            let b = i / (self.ch * self.inner);
            b * self.inner + i % self.inner
        } else {
            i
        }
    }
}
