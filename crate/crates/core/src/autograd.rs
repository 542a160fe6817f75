//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every primitive in execution order, so the tape is
//! topologically sorted by construction. [`Graph::backward`] walks it once
//! in reverse and leaves `dLoss/dLeaf` in the gradient buffer of every
//! leaf created with [`Graph::param`]. Every forward value and every
//! propagated gradient is checked for NaN/Inf; the error names the op.

use crate::error::{Error, Pass, Result};
use crate::kernels::{self, ConvGeometry, MatRef};
use crate::parallel::Execution;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geo: ConvGeometry,
    },
    Reshape(Var),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f32>,
        loss: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddRowBias(..) => "add_row_bias",
            Op::AddChannelBias(..) => "add_channel_bias",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Relu(..) => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::Reshape(..) => "reshape",
            Op::Sum(..) => "sum",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    exec: Execution,
}

impl Graph {
    pub fn new() -> Self {
        Self::with_execution(Execution::default())
    }

    pub fn with_execution(exec: Execution) -> Self {
        Self {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant leaf; no gradient is accumulated for it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value.with_requires_grad(false), Op::Leaf, false)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value.with_requires_grad(true), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    /// Moves a leaf's gradient out as a tensor (zeros if none reached it).
    pub fn take_grad(&mut self, v: Var) -> Tensor {
        let value = &mut self.nodes[v.0].value;
        let shape = value.shape().to_vec();
        let g = value.grad().map(<[f32]>::to_vec);
        value.zero_grad();
        match g {
            Some(g) => Tensor::new(&shape, g).expect("gradient matches its tensor"),
            None => Tensor::zeros(&shape),
        }
    }

    /// The loss value as accumulated in 64 bits, for cross-entropy nodes.
    pub fn loss_f64(&self, v: Var) -> Option<f64> {
        match &self.nodes[v.0].op {
            Op::SoftmaxCrossEntropy { loss, .. } => Some(*loss),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        value.check_finite(op.name(), Pass::Forward)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f32] {
        self.nodes[v.0].value.data()
    }

    /// `[M, K] x [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0f32; m * n];
        kernels::gemm(
            MatRef::new(self.data(a), m, k),
            MatRef::new(self.data(b), k, n),
            0.0,
            &mut out,
        );
        let value = Tensor::new(&[m, n], out)?;
        self.record(value, Op::MatMul(a, b), &[a, b])
    }

    /// `[B, N] + [N]`, broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb != [sx[1]] {
            return Err(Error::dim("add_row_bias", format!("{sx:?} + {sb:?}")));
        }
        let n = sx[1];
        let b = self.data(bias);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
        }
        let value = Tensor::new(self.shape(x), out)?;
        self.record(value, Op::AddRowBias(x, bias), &[x, bias])
    }

    /// `[B, C, H, W] + [C]`, broadcast over samples and pixels.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 4 || sb != [sx[1]] {
            return Err(Error::dim("add_channel_bias", format!("{sx:?} + {sb:?}")));
        }
        let (c, plane) = (sx[1], sx[2] * sx[3]);
        let b = self.data(bias);
        let mut out = self.data(x).to_vec();
        for (j, chunk) in out.chunks_mut(plane).enumerate() {
            let bj = b[j % c];
            chunk.iter_mut().for_each(|v| *v += bj);
        }
        let value = Tensor::new(self.shape(x), out)?;
        self.record(value, Op::AddChannelBias(x, bias), &[x, bias])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a), out)?;
        self.record(value, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product; also how masks gate weights.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a), out)?;
        self.record(value, Op::Mul(a, b), &[a, b])
    }

    /// Which inputs of every recorded ReLU are positive, in recording order.
    /// Two evaluations with equal patterns lie on the same linear piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.data(x).iter().map(|&v| v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(self.shape(x), out)?;
        self.record(value, Op::Relu(x), &[x])
    }

    /// Cross-correlation of `[B, C_in, H, W]` with `[C_out, C_in, k, k]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] || sk[2] != sk[3] {
            return Err(Error::dim("conv2d", format!("input {si:?}, kernel {sk:?}")));
        }
        let geo = ConvGeometry::new([si[0], si[1], si[2], si[3]], sk[0], sk[2], stride, padding).ok_or_else(|| {
            Error::dim(
                "conv2d",
                format!(
                    "non-integral output extent for input {si:?}, kernel {}, stride {stride}, padding {padding}",
                    sk[2]
                ),
            )
        })?;
        let out = kernels::conv2d_forward(self.exec, &geo, self.data(input), self.data(kernel));
        let value = Tensor::new(&[geo.batch, geo.out_channels, geo.out_height, geo.out_width], out)?;
        self.record(value, Op::Conv2d { input, kernel, geo }, &[input, kernel])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[x.0].value.clone().reshape(shape)?;
        self.record(value, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.data(x).iter().map(|&v| f64::from(v)).sum();
        self.record(Tensor::scalar(total as f32), Op::Sum(x), &[x])
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    ///
    /// Uses a max-shifted log-sum-exp with 64-bit accumulation.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits {s:?} with {} labels", labels.len()),
            ));
        }
        let (batch, classes) = (s[0], s[1]);
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input {
                op: "softmax_cross_entropy",
                detail: format!("label {bad} outside [0, {classes})"),
            });
        }
        let data = self.data(logits);
        let mut probs = vec![0.0f32; batch * classes];
        let mut total = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row = &data[i * classes..][..classes];
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
            let denom: f64 = row.iter().map(|&v| (f64::from(v) - max).exp()).sum();
            let log_denom = denom.ln();
            for (p, &v) in probs[i * classes..][..classes].iter_mut().zip(row) {
                *p = ((f64::from(v) - max).exp() / denom) as f32;
            }
            total += max + log_denom - f64::from(row[label]);
        }
        let loss = total / batch as f64;
        let op = Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
            loss,
        };
        self.record(Tensor::scalar(loss as f32), op, &[logits])
    }

    /// Populates `dLoss/dLeaf` for every differentiable leaf reachable from
    /// `loss`. Gradients add into any existing leaf gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.shape().iter().all(|&d| d == 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if !crate::tensor::all_finite(&g) {
                return Err(Error::NonFinite {
                    op: node.op.name(),
                    pass: Pass::Backward,
                });
            }
            let contributions = self.local_grads(i, &g);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.accumulate_grad(&g)?;
                continue;
            }
            for (input, contribution) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient contributions of node `i` to its inputs, given its output
    /// gradient `g`.
    fn local_grads(&self, i: usize, g: &[f32]) -> Vec<(Var, Vec<f32>)> {
        let mut out = Vec::with_capacity(2);
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let gm = MatRef::new(g, m, n);
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(gm, MatRef::new(self.data(*b), k, n).t(), 0.0, &mut ga);
                    out.push((*a, ga));
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(MatRef::new(self.data(*a), m, k).t(), gm, 0.0, &mut gb);
                    out.push((*b, gb));
                }
            }
            Op::AddRowBias(x, bias) => {
                out.push((*x, g.to_vec()));
                if self.wants(*bias) {
                    let n = self.shape(*bias)[0];
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    out.push((*bias, gb));
                }
            }
            Op::AddChannelBias(x, bias) => {
                out.push((*x, g.to_vec()));
                if self.wants(*bias) {
                    let s = self.shape(*x);
                    let (c, plane) = (s[1], s[2] * s[3]);
                    let mut gb = vec![0.0; c];
                    for (j, chunk) in g.chunks(plane).enumerate() {
                        gb[j % c] += chunk.iter().sum::<f32>();
                    }
                    out.push((*bias, gb));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    out.push((*a, g.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect()));
                }
                if self.wants(*b) {
                    out.push((*b, g.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect()));
                }
            }
            Op::Relu(x) => {
                // Subgradient 0 at x == 0.
                let gx = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                out.push((*x, gx));
            }
            Op::Conv2d { input, kernel, geo } => {
                let (gx, gk) = kernels::conv2d_backward(
                    self.exec,
                    geo,
                    self.data(*input),
                    self.data(*kernel),
                    g,
                    self.wants(*input),
                    self.wants(*kernel),
                );
                if let Some(gx) = gx {
                    out.push((*input, gx));
                }
                if let Some(gk) = gk {
                    out.push((*kernel, gk));
                }
            }
            Op::Reshape(x) => out.push((*x, g.to_vec())),
            Op::Sum(x) => out.push((*x, vec![g[0]; self.nodes[x.0].value.len()])),
            Op::SoftmaxCrossEntropy {
                logits, labels, probs, ..
            } => {
                let classes = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f32;
                let mut gl: Vec<f32> = probs.iter().map(|p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    gl[row * classes + label] -= scale;
                }
                out.push((*logits, gl));
            }
        }
        out
    }
}
