//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node whose parents already exist, so node order
//! is a topological order and the backward sweep is a single reverse scan.

use serde::{Deserialize, Serialize};

use super::conv;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Form of the elementwise smooth-l1 penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothL1Variant {
    /// `x^2 / (2m)` inside the margin, `|x| - m/2` outside. C1 at the knee.
    #[default]
    Continuous,
    /// `x^2 / 2` inside the margin, `|x| - 0.5` outside, whatever the
    /// margin. Discontinuous (and possibly negative) unless `m == 1`.
    FixedOffset,
}

impl SmoothL1Variant {
    pub fn value(self, x: f64, margin: f64) -> f64 {
        let a = x.abs();
        match self {
            SmoothL1Variant::Continuous if a < margin => x * x / (2.0 * margin),
            SmoothL1Variant::Continuous => a - 0.5 * margin,
            SmoothL1Variant::FixedOffset if a < margin => 0.5 * x * x,
            SmoothL1Variant::FixedOffset => a - 0.5,
        }
    }

    pub fn derivative(self, x: f64, margin: f64) -> f64 {
        let a = x.abs();
        match self {
            SmoothL1Variant::Continuous if a < margin => x / margin,
            SmoothL1Variant::FixedOffset if a < margin => x,
            _ => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Deliberately wrong backward rules, used as negative controls for the
/// gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// Scales the tanh local derivative by 1.1.
    TanhDerivative,
    /// Scales every convolution weight gradient by 1.1.
    ConvWeightGrad,
}

const FAULT_SCALE: f64 = 1.1;

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        geom: conv::Geometry,
        cols: Vec<f64>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Prelu {
        input: Var,
        slope: Var,
    },
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    AvgPool(Var),
    Reshape(Var),
    SliceRows {
        input: Var,
        start: usize,
    },
    GroupMean {
        input: Var,
        group: usize,
    },
    GroupMax {
        input: Var,
        argmax: Vec<usize>,
    },
    SmoothL1 {
        input: Var,
        margin: f64,
        variant: SmoothL1Variant,
    },
    Sum(Var),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 3] {
        use Op::*;
        match *self {
            Leaf => [None, None, None],
            Conv2d { input, weight, .. } => [Some(input), Some(weight), None],
            Linear {
                input,
                weight,
                bias,
            } => [Some(input), Some(weight), Some(bias)],
            Add(a, b) | Sub(a, b) | Mul(a, b) => [Some(a), Some(b), None],
            Prelu { input, slope } => [Some(input), Some(slope), None],
            Scale(a, _) | Relu(a) | Sigmoid(a) | Tanh(a) | Softmax(a) | LogSoftmax(a)
            | AvgPool(a) | Reshape(a) | Sum(a) => [Some(a), None, None],
            SliceRows { input, .. }
            | GroupMean { input, .. }
            | GroupMax { input, .. }
            | SmoothL1 { input, .. } => [Some(input), None, None],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    fault: Option<BackwardFault>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a corrupted backward rule. Only meant for negative controls.
    pub fn with_fault(fault: Option<BackwardFault>) -> Self {
        Graph {
            fault,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Copies `v` into a new constant leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient left by the last [`Graph::backward`] call. `None` for nodes
    /// that do not require a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = op
            .parents()
            .iter()
            .flatten()
            .any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    // ---- operations ------------------------------------------------------

    /// 2-D convolution with zero padding `k / 2` on each side.
    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::dim(
                "conv2d",
                format!("expected 4-d input and weight, got {xs:?} and {ws:?}"),
            ));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (f, wc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if wc != c {
            return Err(Error::dim(
                "conv2d",
                format!("input has {c} channels, kernel expects {wc}"),
            ));
        }
        if kh != kw || kh > h + 2 * (kh / 2) || kw > w + 2 * (kw / 2) {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {kh}x{kw} does not fit input {h}x{w}"),
            ));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be at least 1"));
        }
        let pad = kh / 2;
        let geom = conv::Geometry::new(c, h, w, kh, stride, pad);
        let per_image_cols = geom.col_rows() * geom.out_pixels();
        let mut cols = vec![0.0; n * per_image_cols];
        let mut out = vec![0.0; n * f * geom.out_pixels()];
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let img = c * h * w;
        for i in 0..n {
            let col = &mut cols[i * per_image_cols..(i + 1) * per_image_cols];
            conv::im2col(&x[i * img..(i + 1) * img], &geom, col);
            let o = &mut out[i * f * geom.out_pixels()..(i + 1) * f * geom.out_pixels()];
            conv::gemm(
                f,
                geom.col_rows(),
                geom.out_pixels(),
                wt,
                (geom.col_rows(), 1),
                col,
                (geom.out_pixels(), 1),
                o,
                0.0,
            );
        }
        let value = Tensor::from_parts(vec![n, f, geom.out_h, geom.out_w], out);
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                weight,
                geom,
                cols,
            },
        )
    }

    /// `input[N,D] * weight[D,M] + bias[M]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        let bs = self.shape(bias);
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || bs[0] != ws[1] {
            return Err(Error::dim(
                "fully_connected",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let (n, d, m) = (xs[0], xs[1], ws[1]);
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(b);
        }
        conv::gemm(
            n,
            d,
            m,
            self.value(input).data(),
            (d, 1),
            self.value(weight).data(),
            (m, 1),
            &mut out,
            1.0,
        );
        let value = Tensor::from_parts(vec![n, m], out);
        self.push(
            "fully_connected",
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
        )
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(name, value, op)
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let va = self.value(a);
        let value = Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|x| f(*x)).collect());
        self.push(name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Parametric ReLU with one learnable slope per channel (axis 1).
    pub fn prelu(&mut self, input: Var, slope: Var) -> Result<Var> {
        let xs = self.shape(input);
        let ss = self.shape(slope);
        if xs.len() < 2 || ss.len() != 1 || ss[0] != xs[1] {
            return Err(Error::dim(
                "prelu",
                format!("input {xs:?} needs one slope per channel, got {ss:?}"),
            ));
        }
        let channels = xs[1];
        let inner: usize = xs[2..].iter().product();
        let x = self.value(input).data();
        let a = self.value(slope).data();
        let data = x
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > 0.0 { v } else { a[(i / inner) % channels] * v })
            .collect();
        let value = Tensor::from_parts(xs.to_vec(), data);
        self.push("prelu", value, Op::Prelu { input, slope })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    fn last_axis(&self, op: &'static str, a: Var) -> Result<usize> {
        self.shape(a)
            .last()
            .copied()
            .ok_or_else(|| Error::dim(op, "scalar has no last axis"))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let d = self.last_axis("softmax", a)?;
        let va = self.value(a);
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(d) {
            softmax_in_place(row);
        }
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push("softmax", value, Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let d = self.last_axis("log_softmax", a)?;
        let va = self.value(a);
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push("log_softmax", value, Op::LogSoftmax(a))
    }

    /// Spatial mean: `[N,C,H,W] -> [N,C]`.
    pub fn avg_pool(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 4 {
            return Err(Error::dim("average_pool", format!("expected 4-d input, got {s:?}")));
        }
        let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
        let data = self
            .value(a)
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        let value = Tensor::from_parts(vec![n, c], data);
        self.push("average_pool", value, Op::AvgPool(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(a))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        let n = s.first().copied().unwrap_or(1);
        let rest = self.value(a).numel() / n;
        self.reshape(a, &[n, rest])
    }

    /// Rows `[start, end)` along the first axis.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_rows(start, end)?;
        self.push("slice_rows", value, Op::SliceRows { input: a, start })
    }

    fn grouped(&self, op: &'static str, a: Var, group: usize) -> Result<(usize, usize)> {
        let s = self.shape(a);
        if s.len() != 2 || group == 0 || s[0] % group != 0 {
            return Err(Error::dim(
                op,
                format!("cannot split {s:?} into groups of {group} rows"),
            ));
        }
        Ok((s[0] / group, s[1]))
    }

    /// Mean over consecutive groups of `group` rows: `[G*g, D] -> [G, D]`.
    pub fn group_mean(&mut self, a: Var, group: usize) -> Result<Var> {
        let (groups, d) = self.grouped("group_mean", a, group)?;
        let x = self.value(a).data();
        let mut out = vec![0.0; groups * d];
        for (r, row) in x.chunks(d).enumerate() {
            let o = &mut out[(r / group) * d..(r / group + 1) * d];
            o.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        let inv = 1.0 / group as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::from_parts(vec![groups, d], out);
        self.push("group_mean", value, Op::GroupMean { input: a, group })
    }

    /// Elementwise max over consecutive groups of `group` rows.
    pub fn group_max(&mut self, a: Var, group: usize) -> Result<Var> {
        let (groups, d) = self.grouped("group_max", a, group)?;
        let x = self.value(a).data();
        let mut out = vec![f64::NEG_INFINITY; groups * d];
        let mut argmax = vec![0usize; groups * d];
        for r in 0..groups * group {
            let gi = r / group;
            for j in 0..d {
                let v = x[r * d + j];
                // strict comparison keeps the first maximal row
                if v > out[gi * d + j] {
                    out[gi * d + j] = v;
                    argmax[gi * d + j] = r;
                }
            }
        }
        let value = Tensor::from_parts(vec![groups, d], out);
        self.push("group_max", value, Op::GroupMax { input: a, argmax })
    }

    pub fn smooth_l1(&mut self, a: Var, margin: f64, variant: SmoothL1Variant) -> Result<Var> {
        if !(margin > 0.0) {
            return Err(Error::Contract(format!("smooth-l1 margin must be positive, got {margin}")));
        }
        self.map(
            "smooth_l1",
            a,
            |x| variant.value(x, margin),
            Op::SmoothL1 {
                input: a,
                margin,
                variant,
            },
        )
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    // ---- backward --------------------------------------------------------

    /// Fills gradients of `loss` with respect to every node upstream of it.
    ///
    /// Leaves that require a gradient but do not influence `loss` receive an
    /// all-zero gradient. Previous gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut needed = vec![false; n];
        needed[loss.0] = true;
        for i in (0..=loss.0).rev() {
            if needed[i] && self.nodes[i].requires_grad {
                for p in self.nodes[i].op.parents().iter().flatten() {
                    needed[p.0] = true;
                }
            }
        }
        self.grads = (0..n).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && (needed[i] || matches!(node.op, Op::Leaf)) {
                self.grads[i] = Some(vec![0.0; node.value.numel()]);
            }
        }
        if let Some(g) = self.grads[loss.0].as_mut() {
            g[0] = 1.0;
        }
        for i in (0..=loss.0).rev() {
            if !needed[i] || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(dy) = self.grads[i].take() else {
                continue;
            };
            self.backward_node(i, &dy);
            self.grads[i] = Some(dy);
        }
        for g in self.grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("backward".into()));
            }
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, dy: &[f64]) {
        let fault = self.fault;
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let y = node.value.data();
        let val = |v: Var| nodes[v.0].value.data();
        // Accumulates into the gradient buffer of a parent, if it wants one.
        macro_rules! acc {
            ($v:expr, |$g:ident| $body:block) => {
                if let Some($g) = grads[$v.0].as_mut() {
                    let $g: &mut [f64] = $g.as_mut_slice();
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                geom,
                cols,
                ..
            } => {
                let n = nodes[input.0].value.shape()[0];
                let f = nodes[weight.0].value.shape()[0];
                let (cr, op) = (geom.col_rows(), geom.out_pixels());
                let wscale = if fault == Some(BackwardFault::ConvWeightGrad) {
                    FAULT_SCALE
                } else {
                    1.0
                };
                acc!(weight, |gw| {
                    if wscale != 1.0 {
                        let mut tmp = vec![0.0; gw.len()];
                        for b in 0..n {
                            conv::gemm(
                                f,
                                op,
                                cr,
                                &dy[b * f * op..(b + 1) * f * op],
                                (op, 1),
                                &cols[b * cr * op..(b + 1) * cr * op],
                                (1, op),
                                &mut tmp,
                                1.0,
                            );
                        }
                        gw.iter_mut().zip(tmp).for_each(|(g, t)| *g += wscale * t);
                    } else {
                        for b in 0..n {
                            conv::gemm(
                                f,
                                op,
                                cr,
                                &dy[b * f * op..(b + 1) * f * op],
                                (op, 1),
                                &cols[b * cr * op..(b + 1) * cr * op],
                                (1, op),
                                gw,
                                1.0,
                            );
                        }
                    }
                });
                let wt = val(*weight);
                acc!(input, |gx| {
                    let img = geom.channels * geom.in_h * geom.in_w;
                    let mut dcol = vec![0.0; cr * op];
                    for b in 0..n {
                        conv::gemm(
                            cr,
                            f,
                            op,
                            wt,
                            (1, cr),
                            &dy[b * f * op..(b + 1) * f * op],
                            (op, 1),
                            &mut dcol,
                            0.0,
                        );
                        conv::col2im_add(&dcol, geom, &mut gx[b * img..(b + 1) * img]);
                    }
                });
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = nodes[input.0].value.shape();
                let (n, d) = (xs[0], xs[1]);
                let m = nodes[weight.0].value.shape()[1];
                let (x, w) = (val(*input), val(*weight));
                acc!(input, |gx| {
                    conv::gemm(n, m, d, dy, (m, 1), w, (1, m), gx, 1.0);
                });
                acc!(weight, |gw| {
                    conv::gemm(d, n, m, x, (1, d), dy, (m, 1), gw, 1.0);
                });
                acc!(bias, |gb| {
                    for row in dy.chunks(m) {
                        gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
                    }
                });
            }
            Op::Add(a, b) => {
                acc!(a, |ga| { add_into(ga, dy) });
                acc!(b, |gb| { add_into(gb, dy) });
            }
            Op::Sub(a, b) => {
                acc!(a, |ga| { add_into(ga, dy) });
                acc!(b, |gb| {
                    gb.iter_mut().zip(dy).for_each(|(g, d)| *g -= d);
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc!(a, |ga| {
                    for ((g, d), w) in ga.iter_mut().zip(dy).zip(vb) {
                        *g += d * w;
                    }
                });
                acc!(b, |gb| {
                    for ((g, d), w) in gb.iter_mut().zip(dy).zip(va) {
                        *g += d * w;
                    }
                });
            }
            Op::Scale(a, c) => acc!(a, |ga| {
                ga.iter_mut().zip(dy).for_each(|(g, d)| *g += c * d);
            }),
            Op::Relu(a) => {
                let x = val(*a);
                acc!(a, |ga| {
                    for ((g, d), v) in ga.iter_mut().zip(dy).zip(x) {
                        if *v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Op::Prelu { input, slope } => {
                let xs = nodes[input.0].value.shape();
                let channels = xs[1];
                let inner: usize = xs[2..].iter().product();
                let x = val(*input);
                let a = val(*slope);
                acc!(input, |gx| {
                    for (k, (g, d)) in gx.iter_mut().zip(dy).enumerate() {
                        *g += if x[k] > 0.0 { *d } else { a[(k / inner) % channels] * d };
                    }
                });
                acc!(slope, |gs| {
                    for (k, d) in dy.iter().enumerate() {
                        if x[k] <= 0.0 {
                            gs[(k / inner) % channels] += d * x[k];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc!(a, |ga| {
                for ((g, d), s) in ga.iter_mut().zip(dy).zip(y) {
                    *g += d * s * (1.0 - s);
                }
            }),
            Op::Tanh(a) => {
                let scale = if fault == Some(BackwardFault::TanhDerivative) {
                    FAULT_SCALE
                } else {
                    1.0
                };
                acc!(a, |ga| {
                    for ((g, d), t) in ga.iter_mut().zip(dy).zip(y) {
                        *g += scale * d * (1.0 - t * t);
                    }
                });
            }
            Op::Softmax(a) => {
                let d = *node.value.shape().last().unwrap();
                acc!(a, |ga| {
                    for ((g, dr), yr) in ga.chunks_mut(d).zip(dy.chunks(d)).zip(y.chunks(d)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            g[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let d = *node.value.shape().last().unwrap();
                acc!(a, |ga| {
                    for ((g, dr), yr) in ga.chunks_mut(d).zip(dy.chunks(d)).zip(y.chunks(d)) {
                        let total: f64 = dr.iter().sum();
                        for j in 0..d {
                            g[j] += dr[j] - yr[j].exp() * total;
                        }
                    }
                });
            }
            Op::AvgPool(a) => {
                let s = nodes[a.0].value.shape();
                let plane = s[2] * s[3];
                let inv = 1.0 / plane as f64;
                acc!(a, |ga| {
                    for (gp, d) in ga.chunks_mut(plane).zip(dy) {
                        gp.iter_mut().for_each(|g| *g += d * inv);
                    }
                });
            }
            Op::Reshape(a) => acc!(a, |ga| { add_into(ga, dy) }),
            Op::SliceRows { input, start } => {
                let r = nodes[input.0].value.row_len();
                acc!(input, |gx| {
                    add_into(&mut gx[start * r..start * r + dy.len()], dy);
                });
            }
            Op::GroupMean { input, group } => {
                let d = node.value.shape()[1];
                let inv = 1.0 / *group as f64;
                acc!(input, |gx| {
                    for (r, row) in gx.chunks_mut(d).enumerate() {
                        let src = &dy[(r / group) * d..(r / group + 1) * d];
                        row.iter_mut().zip(src).for_each(|(g, v)| *g += v * inv);
                    }
                });
            }
            Op::GroupMax { input, argmax } => {
                let d = node.value.shape()[1];
                acc!(input, |gx| {
                    for (k, (&r, dv)) in argmax.iter().zip(dy).enumerate() {
                        gx[r * d + k % d] += dv;
                    }
                });
            }
            Op::SmoothL1 {
                input,
                margin,
                variant,
            } => {
                let x = val(*input);
                acc!(input, |gx| {
                    for ((g, d), v) in gx.iter_mut().zip(dy).zip(x) {
                        *g += d * variant.derivative(*v, *margin);
                    }
                });
            }
            Op::Sum(a) => {
                let d = dy[0];
                acc!(a, |ga| { ga.iter_mut().for_each(|g| *g += d) });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
