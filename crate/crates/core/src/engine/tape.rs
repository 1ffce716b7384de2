use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    MaxPool,
    Unpool,
    Add,
    Sub,
    Mul,
    Div,
    MulBroadcast,
    Scale,
    AddScalar,
    Relu,
    Sigmoid,
    Tanh,
    Sum,
    Mean,
    Reshape,
    Gather,
    ScatterAdd,
    Concat,
    Narrow,
    Dropout,
}

const OP_NAMES: &[(OpKind, &str)] = &[
    (OpKind::Leaf, "leaf"),
    (OpKind::Conv2d, "conv2d"),
    (OpKind::MaxPool, "maxpool"),
    (OpKind::Unpool, "unpool"),
    (OpKind::Add, "add"),
    (OpKind::Sub, "sub"),
    (OpKind::Mul, "mul"),
    (OpKind::Div, "div"),
    (OpKind::MulBroadcast, "mul_broadcast"),
    (OpKind::Scale, "scale"),
    (OpKind::AddScalar, "add_scalar"),
    (OpKind::Relu, "relu"),
    (OpKind::Sigmoid, "sigmoid"),
    (OpKind::Tanh, "tanh"),
    (OpKind::Sum, "sum"),
    (OpKind::Mean, "mean"),
    (OpKind::Reshape, "reshape"),
    (OpKind::Gather, "gather"),
    (OpKind::ScatterAdd, "scatter_add"),
    (OpKind::Concat, "concat"),
    (OpKind::Narrow, "narrow"),
    (OpKind::Dropout, "dropout"),
];

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = OP_NAMES.iter().find(|(k, _)| k == self).map(|(_, n)| *n);
        f.write_str(name.unwrap_or("?"))
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OP_NAMES
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::config(format!("unknown op kind `{s}`")))
    }
}

/// Deliberate corruption of one op kind's backward rule: every gradient it
/// propagates to its inputs is multiplied by `factor`. Used to prove that the
/// gradient checker catches broken derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardFault {
    pub op: OpKind,
    pub factor: f64,
}

/// Argmax positions recorded by a 2×2 max-pool, consumed by the matching unpool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexMap {
    input_shape: [usize; 4],
    indices: Vec<usize>,
}

impl IndexMap {
    pub fn new(input_shape: [usize; 4], indices: Vec<usize>) -> Self {
        Self {
            input_shape,
            indices,
        }
    }

    /// Shape of the tensor that was pooled.
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Flat index into the pooled input, one per output cell.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn validate(&self) -> Result<()> {
        let [n, c, h, w] = self.input_shape;
        let (oh, ow) = (h / 2, w / 2);
        if self.indices.len() != n * c * oh * ow {
            return Err(Error::Corruption(format!(
                "index map holds {} entries for pooled shape {:?}",
                self.indices.len(),
                [n, c, oh, ow]
            )));
        }
        for (o, &i) in self.indices.iter().enumerate() {
            let (plane, rest) = (o / (oh * ow), o % (oh * ow));
            let (oy, ox) = (rest / ow, rest % ow);
            let ok = i / (h * w) == plane && {
                let r = i % (h * w);
                r / w / 2 == oy && r % w / 2 == ox
            };
            if !ok {
                return Err(Error::Corruption(format!(
                    "pool index {i} at output cell {o} lies outside its 2x2 window"
                )));
            }
        }
        Ok(())
    }
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    MaxPool { x: Var, indices: Vec<usize> },
    Unpool { x: Var, indices: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MulBroadcast { x: Var, w: Var },
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Gather { x: Var, index: Vec<usize> },
    ScatterAdd { x: Var, index: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Narrow {
        x: Var,
        outer: usize,
        extent: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Dropout { x: Var, mask: Vec<f64> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Unpool { .. } => OpKind::Unpool,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::MulBroadcast { .. } => OpKind::MulBroadcast,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Gather { .. } => OpKind::Gather,
            Op::ScatterAdd { .. } => OpKind::ScatterAdd,
            Op::Concat { .. } => OpKind::Concat,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::Dropout { .. } => OpKind::Dropout,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Wengert list recording a forward computation for reverse-mode
/// differentiation.
///
/// Nodes are appended in evaluation order, so the tape is acyclic and its index
/// order is a topological order. Leaves created from tensors that require a
/// gradient accumulate `dLoss/dLeaf` into their own gradient buffer on every
/// [`Tape::backward`] call; calling backward twice without resetting doubles
/// those gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<BackwardFault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Option<BackwardFault>) -> Self {
        Self {
            nodes: Vec::new(),
            fault,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf. It participates in differentiation iff `t` requires a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let ng = t.requires_grad();
        self.push(t, Op::Leaf, ng)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.node(v).value.data()
    }

    /// Accumulated gradient of a leaf that requires one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).value.grad()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xt = &self.node(x).value;
        let out = Tensor::from_parts(xt.shape().to_vec(), xt.data().iter().map(|&v| f(v)).collect());
        let ng = self.ng(x);
        self.push(out, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (at, bt) = (&self.node(a).value, &self.node(b).value);
        if at.shape() != bt.shape() {
            return Err(Error::dim(format!(
                "{} operands have shapes {:?} and {:?}",
                op.kind(),
                at.shape(),
                bt.shape()
            )));
        }
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(at.shape().to_vec(), data);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Hadamard product of `x` with `w`, where `w` matches the trailing
    /// dimensions of `x` and is broadcast over the leading ones.
    pub fn mul_broadcast(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xt, wt) = (&self.node(x).value, &self.node(w).value);
        let (xs, ws) = (xt.shape(), wt.shape());
        if ws.len() > xs.len() || xs[xs.len() - ws.len()..] != *ws {
            return Err(Error::dim(format!(
                "cannot broadcast {ws:?} against {xs:?}"
            )));
        }
        let wd = wt.data();
        let data = xt
            .data()
            .chunks(wd.len())
            .flat_map(|c| c.iter().zip(wd).map(|(a, b)| a * b))
            .collect();
        let out = Tensor::from_parts(xs.to_vec(), data);
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(out, Op::MulBroadcast { x, w }, ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.node(x).value.data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.node(x).value.data();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.node(x).value.detached().reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    /// `out[i] = x[index[i]]` over flat storage, with output shape `shape`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let xd = self.node(x).value.data();
        if shape.iter().product::<usize>() != index.len() {
            return Err(Error::dim("gather index length does not match output shape"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= xd.len()) {
            return Err(Error::dim(format!("gather index {bad} out of range {}", xd.len())));
        }
        let data = index.iter().map(|&i| xd[i]).collect();
        let ng = self.ng(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Gather { x, index }, ng))
    }

    /// `out[index[i]] += x[i]` into a zero tensor of shape `shape`.
    pub fn scatter_add(&mut self, x: Var, index: Vec<usize>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let xd = self.node(x).value.data();
        if xd.len() != index.len() {
            return Err(Error::dim("scatter index length does not match input"));
        }
        let mut out = vec![0.0; n];
        for (&i, &v) in index.iter().zip(xd) {
            if i >= n {
                return Err(Error::dim(format!("scatter index {i} out of range {n}")));
            }
            out[i] += v;
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::ScatterAdd { x, index }, ng))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .node(*parts.first().ok_or_else(|| Error::dim("concat of nothing"))?)
            .value
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::dim(format!("concat axis {axis} for rank {}", first.len())));
        }
        let outer: usize = first[..axis].iter().product();
        let mut extent = 0;
        for &p in parts {
            let s = self.node(p).value.shape();
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::dim(format!("concat shapes {first:?} and {s:?}")));
            }
            extent += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = extent;
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let d = self.node(p).value.data();
                let chunk = d.len() / outer;
                data.extend_from_slice(&d[o * chunk..(o + 1) * chunk]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.node(x).value.shape().to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::dim(format!(
                "narrow [{start}, {}) on axis {axis} of {s:?}",
                start + len
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let extent = s[axis];
        let xd = self.node(x).value.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            data.extend_from_slice(&xd[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Narrow {
                x,
                outer,
                extent,
                inner,
                start,
                len,
            },
            ng,
        ))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. A zero rate records nothing.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.node(x).value.numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let xt = &self.node(x).value;
        let data = xt.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::from_parts(xt.shape().to_vec(), data);
        let ng = self.ng(x);
        Ok(self.push(out, Op::Dropout { x, mask }, ng))
    }

    /// 2-D cross-correlation (no kernel flip), stride 1, zero padding `pad` on
    /// every side.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, pad: usize) -> Result<Var> {
        let xt = &self.node(x).value;
        let wt = &self.node(w).value;
        let (xs, ws) = (xt.shape(), wt.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::dim(format!(
                "conv2d input {xs:?} incompatible with kernel {ws:?}"
            )));
        }
        if let Some(b) = b {
            if self.node(b).value.shape() != [ws[0]] {
                return Err(Error::dim(format!(
                    "conv2d bias {:?} for {} output channels",
                    self.node(b).value.shape(),
                    ws[0]
                )));
            }
        }
        let (h, wd) = (xs[2] + 2 * pad, xs[3] + 2 * pad);
        if ws[2] > h || ws[3] > wd {
            return Err(Error::dim(format!("kernel {ws:?} larger than padded input {xs:?}")));
        }
        xt.check_finite("conv2d input")?;
        let geom = ConvGeom {
            n: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            pad,
            oh: h - ws[2] + 1,
            ow: wd - ws[3] + 1,
        };
        let bias = b.map(|b| self.node(b).value.data());
        let (y, cols) = kernels::conv2d_forward(xt.data(), wt.data(), bias, &geom);
        let out = Tensor::from_parts(vec![geom.n, geom.cout, geom.oh, geom.ow], y);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::Conv2d { x, w, b, geom, cols }, ng))
    }

    /// 2×2 max-pool with stride 2, returning the argmax map for unpooling.
    pub fn maxpool2x2(&mut self, x: Var) -> Result<(Var, IndexMap)> {
        let xt = &self.node(x).value;
        let s = xt.shape();
        if s.len() != 4 || !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
            return Err(Error::dim(format!("max-pool needs even spatial extents, got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (vals, indices) = kernels::maxpool2x2(xt.data(), n, c, h, w);
        let map = IndexMap::new([n, c, h, w], indices.clone());
        let out = Tensor::from_parts(vec![n, c, h / 2, w / 2], vals);
        let ng = self.ng(x);
        Ok((self.push(out, Op::MaxPool { x, indices }, ng), map))
    }

    /// Scatters `x` to the positions recorded in `map`, zeros elsewhere.
    pub fn max_unpool2x2(&mut self, x: Var, map: &IndexMap) -> Result<Var> {
        let xt = &self.node(x).value;
        let [n, c, h, w] = map.input_shape;
        if xt.shape() != [n, c, h / 2, w / 2] {
            return Err(Error::dim(format!(
                "unpool input {:?} does not match pool of {:?}",
                xt.shape(),
                map.input_shape
            )));
        }
        map.validate()?;
        let mut out = vec![0.0; n * c * h * w];
        for (&i, &v) in map.indices.iter().zip(xt.data()) {
            out[i] = v;
        }
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::from_parts(vec![n, c, h, w], out),
            Op::Unpool {
                x,
                indices: map.indices.clone(),
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Leaves that require a gradient have
    /// `dloss/dleaf` added to their gradient buffer.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = &self.node(loss).value;
        if lt.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        if !self.ng(loss) {
            return Err(Error::Contract(
                "loss does not depend on any tensor that requires a gradient".into(),
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                if let Some(buf) = self.nodes[id].value.grad_mut() {
                    buf.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                continue;
            }
            self.backward_node(id, &g, &mut adj);
        }
        Ok(())
    }

    fn backward_node(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let factor = match self.fault {
            Some(f) if f.op == node.op.kind() => Some(f.factor),
            _ => None,
        };
        let mut send = |v: Var, mut grad: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            if let Some(f) = factor {
                grad.iter_mut().for_each(|x| *x *= f);
            }
            match &mut adj[v.0] {
                Some(buf) => buf.iter_mut().zip(&grad).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(grad),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::Conv2d { x, w, b, geom, cols } => {
                let need = (self.ng(*x), self.ng(*w), b.is_some_and(|b| self.ng(b)));
                let grads = kernels::conv2d_backward(cols, val(*w), g, geom, need);
                if let Some(dx) = grads.dx {
                    send(*x, dx);
                }
                if let Some(dw) = grads.dw {
                    send(*w, dw);
                }
                if let (Some(b), Some(db)) = (b, grads.db) {
                    send(*b, db);
                }
            }
            Op::MaxPool { x, indices } => {
                let mut dx = vec![0.0; val(*x).len()];
                for (&i, &gv) in indices.iter().zip(g) {
                    dx[i] += gv;
                }
                send(*x, dx);
            }
            Op::Unpool { x, indices } => {
                send(*x, indices.iter().map(|&i| g[i]).collect());
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                send(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                send(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                send(*a, g.iter().zip(bv).map(|(g, b)| g / b).collect());
                send(
                    *b,
                    g.iter()
                        .zip(av.iter().zip(bv))
                        .map(|(g, (a, b))| -g * a / (b * b))
                        .collect(),
                );
            }
            Op::MulBroadcast { x, w } => {
                let (xv, wv) = (val(*x), val(*w));
                let m = wv.len();
                send(
                    *x,
                    g.chunks(m)
                        .flat_map(|c| c.iter().zip(wv).map(|(g, w)| g * w))
                        .collect(),
                );
                let mut dw = vec![0.0; m];
                for (gc, xc) in g.chunks(m).zip(xv.chunks(m)) {
                    for ((d, g), x) in dw.iter_mut().zip(gc).zip(xc) {
                        *d += g * x;
                    }
                }
                send(*w, dw);
            }
            Op::Scale(x, c) => send(*x, g.iter().map(|v| v * c).collect()),
            Op::AddScalar(x) | Op::Reshape(x) => send(*x, g.to_vec()),
            Op::Relu(x) => send(
                *x,
                g.iter().zip(y).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect(),
            ),
            Op::Sigmoid(x) => send(*x, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Tanh(x) => send(*x, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Sum(x) => send(*x, vec![g[0]; val(*x).len()]),
            Op::Mean(x) => {
                let n = val(*x).len();
                send(*x, vec![g[0] / n as f64; n]);
            }
            Op::Gather { x, index } => {
                let mut dx = vec![0.0; val(*x).len()];
                for (&i, &gv) in index.iter().zip(g) {
                    dx[i] += gv;
                }
                send(*x, dx);
            }
            Op::ScatterAdd { x, index } => send(*x, index.iter().map(|&i| g[i]).collect()),
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let row = g.len() / outer;
                let mut offset = 0;
                for &p in parts {
                    let chunk = val(p).len() / outer;
                    let mut dp = Vec::with_capacity(chunk * outer);
                    for o in 0..outer {
                        dp.extend_from_slice(&g[o * row + offset..o * row + offset + chunk]);
                    }
                    offset += chunk;
                    send(p, dp);
                }
            }
            Op::Narrow {
                x,
                outer,
                extent,
                inner,
                start,
                len,
            } => {
                let mut dx = vec![0.0; outer * extent * inner];
                let chunk = len * inner;
                for o in 0..*outer {
                    let base = o * extent * inner + start * inner;
                    dx[base..base + chunk].copy_from_slice(&g[o * chunk..(o + 1) * chunk]);
                }
                send(*x, dx);
            }
            Op::Dropout { x, mask } => send(*x, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
