use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::signal::{self, DftBasis, StftConfig};

use super::Tensor;

/// Smoothing term inside the L2 norm's square root.
pub const L2_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Input,
    Param,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf {
        kind: LeafKind,
    },
    Const(Tensor<T>),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, T),
    BiasAdd {
        input: NodeId,
        bias: NodeId,
        axis: usize,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Conv1d {
        input: NodeId,
        weight: NodeId,
        stride: usize,
        padding: usize,
    },
    Upsample {
        input: NodeId,
        factor: usize,
    },
    Frame {
        input: NodeId,
        cfg: StftConfig,
    },
    DftMagnitude {
        input: NodeId,
        basis: Arc<DftBasis<T>>,
    },
    Magnitude {
        re: NodeId,
        im: NodeId,
    },
    OverlapAdd {
        input: NodeId,
        basis: Arc<DftBasis<T>>,
        inv_norm: Arc<Vec<T>>,
    },
    Mse(NodeId, NodeId),
    L2Norm(NodeId),
    Sum(NodeId),
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Slice {
        input: NodeId,
        axis: usize,
        start: usize,
        end: usize,
    },
    Reshape(NodeId),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf { .. } | Const(_) => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Mse(a, b) => vec![*a, *b],
            ScalarMul(a, _) | Sigmoid(a) | Tanh(a) | Relu(a) | L2Norm(a) | Sum(a) | Reshape(a) => {
                vec![*a]
            }
            BiasAdd { input, bias, .. } => vec![*input, *bias],
            Conv1d { input, weight, .. } => vec![*input, *weight],
            Magnitude { re, im } => vec![*re, *im],
            Upsample { input, .. }
            | Frame { input, .. }
            | DftMagnitude { input, .. }
            | OverlapAdd { input, .. }
            | Slice { input, .. } => vec![*input],
            Concat { inputs, .. } => inputs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
}

/// Incrementally constructs a [`Graph`]; every method checks shapes eagerly.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder<T> {
    nodes: Vec<Node<T>>,
    leaves: BTreeMap<String, NodeId>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaves: BTreeMap::new(),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn check_id(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("node {} does not exist", id.0)));
        }
        Ok(())
    }

    fn leaf(&mut self, name: &str, shape: &[usize], kind: LeafKind) -> Result<NodeId> {
        if self.leaves.contains_key(name) {
            return Err(Error::Contract(format!("duplicate leaf name `{name}`")));
        }
        let id = self.push(
            Op::Leaf { kind },
            shape.to_vec(),
        );
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.leaf(name, shape, LeafKind::Input)
    }

    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.leaf(name, shape, LeafKind::Param)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Const(t), shape)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Vec<usize>> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa.to_vec())
    }

    fn matrix_dims(&self, id: NodeId, what: &str) -> Result<(usize, usize)> {
        self.check_id(id)?;
        match *self.shape(id) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Shape(format!("{what}: expected a matrix, got {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, n) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul: [{m}, {k}] · [{k2}, {n}]")));
        }
        Ok(self.push(Op::MatMul(a, b), vec![m, n]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "sub")?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        self.check_id(a)?;
        let s = self.shape(a).to_vec();
        Ok(self.push(Op::ScalarMul(a, c), s))
    }

    /// Adds a vector along `axis` of a matrix: axis 1 adds `bias[c]` to every
    /// row, axis 0 adds `bias[r]` to every column.
    pub fn bias_add(&mut self, input: NodeId, bias: NodeId, axis: usize) -> Result<NodeId> {
        let (r, c) = self.matrix_dims(input, "bias_add input")?;
        self.check_id(bias)?;
        let want = match axis {
            0 => r,
            1 => c,
            _ => return Err(Error::Shape(format!("bias_add: bad axis {axis}"))),
        };
        if self.shape(bias) != [want] {
            return Err(Error::Shape(format!(
                "bias_add: bias {:?} for axis {axis} of [{r}, {c}]",
                self.shape(bias)
            )));
        }
        Ok(self.push(Op::BiasAdd { input, bias, axis }, vec![r, c]))
    }

    fn unary(&mut self, a: NodeId, op: Op<T>) -> Result<NodeId> {
        self.check_id(a)?;
        let s = self.shape(a).to_vec();
        Ok(self.push(op, s))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Relu(a))
    }

    /// `input [c_in × len]`, `weight [c_out × c_in × k]`, zero padding on both sides.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (cin, len) = self.matrix_dims(input, "conv1d input")?;
        self.check_id(weight)?;
        let [cout, wcin, k] = *self.shape(weight) else {
            return Err(Error::Shape(format!(
                "conv1d weight must be [c_out, c_in, k], got {:?}",
                self.shape(weight)
            )));
        };
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv1d: weight expects {wcin} input channels, input has {cin}"
            )));
        }
        if stride == 0 || len + 2 * padding < k {
            return Err(Error::Shape(format!(
                "conv1d: stride {stride}, kernel {k}, padded length {}",
                len + 2 * padding
            )));
        }
        let lout = (len + 2 * padding - k) / stride + 1;
        Ok(self.push(
            Op::Conv1d {
                input,
                weight,
                stride,
                padding,
            },
            vec![cout, lout],
        ))
    }

    /// Nearest-neighbour upsampling along the last axis of a matrix.
    pub fn upsample(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        let (c, len) = self.matrix_dims(input, "upsample")?;
        if factor == 0 {
            return Err(Error::Shape("upsample factor must be positive".into()));
        }
        Ok(self.push(Op::Upsample { input, factor }, vec![c, len * factor]))
    }

    /// Splits a signal `[n]` into `[frames × frame_len]` with the STFT padding rule.
    pub fn frame(&mut self, input: NodeId, cfg: StftConfig) -> Result<NodeId> {
        self.check_id(input)?;
        cfg.validate()?;
        let [n] = *self.shape(input) else {
            return Err(Error::Shape(format!("frame: expected a vector, got {:?}", self.shape(input))));
        };
        if n < cfg.frame_len {
            return Err(Error::Size(format!(
                "frame: {n} samples shorter than one frame ({})",
                cfg.frame_len
            )));
        }
        Ok(self.push(Op::Frame { input, cfg }, vec![cfg.num_frames(n), cfg.frame_len]))
    }

    /// Smoothed DFT magnitude of framed data, `[frames × bins]`.
    pub fn dft_magnitude(&mut self, input: NodeId, basis: Arc<DftBasis<T>>) -> Result<NodeId> {
        let (f, l) = self.matrix_dims(input, "dft_magnitude")?;
        if l != basis.cfg.frame_len {
            return Err(Error::Shape(format!(
                "dft_magnitude: frame length {l} vs basis {}",
                basis.cfg.frame_len
            )));
        }
        let k = basis.cfg.bins();
        Ok(self.push(Op::DftMagnitude { input, basis }, vec![f, k]))
    }

    /// `sqrt(re² + im² + ε)` elementwise.
    pub fn magnitude(&mut self, re: NodeId, im: NodeId) -> Result<NodeId> {
        let s = self.same_shape(re, im, "magnitude")?;
        Ok(self.push(Op::Magnitude { re, im }, s))
    }

    /// Weighted overlap-add of `[frames × frame_len]` back to `len` samples.
    pub fn overlap_add(
        &mut self,
        input: NodeId,
        basis: Arc<DftBasis<T>>,
        len: usize,
    ) -> Result<NodeId> {
        let (f, l) = self.matrix_dims(input, "overlap_add")?;
        let cfg = basis.cfg;
        if l != cfg.frame_len || f != cfg.num_frames(len) {
            return Err(Error::Shape(format!(
                "overlap_add: [{f}, {l}] frames cannot produce {len} samples"
            )));
        }
        let inv_norm = Arc::new(signal::overlap_norm(&basis.window, &cfg, len));
        Ok(self.push(
            Op::OverlapAdd {
                input,
                basis,
                inv_norm,
            },
            vec![len],
        ))
    }

    /// Mean squared error.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mse")?;
        Ok(self.push(Op::Mse(a, b), vec![]))
    }

    /// `sqrt(Σ a² + 1e-12)`.
    pub fn l2_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id(a)?;
        Ok(self.push(Op::L2Norm(a), vec![]))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id(a)?;
        Ok(self.push(Op::Sum(a), vec![]))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        self.check_id(first)?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Shape(format!("concat axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &id in inputs {
            self.check_id(id)?;
            let s = self.shape(id);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::Shape(format!("concat: {s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            shape,
        ))
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        self.check_id(input)?;
        let mut shape = self.shape(input).to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(Error::Shape(format!(
                "slice {start}..{end} on axis {axis} of {shape:?}"
            )));
        }
        shape[axis] = end - start;
        Ok(self.push(
            Op::Slice {
                input,
                axis,
                start,
                end,
            },
            shape,
        ))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check_id(input)?;
        if numel(shape) != numel(self.shape(input)) {
            return Err(Error::Shape(format!(
                "reshape {:?} to {shape:?}",
                self.shape(input)
            )));
        }
        Ok(self.push(Op::Reshape(input), shape.to_vec()))
    }

    pub fn finish(self, root: NodeId) -> Result<Graph<T>> {
        self.check_id(root)?;
        Ok(Graph {
            nodes: self.nodes,
            leaves: self.leaves,
            root,
        })
    }
}

/// Leaf values for one evaluation.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a, T> {
    map: HashMap<NodeId, &'a Tensor<T>>,
}

impl<'a, T> Bindings<'a, T> {
    pub fn new() -> Self {
        Self {
            map: HashMap::new(),
        }
    }

    pub fn bind(&mut self, leaf: NodeId, value: &'a Tensor<T>) -> &mut Self {
        self.map.insert(leaf, value);
        self
    }

    pub fn with(mut self, leaf: NodeId, value: &'a Tensor<T>) -> Self {
        self.map.insert(leaf, value);
        self
    }

    pub fn get(&self, leaf: NodeId) -> Option<&'a Tensor<T>> {
        self.map.get(&leaf).copied()
    }

    /// Copy of these bindings with one leaf replaced.
    pub fn overriding<'b>(&self, leaf: NodeId, value: &'b Tensor<T>) -> Bindings<'b, T>
    where
        'a: 'b,
    {
        let mut map: HashMap<NodeId, &'b Tensor<T>> =
            self.map.iter().map(|(&k, &v)| (k, v)).collect();
        map.insert(leaf, value);
        Bindings { map }
    }
}

/// Immutable computation graph with a designated root.
#[derive(Debug, Clone)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaves: BTreeMap<String, NodeId>,
    root: NodeId,
}

struct Values<'g, 'b, T> {
    graph: &'g Graph<T>,
    bindings: &'g Bindings<'b, T>,
    computed: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Values<'_, '_, T> {
    fn get(&self, id: NodeId) -> &Tensor<T> {
        match &self.graph.nodes[id.0].op {
            Op::Const(t) => t,
            Op::Leaf { .. } => self.bindings.get(id).expect("bindings validated"),
            _ => self.computed[id.0].as_ref().expect("topological order"),
        }
    }

    fn data(&self, id: NodeId) -> &[T] {
        self.get(id).data()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn im2col<T: Scalar>(
    x: &[T],
    cin: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    lout: usize,
) -> Vec<T> {
    let mut cols = vec![T::zero(); cin * k * lout];
    for ci in 0..cin {
        for kk in 0..k {
            let row = &mut cols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
            for (t, slot) in row.iter_mut().enumerate() {
                let pos = (t * stride + kk) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    *slot = x[ci * len + pos as usize];
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    cin: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    lout: usize,
) -> Vec<T> {
    let mut x = vec![T::zero(); cin * len];
    for ci in 0..cin {
        for kk in 0..k {
            let row = &cols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
            for (t, &v) in row.iter().enumerate() {
                let pos = (t * stride + kk) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    let i = ci * len + pos as usize;
                    x[i] = x[i] + v;
                }
            }
        }
    }
    x
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, g: Vec<T>) {
    match &mut grads[id.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
        slot @ None => *slot = Some(g),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// Leaves in name order with their kinds.
    pub fn leaves(&self) -> Vec<(&str, NodeId, LeafKind)> {
        self.leaves
            .iter()
            .map(|(name, &id)| {
                let Op::Leaf { kind, .. } = &self.nodes[id.0].op else {
                    unreachable!("leaf table points at leaf nodes")
                };
                (name.as_str(), id, *kind)
            })
            .collect()
    }

    fn check_bindings(&self, bindings: &Bindings<T>) -> Result<()> {
        for (name, &id) in &self.leaves {
            let t = bindings
                .get(id)
                .ok_or_else(|| Error::Binding(name.clone()))?;
            if t.shape() != self.shape(id).as_ref() as &[usize] {
                return Err(Error::Shape(format!(
                    "leaf `{name}` declared {:?}, bound {:?}",
                    self.shape(id),
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn evaluate<'g, 'b>(&'g self, bindings: &'g Bindings<'b, T>) -> Result<Values<'g, 'b, T>> {
        self.check_bindings(bindings)?;
        let mut values = Values {
            graph: self,
            bindings,
            computed: vec![None; self.nodes.len()],
        };
        for i in 0..self.nodes.len() {
            if let Some(v) = self.compute(i, &values) {
                values.computed[i] = Some(v);
            }
        }
        Ok(values)
    }

    fn compute(&self, i: usize, v: &Values<T>) -> Option<Tensor<T>> {
        use Op::*;
        let node = &self.nodes[i];
        let shape = node.shape.clone();
        let data: Vec<T> = match &node.op {
            Leaf { .. } | Const(_) => return None,
            MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                scalar::matmul(v.data(*a), v.data(*b), sa[0], sa[1], sb[1])
            }
            Add(a, b) => zip(v.data(*a), v.data(*b), |x, y| x + y),
            Sub(a, b) => zip(v.data(*a), v.data(*b), |x, y| x - y),
            Mul(a, b) => zip(v.data(*a), v.data(*b), |x, y| x * y),
            ScalarMul(a, c) => v.data(*a).iter().map(|&x| x * *c).collect(),
            BiasAdd { input, bias, axis } => {
                let cols = shape[1];
                let b = v.data(*bias);
                v.data(*input)
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let bi = if *axis == 1 { j % cols } else { j / cols };
                        x + b[bi]
                    })
                    .collect()
            }
            Sigmoid(a) => v.data(*a).iter().map(|&x| sigmoid(x)).collect(),
            Tanh(a) => v.data(*a).iter().map(|&x| x.tanh()).collect(),
            Relu(a) => v.data(*a).iter().map(|&x| x.max(T::zero())).collect(),
            Conv1d {
                input,
                weight,
                stride,
                padding,
            } => {
                let (cin, len) = (self.shape(*input)[0], self.shape(*input)[1]);
                let (cout, k) = (self.shape(*weight)[0], self.shape(*weight)[2]);
                let lout = shape[1];
                let cols = im2col(v.data(*input), cin, len, k, *stride, *padding, lout);
                scalar::matmul(v.data(*weight), &cols, cout, cin * k, lout)
            }
            Upsample { input, factor } => {
                let x = v.data(*input);
                let out_len = shape[1];
                (0..shape[0] * out_len)
                    .map(|j| {
                        let (c, t) = (j / out_len, j % out_len);
                        x[c * (out_len / factor) + t / factor]
                    })
                    .collect()
            }
            Frame { input, cfg } => signal::frame_signal(v.data(*input), cfg),
            DftMagnitude { input, basis } => {
                let (re, im) = basis.analyze(v.data(*input), shape[0]);
                zip(&re, &im, signal::smooth_magnitude)
            }
            Magnitude { re, im } => zip(v.data(*re), v.data(*im), signal::smooth_magnitude),
            OverlapAdd {
                input,
                basis,
                inv_norm,
            } => signal::overlap_add(
                v.data(*input),
                &basis.window,
                inv_norm,
                &basis.cfg,
                shape[0],
            ),
            Mse(a, b) => {
                let (x, y) = (v.data(*a), v.data(*b));
                let s: T = x.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum();
                vec![s / T::lit(x.len().max(1) as f64)]
            }
            L2Norm(a) => {
                let s: T = v.data(*a).iter().map(|&x| x * x).sum();
                vec![(s + T::lit(L2_EPS)).sqrt()]
            }
            Sum(a) => vec![v.data(*a).iter().copied().sum()],
            Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(&shape, *axis);
                let mut out = Vec::with_capacity(numel(&shape));
                for o in 0..outer {
                    for &id in inputs {
                        let block = self.shape(id)[*axis] * inner;
                        out.extend_from_slice(&v.data(id)[o * block..(o + 1) * block]);
                    }
                }
                out
            }
            Slice {
                input,
                axis,
                start,
                end,
            } => {
                let (outer, dim, inner) = split_axis(self.shape(*input), *axis);
                let x = v.data(*input);
                let mut out = Vec::with_capacity(numel(&shape));
                for o in 0..outer {
                    let base = o * dim * inner;
                    out.extend_from_slice(&x[base + start * inner..base + end * inner]);
                }
                out
            }
            Reshape(a) => v.data(*a).to_vec(),
        };
        Some(Tensor::new(shape, data).expect("shape inference matches kernels"))
    }

    /// Value of the root node.
    pub fn forward(&self, bindings: &Bindings<T>) -> Result<Tensor<T>> {
        let values = self.evaluate(bindings)?;
        Ok(values.get(self.root).clone())
    }

    /// Gradient of the scalar root with respect to one leaf.
    pub fn gradient(&self, bindings: &Bindings<T>, wrt: NodeId) -> Result<Tensor<T>> {
        let (_, mut grads) = self.value_and_gradients(bindings, &[wrt])?;
        Ok(grads.remove(0))
    }

    /// Root value and its gradients with respect to each leaf in `wrt`, from a
    /// single forward and backward sweep.
    pub fn value_and_gradients(
        &self,
        bindings: &Bindings<T>,
        wrt: &[NodeId],
    ) -> Result<(T, Vec<Tensor<T>>)> {
        let (value, grads, _) = self.gradients_observing(bindings, wrt, &[])?;
        Ok((value, grads))
    }

    /// As [`Graph::value_and_gradients`], also returning the forward values of
    /// the `observe` nodes.
    pub fn gradients_observing(
        &self,
        bindings: &Bindings<T>,
        wrt: &[NodeId],
        observe: &[NodeId],
    ) -> Result<(T, Vec<Tensor<T>>, Vec<Tensor<T>>)> {
        if numel(self.shape(self.root)) != 1 {
            return Err(Error::Contract(format!(
                "gradient needs a scalar root, root has shape {:?}",
                self.shape(self.root)
            )));
        }
        for &id in wrt {
            if id.0 >= self.nodes.len() || !matches!(self.nodes[id.0].op, Op::Leaf { .. }) {
                return Err(Error::Contract(format!(
                    "gradient target {} is not a leaf",
                    id.0
                )));
            }
        }
        for &id in observe {
            if id.0 >= self.nodes.len() {
                return Err(Error::Contract(format!("observed node {} does not exist", id.0)));
            }
        }
        let values = self.evaluate(bindings)?;
        let root_value = values.get(self.root).item();
        let observed = observe.iter().map(|&id| values.get(id).clone()).collect();

        let mut needs = vec![false; self.nodes.len()];
        for &id in wrt {
            needs[id.0] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.inputs().iter().any(|p| needs[p.0]) {
                needs[i] = true;
            }
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if needs[self.root.0] {
            grads[self.root.0] = Some(vec![T::one()]);
        }
        for i in (0..=self.root.0).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                grads[i] = Some(g);
                continue;
            }
            self.backward(i, &g, &values, &needs, &mut grads);
        }

        let out = wrt
            .iter()
            .map(|&id| {
                let data = grads[id.0]
                    .clone()
                    .unwrap_or_else(|| vec![T::zero(); numel(self.shape(id))]);
                Tensor::new(self.shape(id).to_vec(), data).expect("gradient matches leaf shape")
            })
            .collect();
        Ok((root_value, out, observed))
    }

    fn backward(
        &self,
        i: usize,
        g: &[T],
        v: &Values<T>,
        needs: &[bool],
        grads: &mut [Option<Vec<T>>],
    ) {
        use Op::*;
        let node = &self.nodes[i];
        let need = |id: &NodeId| needs[id.0];
        match &node.op {
            Leaf { .. } | Const(_) => {}
            MatMul(a, b) => {
                let (m, k, n) = (self.shape(*a)[0], self.shape(*a)[1], self.shape(*b)[1]);
                if need(a) {
                    accumulate(grads, *a, scalar::matmul_nt(g, v.data(*b), m, n, k));
                }
                if need(b) {
                    accumulate(grads, *b, scalar::matmul_tn(v.data(*a), g, m, k, n));
                }
            }
            Add(a, b) => {
                if need(a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if need(b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Sub(a, b) => {
                if need(a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if need(b) {
                    accumulate(grads, *b, g.iter().map(|&x| -x).collect());
                }
            }
            Mul(a, b) => {
                if need(a) {
                    accumulate(grads, *a, zip(g, v.data(*b), |x, y| x * y));
                }
                if need(b) {
                    accumulate(grads, *b, zip(g, v.data(*a), |x, y| x * y));
                }
            }
            ScalarMul(a, c) => accumulate(grads, *a, g.iter().map(|&x| x * *c).collect()),
            BiasAdd { input, bias, axis } => {
                if need(input) {
                    accumulate(grads, *input, g.to_vec());
                }
                if need(bias) {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let mut gb = vec![T::zero(); if *axis == 1 { c } else { r }];
                    for (j, &x) in g.iter().enumerate() {
                        let bi = if *axis == 1 { j % c } else { j / c };
                        gb[bi] = gb[bi] + x;
                    }
                    accumulate(grads, *bias, gb);
                }
            }
            Sigmoid(a) => {
                let y = v.data(NodeId(i));
                accumulate(grads, *a, zip(g, y, |gx, s| gx * s * (T::one() - s)));
            }
            Tanh(a) => {
                let y = v.data(NodeId(i));
                accumulate(grads, *a, zip(g, y, |gx, t| gx * (T::one() - t * t)));
            }
            Relu(a) => {
                let x = v.data(*a);
                accumulate(
                    grads,
                    *a,
                    zip(g, x, |gx, xv| if xv > T::zero() { gx } else { T::zero() }),
                );
            }
            Conv1d {
                input,
                weight,
                stride,
                padding,
            } => {
                let (cin, len) = (self.shape(*input)[0], self.shape(*input)[1]);
                let (cout, k) = (self.shape(*weight)[0], self.shape(*weight)[2]);
                let lout = node.shape[1];
                if need(weight) {
                    let cols = im2col(v.data(*input), cin, len, k, *stride, *padding, lout);
                    accumulate(grads, *weight, scalar::matmul_nt(g, &cols, cout, lout, cin * k));
                }
                if need(input) {
                    let gcols = scalar::matmul_tn(v.data(*weight), g, cout, cin * k, lout);
                    accumulate(
                        grads,
                        *input,
                        col2im(&gcols, cin, len, k, *stride, *padding, lout),
                    );
                }
            }
            Upsample { input, factor } => {
                let (c, len) = (self.shape(*input)[0], self.shape(*input)[1]);
                let mut gx = vec![T::zero(); c * len];
                for (j, &x) in g.iter().enumerate() {
                    let (ch, t) = (j / (len * factor), j % (len * factor));
                    let idx = ch * len + t / factor;
                    gx[idx] = gx[idx] + x;
                }
                accumulate(grads, *input, gx);
            }
            Frame { input, cfg } => {
                let n = self.shape(*input)[0];
                accumulate(grads, *input, signal::frame_signal_adjoint(g, cfg, n));
            }
            DftMagnitude { input, basis } => {
                let f = node.shape[0];
                let (l, k) = (basis.cfg.frame_len, basis.cfg.bins());
                let (re, im) = basis.analyze(v.data(*input), f);
                let mag = v.data(NodeId(i));
                let gre: Vec<T> = (0..g.len()).map(|j| g[j] * re[j] / mag[j]).collect();
                let gim: Vec<T> = (0..g.len()).map(|j| g[j] * im[j] / mag[j]).collect();
                let mut gx = scalar::matmul_nt(&gre, &basis.analysis_re, f, k, l);
                T::gemm(
                    f,
                    k,
                    l,
                    &gim,
                    (k as isize, 1),
                    &basis.analysis_im,
                    (1, k as isize),
                    T::one(),
                    &mut gx,
                    (l as isize, 1),
                );
                accumulate(grads, *input, gx);
            }
            Magnitude { re, im } => {
                let mag = v.data(NodeId(i));
                if need(re) {
                    let r = v.data(*re);
                    accumulate(grads, *re, (0..g.len()).map(|j| g[j] * r[j] / mag[j]).collect());
                }
                if need(im) {
                    let m = v.data(*im);
                    accumulate(grads, *im, (0..g.len()).map(|j| g[j] * m[j] / mag[j]).collect());
                }
            }
            OverlapAdd {
                input,
                basis,
                inv_norm,
            } => accumulate(
                grads,
                *input,
                signal::overlap_add_adjoint(g, &basis.window, inv_norm, &basis.cfg),
            ),
            Mse(a, b) => {
                let (x, y) = (v.data(*a), v.data(*b));
                let scale = T::lit(2.0) * g[0] / T::lit(x.len().max(1) as f64);
                let diff: Vec<T> = zip(x, y, |p, q| (p - q) * scale);
                if need(b) {
                    accumulate(grads, *b, diff.iter().map(|&d| -d).collect());
                }
                if need(a) {
                    accumulate(grads, *a, diff);
                }
            }
            L2Norm(a) => {
                let norm = v.data(NodeId(i))[0];
                let s = g[0] / norm;
                accumulate(grads, *a, v.data(*a).iter().map(|&x| x * s).collect());
            }
            Sum(a) => accumulate(grads, *a, vec![g[0]; numel(self.shape(*a))]),
            Concat { inputs, axis } => {
                let (outer, dim, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for id in inputs {
                    let width = self.shape(*id)[*axis];
                    if need(id) {
                        let mut part = Vec::with_capacity(outer * width * inner);
                        for o in 0..outer {
                            let base = o * dim * inner + offset * inner;
                            part.extend_from_slice(&g[base..base + width * inner]);
                        }
                        accumulate(grads, *id, part);
                    }
                    offset += width;
                }
            }
            Slice {
                input,
                axis,
                start,
                end,
            } => {
                let (outer, dim, inner) = split_axis(self.shape(*input), *axis);
                let width = end - start;
                let mut gx = vec![T::zero(); outer * dim * inner];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    gx[dst..dst + width * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                accumulate(grads, *input, gx);
            }
            Reshape(a) => accumulate(grads, *a, g.to_vec()),
        }
    }
}

fn zip<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
