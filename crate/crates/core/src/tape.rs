//! Minimal reverse-mode differentiation on an explicit tape.
//!
//! The op set is the closure needed for layered objectives built from affine
//! maps, elementwise nonlinearities, and reduction losses. The backward pass
//! is seeded at the root: `backward_with_seed(c)` returns the gradient of
//! `c * loss`, which is how loss scaling is implemented — the scale multiplies
//! each adjoint exactly once, so scaling the loss and scaling the gradient are
//! the same computation rather than two code paths that can drift apart.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::param::{Gradient, ParamVector};
use crate::Result;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Shape of a tape value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A tensor value: scalar, vector, or row-major matrix over one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    shape: Shape,
    data: Vec<f64>,
}

impl Value {
    pub fn scalar(x: f64) -> Self {
        Value {
            shape: Shape::Scalar,
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Value {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Value {
            shape: Shape::Matrix { rows, cols },
            data,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Value {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Scalar payload; panics if the value is not scalar-shaped.
    pub fn as_scalar(&self) -> f64 {
        assert!(matches!(self.shape, Shape::Scalar));
        self.data[0]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input { offset: usize },
    Constant,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatVec { matrix: NodeId, vector: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Sum(Vec<NodeId>),
    Mean(Vec<NodeId>),
    SoftmaxXent { logits: NodeId, target: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::MatVec { .. } => "matvec",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Exp(..) => "exp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SoftmaxXent { .. } => "softmax_xent",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    /// Declared for inputs/constants, filled by the forward pass for ops.
    value: Value,
}

/// Reverse-mode computation record.
///
/// Nodes are topologically ordered by construction: an op can only reference
/// ids already on the tape. A tape is single-threaded mutable state; separate
/// runs use separate tapes.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    root: Option<NodeId>,
    adjoints: Vec<Value>,
    /// Parameter dimension seen by the last successful forward pass; `None`
    /// until a forward pass completes (or after the tape is extended).
    forward_dim: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            root: None,
            adjoints: Vec::new(),
            forward_dim: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.forward_dim = None;
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    fn check(&self, id: NodeId) -> NodeId {
        assert!(id.0 < self.nodes.len(), "node id from another tape");
        id
    }

    pub fn input_scalar(&mut self, offset: usize) -> NodeId {
        self.push(Op::Input { offset }, Value::zeros(Shape::Scalar))
    }

    pub fn input_vector(&mut self, offset: usize, len: usize) -> NodeId {
        self.push(Op::Input { offset }, Value::zeros(Shape::Vector(len)))
    }

    pub fn input_matrix(&mut self, offset: usize, rows: usize, cols: usize) -> NodeId {
        self.push(
            Op::Input { offset },
            Value::zeros(Shape::Matrix { rows, cols }),
        )
    }

    pub fn constant(&mut self, value: Value) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn constant_scalar(&mut self, x: f64) -> NodeId {
        self.constant(Value::scalar(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let op = Op::Add(self.check(a), self.check(b));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let op = Op::Mul(self.check(a), self.check(b));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn matvec(&mut self, matrix: NodeId, vector: NodeId) -> NodeId {
        let op = Op::MatVec {
            matrix: self.check(matrix),
            vector: self.check(vector),
        };
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let op = Op::Relu(self.check(a));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let op = Op::Sigmoid(self.check(a));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let op = Op::Log(self.check(a));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let op = Op::Exp(self.check(a));
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn sum(&mut self, inputs: &[NodeId]) -> NodeId {
        assert!(!inputs.is_empty(), "sum needs at least one input");
        for &id in inputs {
            self.check(id);
        }
        self.push(Op::Sum(inputs.to_vec()), Value::zeros(Shape::Scalar))
    }

    pub fn mean(&mut self, inputs: &[NodeId]) -> NodeId {
        assert!(!inputs.is_empty(), "mean needs at least one input");
        for &id in inputs {
            self.check(id);
        }
        self.push(Op::Mean(inputs.to_vec()), Value::zeros(Shape::Scalar))
    }

    /// Fused softmax cross-entropy against a fixed class index.
    pub fn softmax_xent(&mut self, logits: NodeId, target: usize) -> NodeId {
        let op = Op::SoftmaxXent {
            logits: self.check(logits),
            target,
        };
        self.push(op, Value::zeros(Shape::Scalar))
    }

    pub fn set_root(&mut self, id: NodeId) {
        self.check(id);
        self.forward_dim = None;
        self.root = Some(id);
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    /// Adjoint from the last backward pass, if any.
    pub fn adjoint(&self, id: NodeId) -> Option<&Value> {
        self.adjoints.get(id.0)
    }

    /// Evaluate every node in topological order and return the root value.
    pub fn eval_forward(&mut self, params: &ParamVector) -> Result<f64> {
        let root = self
            .root
            .ok_or_else(|| Error::invalid("tape has no root"))?;
        for idx in 0..self.nodes.len() {
            let value = self.compute_value(idx, params)?;
            if let Some(bad) = value.data().iter().position(|v| !v.is_finite()) {
                let _ = bad;
                return Err(Error::NonFiniteNode {
                    node: idx,
                    op: self.nodes[idx].op.name(),
                });
            }
            self.nodes[idx].value = value;
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.shape() != Shape::Scalar {
            return Err(Error::ShapeMismatch {
                node: root.0,
                detail: format!("root must be scalar, got {:?}", root_value.shape()),
            });
        }
        self.forward_dim = Some(params.dim());
        Ok(root_value.as_scalar())
    }

    fn compute_value(&self, idx: usize, params: &ParamVector) -> Result<Value> {
        let mismatch = |detail: alloc::string::String| Error::ShapeMismatch { node: idx, detail };
        let node = &self.nodes[idx];
        let value = match &node.op {
            Op::Input { offset } => {
                let shape = node.value.shape();
                let end = offset + shape.len();
                if end > params.dim() {
                    return Err(Error::DimMismatch {
                        expected: end,
                        got: params.dim(),
                    });
                }
                Value {
                    shape,
                    data: params.as_slice()[*offset..end].to_vec(),
                }
            }
            Op::Constant => node.value.clone(),
            Op::Add(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if va.shape() != vb.shape() {
                    return Err(mismatch(format!(
                        "add of {:?} and {:?}",
                        va.shape(),
                        vb.shape()
                    )));
                }
                Value {
                    shape: va.shape(),
                    data: va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect(),
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if va.shape() != vb.shape() {
                    return Err(mismatch(format!(
                        "mul of {:?} and {:?}",
                        va.shape(),
                        vb.shape()
                    )));
                }
                Value {
                    shape: va.shape(),
                    data: va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
                }
            }
            Op::MatVec { matrix, vector } => {
                let (vm, vv) = (&self.nodes[matrix.0].value, &self.nodes[vector.0].value);
                let (rows, cols) = match vm.shape() {
                    Shape::Matrix { rows, cols } => (rows, cols),
                    other => return Err(mismatch(format!("matvec needs a matrix, got {other:?}"))),
                };
                match vv.shape() {
                    Shape::Vector(n) if n == cols => {}
                    other => {
                        return Err(mismatch(format!(
                            "matvec of {rows}x{cols} matrix with {other:?}"
                        )))
                    }
                }
                let mut out = vec![0.0; rows];
                for (r, slot) in out.iter_mut().enumerate() {
                    let row = &vm.data[r * cols..(r + 1) * cols];
                    *slot = row.iter().zip(&vv.data).map(|(m, x)| m * x).sum();
                }
                Value::vector(out)
            }
            Op::Relu(a) => {
                let va = &self.nodes[a.0].value;
                Value {
                    shape: va.shape(),
                    data: va
                        .data
                        .iter()
                        .map(|&x| if x > 0.0 { x } else { 0.0 })
                        .collect(),
                }
            }
            Op::Sigmoid(a) => {
                let va = &self.nodes[a.0].value;
                Value {
                    shape: va.shape(),
                    data: va.data.iter().map(|&x| sigmoid(x)).collect(),
                }
            }
            Op::Log(a) => {
                let va = &self.nodes[a.0].value;
                Value {
                    shape: va.shape(),
                    data: va.data.iter().map(|&x| crate::math::ln(x)).collect(),
                }
            }
            Op::Exp(a) => {
                let va = &self.nodes[a.0].value;
                Value {
                    shape: va.shape(),
                    data: va.data.iter().map(|&x| crate::math::exp(x)).collect(),
                }
            }
            Op::Sum(ids) => {
                let total: f64 = ids
                    .iter()
                    .map(|id| self.nodes[id.0].value.data.iter().sum::<f64>())
                    .sum();
                Value::scalar(total)
            }
            Op::Mean(ids) => {
                let count: usize = ids.iter().map(|id| self.nodes[id.0].value.data.len()).sum();
                let total: f64 = ids
                    .iter()
                    .map(|id| self.nodes[id.0].value.data.iter().sum::<f64>())
                    .sum();
                Value::scalar(total / count as f64)
            }
            Op::SoftmaxXent { logits, target } => {
                let vl = &self.nodes[logits.0].value;
                let n = match vl.shape() {
                    Shape::Vector(n) => n,
                    other => {
                        return Err(mismatch(format!(
                            "softmax_xent needs a logit vector, got {other:?}"
                        )))
                    }
                };
                if *target >= n {
                    return Err(mismatch(format!(
                        "softmax_xent target {target} out of range for {n} classes"
                    )));
                }
                let max = vl.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = vl.data.iter().map(|&x| crate::math::exp(x - max)).sum();
                Value::scalar(crate::math::ln(z) + max - vl.data[*target])
            }
        };
        Ok(value)
    }

    /// Backward pass with the root adjoint seeded to `seed_adjoint`.
    ///
    /// Returns the gradient of `seed_adjoint * loss` with respect to the
    /// parameters bound at the last forward pass.
    pub fn backward_with_seed(&mut self, seed_adjoint: f64) -> Result<Gradient> {
        let dim = self.forward_dim.ok_or(Error::BackwardBeforeForward)?;
        let root = self.root.expect("forward_dim implies a root");

        let mut adjoints: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| Value::zeros(n.value.shape()))
            .collect();
        adjoints[root.0].data[0] = seed_adjoint;

        let mut grad = Gradient::zeros(dim);
        for idx in (0..self.nodes.len()).rev() {
            // Move this node's adjoint out so earlier nodes can be mutated.
            let adj = core::mem::replace(&mut adjoints[idx], Value::zeros(Shape::Scalar));
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input { offset } => {
                    for (slot, a) in grad.as_mut_slice()[*offset..*offset + adj.data.len()]
                        .iter_mut()
                        .zip(&adj.data)
                    {
                        *slot += a;
                    }
                }
                Op::Constant => {}
                Op::Add(a, b) => {
                    accumulate(&mut adjoints[a.0], &adj.data);
                    accumulate(&mut adjoints[b.0], &adj.data);
                }
                Op::Mul(a, b) => {
                    let prod_b: Vec<f64> = adj
                        .data
                        .iter()
                        .zip(&self.nodes[b.0].value.data)
                        .map(|(g, y)| g * y)
                        .collect();
                    let prod_a: Vec<f64> = adj
                        .data
                        .iter()
                        .zip(&self.nodes[a.0].value.data)
                        .map(|(g, x)| g * x)
                        .collect();
                    accumulate(&mut adjoints[a.0], &prod_b);
                    accumulate(&mut adjoints[b.0], &prod_a);
                }
                Op::MatVec { matrix, vector } => {
                    let vm = &self.nodes[matrix.0].value;
                    let vv = &self.nodes[vector.0].value;
                    let (rows, cols) = match vm.shape() {
                        Shape::Matrix { rows, cols } => (rows, cols),
                        _ => unreachable!("checked during forward"),
                    };
                    let mut d_matrix = vec![0.0; rows * cols];
                    let mut d_vector = vec![0.0; cols];
                    for r in 0..rows {
                        let g = adj.data[r];
                        for c in 0..cols {
                            d_matrix[r * cols + c] += g * vv.data[c];
                            d_vector[c] += g * vm.data[r * cols + c];
                        }
                    }
                    accumulate(&mut adjoints[matrix.0], &d_matrix);
                    accumulate(&mut adjoints[vector.0], &d_vector);
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a.0].value;
                    // Subgradient 0 at the kink.
                    let d: Vec<f64> = adj
                        .data
                        .iter()
                        .zip(&va.data)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut adjoints[a.0], &d);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = adj
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    accumulate(&mut adjoints[a.0], &d);
                }
                Op::Log(a) => {
                    let va = &self.nodes[a.0].value;
                    let d: Vec<f64> = adj.data.iter().zip(&va.data).map(|(g, &x)| g / x).collect();
                    accumulate(&mut adjoints[a.0], &d);
                }
                Op::Exp(a) => {
                    let d: Vec<f64> = adj
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, &e)| g * e)
                        .collect();
                    accumulate(&mut adjoints[a.0], &d);
                }
                Op::Sum(ids) => {
                    let g = adj.data[0];
                    for id in ids {
                        for slot in adjoints[id.0].data.iter_mut() {
                            *slot += g;
                        }
                    }
                }
                Op::Mean(ids) => {
                    let count: usize = ids.iter().map(|id| self.nodes[id.0].value.data.len()).sum();
                    let g = adj.data[0] / count as f64;
                    for id in ids {
                        for slot in adjoints[id.0].data.iter_mut() {
                            *slot += g;
                        }
                    }
                }
                Op::SoftmaxXent { logits, target } => {
                    let vl = &self.nodes[logits.0].value;
                    let g = adj.data[0];
                    let max = vl.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = vl.data.iter().map(|&x| crate::math::exp(x - max)).sum();
                    let d: Vec<f64> = vl
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            let p = crate::math::exp(x - max) / z;
                            g * (p - if i == *target { 1.0 } else { 0.0 })
                        })
                        .collect();
                    accumulate(&mut adjoints[logits.0], &d);
                }
            }
            adjoints[idx] = adj;
        }

        self.adjoints = adjoints;
        Ok(grad)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(target: &mut Value, contributions: &[f64]) {
    debug_assert_eq!(target.data.len(), contributions.len());
    for (slot, c) in target.data.iter_mut().zip(contributions) {
        *slot += c;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + crate::math::exp(-x))
    } else {
        let e = crate::math::exp(x);
        e / (1.0 + e)
    }
}
