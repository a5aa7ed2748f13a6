//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a Wengert list: every op appends a node holding its value,
//! its parents and whatever it saved for the backward pass. Node indices grow
//! monotonically, so creation order is already a topological order and the
//! graph cannot contain cycles. [`Graph::backward`] walks the tape in reverse
//! and returns a [`Gradients`] map without mutating the graph.

mod backward;
mod ops;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use backward::Gradients;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag plus whatever the backward rule needs.
#[derive(Clone, Debug)]
pub enum Op<T> {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(T),
    Matmul,
    BiasAdd,
    Concat { axis: usize, sizes: Vec<usize> },
    Conv2d { stride: usize, pad: usize },
    ConvTranspose2d { stride: usize, pad: usize },
    InstanceNorm { normalized: Tensor<T>, inv_std: Vec<T> },
    Relu,
    LeakyRelu(T),
    Tanh,
    AvgPool(usize),
    Mean,
    Sum,
    L1,
    L2,
    Pad2d { top: usize, bottom: usize, left: usize, right: usize },
    Reshape,
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Matmul => "matmul",
            Op::BiasAdd => "bias_add",
            Op::Concat { .. } => "concat",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::InstanceNorm { .. } => "instance_norm",
            Op::Relu => "relu",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Tanh => "tanh",
            Op::AvgPool(_) => "avg_pool",
            Op::Mean => "mean",
            Op::Sum => "sum",
            Op::L1 => "l1",
            Op::L2 => "l2",
            Op::Pad2d { .. } => "pad",
            Op::Reshape => "reshape",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub parents: Vec<Var>,
    pub requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that takes part in differentiation (a trainable parameter or a
    /// point of evaluation for gradient checks).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf treated as data; nothing flows back into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, Vec::new(), requires_grad)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: Vec<Var>, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            parents,
            requires_grad,
        });
        Var(id)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>, parents: Vec<Var>) -> Var {
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, parents, rg)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let v = self.value(root);
        if v.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                v.shape()
            )));
        }
        backward::run(self, root)
    }
}
