use std::cell::{Ref, RefCell};

use super::lstm::LstmCache;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Recorded operation with references to its parent nodes and whatever the
/// backward pass needs from the forward pass.
#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddBias(usize, usize),
    /// `a [.., M, K] x b [K, N]`.
    MatMul(usize, usize),
    /// `a [B, M, K] x b [B, K, N]`.
    BatchMatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Narrow {
        src: usize,
        axis: usize,
        start: usize,
    },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Dropout {
        src: usize,
        mask: Vec<T>,
    },
    Softmax(usize),
    Sum(usize),
    Mean(usize),
    L1Loss(usize, usize),
    Conv1d {
        x: usize,
        w: usize,
        bias: Option<usize>,
    },
    AvgPool1d {
        src: usize,
        size: usize,
    },
    Upsample(usize),
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        /// Statistics came from the batch itself (training mode).
        batch_stats: bool,
    },
    Lstm {
        x: usize,
        w_ih: usize,
        w_hh: usize,
        bias: usize,
        cache: Box<LstmCache<T>>,
    },
    RelGather {
        src: usize,
        max_dist: usize,
    },
    RelScatter {
        src: usize,
        max_dist: usize,
    },
}

impl<T> Op<T> {
    pub(crate) fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddBias(a, b) | MatMul(a, b) | BatchMatMul(a, b)
            | L1Loss(a, b) => vec![*a, *b],
            Scale(a, _) | Transpose(a) | Reshape(a) | Relu(a) | Sigmoid(a) | Tanh(a)
            | Softmax(a) | Sum(a) | Mean(a) | Upsample(a) => vec![*a],
            Concat { parts, .. } => parts.clone(),
            Narrow { src, .. } | Dropout { src, .. } | AvgPool1d { src, .. }
            | RelGather { src, .. } | RelScatter { src, .. } => vec![*src],
            Conv1d { x, w, bias } => {
                let mut v = vec![*x, *w];
                v.extend(bias);
                v
            }
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Lstm {
                x, w_ih, w_hh, bias, ..
            } => vec![*x, *w_ih, *w_hh, *bias],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; [`Tape::backward`] walks it from the end. A tape is used by one
/// thread for one forward/backward pass and then dropped.
pub struct Tape<T: Real> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Vec<T>>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf whose gradient will be collected.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.parents().iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Reverse-mode accumulation from a scalar `loss`. Gradients of earlier
    /// calls are discarded.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad && !matches!(node.op, Op::Leaf) {
                let need = |p: usize| nodes[p].requires_grad;
                for (parent, g) in super::ops::backward(&node.op, &node.value, &grad, &nodes, &need) {
                    match &mut grads[parent] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += *v),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            grads[id] = Some(grad);
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var<'_, T>) -> Option<Tensor<T>> {
        let grads = self.grads.borrow();
        let g = grads.get(v.id)?.as_ref()?;
        let shape = self.nodes.borrow()[v.id].value.shape().to_vec();
        Tensor::new(shape, g.clone()).ok()
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Borrow of the forward value.
    pub fn value_ref(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn value(&self) -> Tensor<T> {
        self.value_ref().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value_ref().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> T {
        self.value_ref().item()
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.grad(*self)
    }

    pub(crate) fn same_tape(&self, other: &Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::invalid("variables belong to different tapes"))
        }
    }
}
