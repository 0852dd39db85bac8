use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Upsample2x {
        input: Var,
    },
    MaxPool2x {
        input: Var,
        argmax: Vec<usize>,
    },
    Relu {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Affine {
        input: Var,
        scale: T,
    },
    ConcatChannels {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    /// One output slot of a softmax taken across a stack; the K sibling
    /// outputs occupy consecutive node ids starting at `first`.
    SoftmaxSlot {
        inputs: Vec<Var>,
        first: usize,
        slot: usize,
    },
    WeightedSum {
        images: Vec<Var>,
        weights: Vec<Var>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Bce {
        pred: Var,
        target: Vec<T>,
    },
    Dice {
        pred: Var,
        target: Vec<T>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Tape of executed operations for one forward pass.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
/// A graph supports exactly one [`backward`](Graph::backward) call.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// A leaf that receives a gradient on backward.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the backward root with respect to a leaf. `None` before
    /// backward, for leaves that do not require a gradient, and for leaves
    /// the root does not depend on.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse-mode sweep from a scalar root. Only leaf gradients are kept.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(vec![T::one()]);
        }

        let mut kept: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for id in (0..=root.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                kept[id] = Some(Tensor {
                    shape: node.value.shape().to_vec(),
                    data: grad,
                });
                continue;
            }
            self.propagate(id, &grad, &mut grads);
        }
        self.grads = kept;
        Ok(())
    }

    fn propagate(&self, id: usize, grad: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => super::conv::conv2d_backward(
                self, *input, *weight, *bias, *stride, *padding, grad, grads,
            ),
            Op::Upsample2x { input } => super::sampling::upsample_backward(self, *input, grad, grads),
            Op::MaxPool2x { input, argmax } => {
                super::sampling::maxpool_backward(self, *input, argmax, grad, grads)
            }
            Op::Relu { input } => {
                let x = self.value(*input).data();
                if self.requires_grad(*input) {
                    let acc = slot(grads, *input, x.len());
                    for ((a, &xi), &g) in acc.iter_mut().zip(x).zip(grad) {
                        if xi > T::zero() {
                            *a += g;
                        }
                    }
                }
            }
            Op::Sigmoid { input } => {
                let y = node.value.data();
                if self.requires_grad(*input) {
                    let acc = slot(grads, *input, y.len());
                    for ((a, &yi), &g) in acc.iter_mut().zip(y).zip(grad) {
                        *a += g * yi * (T::one() - yi);
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.requires_grad(v) {
                        let acc = slot(grads, v, grad.len());
                        for (x, &g) in acc.iter_mut().zip(grad) {
                            *x += g;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.requires_grad(v) {
                        let o = self.value(other).data();
                        let acc = slot(grads, v, grad.len());
                        for ((x, &g), &oi) in acc.iter_mut().zip(grad).zip(o) {
                            *x += g * oi;
                        }
                    }
                }
            }
            Op::Affine { input, scale } => {
                if self.requires_grad(*input) {
                    let acc = slot(grads, *input, grad.len());
                    for (x, &g) in acc.iter_mut().zip(grad) {
                        *x += g * *scale;
                    }
                }
            }
            Op::ConcatChannels { a, b } => {
                super::elementwise::concat_backward(self, *a, *b, grad, grads)
            }
            Op::Sum { input } => {
                if self.requires_grad(*input) {
                    let n = self.value(*input).numel();
                    let acc = slot(grads, *input, n);
                    for x in acc.iter_mut() {
                        *x += grad[0];
                    }
                }
            }
            Op::SoftmaxSlot {
                inputs,
                first,
                slot: j,
            } => super::stack::softmax_slot_backward(self, inputs, *first, *j, grad, grads),
            Op::WeightedSum { images, weights } => {
                super::stack::weighted_sum_backward(self, images, weights, grad, grads)
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => super::loss::cross_entropy_backward(self, *logits, labels, probs, grad, grads),
            Op::Bce { pred, target } => super::loss::bce_backward(self, *pred, target, grad, grads),
            Op::Dice { pred, target } => {
                super::loss::dice_backward(self, *pred, target, grad, grads)
            }
        }
    }
}

/// Gradient accumulator for `v`, allocated on first use.
pub(crate) fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}
