//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] is the tape: every primitive executed through it appends a
//! node holding its output value and enough context to run the backward
//! rule. Nodes are appended in execution order, so the tape is always
//! topologically sorted and the backward pass is a single reverse sweep.

mod conv;
mod loss;
mod norm;
mod ops;
mod pool;

pub use conv::{conv2d_output_extent, ConvGeometry};
pub use norm::ChannelStats;
pub use ops::{BinaryOp, ReduceOp};

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T: Real> {
    Leaf,
    Binary {
        op: BinaryOp,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Reduce {
        op: ReduceOp,
        x: Var,
        axis: Option<usize>,
        argmax: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Conv2d {
        x: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: Var,
        scale: Var,
        shift: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
    },
    CrossEntropy {
        y: Var,
        target: Tensor<T>,
    },
    BinaryCrossEntropy {
        y: Var,
        target: Tensor<T>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// The tape. Confined to one forward/backward pass on one thread; build a
/// fresh graph per pass.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
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

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false, None)
    }

    /// A free-standing leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        self.leaf(value, requires_grad, None)
    }

    /// Brings a stored parameter onto the tape. Frozen parameters enter as
    /// constants and never accumulate gradient.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        let p = store.get(id);
        self.leaf(p.value.clone(), p.trainable, Some(id))
    }

    fn leaf(
        &mut self,
        value: Tensor<T>,
        requires_grad: bool,
        param: Option<ParamId>,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite("leaf value".into()));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
        name: &str,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of {name}")));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        if root.requires_grad {
            grads[loss.0] = Some(Tensor::from_parts(
                root.value.shape().to_vec(),
                vec![T::ONE],
            ));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else { continue };
            let mut sink = GradSink {
                nodes: &self.nodes,
                grads: before,
            };
            self.backprop(&node.op, &node.value, g, &mut sink);
        }
        Ok(Gradients { grads })
    }

    /// Backward pass that stores `dLoss/dParam` on every trainable parameter
    /// that appears on the tape. Trainable parameters the loss does not
    /// depend on get a zero gradient; frozen parameters are left untouched.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(id) = node.param else { continue };
            let p = store.get_mut(id);
            if !p.trainable || !node.requires_grad {
                continue;
            }
            let contrib = grads
                .grads
                .get(i)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| {
                    Tensor::from_parts(node.value.shape().to_vec(), vec![T::ZERO; node.value.len()])
                });
            match &mut p.grad {
                Some(existing) if existing.shape() == contrib.shape() => {
                    existing.add_assign_tensor(&contrib)
                }
                slot => *slot = Some(contrib),
            }
        }
        Ok(grads)
    }

    fn backprop(&self, op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
        match op {
            Op::Leaf => {}
            Op::Binary {
                op,
                a,
                b,
                broadcast,
            } => ops::binary_backward(*op, *a, *b, *broadcast, g, sink),
            Op::MatMul { a, b } => ops::matmul_backward(*a, *b, g, sink),
            Op::Reduce {
                op,
                x,
                axis,
                argmax,
            } => ops::reduce_backward(*op, *x, *axis, argmax, g, sink),
            Op::Reshape { x } => {
                let shape = sink.value(*x).shape().to_vec();
                sink.accumulate(*x, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::Relu { x } => ops::relu_backward(*x, g, sink),
            Op::Sigmoid { x } => ops::sigmoid_backward(*x, out, g, sink),
            Op::Softmax { x, axis } => ops::softmax_backward(*x, *axis, out, g, sink),
            Op::AddBias { x, bias } => ops::add_bias_backward(*x, *bias, g, sink),
            Op::Conv2d {
                x,
                weight,
                bias,
                geom,
            } => conv::conv2d_backward(*x, *weight, *bias, geom, g, sink),
            Op::BatchNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
                batch_stats,
            } => {
                norm::batch_norm_backward(*x, *scale, *shift, xhat, inv_std, *batch_stats, g, sink)
            }
            Op::MaxPool { x, argmax } => pool::max_pool_backward(*x, argmax, g, sink),
            Op::GlobalAvgPool { x } => pool::global_avg_pool_backward(*x, g, sink),
            Op::CrossEntropy { y, target } => loss::cross_entropy_backward(*y, target, g, sink),
            Op::BinaryCrossEntropy { y, target } => {
                loss::binary_cross_entropy_backward(*y, target, g, sink)
            }
        }
    }
}

/// Gradient accumulator handed to the per-op backward rules. Only nodes
/// strictly earlier on the tape are reachable, which is all an op may
/// depend on.
pub(crate) struct GradSink<'a, T: Real> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Tensor<T>>],
}

impl<T: Real> GradSink<'_, T> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub(crate) fn accumulate(&mut self, v: Var, contrib: Tensor<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign_tensor(&contrib),
            slot => *slot = Some(contrib),
        }
    }
}

/// Result of a backward sweep: `dLoss/dNode` for every node that required
/// a gradient and was reachable from the loss.
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
