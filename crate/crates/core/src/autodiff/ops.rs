use super::{GradSink, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// `(outer, extent, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: Option<usize>) -> (usize, usize, usize) {
    match axis {
        None => (1, shape.iter().product(), 1),
        Some(a) => (
            shape[..a].iter().product(),
            shape[a],
            shape[a + 1..].iter().product(),
        ),
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

impl<T: Real> Graph<T> {
    /// Elementwise `a op b`. `b` may also be a one-element tensor broadcast
    /// against every element of `a`.
    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.is_scalar_like() {
            true
        } else {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let f = |x: T, y: T| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
        };
        let data: Vec<T> = if broadcast {
            let s = bv[0];
            av.data().iter().map(|&x| f(x, s)).collect()
        } else {
            av.data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        };
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(
            out,
            Op::Binary {
                op,
                a,
                b,
                broadcast,
            },
            &[a, b],
            "elementwise",
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    /// Rank-2 matrix product `(m,k)·(k,n) -> (m,n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut data = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            av.data(),
            false,
            bv.data(),
            false,
            &mut data,
            false,
        );
        self.push(
            Tensor::from_parts(vec![m, n], data),
            Op::MatMul { a, b },
            &[a, b],
            "matmul",
        )
    }

    /// Sum, mean or max over one axis (removing it) or over everything
    /// (producing a scalar). Max routes its gradient to the first maximal
    /// element in flat order.
    pub fn reduce(&mut self, op: ReduceOp, x: Var, axis: Option<usize>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(a) = axis {
            if a >= xv.rank() {
                return Err(Error::AxisOutOfRange {
                    axis: a,
                    rank: xv.rank(),
                });
            }
        }
        let (outer, extent, inner) = split_axis(xv.shape(), axis);
        let out_shape: Vec<usize> = match axis {
            None => Vec::new(),
            Some(a) => xv
                .shape()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != a)
                .map(|(_, &d)| d)
                .collect(),
        };
        let src = xv.data();
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::new();
        for o in 0..outer {
            for i in 0..inner {
                let at = |e: usize| (o * extent + e) * inner + i;
                match op {
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let mut s = T::ZERO;
                        for e in 0..extent {
                            s += src[at(e)];
                        }
                        if op == ReduceOp::Mean {
                            s = s / T::from_usize(extent);
                        }
                        data.push(s);
                    }
                    ReduceOp::Max => {
                        let mut best = at(0);
                        for e in 1..extent {
                            if src[at(e)] > src[best] {
                                best = at(e);
                            }
                        }
                        data.push(src[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        let out = Tensor::from_parts(out_shape, data);
        self.push(
            out,
            Op::Reduce {
                op,
                x,
                axis,
                argmax,
            },
            &[x],
            "reduce",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(ReduceOp::Sum, x, None)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(ReduceOp::Mean, x, None)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push(out, Op::Reshape { x }, &[x], "reshape")
    }

    /// `max(0, x)`; the sub-gradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > T::ZERO { v } else { T::ZERO });
        self.push(out, Op::Relu { x }, &[x], "relu")
    }

    /// `1 / (1 + e^-x)`, evaluated without overflow for large |x|.
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid { x }, &[x], "sigmoid")
    }

    /// Normalised exponentials along `axis`, max-shifted for stability.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: xv.rank(),
            });
        }
        let (outer, extent, inner) = split_axis(xv.shape(), Some(axis));
        let src = xv.data();
        let mut data = vec![T::ZERO; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |e: usize| (o * extent + e) * inner + i;
                let mut m = src[at(0)];
                for e in 1..extent {
                    m = m.max(src[at(e)]);
                }
                let mut z = T::ZERO;
                for e in 0..extent {
                    let v = (src[at(e)] - m).exp();
                    data[at(e)] = v;
                    z += v;
                }
                for e in 0..extent {
                    data[at(e)] = data[at(e)] / z;
                }
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push(out, Op::Softmax { x, axis }, &[x], "softmax")
    }

    /// Adds a rank-1 `bias` along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = *xv.shape().last().unwrap_or(&1);
        if bv.rank() != 1 || bv.len() != c || xv.rank() == 0 {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % c])
            .collect();
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push(out, Op::AddBias { x, bias }, &[x, bias], "add_bias")
    }

    /// Affine map `x·W + b` for `x: (N, in)`, `W: (in, out)`, `b: (out)`.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, weight)?;
        self.add_bias(y, bias)
    }
}

pub(super) fn binary_backward<T: Real>(
    op: BinaryOp,
    a: Var,
    b: Var,
    broadcast: bool,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let shape = g.shape().to_vec();
    if sink.wants(a) {
        let ga: Vec<T> = match op {
            BinaryOp::Add | BinaryOp::Sub => g.data().to_vec(),
            BinaryOp::Mul => {
                let bv = sink.value(b);
                if broadcast {
                    let s = bv[0];
                    g.data().iter().map(|&gi| gi * s).collect()
                } else {
                    g.data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&gi, &bi)| gi * bi)
                        .collect()
                }
            }
        };
        sink.accumulate(a, Tensor::from_parts(shape.clone(), ga));
    }
    if sink.wants(b) {
        let gb: Vec<T> = match op {
            BinaryOp::Add => g.data().to_vec(),
            BinaryOp::Sub => g.data().iter().map(|&v| -v).collect(),
            BinaryOp::Mul => {
                let av = sink.value(a);
                g.data()
                    .iter()
                    .zip(av.data())
                    .map(|(&gi, &ai)| gi * ai)
                    .collect()
            }
        };
        let b_shape = sink.value(b).shape().to_vec();
        let gb = if broadcast {
            Tensor::from_parts(b_shape, vec![gb.into_iter().sum()])
        } else {
            Tensor::from_parts(b_shape, gb)
        };
        sink.accumulate(b, gb);
    }
}

pub(super) fn matmul_backward<T: Real>(a: Var, b: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let (m, k) = (sink.value(a).shape()[0], sink.value(a).shape()[1]);
    let n = sink.value(b).shape()[1];
    if sink.wants(a) {
        let mut ga = vec![T::ZERO; m * k];
        T::gemm(
            m,
            n,
            k,
            g.data(),
            false,
            sink.value(b).data(),
            true,
            &mut ga,
            false,
        );
        sink.accumulate(a, Tensor::from_parts(vec![m, k], ga));
    }
    if sink.wants(b) {
        let mut gb = vec![T::ZERO; k * n];
        T::gemm(
            k,
            m,
            n,
            sink.value(a).data(),
            true,
            g.data(),
            false,
            &mut gb,
            false,
        );
        sink.accumulate(b, Tensor::from_parts(vec![k, n], gb));
    }
}

pub(super) fn reduce_backward<T: Real>(
    op: ReduceOp,
    x: Var,
    axis: Option<usize>,
    argmax: &[usize],
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    if !sink.wants(x) {
        return;
    }
    let shape = sink.value(x).shape().to_vec();
    let (outer, extent, inner) = split_axis(&shape, axis);
    let mut gx = vec![T::ZERO; outer * extent * inner];
    match op {
        ReduceOp::Sum | ReduceOp::Mean => {
            let scale = if op == ReduceOp::Mean {
                T::ONE / T::from_usize(extent)
            } else {
                T::ONE
            };
            for o in 0..outer {
                for e in 0..extent {
                    for i in 0..inner {
                        gx[(o * extent + e) * inner + i] = g[o * inner + i] * scale;
                    }
                }
            }
        }
        ReduceOp::Max => {
            for (j, &src) in argmax.iter().enumerate() {
                gx[src] += g[j];
            }
        }
    }
    sink.accumulate(x, Tensor::from_parts(shape, gx));
}

pub(super) fn relu_backward<T: Real>(x: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let xv = sink.value(x);
    let data = g
        .data()
        .iter()
        .zip(xv.data())
        .map(|(&gi, &xi)| if xi > T::ZERO { gi } else { T::ZERO })
        .collect();
    let shape = xv.shape().to_vec();
    sink.accumulate(x, Tensor::from_parts(shape, data));
}

pub(super) fn sigmoid_backward<T: Real>(
    x: Var,
    y: &Tensor<T>,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let data = g
        .data()
        .iter()
        .zip(y.data())
        .map(|(&gi, &yi)| gi * yi * (T::ONE - yi))
        .collect();
    sink.accumulate(x, Tensor::from_parts(y.shape().to_vec(), data));
}

pub(super) fn softmax_backward<T: Real>(
    x: Var,
    axis: usize,
    y: &Tensor<T>,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let (outer, extent, inner) = split_axis(y.shape(), Some(axis));
    let (yd, gd) = (y.data(), g.data());
    let mut gx = vec![T::ZERO; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |e: usize| (o * extent + e) * inner + i;
            let mut dot = T::ZERO;
            for e in 0..extent {
                dot += gd[at(e)] * yd[at(e)];
            }
            for e in 0..extent {
                gx[at(e)] = yd[at(e)] * (gd[at(e)] - dot);
            }
        }
    }
    sink.accumulate(x, Tensor::from_parts(y.shape().to_vec(), gx));
}

pub(super) fn add_bias_backward<T: Real>(
    x: Var,
    bias: Var,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    if sink.wants(x) {
        sink.accumulate(x, g.clone());
    }
    if sink.wants(bias) {
        let c = sink.value(bias).len();
        let mut gb = vec![T::ZERO; c];
        for (i, &v) in g.data().iter().enumerate() {
            gb[i % c] += v;
        }
        sink.accumulate(bias, Tensor::from_parts(vec![c], gb));
    }
}
