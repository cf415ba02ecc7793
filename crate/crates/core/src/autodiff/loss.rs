use super::{GradSink, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Probabilities are clipped to `[LOG_CLIP, 1 - LOG_CLIP]` before the log.
pub const LOG_CLIP: f64 = 1e-7;

fn clip_bounds<T: Real>() -> (T, T) {
    (T::from_f64(LOG_CLIP), T::from_f64(1.0 - LOG_CLIP))
}

impl<T: Real> Graph<T> {
    /// Batch-mean categorical cross-entropy `-Σ t·log(y)` between
    /// probabilities `y: (N, C)` and one-hot targets of the same shape.
    pub fn cross_entropy(&mut self, y: Var, target: Tensor<T>) -> Result<Var> {
        let yv = self.value(y);
        if yv.rank() != 2 || yv.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: yv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let classes = yv.shape()[1];
        for row in target.data().chunks(classes) {
            let ones = row.iter().filter(|&&t| t == T::ONE).count();
            let zeros = row.iter().filter(|&&t| t == T::ZERO).count();
            if ones != 1 || ones + zeros != classes {
                return Err(Error::invalid(format!("target row {row:?} is not one-hot")));
            }
        }
        let (lo, hi) = clip_bounds::<T>();
        let n = T::from_usize(yv.shape()[0]);
        let mut total = T::ZERO;
        for (&p, &t) in yv.data().iter().zip(target.data()) {
            if t != T::ZERO {
                total += t * p.max(lo).min(hi).ln();
            }
        }
        let loss = Tensor::scalar(-total / n);
        self.push(loss, Op::CrossEntropy { y, target }, &[y], "cross_entropy")
    }

    /// Batch-mean binary cross-entropy `-[t·log y + (1-t)·log(1-y)]` for a
    /// single-neuron head. `y` and `target` share a shape; targets lie in [0,1].
    pub fn binary_cross_entropy(&mut self, y: Var, target: Tensor<T>) -> Result<Var> {
        let yv = self.value(y);
        if yv.shape() != target.shape() || yv.rank() == 0 {
            return Err(Error::ShapeMismatch {
                op: "binary_cross_entropy",
                lhs: yv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        if target
            .data()
            .iter()
            .any(|&t| !(T::ZERO..=T::ONE).contains(&t))
        {
            return Err(Error::invalid("binary targets must lie in [0, 1]"));
        }
        let (lo, hi) = clip_bounds::<T>();
        let n = T::from_usize(yv.shape()[0]);
        let mut total = T::ZERO;
        for (&p, &t) in yv.data().iter().zip(target.data()) {
            let p = p.max(lo).min(hi);
            total += t * p.ln() + (T::ONE - t) * (T::ONE - p).ln();
        }
        let loss = Tensor::scalar(-total / n);
        self.push(
            loss,
            Op::BinaryCrossEntropy { y, target },
            &[y],
            "binary_cross_entropy",
        )
    }
}

/// True when `p` lies strictly inside the clip band, where the clip has unit
/// derivative.
fn unclipped<T: Real>(p: T) -> bool {
    let (lo, hi) = clip_bounds::<T>();
    p >= lo && p <= hi
}

pub(super) fn cross_entropy_backward<T: Real>(
    y: Var,
    target: &Tensor<T>,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let yv = sink.value(y);
    let scale = g[0] / T::from_usize(yv.shape()[0]);
    let gy = yv
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if t == T::ZERO || !unclipped(p) {
                T::ZERO
            } else {
                -scale * t / p
            }
        })
        .collect();
    let shape = yv.shape().to_vec();
    sink.accumulate(y, Tensor::from_parts(shape, gy));
}

pub(super) fn binary_cross_entropy_backward<T: Real>(
    y: Var,
    target: &Tensor<T>,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let yv = sink.value(y);
    let scale = g[0] / T::from_usize(yv.shape()[0]);
    let gy = yv
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if unclipped(p) {
                -scale * (t / p - (T::ONE - t) / (T::ONE - p))
            } else {
                T::ZERO
            }
        })
        .collect();
    let shape = yv.shape().to_vec();
    sink.accumulate(y, Tensor::from_parts(shape, gy));
}
