use super::{GradSink, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-channel batch statistics observed during a training-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T: Real> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
}

impl<T: Real> Graph<T> {
    fn check_norm_shapes(&self, x: Var, scale: Var, shift: Var) -> Result<(usize, usize, usize)> {
        let xv = self.value(x);
        if xv.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: "batch norm expects NCHW input".into(),
            });
        }
        let (n, c) = (xv.shape()[0], xv.shape()[1]);
        let plane = xv.shape()[2] * xv.shape()[3];
        for p in [scale, shift] {
            let pv = self.value(p);
            if pv.rank() != 1 || pv.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "batch_norm",
                    lhs: xv.shape().to_vec(),
                    rhs: pv.shape().to_vec(),
                });
            }
        }
        Ok((n, c, plane))
    }

    /// Training-mode batch normalisation: normalises each channel by the
    /// statistics of this batch and returns them for running-stat updates.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        eps: T,
    ) -> Result<(Var, ChannelStats<T>)> {
        let (n, c, plane) = self.check_norm_shapes(x, scale, shift)?;
        let xd = self.value(x).data();
        let count = T::from_usize(n * plane);
        let mut mean = vec![T::ZERO; c];
        let mut var = vec![T::ZERO; c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                mean[ch] += xd[base..base + plane].iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let m = mean[ch];
                var[ch] += xd[base..base + plane]
                    .iter()
                    .map(|&v| (v - m) * (v - m))
                    .sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v = *v / count);
        let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let out = self.normalize(x, scale, shift, &mean, &inv_std, true, n, c, plane)?;
        Ok((out, ChannelStats { mean, var }))
    }

    /// Inference-mode batch normalisation using fixed statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Var> {
        let (n, c, plane) = self.check_norm_shapes(x, scale, shift)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::invalid(
                "running statistics do not match channel count",
            ));
        }
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|&v| T::ONE / (v + eps).sqrt())
            .collect();
        self.normalize(x, scale, shift, running_mean, &inv_std, false, n, c, plane)
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        mean: &[T],
        inv_std: &[T],
        batch_stats: bool,
        n: usize,
        c: usize,
        plane: usize,
    ) -> Result<Var> {
        let xd = self.value(x).data();
        let (gamma, beta) = (self.value(scale).data(), self.value(shift).data());
        let mut xhat = vec![T::ZERO; xd.len()];
        let mut out = vec![T::ZERO; xd.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                for i in base..base + plane {
                    let h = (xd[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gamma[ch] * h + beta[ch];
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        let needs_grad = [x, scale, shift].iter().any(|&v| self.requires_grad(v));
        if !needs_grad {
            xhat = Vec::new();
        }
        let op = Op::BatchNorm {
            x,
            scale,
            shift,
            xhat,
            inv_std: inv_std.to_vec(),
            batch_stats,
        };
        self.push(
            Tensor::from_parts(shape, out),
            op,
            &[x, scale, shift],
            "batch_norm",
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batch_norm_backward<T: Real>(
    x: Var,
    scale: Var,
    shift: Var,
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let shape = g.shape().to_vec();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let gd = g.data();
    let mut sum_g = vec![T::ZERO; c];
    let mut sum_gx = vec![T::ZERO; c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * plane;
            for i in base..base + plane {
                sum_g[ch] += gd[i];
                sum_gx[ch] += gd[i] * xhat[i];
            }
        }
    }
    if sink.wants(x) {
        let gamma = sink.value(scale).data().to_vec();
        let count = T::from_usize(n * plane);
        let mut gx = vec![T::ZERO; gd.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let k = gamma[ch] * inv_std[ch];
                for i in base..base + plane {
                    gx[i] = if batch_stats {
                        k * (gd[i] - sum_g[ch] / count - xhat[i] * sum_gx[ch] / count)
                    } else {
                        k * gd[i]
                    };
                }
            }
        }
        sink.accumulate(x, Tensor::from_parts(shape.clone(), gx));
    }
    sink.accumulate(scale, Tensor::from_parts(vec![c], sum_gx));
    sink.accumulate(shift, Tensor::from_parts(vec![c], sum_g));
}
