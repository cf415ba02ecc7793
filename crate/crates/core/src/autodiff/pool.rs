use super::conv::conv2d_output_extent;
use super::{GradSink, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

impl<T: Real> Graph<T> {
    /// Windowed maximum over NCHW input. Padding cells never win; ties go
    /// to the first element in row-major window order.
    pub fn max_pool2d(
        &mut self,
        x: Var,
        window: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: "max pooling expects NCHW input".into(),
            });
        }
        let (n, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let reject = |reason: &str| Error::InvalidShape {
            shape: xv.shape().to_vec(),
            reason: format!("pool window {window} stride {stride} padding {padding}: {reason}"),
        };
        if 2 * padding > window {
            return Err(reject("padding exceeds half the window"));
        }
        let (Some(ho), Some(wo)) = (
            conv2d_output_extent(h, window, stride, padding),
            conv2d_output_extent(w, window, stride, padding),
        ) else {
            return Err(reject("window does not fit the input"));
        };
        let src = xv.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let p = padding as isize;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best: Option<usize> = None;
                    for ky in 0..window {
                        let iy = (oy * stride) as isize - p + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..window {
                            let ix = (ox * stride) as isize - p + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if best.is_none_or(|b| src[idx] > src[b]) {
                                best = Some(idx);
                            }
                        }
                    }
                    let best = best.expect("window overlaps the input");
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        self.push(out, Op::MaxPool { x, argmax }, &[x], "max_pool2d")
    }

    /// Spatial mean per channel: `(N, C, H, W) -> (N, C)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: "global average pooling expects NCHW input".into(),
            });
        }
        let (n, c) = (xv.shape()[0], xv.shape()[1]);
        let plane = xv.shape()[2] * xv.shape()[3];
        let denom = T::from_usize(plane);
        let out: Vec<T> = xv
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<T>() / denom)
            .collect();
        self.push(
            Tensor::from_parts(vec![n, c], out),
            Op::GlobalAvgPool { x },
            &[x],
            "global_avg_pool",
        )
    }
}

pub(super) fn max_pool_backward<T: Real>(
    x: Var,
    argmax: &[usize],
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let shape = sink.value(x).shape().to_vec();
    let mut gx = vec![T::ZERO; sink.value(x).len()];
    for (&src, &gi) in argmax.iter().zip(g.data()) {
        gx[src] += gi;
    }
    sink.accumulate(x, Tensor::from_parts(shape, gx));
}

pub(super) fn global_avg_pool_backward<T: Real>(x: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let shape = sink.value(x).shape().to_vec();
    let plane = shape[2] * shape[3];
    let denom = T::from_usize(plane);
    let mut gx = Vec::with_capacity(sink.value(x).len());
    for &gi in g.data() {
        let v = gi / denom;
        gx.extend(std::iter::repeat_n(v, plane));
    }
    sink.accumulate(x, Tensor::from_parts(shape, gx));
}
