use super::{GradSink, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Output extent of a convolution or pooling window sweep, or `None` when the
/// window does not fit.
pub fn conv2d_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Resolved shapes of one NCHW convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_height * self.out_width
    }

    fn in_sample(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds one sample `(C,H,W)` into a `(C·K·K, H'·W')` patch matrix.
fn im2col<T: Real>(x: &[T], geom: &ConvGeometry, cols: &mut [T]) {
    let (k, s, p) = (geom.kernel, geom.stride, geom.padding as isize);
    let plane = geom.out_plane();
    for c in 0..geom.in_channels {
        let channel = &x[c * geom.height * geom.width..(c + 1) * geom.height * geom.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * plane;
                for oy in 0..geom.out_height {
                    let iy = (oy * s) as isize - p + ki as isize;
                    let dst = &mut cols[row + oy * geom.out_width..row + (oy + 1) * geom.out_width];
                    if iy < 0 || iy >= geom.height as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &channel[iy as usize * geom.width..(iy as usize + 1) * geom.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s) as isize - p + kj as isize;
                        *d = if ix < 0 || ix >= geom.width as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto `(C,H,W)`.
fn col2im<T: Real>(cols: &[T], geom: &ConvGeometry, x: &mut [T]) {
    let (k, s, p) = (geom.kernel, geom.stride, geom.padding as isize);
    let plane = geom.out_plane();
    for c in 0..geom.in_channels {
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * plane;
                for oy in 0..geom.out_height {
                    let iy = (oy * s) as isize - p + ki as isize;
                    if iy < 0 || iy >= geom.height as isize {
                        continue;
                    }
                    let base = (c * geom.height + iy as usize) * geom.width;
                    for ox in 0..geom.out_width {
                        let ix = (ox * s) as isize - p + kj as isize;
                        if ix >= 0 && ix < geom.width as isize {
                            x[base + ix as usize] += cols[row + oy * geom.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// 2-D cross-correlation over NCHW input with a square `(O, C, K, K)`
    /// kernel, zero padding and an optional per-output-channel bias.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weight));
        let mismatch = || Error::ShapeMismatch {
            op: "conv2d",
            lhs: xv.shape().to_vec(),
            rhs: wv.shape().to_vec(),
        };
        if xv.rank() != 4
            || wv.rank() != 4
            || xv.shape()[1] != wv.shape()[1]
            || wv.shape()[2] != wv.shape()[3]
        {
            return Err(mismatch());
        }
        let (n, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (o, k) = (wv.shape()[0], wv.shape()[2]);
        let (Some(ho), Some(wo)) = (
            conv2d_output_extent(h, k, stride, padding),
            conv2d_output_extent(w, k, stride, padding),
        ) else {
            return Err(mismatch());
        };
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.rank() != 1 || bv.len() != o {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: wv.shape().to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
        }
        let geom = ConvGeometry {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            out_channels: o,
            kernel: k,
            stride,
            padding,
            out_height: ho,
            out_width: wo,
        };
        let plane = geom.out_plane();
        let mut out = vec![T::ZERO; n * o * plane];
        let mut cols = if geom.is_pointwise() {
            Vec::new()
        } else {
            vec![T::ZERO; geom.patch() * plane]
        };
        for s in 0..n {
            let xs = &xv.data()[s * geom.in_sample()..(s + 1) * geom.in_sample()];
            let patches: &[T] = if geom.is_pointwise() {
                xs
            } else {
                im2col(xs, &geom, &mut cols);
                &cols
            };
            let ys = &mut out[s * o * plane..(s + 1) * o * plane];
            T::gemm(
                o,
                geom.patch(),
                plane,
                wv.data(),
                false,
                patches,
                false,
                ys,
                false,
            );
        }
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for (idx, chunk) in out.chunks_mut(plane).enumerate() {
                let bo = bd[idx % o];
                chunk.iter_mut().for_each(|v| *v += bo);
            }
        }
        let out = Tensor::from_parts(vec![n, o, ho, wo], out);
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.push(
            out,
            Op::Conv2d {
                x,
                weight,
                bias,
                geom,
            },
            &inputs,
            "conv2d",
        )
    }
}

pub(super) fn conv2d_backward<T: Real>(
    x: Var,
    weight: Var,
    bias: Option<Var>,
    geom: &ConvGeometry,
    g: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let plane = geom.out_plane();
    let o = geom.out_channels;
    let patch = geom.patch();
    if let Some(b) = bias.filter(|&b| sink.wants(b)) {
        let mut gb = vec![T::ZERO; o];
        for (idx, chunk) in g.data().chunks(plane).enumerate() {
            gb[idx % o] += chunk.iter().copied().sum::<T>();
        }
        sink.accumulate(b, Tensor::from_parts(vec![o], gb));
    }
    let want_w = sink.wants(weight);
    let want_x = sink.wants(x);
    if !want_w && !want_x {
        return;
    }
    let mut gw = if want_w {
        vec![T::ZERO; o * patch]
    } else {
        Vec::new()
    };
    let mut gx = if want_x {
        vec![T::ZERO; geom.batch * geom.in_sample()]
    } else {
        Vec::new()
    };
    let mut cols = vec![T::ZERO; patch * plane];
    let mut dcols = vec![T::ZERO; patch * plane];
    let xd = sink.value(x).data();
    let wd = sink.value(weight).data();
    for s in 0..geom.batch {
        let gs = &g.data()[s * o * plane..(s + 1) * o * plane];
        if want_w {
            let xs = &xd[s * geom.in_sample()..(s + 1) * geom.in_sample()];
            let patches: &[T] = if geom.is_pointwise() {
                xs
            } else {
                im2col(xs, geom, &mut cols);
                &cols
            };
            T::gemm(o, plane, patch, gs, false, patches, true, &mut gw, true);
        }
        if want_x {
            T::gemm(patch, o, plane, wd, true, gs, false, &mut dcols, false);
            let gxs = &mut gx[s * geom.in_sample()..(s + 1) * geom.in_sample()];
            if geom.is_pointwise() {
                gxs.iter_mut().zip(&dcols).for_each(|(a, &b)| *a += b);
            } else {
                col2im(&dcols, geom, gxs);
            }
        }
    }
    if want_w {
        let shape = sink.value(weight).shape().to_vec();
        sink.accumulate(weight, Tensor::from_parts(shape, gw));
    }
    if want_x {
        let shape = sink.value(x).shape().to_vec();
        sink.accumulate(x, Tensor::from_parts(shape, gx));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv2d_output_extent(224, 3, 2, 1), Some(112));
        assert_eq!(conv2d_output_extent(5, 3, 1, 0), Some(3));
        assert_eq!(conv2d_output_extent(2, 3, 1, 0), None);
        assert_eq!(conv2d_output_extent(5, 3, 0, 0), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
        let geom = ConvGeometry {
            batch: 1,
            in_channels: 2,
            height: 5,
            width: 4,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            padding: 1,
            out_height: 3,
            out_width: 2,
        };
        let x: Vec<f64> = (0..geom.in_sample())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let c: Vec<f64> = (0..geom.patch() * geom.out_plane())
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, &geom, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, &geom, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
