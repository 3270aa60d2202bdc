//! Forward and backward compute kernels on plain tensors.
//!
//! The autograd graph calls into these; frozen networks (the random feature
//! extractor) call the forward halves directly.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (n, c, h, w) = match *input {
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::shape("conv2d input (expected NCHW)", input, weight)),
        };
        let (co, ci, kh, kw) = match *weight {
            [co, ci, kh, kw] => (co, ci, kh, kw),
            _ => return Err(Error::shape("conv2d weight (expected [C_out,C_in,K,K])", input, weight)),
        };
        if ci != c {
            return Err(Error::shape("conv2d channel count", input, weight));
        }
        if kh != kw {
            return Err(Error::shape("conv2d needs a square kernel", input, weight));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if kh > h + 2 * padding || kh > w + 2 * padding {
            return Err(Error::shape("conv2d kernel larger than padded input", input, weight));
        }
        Ok(Self {
            batch: n,
            in_channels: c,
            out_channels: co,
            kernel: kh,
            in_h: h,
            in_w: w,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
            stride,
            padding,
        })
    }

    fn pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }
}

fn im2col<T: Real>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let plane = g.out_plane();
    for ci in 0..g.in_channels {
        let src = &image[ci * g.in_plane()..(ci + 1) * g.in_plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky) as isize - p;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let plane = g.out_plane();
    for ci in 0..g.in_channels {
        let dst = &mut image[ci * g.in_plane()..(ci + 1) * g.in_plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * s + kx) as isize - p;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst_row[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_channels] {
            return Err(Error::shape("conv2d bias", b.shape(), &[g.out_channels]));
        }
    }
    let plane = g.out_plane();
    let mut out = vec![T::zero(); g.batch * g.out_channels * plane];
    let mut cols = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.col_rows() * plane]
    };
    let in_stride = g.in_channels * g.in_plane();
    for n in 0..g.batch {
        let image = &input.data()[n * in_stride..(n + 1) * in_stride];
        let dst = &mut out[n * g.out_channels * plane..(n + 1) * g.out_channels * plane];
        let b_mat: &[T] = if g.pointwise() {
            image
        } else {
            im2col(&g, image, &mut cols);
            &cols
        };
        if let Some(b) = bias {
            for (co, chunk) in dst.chunks_mut(plane).enumerate() {
                chunk.fill(b.data()[co]);
            }
        }
        gemm(
            g.out_channels,
            g.col_rows(),
            plane,
            weight.data(),
            false,
            b_mat,
            false,
            dst,
            bias.is_some(),
        );
    }
    Tensor::new(vec![g.batch, g.out_channels, g.out_h, g.out_w], out)
}

/// Gradients of `conv2d` for the requested operands.
pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &[T],
    stride: usize,
    padding: usize,
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    let plane = g.out_plane();
    let in_stride = g.in_channels * g.in_plane();
    let out_stride = g.out_channels * plane;
    let mut d_input = want_input.then(|| vec![T::zero(); input.numel()]);
    let mut d_weight = want_weight.then(|| vec![T::zero(); weight.numel()]);
    let d_bias = want_bias.then(|| {
        let mut db = vec![T::zero(); g.out_channels];
        for n in 0..g.batch {
            for (co, acc) in db.iter_mut().enumerate() {
                let start = n * out_stride + co * plane;
                *acc += grad_out[start..start + plane].iter().copied().sum::<T>();
            }
        }
        db
    });

    let mut cols = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.col_rows() * plane]
    };
    for n in 0..g.batch {
        let dout = &grad_out[n * out_stride..(n + 1) * out_stride];
        if let Some(dw) = d_weight.as_mut() {
            let image = &input.data()[n * in_stride..(n + 1) * in_stride];
            let b_mat: &[T] = if g.pointwise() {
                image
            } else {
                im2col(&g, image, &mut cols);
                &cols
            };
            // dW += dOut (C_out x P) * cols^T (P x C_in K K)
            gemm(g.out_channels, plane, g.col_rows(), dout, false, b_mat, true, dw, true);
        }
        if let Some(di) = d_input.as_mut() {
            let dst = &mut di[n * in_stride..(n + 1) * in_stride];
            if g.pointwise() {
                gemm(g.col_rows(), g.out_channels, plane, weight.data(), true, dout, false, dst, false);
            } else {
                gemm(g.col_rows(), g.out_channels, plane, weight.data(), true, dout, false, &mut cols, false);
                col2im(&g, &cols, dst);
            }
        }
    }
    Ok(ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}

/// 2x2 max pooling; also returns, per output cell, the flat input index of
/// the selected maximum (first in row-major window order on ties).
pub fn max_pool2d<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!(
            "max_pool2d needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, argmax))
}

/// Per-axis bilinear taps for align-corners-false resampling.
#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    w1: T,
}

fn taps<T: Real>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            Tap {
                i0,
                i1,
                w1: T::lit(frac),
            }
        })
        .collect()
}

/// Bilinear resize of every plane of an NCHW tensor to `out_h x out_w`.
pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    let ty = taps::<T>(h, out_h);
    let tx = taps::<T>(w, out_w);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for t_y in &ty {
            let wy0 = T::one() - t_y.w1;
            for t_x in &tx {
                let wx0 = T::one() - t_x.w1;
                let top = src[t_y.i0 * w + t_x.i0] * wx0 + src[t_y.i0 * w + t_x.i1] * t_x.w1;
                let bot = src[t_y.i1 * w + t_x.i0] * wx0 + src[t_y.i1 * w + t_x.i1] * t_x.w1;
                out.push(top * wy0 + bot * t_y.w1);
            }
        }
    }
    Tensor::new(vec![n, c, out_h, out_w], out)
}

pub fn upsample_bilinear<T: Real>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be at least 1"));
    }
    let (_, _, h, w) = input.dims4()?;
    if factor == 1 {
        return Tensor::new(input.shape().to_vec(), input.data().to_vec());
    }
    resize_bilinear(input, h * factor, w * factor)
}

/// Adjoint of [`resize_bilinear`]: scatters `grad_out` back onto the input grid.
pub fn resize_bilinear_backward<T: Real>(
    in_shape: &[usize],
    out_h: usize,
    out_w: usize,
    grad_out: &[T],
) -> Vec<T> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let ty = taps::<T>(h, out_h);
    let tx = taps::<T>(w, out_w);
    let mut grad = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let dst = &mut grad[plane * h * w..(plane + 1) * h * w];
        let src = &grad_out[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        for (oy, t_y) in ty.iter().enumerate() {
            let wy0 = T::one() - t_y.w1;
            for (ox, t_x) in tx.iter().enumerate() {
                let g = src[oy * out_w + ox];
                let wx0 = T::one() - t_x.w1;
                dst[t_y.i0 * w + t_x.i0] += g * wy0 * wx0;
                dst[t_y.i0 * w + t_x.i1] += g * wy0 * t_x.w1;
                dst[t_y.i1 * w + t_x.i0] += g * t_y.w1 * wx0;
                dst[t_y.i1 * w + t_x.i1] += g * t_y.w1 * t_x.w1;
            }
        }
    }
    grad
}
