use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Output extent of a strided, zero-padded window sweep.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if !(1..=2).contains(&stride) {
        return Err(Error::shape(format!("stride must be 1 or 2, got {stride}")));
    }
    if input + 2 * pad < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} larger than padded input {}",
            input + 2 * pad
        )));
    }
    Ok((input + 2 * pad - kernel) / stride + 1)
}

/// Range of output columns `ox` for which `ox * stride + k - pad` lands inside `[0, len)`.
#[inline]
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi = if len + pad <= k {
        0
    } else {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

/// Accumulates the cross-correlation of one input plane with one kernel
/// plane into `out`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn correlate_plane(
    out: &mut [f64],
    plane: &[f64],
    kernel: &[f64],
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    (oh, ow): (usize, usize),
    stride: usize,
    pad: usize,
) {
    for ky in 0..kh {
        let (oy_lo, oy_hi) = valid_range(h, oh, ky, stride, pad);
        for kx in 0..kw {
            let wv = kernel[ky * kw + kx];
            let (ox_lo, ox_hi) = valid_range(w, ow, kx, stride, pad);
            if ox_lo >= ox_hi {
                continue;
            }
            for oy in oy_lo..oy_hi {
                let iy = oy * stride + ky - pad;
                let row = &plane[iy * w..(iy + 1) * w];
                let orow = &mut out[oy * ow..(oy + 1) * ow];
                if stride == 1 {
                    let ix0 = ox_lo + kx - pad;
                    let src = &row[ix0..ix0 + (ox_hi - ox_lo)];
                    for (o, x) in orow[ox_lo..ox_hi].iter_mut().zip(src) {
                        *o += wv * x;
                    }
                } else {
                    for ox in ox_lo..ox_hi {
                        orow[ox] += wv * row[ox * stride + kx - pad];
                    }
                }
            }
        }
    }
}

/// Gradient routing for [`correlate_plane`]: accumulates into `grad_plane`
/// the input gradient and returns nothing; kernel gradients go to `grad_kernel`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn correlate_plane_backward(
    grad_plane: &mut [f64],
    grad_kernel: &mut [f64],
    plane: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    (oh, ow): (usize, usize),
    stride: usize,
    pad: usize,
) {
    for ky in 0..kh {
        let (oy_lo, oy_hi) = valid_range(h, oh, ky, stride, pad);
        for kx in 0..kw {
            let wv = kernel[ky * kw + kx];
            let (ox_lo, ox_hi) = valid_range(w, ow, kx, stride, pad);
            if ox_lo >= ox_hi {
                continue;
            }
            let mut gk = 0.0;
            for oy in oy_lo..oy_hi {
                let iy = oy * stride + ky - pad;
                let grow = &grad_out[oy * ow..(oy + 1) * ow];
                if stride == 1 {
                    let ix0 = ox_lo + kx - pad;
                    let n = ox_hi - ox_lo;
                    let row = &plane[iy * w + ix0..iy * w + ix0 + n];
                    let grow = &grow[ox_lo..ox_hi];
                    for (g, x) in grow.iter().zip(row) {
                        gk += g * x;
                    }
                    let gin = &mut grad_plane[iy * w + ix0..iy * w + ix0 + n];
                    for (gi, g) in gin.iter_mut().zip(grow) {
                        *gi += wv * g;
                    }
                } else {
                    for (ox, &g) in grow.iter().enumerate().take(ox_hi).skip(ox_lo) {
                        let ix = ox * stride + kx - pad;
                        gk += g * plane[iy * w + ix];
                        grad_plane[iy * w + ix] += wv * g;
                    }
                }
            }
            grad_kernel[ky * kw + kx] += gk;
        }
    }
}

/// Forward record of a dense 2-D convolution.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Tensor,
    kernels: Tensor,
    stride: usize,
    pad: usize,
    out_shape: [usize; 3],
}

impl ConvCache {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.out_shape
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Zero-padded cross-correlation of `input [C,H,W]` with `kernels [F,C,kh,kw]`
/// plus `bias [F]`.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, ConvCache)> {
    let (c, h, w) = input.dims3()?;
    let (f, kc, kh, kw) = match kernels.shape()[..] {
        [f, kc, kh, kw] => (f, kc, kh, kw),
        _ => {
            return Err(Error::shape(format!(
                "kernels must be [F, C, kh, kw], got {:?}",
                kernels.shape()
            )))
        }
    };
    if kc != c {
        return Err(Error::shape(format!(
            "input has {c} channels but kernels expect {kc} (input {:?}, kernels {:?})",
            input.shape(),
            kernels.shape()
        )));
    }
    expect_shape("conv bias", bias, &[f])?;
    let oh = conv_output_dim(h, kh, stride, pad)?;
    let ow = conv_output_dim(w, kw, stride, pad)?;

    let mut out = vec![0.0; f * oh * ow];
    let x = input.data();
    let k = kernels.data();
    for (fi, oplane) in out.chunks_exact_mut(oh * ow).enumerate() {
        for ci in 0..c {
            correlate_plane(
                oplane,
                &x[ci * h * w..(ci + 1) * h * w],
                &k[(fi * c + ci) * kh * kw..(fi * c + ci + 1) * kh * kw],
                (h, w),
                (kh, kw),
                (oh, ow),
                stride,
                pad,
            );
        }
        let b = bias.data()[fi];
        for v in oplane.iter_mut() {
            *v += b;
        }
    }
    let output = Tensor::new(vec![f, oh, ow], out)?;
    let cache = ConvCache {
        input: input.clone(),
        kernels: kernels.clone(),
        stride,
        pad,
        out_shape: [f, oh, ow],
    };
    Ok((output, cache))
}

pub fn conv2d_backward(cache: &ConvCache, grad_out: &Tensor) -> Result<ConvGrads> {
    if grad_out.shape() != cache.out_shape {
        return Err(Error::StaleCache(format!(
            "conv2d grad_out shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    let (c, h, w) = cache.input.dims3()?;
    let ks = cache.kernels.shape();
    let (kh, kw) = (ks[2], ks[3]);
    let [f, oh, ow] = cache.out_shape;

    let mut grad_input = vec![0.0; c * h * w];
    let mut grad_kernels = vec![0.0; cache.kernels.len()];
    let mut grad_bias = vec![0.0; f];
    let x = cache.input.data();
    let k = cache.kernels.data();
    let g = grad_out.data();
    for fi in 0..f {
        let gplane = &g[fi * oh * ow..(fi + 1) * oh * ow];
        grad_bias[fi] = gplane.iter().sum();
        for ci in 0..c {
            let kr = (fi * c + ci) * kh * kw..(fi * c + ci + 1) * kh * kw;
            correlate_plane_backward(
                &mut grad_input[ci * h * w..(ci + 1) * h * w],
                &mut grad_kernels[kr.clone()],
                &x[ci * h * w..(ci + 1) * h * w],
                &k[kr],
                gplane,
                (h, w),
                (kh, kw),
                (oh, ow),
                cache.stride,
                cache.pad,
            );
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(vec![c, h, w], grad_input)?,
        kernels: Tensor::new(ks.to_vec(), grad_kernels)?,
        bias: Tensor::new(vec![f], grad_bias)?,
    })
}

/// Forward record of a depthwise-separable convolution.
#[derive(Debug, Clone)]
pub struct SepConvCache {
    input: Tensor,
    depthwise: Tensor,
    stride: usize,
    pad: usize,
    mid_shape: [usize; 3],
    pointwise: ConvCache,
}

impl SepConvCache {
    pub fn output_shape(&self) -> [usize; 3] {
        self.pointwise.out_shape
    }
}

#[derive(Debug, Clone)]
pub struct SepConvGrads {
    pub input: Tensor,
    pub depthwise: Tensor,
    pub pointwise: Tensor,
    pub bias: Tensor,
}

/// Depthwise stage (`depthwise [C,kh,kw]`, one kernel per channel, no bias)
/// followed by a 1×1 pointwise convolution (`pointwise [F,C,1,1]`, `bias [F]`).
pub fn sepconv2d_forward(
    input: &Tensor,
    depthwise: &Tensor,
    pointwise: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, SepConvCache)> {
    let (c, h, w) = input.dims3()?;
    let (dc, kh, kw) = match depthwise.shape()[..] {
        [dc, kh, kw] => (dc, kh, kw),
        _ => {
            return Err(Error::shape(format!(
                "depthwise kernels must be [C, kh, kw], got {:?}",
                depthwise.shape()
            )))
        }
    };
    if dc != c {
        return Err(Error::shape(format!(
            "input has {c} channels but depthwise kernels expect {dc}"
        )));
    }
    match pointwise.shape()[..] {
        [_, pc, 1, 1] if pc == c => {}
        _ => {
            return Err(Error::shape(format!(
                "pointwise kernels must be [F, {c}, 1, 1], got {:?}",
                pointwise.shape()
            )))
        }
    }
    let oh = conv_output_dim(h, kh, stride, pad)?;
    let ow = conv_output_dim(w, kw, stride, pad)?;

    let mut mid = vec![0.0; c * oh * ow];
    let x = input.data();
    let d = depthwise.data();
    for (ci, mplane) in mid.chunks_exact_mut(oh * ow).enumerate() {
        correlate_plane(
            mplane,
            &x[ci * h * w..(ci + 1) * h * w],
            &d[ci * kh * kw..(ci + 1) * kh * kw],
            (h, w),
            (kh, kw),
            (oh, ow),
            stride,
            pad,
        );
    }
    let mid = Tensor::new(vec![c, oh, ow], mid)?;
    let (out, pw_cache) = conv2d_forward(&mid, pointwise, bias, 1, 0)?;
    let cache = SepConvCache {
        input: input.clone(),
        depthwise: depthwise.clone(),
        stride,
        pad,
        mid_shape: [c, oh, ow],
        pointwise: pw_cache,
    };
    Ok((out, cache))
}

pub fn sepconv2d_backward(cache: &SepConvCache, grad_out: &Tensor) -> Result<SepConvGrads> {
    let pw = conv2d_backward(&cache.pointwise, grad_out)?;
    let (c, h, w) = cache.input.dims3()?;
    let ds = cache.depthwise.shape();
    let (kh, kw) = (ds[1], ds[2]);
    let [_, oh, ow] = cache.mid_shape;

    let mut grad_input = vec![0.0; c * h * w];
    let mut grad_dw = vec![0.0; cache.depthwise.len()];
    let x = cache.input.data();
    let d = cache.depthwise.data();
    let gm = pw.input.data();
    for ci in 0..c {
        let kr = ci * kh * kw..(ci + 1) * kh * kw;
        correlate_plane_backward(
            &mut grad_input[ci * h * w..(ci + 1) * h * w],
            &mut grad_dw[kr.clone()],
            &x[ci * h * w..(ci + 1) * h * w],
            &d[kr],
            &gm[ci * oh * ow..(ci + 1) * oh * ow],
            (h, w),
            (kh, kw),
            (oh, ow),
            cache.stride,
            cache.pad,
        );
    }
    Ok(SepConvGrads {
        input: Tensor::new(vec![c, h, w], grad_input)?,
        depthwise: Tensor::new(ds.to_vec(), grad_dw)?,
        pointwise: pw.kernels,
        bias: pw.bias,
    })
}
