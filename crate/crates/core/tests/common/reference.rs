//! Naive-loop reference implementations of every layer, generic over the
//! scalar type. Instantiated with `f64` they are plain loop oracles; with
//! `TwoFloat` (double-double) they give finite-difference oracles whose
//! rounding noise is far below the gradients being checked.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use fusedet::nets::{Checkpoint, Layer, NetworkSpec};
use twofloat::TwoFloat;

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + PartialOrd + From<f64>
{
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for TwoFloat {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

pub fn lift<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::from(x)).collect()
}

/// Cross-correlation with zero padding. `x: [c,h,w]`, `k: [f,c,kh,kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv<S: Scalar>(
    x: &[S],
    (c, h, w): (usize, usize, usize),
    k: &[S],
    (f, kh, kw): (usize, usize, usize),
    b: Option<&[S]>,
    stride: usize,
    pad: usize,
) -> (Vec<S>, (usize, usize, usize)) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let zero = S::from(0.0);
    let mut out = vec![zero; f * oh * ow];
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = zero;
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s = s + k[((fi * c + ci) * kh + ky) * kw + kx]
                                * x[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(fi * oh + oy) * ow + ox] = match b {
                    Some(b) => s + b[fi],
                    None => s,
                };
            }
        }
    }
    (out, (f, oh, ow))
}

/// Per-channel cross-correlation. `k: [c,kh,kw]`.
pub fn depthwise<S: Scalar>(
    x: &[S],
    (c, h, w): (usize, usize, usize),
    k: &[S],
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<S>, (usize, usize, usize)) {
    let mut out = Vec::new();
    let mut dims = (c, 0, 0);
    for ci in 0..c {
        let (o, (_, oh, ow)) = conv(
            &x[ci * h * w..(ci + 1) * h * w],
            (1, h, w),
            &k[ci * kh * kw..(ci + 1) * kh * kw],
            (1, kh, kw),
            None,
            stride,
            pad,
        );
        dims = (c, oh, ow);
        out.extend(o);
    }
    (out, dims)
}

pub fn relu<S: Scalar>(x: &mut [S], routing: &mut Vec<u64>) {
    let zero = S::from(0.0);
    for v in x {
        let on = *v > zero;
        routing.push(on as u64);
        if !on {
            *v = zero;
        }
    }
}

pub fn maxpool<S: Scalar>(
    x: &[S],
    (c, h, w): (usize, usize, usize),
    routing: &mut Vec<u64>,
) -> (Vec<S>, (usize, usize, usize)) {
    let mut out = Vec::with_capacity(c * h * w / 4);
    for ci in 0..c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut best = (ci * h + 2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (ci * h + 2 * oy + dy) * w + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                routing.push(best as u64);
                out.push(x[best]);
            }
        }
    }
    (out, (c, h / 2, w / 2))
}

pub fn dense<S: Scalar>(x: &[S], wt: &[S], b: &[S], m: usize) -> Vec<S> {
    let n = x.len();
    (0..m)
        .map(|r| {
            let mut s = S::from(0.0);
            for j in 0..n {
                s = s + wt[r * n + j] * x[j];
            }
            s + b[r]
        })
        .collect()
}

pub type ScalarParams<S> = BTreeMap<String, Vec<S>>;

pub fn lift_params<S: Scalar>(ckpt: &Checkpoint) -> ScalarParams<S> {
    ckpt.params
        .iter()
        .map(|(k, t)| (k.clone(), lift(t.data())))
        .collect()
}

/// Reference network forward. Returns the two logits and the routing
/// record (every ReLU gate and pooling argmax).
pub fn net_logits<S: Scalar>(spec: &NetworkSpec, params: &ScalarParams<S>, image: &[S]) -> ([S; 2], Vec<u64>) {
    let [c, h, w] = spec.input_shape;
    let mut x: Vec<S> = image
        .iter()
        .map(|&v| S::from(2.0) * v - S::from(1.0))
        .collect();
    let mut dims = (c, h, w);
    let mut routing = Vec::new();
    let p = |name: String| -> &Vec<S> { &params[&name] };
    for layer in &spec.layers {
        match layer {
            Layer::Conv {
                name,
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => {
                let (y, d) = conv(
                    &x,
                    dims,
                    p(format!("{name}.weight")),
                    (*out_channels, *kernel, *kernel),
                    Some(p(format!("{name}.bias"))),
                    *stride,
                    *pad,
                );
                x = y;
                dims = d;
            }
            Layer::SepConv {
                name,
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => {
                let (mid, md) = depthwise(&x, dims, p(format!("{name}.depthwise")), (*kernel, *kernel), *stride, *pad);
                let (y, d) = conv(
                    &mid,
                    md,
                    p(format!("{name}.pointwise")),
                    (*out_channels, 1, 1),
                    Some(p(format!("{name}.bias"))),
                    1,
                    0,
                );
                x = y;
                dims = d;
            }
            Layer::Branch { name, arms, .. } => {
                let mut out = Vec::new();
                let mut channels = 0;
                for (i, arm) in arms.iter().enumerate() {
                    let (mut y, _) = conv(
                        &x,
                        dims,
                        p(format!("{name}.arm{i}.weight")),
                        (arm.out_channels, arm.kernel, arm.kernel),
                        Some(p(format!("{name}.arm{i}.bias"))),
                        1,
                        arm.kernel / 2,
                    );
                    relu(&mut y, &mut routing);
                    out.extend(y);
                    channels += arm.out_channels;
                }
                x = out;
                dims = (channels, dims.1, dims.2);
            }
            Layer::Relu => relu(&mut x, &mut routing),
            Layer::MaxPool => {
                let (y, d) = maxpool(&x, dims, &mut routing);
                x = y;
                dims = d;
            }
            Layer::Flatten => {}
            Layer::Dense { name, outputs, .. } => {
                x = dense(&x, p(format!("{name}.weight")), p(format!("{name}.bias")), *outputs);
            }
        }
    }
    ([x[0], x[1]], routing)
}

/// `softplus(b) - softplus(a)` for nearby margins, accurate to f64
/// relative precision: `log1p(sigmoid(a) · expm1(b - a))`.
pub fn softplus_difference(a: TwoFloat, b: TwoFloat) -> f64 {
    let delta = f64::from(b - a);
    let a = f64::from(a);
    let sig = if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        a.exp() / (1.0 + a.exp())
    };
    (sig * delta.exp_m1()).ln_1p()
}
