//! Randomized per-primitive gradient checks against double-double
//! reference layers.

use fusedet::tensor::gradcheck::{GradCheck, GradCheckReport};
use fusedet::tensor::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu_backward, relu_forward, sepconv2d_backward, sepconv2d_forward,
    softmax_xent,
};
use fusedet::{Label, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

use super::reference::{conv, dense, depthwise, lift, maxpool, relu, softplus_difference};
use super::{dd_check, dd_check_linear, dot_dd};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn merged(tol: f64, parts: &[GradCheckReport]) -> GradCheckReport {
    let mut r = GradCheckReport::empty(tol);
    parts.iter().for_each(|p| r.merge(p));
    r
}

type Dd = TwoFloat;

pub fn conv_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, f) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(5..=7), rng.gen_range(5..=7));
    let k = [1, 3][rng.gen_range(0..2)];
    let (stride, pad) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
    let x = random(&mut rng, &[c, h, w]);
    let kern = random(&mut rng, &[f, c, k, k]);
    let b = random(&mut rng, &[f]);
    let (y, cache) = conv2d_forward(&x, &kern, &b, stride, pad).unwrap();
    let proj = random(&mut rng, y.shape());
    let g = conv2d_backward(&cache, &proj).unwrap();
    let (xd, kd, bd) = (lift::<Dd>(x.data()), lift::<Dd>(kern.data()), lift::<Dd>(b.data()));
    let run = |x: &[Dd], kk: &[Dd], bb: &[Dd]| {
        let (out, _) = conv(x, (c, h, w), kk, (f, k, k), Some(bb), stride, pad);
        Some(dot_dd(&out, proj.data()))
    };
    merged(
        check.tol,
        &[
            dd_check_linear(check, &x, &g.input, |v| run(v, &kd, &bd)),
            dd_check_linear(check, &kern, &g.kernels, |v| run(&xd, v, &bd)),
            dd_check_linear(check, &b, &g.bias, |v| run(&xd, &kd, v)),
        ],
    )
}

pub fn sepconv_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, f) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(5..=7), rng.gen_range(5..=7));
    let k = [1, 3][rng.gen_range(0..2)];
    let (stride, pad) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
    let x = random(&mut rng, &[c, h, w]);
    let dw = random(&mut rng, &[c, k, k]);
    let pw = random(&mut rng, &[f, c, 1, 1]);
    let b = random(&mut rng, &[f]);
    let (y, cache) = sepconv2d_forward(&x, &dw, &pw, &b, stride, pad).unwrap();
    let proj = random(&mut rng, y.shape());
    let g = sepconv2d_backward(&cache, &proj).unwrap();
    let lifted = [&x, &dw, &pw, &b].map(|t| lift::<Dd>(t.data()));
    let run = |x: &[Dd], d: &[Dd], p: &[Dd], bb: &[Dd]| {
        let (mid, md) = depthwise(x, (c, h, w), d, (k, k), stride, pad);
        let (out, _) = conv(&mid, md, p, (f, 1, 1), Some(bb), 1, 0);
        Some(dot_dd(&out, proj.data()))
    };
    let [xd, dd, pd, bd] = &lifted;
    merged(
        check.tol,
        &[
            dd_check_linear(check, &x, &g.input, |v| run(v, dd, pd, bd)),
            dd_check_linear(check, &dw, &g.depthwise, |v| run(xd, v, pd, bd)),
            dd_check_linear(check, &pw, &g.pointwise, |v| run(xd, dd, v, bd)),
            dd_check_linear(check, &b, &g.bias, |v| run(xd, dd, pd, v)),
        ],
    )
}

pub fn dense_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
    let x = random(&mut rng, &[n]);
    let wt = random(&mut rng, &[m, n]);
    let b = random(&mut rng, &[m]);
    let (_, cache) = dense_forward(&x, &wt, &b).unwrap();
    let proj = random(&mut rng, &[m]);
    let g = dense_backward(&cache, &proj).unwrap();
    let (xd, wd, bd) = (lift::<Dd>(x.data()), lift::<Dd>(wt.data()), lift::<Dd>(b.data()));
    let run = |x: &[Dd], ww: &[Dd], bb: &[Dd]| Some(dot_dd(&dense(x, ww, bb, m), proj.data()));
    merged(
        check.tol,
        &[
            dd_check_linear(check, &x, &g.input, |v| run(v, &wd, &bd)),
            dd_check_linear(check, &wt, &g.weights, |v| run(&xd, v, &bd)),
            dd_check_linear(check, &b, &g.bias, |v| run(&xd, &wd, v)),
        ],
    )
}

/// Inputs are kept at least 0.01 away from the kink.
pub fn relu_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=32);
    let x = Tensor::from_fn(&[n], |_| {
        let mag = rng.gen_range(0.01..1.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    });
    let proj = random(&mut rng, &[n]);
    let (_, cache) = relu_forward(&x);
    let g = relu_backward(&cache, &proj).unwrap();
    dd_check_linear(check, &x, &g, |v| {
        let mut y = v.to_vec();
        relu(&mut y, &mut Vec::new());
        Some(dot_dd(&y, proj.data()))
    })
}

/// Elements whose perturbation changes a window's argmax are skipped.
pub fn maxpool_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (rng.gen_range(1..=3), 2 * rng.gen_range(1..=4), 2 * rng.gen_range(1..=4));
    let x = random(&mut rng, &[dims.0, dims.1, dims.2]);
    let (y, cache) = maxpool2d_forward(&x).unwrap();
    let proj = random(&mut rng, y.shape());
    let g = maxpool2d_backward(&cache, &proj).unwrap();
    let mut base = Vec::new();
    maxpool(&lift::<Dd>(x.data()), dims, &mut base);
    dd_check_linear(check, &x, &g, |v| {
        let mut routing = Vec::new();
        let (out, _) = maxpool(v, dims, &mut routing);
        (routing == base).then(|| dot_dd(&out, proj.data()))
    })
}

pub fn softmax_case(check: GradCheck, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor::new(vec![2], vec![rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)]).unwrap();
    let label = if rng.gen_bool(0.5) { Label::Fake } else { Label::Real };
    let out = softmax_xent(&z, label).unwrap();
    let (own, other) = (label.index(), 1 - label.index());
    dd_check(
        check,
        z.data(),
        out.grad_logits.data(),
        0..2,
        |v| Some(v[other] - v[own]),
        |p, m| softplus_difference(m, p),
    )
}

pub const LAYER_TOL: f64 = 1e-6;
pub const SOFTMAX_TOL: f64 = 1e-8;

pub type Case = fn(GradCheck, u64) -> GradCheckReport;

/// `(primitive, case, tolerance)` triples run by the randomized sweeps.
pub fn primitives() -> [(&'static str, Case, f64); 6] {
    [
        ("conv2d", conv_case, LAYER_TOL),
        ("sepconv2d", sepconv_case, LAYER_TOL),
        ("dense", dense_case, LAYER_TOL),
        ("relu", relu_case, LAYER_TOL),
        ("maxpool2d", maxpool_case, LAYER_TOL),
        ("softmax_xent", softmax_case, SOFTMAX_TOL),
    ]
}
