//! Shared test oracles.
#![allow(dead_code)]

pub mod layers;
pub mod oracles;
pub mod reference;

use fusedet::nets::{net_backward, net_forward, Checkpoint};
use fusedet::tensor::gradcheck::{GradCheck, GradCheckReport};
use fusedet::{Label, Tensor};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reference::{lift, lift_params, net_logits, softplus_difference};
use twofloat::TwoFloat;

/// Central differences evaluated in double-double. `eval` maps the
/// perturbed vector to some value (or `None` to skip the element); `diff`
/// turns the `(plus, minus)` pair into an f64 difference.
pub fn dd_check<T>(
    check: GradCheck,
    x: &[f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    mut eval: impl FnMut(&[TwoFloat]) -> Option<T>,
    diff: impl Fn(T, T) -> f64,
) -> GradCheckReport {
    let mut probe: Vec<TwoFloat> = lift(x);
    let h = TwoFloat::from(check.h);
    check.compare(analytic, indices, |i| {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = eval(&probe);
        probe[i] = orig - h;
        let minus = eval(&probe);
        probe[i] = orig;
        Some(diff(plus?, minus?) / (2.0 * check.h))
    })
}

/// Projection-loss check of one tensor: `loss(v)` is `⟨proj, layer(v)⟩`
/// computed in double-double.
pub fn dd_check_linear(
    check: GradCheck,
    x: &Tensor,
    analytic: &Tensor,
    loss: impl FnMut(&[TwoFloat]) -> Option<TwoFloat>,
) -> GradCheckReport {
    dd_check(check, x.data(), analytic.data(), 0..x.len(), loss, |a, b| f64::from(a - b))
}

pub fn dot_dd(a: &[TwoFloat], b: &[f64]) -> TwoFloat {
    a.iter()
        .zip(b)
        .fold(TwoFloat::from(0.0), |s, (&x, &y)| s + x * TwoFloat::from(y))
}

#[derive(Debug, Clone)]
pub struct NetGradReport {
    pub input: GradCheckReport,
    pub params: GradCheckReport,
}

impl NetGradReport {
    pub fn passed(&self) -> bool {
        self.input.passed() && self.params.passed()
    }
}

/// Whole-network check of `net_backward` against a double-double reference
/// forward. Checks `per_tensor` randomly chosen elements of the input and
/// of each parameter tensor; elements whose perturbation changes a ReLU
/// gate or pooling choice are skipped.
pub fn check_net_gradients(
    ckpt: &Checkpoint,
    image: &Tensor,
    label: Label,
    check: GradCheck,
    per_tensor: usize,
    seed: u64,
) -> NetGradReport {
    let fwd = net_forward(ckpt, image).unwrap();
    let bwd = net_backward(ckpt, &fwd.cache, label).unwrap();
    let spec = &ckpt.spec;
    let (own, other) = (label.index(), 1 - label.index());
    let params = lift_params::<TwoFloat>(ckpt);
    let image_dd = lift::<TwoFloat>(image.data());
    let (_, base_routing) = net_logits(spec, &params, &image_dd);
    let margin = |z: [TwoFloat; 2]| z[other] - z[own];
    let diff = |p: TwoFloat, m: TwoFloat| softplus_difference(m, p);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |n: usize| sample(&mut rng, n, per_tensor.min(n)).into_vec();

    let input = dd_check(
        check,
        image.data(),
        bwd.input_grad.data(),
        pick(image.len()),
        |x| {
            let (z, r) = net_logits(spec, &params, x);
            (r == base_routing).then(|| margin(z))
        },
        diff,
    );

    let mut param_report = GradCheckReport::empty(check.tol);
    for (name, t) in &ckpt.params {
        let mut probe = params.clone();
        let r = dd_check(
            check,
            t.data(),
            bwd.param_grads[name].data(),
            pick(t.len()),
            |v| {
                probe.insert(name.clone(), v.to_vec());
                let (z, r) = net_logits(spec, &probe, &image_dd);
                (r == base_routing).then(|| margin(z))
            },
            diff,
        );
        param_report.merge(&r);
    }
    NetGradReport {
        input,
        params: param_report,
    }
}
