use super::Tensor;
use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone)]
pub struct ReluCache {
    input: Tensor,
}

impl ReluCache {
    /// Gate pattern of the forward call: `true` where the input was positive.
    pub fn active(&self) -> impl Iterator<Item = bool> + '_ {
        self.input.data().iter().map(|&v| v > 0.0)
    }
}

pub fn relu_forward(input: &Tensor) -> (Tensor, ReluCache) {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    (
        out,
        ReluCache {
            input: input.clone(),
        },
    )
}

/// Gate is 1 for `x > 0` and 0 otherwise, including at `x == 0`.
pub fn relu_backward(cache: &ReluCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != cache.input.shape() {
        return Err(Error::StaleCache(format!(
            "relu grad_out shape {:?} does not match forward input {:?}",
            grad_out.shape(),
            cache.input.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(cache.input.data()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct SoftmaxXent {
    pub probs: Tensor,
    pub loss: f64,
    pub grad_logits: Tensor,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-class softmax with cross-entropy against `label`, evaluated through
/// the logit margin so that neither the loss nor its gradient cancels
/// catastrophically when the prediction saturates.
pub fn softmax_xent(logits: &Tensor, label: Label) -> Result<SoftmaxXent> {
    if logits.shape() != [2] {
        return Err(Error::shape(format!(
            "expected 2 logits, got shape {:?}",
            logits.shape()
        )));
    }
    let z = logits.data();
    let (own, other) = (label.index(), 1 - label.index());
    // Margin of the wrong class; loss = softplus(d), p_other = sigmoid(d).
    let d = z[other] - z[own];
    let loss = d.max(0.0) + (-d.abs()).exp().ln_1p();
    let p_other = sigmoid(d);
    let mut probs = [0.0; 2];
    probs[other] = p_other;
    probs[own] = sigmoid(-d);
    let mut grad = [0.0; 2];
    grad[other] = p_other;
    grad[own] = -p_other;
    Ok(SoftmaxXent {
        probs: Tensor::new(vec![2], probs.to_vec())?,
        loss,
        grad_logits: Tensor::new(vec![2], grad.to_vec())?,
    })
}
