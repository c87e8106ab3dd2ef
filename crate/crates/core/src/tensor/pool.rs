use super::Tensor;
use crate::error::{Error, Result};

/// Forward record of 2×2/stride-2 max pooling: the flat input index chosen
/// for every output element.
#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: [usize; 3],
    argmax: Vec<usize>,
}

impl PoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn maxpool2d_forward(input: &Tensor) -> Result<(Tensor, PoolCache)> {
    let (c, h, w) = input.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "max pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ci * h + 2 * oy) * w + 2 * ox;
                let mut best = base;
                // Strict comparison keeps the first maximum in row-major order.
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolCache {
            input_shape: [c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2d_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    let [c, h, w] = cache.input_shape;
    if grad_out.shape() != [c, h / 2, w / 2] {
        return Err(Error::StaleCache(format!(
            "maxpool grad_out shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            [c, h / 2, w / 2]
        )));
    }
    let mut grad = vec![0.0; c * h * w];
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        grad[idx] += g;
    }
    Tensor::new(vec![c, h, w], grad)
}
