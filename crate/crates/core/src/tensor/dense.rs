use super::{expect_shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    weights: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// `W·x + b` for `x [n]`, `W [m, n]`, `b [m]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(Tensor, DenseCache)> {
    let (m, n) = match weights.shape()[..] {
        [m, n] => (m, n),
        _ => {
            return Err(Error::shape(format!(
                "dense weights must be [m, n], got {:?}",
                weights.shape()
            )))
        }
    };
    expect_shape("dense input", input, &[n])?;
    expect_shape("dense bias", bias, &[m])?;
    let x = input.data();
    let out: Vec<f64> = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
        .collect();
    Ok((
        Tensor::new(vec![m], out)?,
        DenseCache {
            input: input.clone(),
            weights: weights.clone(),
        },
    ))
}

/// Returns `(Wᵀ·g, g⊗x, g)`.
pub fn dense_backward(cache: &DenseCache, grad_out: &Tensor) -> Result<DenseGrads> {
    let (m, n) = (cache.weights.shape()[0], cache.weights.shape()[1]);
    if grad_out.shape() != [m] {
        return Err(Error::StaleCache(format!(
            "dense grad_out shape {:?} does not match forward output [{m}]",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let x = cache.input.data();
    let mut gin = vec![0.0; n];
    let mut gw = Vec::with_capacity(m * n);
    for (row, &gi) in cache.weights.data().chunks_exact(n).zip(g) {
        for (acc, w) in gin.iter_mut().zip(row) {
            *acc += w * gi;
        }
        gw.extend(x.iter().map(|xv| gi * xv));
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n], gin)?,
        weights: Tensor::new(vec![m, n], gw)?,
        bias: grad_out.clone(),
    })
}
