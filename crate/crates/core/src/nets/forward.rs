use super::{center_pixel, Checkpoint, Layer, ParamMap, INPUT_SCALE};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu_backward, relu_forward, sepconv2d_backward, sepconv2d_forward,
    softmax_xent, ConvCache, DenseCache, PoolCache, ReluCache, SepConvCache, Tensor,
};
use crate::types::Label;

#[derive(Debug, Clone)]
enum LayerCache {
    Conv(ConvCache),
    SepConv(SepConvCache),
    Branch(Vec<(ConvCache, ReluCache)>),
    Relu(ReluCache),
    Pool(PoolCache),
    Flatten(Vec<usize>),
    Dense(DenseCache),
}

/// Everything `net_backward` needs from one `net_forward` call.
#[derive(Debug, Clone)]
pub struct NetCache {
    layers: Vec<LayerCache>,
    logits: Tensor,
    fingerprint: u64,
    input_shape: Vec<usize>,
}

impl NetCache {
    /// Hash of every ReLU gate and pooling choice taken during the forward
    /// pass. Two inputs with equal signatures lie in the same linear piece
    /// of the network.
    pub fn routing_signature(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| h = (h ^ v).wrapping_mul(PRIME);
        for l in &self.layers {
            match l {
                LayerCache::Relu(c) => c.active().for_each(|a| mix(a as u64)),
                LayerCache::Branch(arms) => arms
                    .iter()
                    .flat_map(|(_, c)| c.active())
                    .for_each(|a| mix(a as u64)),
                LayerCache::Pool(p) => p.argmax().iter().for_each(|&i| mix(i as u64)),
                _ => {}
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Tensor,
    /// `[p_real, p_fake]`.
    pub probs: Tensor,
    pub cache: NetCache,
}

impl Forward {
    pub fn p_fake(&self) -> f64 {
        self.probs.data()[Label::Fake.index()]
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub param_grads: ParamMap,
    pub input_grad: Tensor,
}

pub fn net_forward(ckpt: &Checkpoint, image: &Tensor) -> Result<Forward> {
    if image.shape() != ckpt.spec.input_shape {
        return Err(Error::shape(format!(
            "{} expects input {:?}, got {:?}",
            ckpt.spec.model_id,
            ckpt.spec.input_shape,
            image.shape()
        )));
    }
    let mut x = image.map(center_pixel);
    let mut caches = Vec::with_capacity(ckpt.spec.layers.len());
    for layer in &ckpt.spec.layers {
        let (y, cache) = match layer {
            Layer::Conv {
                name, stride, pad, ..
            } => {
                let (y, c) = conv2d_forward(
                    &x,
                    ckpt.param(&format!("{name}.weight"))?,
                    ckpt.param(&format!("{name}.bias"))?,
                    *stride,
                    *pad,
                )?;
                (y, LayerCache::Conv(c))
            }
            Layer::SepConv {
                name, stride, pad, ..
            } => {
                let (y, c) = sepconv2d_forward(
                    &x,
                    ckpt.param(&format!("{name}.depthwise"))?,
                    ckpt.param(&format!("{name}.pointwise"))?,
                    ckpt.param(&format!("{name}.bias"))?,
                    *stride,
                    *pad,
                )?;
                (y, LayerCache::SepConv(c))
            }
            Layer::Branch { name, arms, .. } => {
                let (_, h, w) = x.dims3()?;
                let mut out = Vec::new();
                let mut arm_caches = Vec::with_capacity(arms.len());
                let mut channels = 0;
                for (i, arm) in arms.iter().enumerate() {
                    let (y, cc) = conv2d_forward(
                        &x,
                        ckpt.param(&format!("{name}.arm{i}.weight"))?,
                        ckpt.param(&format!("{name}.arm{i}.bias"))?,
                        1,
                        arm.kernel / 2,
                    )?;
                    let (y, rc) = relu_forward(&y);
                    out.extend_from_slice(y.data());
                    channels += arm.out_channels;
                    arm_caches.push((cc, rc));
                }
                (
                    Tensor::new(vec![channels, h, w], out)?,
                    LayerCache::Branch(arm_caches),
                )
            }
            Layer::Relu => {
                let (y, c) = relu_forward(&x);
                (y, LayerCache::Relu(c))
            }
            Layer::MaxPool => {
                let (y, c) = maxpool2d_forward(&x)?;
                (y, LayerCache::Pool(c))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = x.len();
                (x.reshape(&[n])?, LayerCache::Flatten(shape))
            }
            Layer::Dense { name, .. } => {
                let (y, c) = dense_forward(
                    &x,
                    ckpt.param(&format!("{name}.weight"))?,
                    ckpt.param(&format!("{name}.bias"))?,
                )?;
                (y, LayerCache::Dense(c))
            }
        };
        caches.push(cache);
        x = y;
    }
    // Label is irrelevant for the probabilities.
    let probs = softmax_xent(&x, Label::Fake)?.probs;
    Ok(Forward {
        probs,
        cache: NetCache {
            layers: caches,
            logits: x.clone(),
            fingerprint: ckpt.fingerprint(),
            input_shape: image.shape().to_vec(),
        },
        logits: x,
    })
}

/// Cross-entropy gradients for every parameter and for the input image.
/// Frozen layers are not special-cased here.
pub fn net_backward(ckpt: &Checkpoint, cache: &NetCache, label: Label) -> Result<Backward> {
    if cache.layers.len() != ckpt.spec.layers.len()
        || cache.input_shape != ckpt.spec.input_shape
        || cache.fingerprint != ckpt.fingerprint()
    {
        return Err(Error::StaleCache(format!(
            "cache was not produced by a forward pass of this {} checkpoint",
            ckpt.spec.model_id
        )));
    }
    let head = softmax_xent(&cache.logits, label)?;
    let mut grads = ParamMap::new();
    let mut g = head.grad_logits;
    for (layer, lc) in ckpt.spec.layers.iter().zip(&cache.layers).rev() {
        g = match (layer, lc) {
            (Layer::Conv { name, .. }, LayerCache::Conv(c)) => {
                let cg = conv2d_backward(c, &g)?;
                grads.insert(format!("{name}.weight"), cg.kernels);
                grads.insert(format!("{name}.bias"), cg.bias);
                cg.input
            }
            (Layer::SepConv { name, .. }, LayerCache::SepConv(c)) => {
                let sg = sepconv2d_backward(c, &g)?;
                grads.insert(format!("{name}.depthwise"), sg.depthwise);
                grads.insert(format!("{name}.pointwise"), sg.pointwise);
                grads.insert(format!("{name}.bias"), sg.bias);
                sg.input
            }
            (Layer::Branch { name, arms, .. }, LayerCache::Branch(arm_caches)) => {
                let (_, h, w) = g.dims3()?;
                let plane = h * w;
                let mut gin: Option<Tensor> = None;
                let mut offset = 0;
                for (i, (arm, (cc, rc))) in arms.iter().zip(arm_caches).enumerate() {
                    let n = arm.out_channels * plane;
                    let slice = Tensor::new(
                        vec![arm.out_channels, h, w],
                        g.data()[offset..offset + n].to_vec(),
                    )?;
                    offset += n;
                    let ga = conv2d_backward(cc, &relu_backward(rc, &slice)?)?;
                    grads.insert(format!("{name}.arm{i}.weight"), ga.kernels);
                    grads.insert(format!("{name}.arm{i}.bias"), ga.bias);
                    match gin.as_mut() {
                        Some(acc) => acc.add_assign(&ga.input),
                        None => gin = Some(ga.input),
                    }
                }
                gin.ok_or_else(|| Error::shape(format!("branch `{name}` has no arms")))?
            }
            (Layer::Relu, LayerCache::Relu(c)) => relu_backward(c, &g)?,
            (Layer::MaxPool, LayerCache::Pool(c)) => maxpool2d_backward(c, &g)?,
            (Layer::Flatten, LayerCache::Flatten(shape)) => g.reshape(shape)?,
            (Layer::Dense { name, .. }, LayerCache::Dense(c)) => {
                let dg = dense_backward(c, &g)?;
                grads.insert(format!("{name}.weight"), dg.weights);
                grads.insert(format!("{name}.bias"), dg.bias);
                dg.input
            }
            (layer, _) => {
                return Err(Error::StaleCache(format!(
                    "cache entry does not match layer kind `{}`",
                    layer.kind()
                )))
            }
        };
    }
    Ok(Backward {
        loss: head.loss,
        param_grads: grads,
        input_grad: g.map(|v| INPUT_SCALE * v),
    })
}
