//! The detector architectures: layer descriptors, construction,
//! whole-network forward/backward and checkpoint files.
//!
//! Three architectural motifs are provided:
//!
//! * `plainnet`: stacked 3×3 convolution + ReLU blocks with max pooling.
//! * `branchnet`: a block of parallel 1×1 / 3×3 / 5×5 convolutions whose
//!   outputs are concatenated along channels.
//! * `sepnet`: depthwise-separable convolution blocks.
//!
//! Every network ends in `flatten → dense(2)`; logit 0 is "real", logit 1
//! is "fake".

mod checkpoint;
mod forward;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_EXTENSION};
pub use forward::{net_backward, net_forward, Backward, Forward, NetCache};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{conv_output_dim, Tensor};
use crate::types::ModelId;

pub type ParamMap = BTreeMap<String, Tensor>;

/// Upper bound on trainable parameters per detector.
pub const MAX_PARAMS: usize = 200_000;

/// One parallel arm of a [`Layer::Branch`]: a `kernel×kernel` convolution
/// with "same" padding followed by ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchArm {
    pub out_channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    SepConv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Branch {
        name: String,
        in_channels: usize,
        arms: Vec<BranchArm>,
    },
    Relu,
    MaxPool,
    Flatten,
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    pub fn name(&self) -> Option<&str> {
        match self {
            Layer::Conv { name, .. }
            | Layer::SepConv { name, .. }
            | Layer::Branch { name, .. }
            | Layer::Dense { name, .. } => Some(name),
            Layer::Relu | Layer::MaxPool | Layer::Flatten => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::SepConv { .. } => "sepconv",
            Layer::Branch { .. } => "branch",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    /// Named parameter tensors with their shapes and He fan-in.
    pub fn params(&self) -> Vec<ParamSlot> {
        let slot = |name: String, shape: Vec<usize>, fan_in: usize, bias: bool| ParamSlot {
            name,
            shape,
            fan_in,
            bias,
        };
        match self {
            Layer::Conv {
                name,
                in_channels: c,
                out_channels: f,
                kernel: k,
                ..
            } => vec![
                slot(format!("{name}.weight"), vec![*f, *c, *k, *k], c * k * k, false),
                slot(format!("{name}.bias"), vec![*f], 0, true),
            ],
            Layer::SepConv {
                name,
                in_channels: c,
                out_channels: f,
                kernel: k,
                ..
            } => vec![
                slot(format!("{name}.depthwise"), vec![*c, *k, *k], c * k * k, false),
                slot(format!("{name}.pointwise"), vec![*f, *c, 1, 1], *c, false),
                slot(format!("{name}.bias"), vec![*f], 0, true),
            ],
            Layer::Branch {
                name,
                in_channels: c,
                arms,
            } => arms
                .iter()
                .enumerate()
                .flat_map(|(i, arm)| {
                    let k = arm.kernel;
                    [
                        slot(
                            format!("{name}.arm{i}.weight"),
                            vec![arm.out_channels, *c, k, k],
                            c * k * k,
                            false,
                        ),
                        slot(format!("{name}.arm{i}.bias"), vec![arm.out_channels], 0, true),
                    ]
                })
                .collect(),
            Layer::Dense {
                name,
                inputs,
                outputs,
            } => vec![
                slot(format!("{name}.weight"), vec![*outputs, *inputs], *inputs, false),
                slot(format!("{name}.bias"), vec![*outputs], 0, true),
            ],
            Layer::Relu | Layer::MaxPool | Layer::Flatten => Vec::new(),
        }
    }

    /// Shape produced from `input`, or a diagnostic naming the layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(Error::shape(format!("{what} needs a [C, H, W] input, got {input:?}"))),
            }
        };
        let check_channels = |name: &str, c: usize, expected: usize| {
            if c != expected {
                Err(Error::shape(format!(
                    "layer `{name}` expects {expected} input channels, got {c}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Layer::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            }
            | Layer::SepConv {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let (c, h, w) = spatial(name)?;
                check_channels(name, c, *in_channels)?;
                Ok(vec![
                    *out_channels,
                    conv_output_dim(h, *kernel, *stride, *pad)?,
                    conv_output_dim(w, *kernel, *stride, *pad)?,
                ])
            }
            Layer::Branch {
                name,
                in_channels,
                arms,
            } => {
                let (c, h, w) = spatial(name)?;
                check_channels(name, c, *in_channels)?;
                if arms.is_empty() || arms.iter().any(|a| a.kernel % 2 == 0) {
                    return Err(Error::shape(format!(
                        "branch `{name}` needs at least one arm, all with odd kernels"
                    )));
                }
                Ok(vec![arms.iter().map(|a| a.out_channels).sum(), h, w])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool => {
                let (c, h, w) = spatial("maxpool")?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(format!("maxpool needs even dims, got {h}x{w}")));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense {
                name,
                inputs,
                outputs,
            } => {
                if input != [*inputs] {
                    return Err(Error::shape(format!(
                        "dense `{name}` expects [{inputs}], got {input:?}"
                    )));
                }
                Ok(vec![*outputs])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub model_id: ModelId,
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Validates layer-to-layer shape consistency, unique layer names and a
    /// two-logit head.
    pub fn new(model_id: ModelId, input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let spec = NetworkSpec {
            model_id,
            input_shape,
            layers,
            num_classes: 2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 2 {
            return Err(Error::shape(format!(
                "networks are binary, got num_classes = {}",
                self.num_classes
            )));
        }
        let mut names = BTreeSet::new();
        for l in &self.layers {
            if let Some(n) = l.name() {
                if !names.insert(n) {
                    return Err(Error::shape(format!("duplicate layer name `{n}`")));
                }
            }
        }
        let out = self.output_shape()?;
        if out != [2] {
            return Err(Error::shape(format!(
                "final layer must produce 2 logits, produces {out:?}"
            )));
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(self.input_shape.to_vec(), |s, l| l.output_shape(&s))
    }

    /// Shapes entering each layer, in order.
    pub fn layer_input_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut s = self.input_shape.to_vec();
        for l in &self.layers {
            let next = l.output_shape(&s)?;
            shapes.push(std::mem::replace(&mut s, next));
        }
        Ok(shapes)
    }

    pub fn param_slots(&self) -> Vec<ParamSlot> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slots()
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().filter_map(Layer::name).collect()
    }

    pub fn kind_sequence(&self) -> Vec<&'static str> {
        self.layers.iter().map(Layer::kind).collect()
    }

    /// The architecture for `model_id` at an arbitrary `[C, H, W]` input.
    /// The detectors pool three times, so `H` and `W` must be multiples of 8.
    pub fn for_model(model_id: ModelId, input_shape: [usize; 3]) -> Result<Self> {
        let [c, h, w] = input_shape;
        let conv = |name: &str, i: usize, o: usize| Layer::Conv {
            name: name.into(),
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let sep = |name: &str, i: usize, o: usize| Layer::SepConv {
            name: name.into(),
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let head = |channels: usize| {
            vec![
                Layer::Flatten,
                Layer::Dense {
                    name: "fc".into(),
                    inputs: channels * (h / 8) * (w / 8),
                    outputs: 2,
                },
            ]
        };
        if model_id != ModelId::Linear && (h % 8 != 0 || w % 8 != 0) {
            return Err(Error::shape(format!(
                "{model_id} needs spatial dims divisible by 8, got {h}x{w}"
            )));
        }
        let layers = match model_id {
            ModelId::Plainnet => [
                vec![conv("conv1", c, 8), Layer::Relu, Layer::MaxPool],
                vec![conv("conv2", 8, 16), Layer::Relu, Layer::MaxPool],
                vec![conv("conv3", 16, 16), Layer::Relu, conv("conv4", 16, 16), Layer::Relu, Layer::MaxPool],
                head(16),
            ]
            .concat(),
            ModelId::Branchnet => [
                vec![conv("stem", c, 8), Layer::Relu, Layer::MaxPool],
                vec![
                    Layer::Branch {
                        name: "mixed".into(),
                        in_channels: 8,
                        arms: vec![
                            BranchArm { out_channels: 4, kernel: 1 },
                            BranchArm { out_channels: 6, kernel: 3 },
                            BranchArm { out_channels: 6, kernel: 5 },
                        ],
                    },
                    Layer::MaxPool,
                ],
                vec![conv("conv2", 16, 16), Layer::Relu, Layer::MaxPool],
                head(16),
            ]
            .concat(),
            ModelId::Sepnet => [
                vec![conv("stem", c, 8), Layer::Relu],
                vec![sep("sep1", 8, 16), Layer::Relu, Layer::MaxPool],
                vec![sep("sep2", 16, 16), Layer::Relu, Layer::MaxPool],
                vec![sep("sep3", 16, 16), Layer::Relu, Layer::MaxPool],
                head(16),
            ]
            .concat(),
            ModelId::Linear => vec![
                Layer::Flatten,
                Layer::Dense {
                    name: "fc".into(),
                    inputs: c * h * w,
                    outputs: 2,
                },
            ],
        };
        NetworkSpec::new(model_id, input_shape, layers)
    }

    /// Names of the parametrized layers in the first block (everything up
    /// to the first pooling layer). This is the default freeze set for
    /// fine-tuning.
    pub fn first_block(&self) -> Vec<String> {
        self.layers
            .iter()
            .take_while(|l| !matches!(l, Layer::MaxPool))
            .filter_map(|l| l.name().map(str::to_string))
            .take(1)
            .collect()
    }
}

/// Pixels enter every network as `INPUT_SCALE·x − 1`, mapping `[0, 1]`
/// onto `[-1, 1]`.
pub const INPUT_SCALE: f64 = 2.0;

pub fn center_pixel(x: f64) -> f64 {
    INPUT_SCALE * x - 1.0
}

/// Input shapes accepted by [`build_net`].
pub const SUPPORTED_INPUT_SHAPES: [[usize; 3]; 2] = [[3, 64, 64], [3, 128, 128]];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs_trained: u32,
    pub train_config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: ParamMap,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`) and zero biases, drawn
    /// in layer order from a stream seeded by `seed`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = seed::stream(seed, &["init", spec.model_id.as_str()]);
        let params = spec
            .param_slots()
            .into_iter()
            .map(|slot| {
                let t = if slot.bias {
                    Tensor::zeros(&slot.shape)
                } else {
                    let bound = (6.0 / slot.fan_in as f64).sqrt();
                    Tensor::from_fn(&slot.shape, |_| rng.gen_range(-bound..bound))
                };
                (slot.name, t)
            })
            .collect();
        Checkpoint {
            spec,
            params,
            meta: CheckpointMeta {
                seed,
                epochs_trained: 0,
                train_config_digest: None,
            },
        }
    }

    pub fn param(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::shape(format!("missing parameter `{name}`")))
    }

    /// Checks that `params` holds exactly the spec's slots with matching shapes.
    pub fn validate(&self) -> Result<()> {
        let slots = self.spec.param_slots();
        if slots.len() != self.params.len() {
            return Err(Error::shape(format!(
                "spec declares {} parameter tensors, checkpoint has {}",
                slots.len(),
                self.params.len()
            )));
        }
        for slot in slots {
            let t = self.param(&slot.name)?;
            if t.shape() != slot.shape {
                return Err(Error::shape(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    slot.name,
                    t.shape(),
                    slot.shape
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized checkpoint file.
    pub fn digest(&self) -> String {
        seed::sha256_hex(&checkpoint::to_bytes(self))
    }

    /// Fast fingerprint of the parameter values, used to match caches to
    /// the checkpoint that produced them.
    pub(crate) fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.params.values() {
            for v in t.data() {
                h = (h ^ v.to_bits()).wrapping_mul(PRIME);
            }
            h = (h ^ t.len() as u64).wrapping_mul(PRIME);
        }
        h
    }
}

/// Builds a freshly initialized detector. Only the supported input shapes
/// are accepted; use [`NetworkSpec::for_model`] with [`Checkpoint::init`]
/// for reduced instances.
pub fn build_net(model_id: ModelId, input_shape: [usize; 3], seed: u64) -> Result<Checkpoint> {
    if !SUPPORTED_INPUT_SHAPES.contains(&input_shape) {
        return Err(Error::Config(format!(
            "unsupported input shape {input_shape:?}; expected one of {SUPPORTED_INPUT_SHAPES:?}"
        )));
    }
    let spec = NetworkSpec::for_model(model_id, input_shape)?;
    if spec.param_count() > MAX_PARAMS {
        return Err(Error::Config(format!(
            "{model_id} has {} parameters, above the {MAX_PARAMS} budget",
            spec.param_count()
        )));
    }
    Ok(Checkpoint::init(spec, seed))
}

/// Layers whose parameters the optimizer must leave untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub frozen: BTreeSet<String>,
}

impl FreezeMask {
    pub fn new<I, S>(layers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FreezeMask {
            frozen: layers.into_iter().map(Into::into).collect(),
        }
    }

    /// Every parametrized layer of `spec`.
    pub fn all(spec: &NetworkSpec) -> Self {
        Self::new(spec.layer_names())
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let names = spec.layer_names();
        match self.frozen.iter().find(|f| !names.contains(&f.as_str())) {
            Some(unknown) => Err(Error::Config(format!(
                "freeze mask names unknown layer `{unknown}`"
            ))),
            None => Ok(()),
        }
    }

    /// Whether parameter `param_name` (`<layer>.<tensor>`) belongs to a frozen layer.
    pub fn is_frozen(&self, param_name: &str) -> bool {
        let layer = param_name.split('.').next().unwrap_or(param_name);
        self.frozen.contains(layer)
    }
}
