//! Mini-batch SGD with momentum, class-balanced oversampling, per-sample
//! augmentation and layer freezing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{augment, load_frame, oversample_balance, AugmentationConfig, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::nets::{net_backward, net_forward, Checkpoint, FreezeMask, ParamMap};
use crate::tensor::Tensor;
use crate::types::{Label, ModelId, Split};
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs with `freeze` applied.
    pub epochs: u32,
    /// Epochs run before `epochs` with every layer trainable. Emulates the
    /// pretraining that the frozen layers would otherwise come from.
    #[serde(default)]
    pub warmup_epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub freeze: FreezeMask,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            warmup_epochs: 0,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            freeze: FreezeMask::default(),
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        self.augmentation.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        seed::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Velocity(ParamMap);

/// `v ← μ·v − η·g; p ← p + v` for every parameter outside `freeze`.
/// Frozen parameters and their velocities are left untouched.
pub fn sgd_step(
    ckpt: &mut Checkpoint,
    grads: &ParamMap,
    learning_rate: f64,
    momentum: f64,
    freeze: &FreezeMask,
    velocity: &mut Velocity,
) -> Result<()> {
    for (name, g) in grads {
        let p = ckpt.param(name)?;
        if p.shape() != g.shape() {
            return Err(Error::shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    if let Some(missing) = ckpt.params.keys().find(|k| !grads.contains_key(*k)) {
        return Err(Error::shape(format!("no gradient for parameter `{missing}`")));
    }
    for (name, p) in ckpt.params.iter_mut() {
        if freeze.is_frozen(name) {
            continue;
        }
        let g = &grads[name];
        let v = velocity
            .0
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = momentum * *vv - learning_rate * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

/// Training frames held in memory, indexed by `(video_id, frame_index)`.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub entries: Vec<ManifestEntry>,
    pub images: Vec<Tensor>,
}

impl FrameSet {
    pub fn new(entries: Vec<ManifestEntry>, images: Vec<Tensor>) -> Result<Self> {
        if entries.len() != images.len() {
            return Err(Error::Data(format!(
                "{} entries but {} images",
                entries.len(),
                images.len()
            )));
        }
        Ok(FrameSet { entries, images })
    }

    /// Loads every `split` frame of `manifest`, fitted to `input_shape`.
    pub fn load(manifest: &Manifest, split: Split, input_shape: [usize; 3]) -> Result<Self> {
        let entries = manifest.split(split);
        let images = par::map(entries.len(), |i| load_frame(&manifest.base_dir, &entries[i], input_shape));
        let images = images.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(FrameSet { entries, images })
    }

    fn index(&self) -> HashMap<(&str, u32), usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.video_id.as_str(), e.frame_index), i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Main,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub phase: Phase,
    pub mean_loss: f64,
    /// Accuracy of the pre-update predictions on the augmented samples.
    pub accuracy: f64,
    pub samples: usize,
    pub batch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model_id: ModelId,
    pub config_digest: String,
    pub epochs: Vec<EpochRecord>,
    pub final_checkpoint_digest: String,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

struct SampleResult {
    loss: f64,
    correct: bool,
    grads: ParamMap,
}

fn sum_grads(mut a: ParamMap, b: ParamMap) -> ParamMap {
    for (k, t) in a.iter_mut() {
        t.add_assign(&b[k]);
    }
    a
}

/// Trains on the train-split frames of `data`. Per epoch: oversample to
/// balance classes (which also shuffles), augment each sample with its own
/// stream, accumulate mean batch gradients by pairwise tree reduction, and
/// take one SGD step per batch.
pub fn train(ckpt: &Checkpoint, data: &FrameSet, cfg: &TrainConfig) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    cfg.freeze.validate(&ckpt.spec)?;
    if data.entries.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(e) = data.entries.iter().find(|e| e.split != Split::Train) {
        return Err(Error::Data(format!("video `{}` is not in the train split", e.video_id)));
    }
    let index = data.index();
    let mut model = ckpt.clone();
    let mut velocity = Velocity::default();
    let mut records = Vec::new();
    let no_freeze = FreezeMask::default();
    let total = cfg.warmup_epochs + cfg.epochs;
    for epoch in 0..total {
        let (phase, freeze) = if epoch < cfg.warmup_epochs {
            (Phase::Warmup, &no_freeze)
        } else {
            (Phase::Main, &cfg.freeze)
        };
        let epoch_tag = epoch.to_string();
        let order = oversample_balance(&data.entries, seed::derive_seed(cfg.seed, &["epoch", &epoch_tag]))?;
        let mut batch_losses = Vec::new();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results = par::map(batch.len(), |i| -> Result<SampleResult> {
                let e = &batch[i];
                let image = &data.images[index[&(e.video_id.as_str(), e.frame_index)]];
                let frame_tag = e.frame_index.to_string();
                let mut rng = seed::stream(cfg.seed, &["augment", &e.video_id, &frame_tag, &epoch_tag]);
                let x = augment(image, &cfg.augmentation, &mut rng);
                let fwd = net_forward(&model, &x)?;
                let bwd = net_backward(&model, &fwd.cache, e.label)?;
                Ok(SampleResult {
                    loss: bwd.loss,
                    correct: Label::from_p_fake(fwd.p_fake()) == e.label,
                    grads: bwd.param_grads,
                })
            });
            let results = results.into_iter().collect::<Result<Vec<_>>>()?;
            let n = results.len() as f64;
            let batch_loss = results.iter().map(|r| r.loss).sum::<f64>() / n;
            correct += results.iter().filter(|r| r.correct).count();
            let grads = results.into_iter().map(|r| r.grads).collect();
            let mut grads = par::tree_reduce(grads, sum_grads).expect("batches are non-empty");
            for g in grads.values_mut() {
                g.scale(1.0 / n);
            }
            sgd_step(&mut model, &grads, cfg.learning_rate, cfg.momentum, freeze, &mut velocity)?;
            loss_sum += batch_loss * n;
            batch_losses.push(batch_loss);
        }
        records.push(EpochRecord {
            epoch: epoch + 1,
            phase,
            mean_loss: loss_sum / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
            samples: order.len(),
            batch_losses,
        });
    }
    model.meta.epochs_trained += total;
    model.meta.train_config_digest = Some(cfg.digest());
    let report = TrainReport {
        model_id: model.spec.model_id,
        config_digest: cfg.digest(),
        epochs: records,
        final_checkpoint_digest: model.digest(),
    };
    Ok((model, report))
}
