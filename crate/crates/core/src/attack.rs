//! Fast gradient sign attack and the ensemble robustness experiment.
//!
//! `adv = clamp(x + ε·sign(∇ₓ J(θ, x, y)), 0, 1)` with `J` the
//! cross-entropy at the true label `y` and `sign(0) = 0`. In the experiment
//! one target model is attacked and the same adversarial frames are fed to
//! every model, so the fused verdict is exposed only through transfer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    fuse, predict_images, score, single_model_verdicts, video_ids, video_truth, ClassifierReport,
    FramePrediction, VideoVerdict,
};
use crate::nets::{net_backward, net_forward, Checkpoint};
use crate::par;
use crate::tensor::Tensor;
use crate::train::FrameSet;
use crate::types::{Label, ModelId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Max-norm budget on the `[0, 1]` pixel scale.
    pub epsilon: f64,
    pub target_model_id: ModelId,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.1,
            target_model_id: ModelId::Plainnet,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ε·sign(∇ₓ J)`, before clamping.
pub fn fgsm_perturbation(ckpt: &Checkpoint, image: &Tensor, true_label: Label, epsilon: f64) -> Result<Tensor> {
    let fwd = net_forward(ckpt, image)?;
    let g = net_backward(ckpt, &fwd.cache, true_label)?.input_grad;
    let data = g.data().iter().map(|&v| epsilon * sign(v)).collect();
    Tensor::new(g.shape().to_vec(), data)
}

pub fn fgsm(ckpt: &Checkpoint, image: &Tensor, true_label: Label, epsilon: f64) -> Result<Tensor> {
    if epsilon == 0.0 {
        // Still validate the shape so ε = 0 fails exactly when ε > 0 would.
        net_forward(ckpt, image)?;
        return Ok(image.clone());
    }
    let mut adv = fgsm_perturbation(ckpt, image, true_label, epsilon)?;
    for (a, &x) in adv.data_mut().iter_mut().zip(image.data()) {
        *a = within_budget(x, (x + *a).clamp(0.0, 1.0), epsilon);
    }
    Ok(adv)
}

/// Steps `a` toward `x` one ulp at a time until `|a − x| ≤ ε` holds in
/// floating point; `x + ε` can round past the budget.
fn within_budget(x: f64, mut a: f64, epsilon: f64) -> f64 {
    while (a - x).abs() > epsilon {
        a = if a > x { a.next_down() } else { a.next_up() };
    }
    a
}

/// Target-model loss on one frame before and after the attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLoss {
    pub video_id: String,
    pub frame_index: u32,
    pub clean: f64,
    pub attacked: f64,
}

/// The target model's view of one video, clean and attacked, next to the
/// fused verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoExample {
    pub video_id: String,
    pub truth: Label,
    pub target_clean: f64,
    pub target_attacked: f64,
    pub fused_clean: f64,
    pub fused_attacked: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub epsilon: f64,
    pub target_model_id: ModelId,
    /// One row per model in input order, then the fused row.
    pub clean: Vec<ClassifierReport>,
    pub attacked: Vec<ClassifierReport>,
    pub target_frame_losses: Vec<FrameLoss>,
    pub examples: Vec<VideoExample>,
}

impl RobustnessResult {
    fn row<'a>(rows: &'a [ClassifierReport], name: &str) -> Option<&'a ClassifierReport> {
        rows.iter().find(|r| r.name == name)
    }

    pub fn clean_accuracy(&self, model: ModelId) -> Option<f64> {
        Self::row(&self.clean, model.as_str()).map(|r| r.metrics.overall.accuracy)
    }

    pub fn attacked_accuracy(&self, model: ModelId) -> Option<f64> {
        Self::row(&self.attacked, model.as_str()).map(|r| r.metrics.overall.accuracy)
    }

    pub fn fused_clean_accuracy(&self) -> f64 {
        self.clean.last().expect("fused row").metrics.overall.accuracy
    }

    pub fn fused_attacked_accuracy(&self) -> f64 {
        self.attacked.last().expect("fused row").metrics.overall.accuracy
    }

    /// Fraction of frames on which the attack did not lower the target's loss.
    pub fn loss_increase_fraction(&self) -> f64 {
        let n = self.target_frame_losses.len();
        let up = self.target_frame_losses.iter().filter(|f| f.attacked >= f.clean).count();
        if n == 0 {
            0.0
        } else {
            up as f64 / n as f64
        }
    }
}

fn reports(
    ckpts: &[Checkpoint],
    preds: &[FramePrediction],
    videos: &[String],
    truth: &BTreeMap<String, crate::eval::VideoTruth>,
) -> Result<(Vec<ClassifierReport>, Vec<VideoVerdict>)> {
    let ids: Vec<ModelId> = ckpts.iter().map(|c| c.spec.model_id).collect();
    let verdicts = fuse(preds, &ids, videos)?;
    let mut rows = Vec::with_capacity(ids.len() + 1);
    for &m in &ids {
        let single = single_model_verdicts(&verdicts, m);
        rows.push(ClassifierReport::model(m, score(&single, truth)?));
    }
    rows.push(ClassifierReport::fused(score(&verdicts, truth)?));
    Ok((rows, verdicts))
}

fn predict_all(ckpts: &[Checkpoint], frames: &FrameSet) -> Result<Vec<FramePrediction>> {
    let mut all = Vec::new();
    for c in ckpts {
        let p = predict_images(c, &frames.entries, &frames.images);
        if let Some(f) = p.failures.first() {
            return Err(Error::Data(format!(
                "{} failed on {}/{}: {}",
                f.model_id, f.video_id, f.frame_index, f.error
            )));
        }
        all.extend(p.predictions);
    }
    Ok(all)
}

/// Attacks every frame against the target model with its true label and
/// scores all models, individually and fused, on clean and attacked
/// frames. Checkpoints are never modified.
pub fn run_attack_experiment(ckpts: &[Checkpoint], test: &FrameSet, cfg: &AttackConfig) -> Result<RobustnessResult> {
    cfg.validate()?;
    let target = ckpts
        .iter()
        .find(|c| c.spec.model_id == cfg.target_model_id)
        .ok_or_else(|| {
            Error::UnknownModel(format!(
                "target {} is not among the provided models",
                cfg.target_model_id
            ))
        })?;
    let mut seen = std::collections::BTreeSet::new();
    for c in ckpts {
        if !seen.insert(c.spec.model_id) {
            return Err(Error::Config(format!("model {} given twice", c.spec.model_id)));
        }
        if c.spec.input_shape != target.spec.input_shape {
            return Err(Error::Config(format!(
                "{} expects input {:?} but the target expects {:?}",
                c.spec.model_id, c.spec.input_shape, target.spec.input_shape
            )));
        }
    }
    if test.entries.is_empty() {
        return Err(Error::Data("attack experiment needs at least one frame".into()));
    }
    let videos = video_ids(&test.entries);
    let truth = video_truth(&test.entries);

    let adv = par::map(test.entries.len(), |i| {
        let e = &test.entries[i];
        let x = &test.images[i];
        let adv = fgsm(target, x, e.label, cfg.epsilon)?;
        let loss = |img: &Tensor| -> Result<f64> {
            let f = net_forward(target, img)?;
            Ok(crate::eval::log_loss_term(f.p_fake(), e.label))
        };
        let fl = FrameLoss {
            video_id: e.video_id.clone(),
            frame_index: e.frame_index,
            clean: loss(x)?,
            attacked: loss(&adv)?,
        };
        Ok((adv, fl))
    });
    let (images, losses): (Vec<Tensor>, Vec<FrameLoss>) = adv.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let attacked_frames = FrameSet::new(test.entries.clone(), images)?;

    let (clean, clean_v) = reports(ckpts, &predict_all(ckpts, test)?, &videos, &truth)?;
    let (attacked, adv_v) = reports(ckpts, &predict_all(ckpts, &attacked_frames)?, &videos, &truth)?;
    let examples = clean_v
        .iter()
        .zip(&adv_v)
        .map(|(c, a)| VideoExample {
            video_id: c.video_id.clone(),
            truth: truth[&c.video_id].label,
            target_clean: c.per_model_p_fake[&cfg.target_model_id],
            target_attacked: a.per_model_p_fake[&cfg.target_model_id],
            fused_clean: c.p_fake_fused,
            fused_attacked: a.p_fake_fused,
        })
        .collect();
    Ok(RobustnessResult {
        epsilon: cfg.epsilon,
        target_model_id: cfg.target_model_id,
        clean,
        attacked,
        target_frame_losses: losses,
        examples,
    })
}

fn verdict(p_fake: f64) -> String {
    let label = Label::from_p_fake(p_fake);
    let confidence = if label == Label::Fake { p_fake } else { 1.0 - p_fake };
    format!("{label} ({:.2}%)", 100.0 * confidence)
}

/// Markdown summary: accuracy before and after the attack for every
/// classifier, then per-video verdicts of the target model and the fusion
/// for the first `max_examples` videos.
pub fn render_robustness_markdown(r: &RobustnessResult, max_examples: usize) -> String {
    let mut out = format!(
        "# FGSM attack on {} (ε = {})\n\n| Classifier | Clean Accuracy | Attacked Accuracy | Clean LogLoss | Attacked LogLoss |\n| --- | ---: | ---: | ---: | ---: |\n",
        r.target_model_id, r.epsilon
    );
    for (c, a) in r.clean.iter().zip(&r.attacked) {
        out.push_str(&format!(
            "| {} | {:.2}% | {:.2}% | {:.5} | {:.5} |\n",
            c.name,
            100.0 * c.metrics.overall.accuracy,
            100.0 * a.metrics.overall.accuracy,
            c.metrics.overall.log_loss,
            a.metrics.overall.log_loss
        ));
    }
    out.push_str(&format!(
        "\nTarget loss rose on {:.2}% of {} frames.\n",
        100.0 * r.loss_increase_fraction(),
        r.target_frame_losses.len()
    ));
    if max_examples == 0 || r.examples.is_empty() {
        return out;
    }
    out.push_str(&format!(
        "\n| Video | Truth | {t} clean | {t} attacked | Fused clean | Fused attacked |\n| --- | --- | --- | --- | --- | --- |\n",
        t = r.target_model_id
    ));
    for e in r.examples.iter().take(max_examples) {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            e.video_id,
            e.truth,
            verdict(e.target_clean),
            verdict(e.target_attacked),
            verdict(e.fused_clean),
            verdict(e.fused_attacked)
        ));
    }
    out
}
