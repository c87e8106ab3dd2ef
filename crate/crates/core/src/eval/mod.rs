//! Frame-level inference, frame→video fusion across models, and metrics.

mod fsum;
mod report;

pub use fsum::fsum;
pub use report::{render_report, ClassifierReport, ReportFormat};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_frame, ManifestEntry};
use crate::error::{Error, Result};
use crate::nets::{net_forward, Checkpoint};
use crate::par;
use crate::tensor::Tensor;
use crate::types::{Label, ModelId, ResolutionTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub model_id: ModelId,
    pub video_id: String,
    pub frame_index: u32,
    pub p_fake: f64,
}

/// A frame that could not be scored, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub model_id: ModelId,
    pub video_id: String,
    pub frame_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub predictions: Vec<FramePrediction>,
    pub failures: Vec<FrameFailure>,
}

/// Scores every entry with `ckpt`. Frames that cannot be loaded or do not
/// fit the network are reported in `failures`; the rest are still scored.
pub fn predict_frames(ckpt: &Checkpoint, manifest_dir: &Path, entries: &[ManifestEntry]) -> Predictions {
    let shape = ckpt.spec.input_shape;
    predict_with(ckpt, entries, |e| load_frame(manifest_dir, e, shape))
}

/// [`predict_frames`] over frames already in memory; `images[i]` belongs
/// to `entries[i]`.
pub fn predict_images(ckpt: &Checkpoint, entries: &[ManifestEntry], images: &[Tensor]) -> Predictions {
    assert_eq!(entries.len(), images.len(), "one image per entry");
    let index: BTreeMap<(&str, u32), usize> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.video_id.as_str(), e.frame_index), i))
        .collect();
    predict_with(ckpt, entries, |e| Ok(images[index[&(e.video_id.as_str(), e.frame_index)]].clone()))
}

fn predict_with(
    ckpt: &Checkpoint,
    entries: &[ManifestEntry],
    load: impl Fn(&ManifestEntry) -> Result<Tensor> + Sync + Send,
) -> Predictions {
    let model_id = ckpt.spec.model_id;
    let results = par::map(entries.len(), |i| {
        let e = &entries[i];
        load(e).and_then(|x| net_forward(ckpt, &x)).map(|f| f.p_fake())
    });
    let mut out = Predictions::default();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(p_fake) => out.predictions.push(FramePrediction {
                model_id,
                video_id: e.video_id.clone(),
                frame_index: e.frame_index,
                p_fake,
            }),
            Err(err) => out.failures.push(FrameFailure {
                model_id,
                video_id: e.video_id.clone(),
                frame_index: e.frame_index,
                error: err.to_string(),
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub video_id: String,
    pub p_fake_fused: f64,
    pub predicted_label: Label,
    pub per_model_p_fake: BTreeMap<ModelId, f64>,
}

/// Averages frame predictions into one verdict per video, in `video_ids`
/// order. `per_model_p_fake[m]` is model `m`'s mean over the video's
/// frames; `p_fake_fused` is the mean over all (model, frame) pairs. Both
/// are computed as a correctly rounded sum divided by the count, so they
/// are independent of prediction order. Every model must cover the same
/// frames of every video.
pub fn fuse(predictions: &[FramePrediction], model_ids: &[ModelId], video_ids: &[String]) -> Result<Vec<VideoVerdict>> {
    if model_ids.is_empty() {
        return Err(Error::Data("fusion needs at least one model".into()));
    }
    let models: BTreeSet<ModelId> = model_ids.iter().copied().collect();
    let videos: BTreeSet<&str> = video_ids.iter().map(String::as_str).collect();
    // (video, model) → [(frame_index, p_fake)]
    let mut cells: BTreeMap<(&str, ModelId), Vec<(u32, f64)>> = BTreeMap::new();
    for p in predictions {
        if !(0.0..=1.0).contains(&p.p_fake) {
            return Err(Error::Data(format!(
                "p_fake {} for {}/{} outside [0, 1]",
                p.p_fake, p.video_id, p.frame_index
            )));
        }
        if models.contains(&p.model_id) && videos.contains(p.video_id.as_str()) {
            cells
                .entry((p.video_id.as_str(), p.model_id))
                .or_default()
                .push((p.frame_index, p.p_fake));
        }
    }
    let mut verdicts = Vec::with_capacity(video_ids.len());
    for vid in video_ids {
        let mut frame_set: Option<(ModelId, Vec<u32>)> = None;
        let mut per_model = BTreeMap::new();
        let mut all = Vec::new();
        for &m in &models {
            let Some(cell) = cells.get(&(vid.as_str(), m)) else {
                return Err(Error::Data(format!("model {m} has no predictions for video `{vid}`")));
            };
            let mut frames: Vec<u32> = cell.iter().map(|c| c.0).collect();
            frames.sort_unstable();
            match &frame_set {
                None => frame_set = Some((m, frames)),
                Some((first, expected)) if *expected != frames => {
                    return Err(Error::Data(format!(
                        "video `{vid}`: model {m} covers frames {frames:?}, model {first} covers {expected:?}"
                    )));
                }
                Some(_) => {}
            }
            let ps = cell.iter().map(|c| c.1);
            per_model.insert(m, fsum(ps.clone()) / cell.len() as f64);
            all.extend(ps);
        }
        let fused = fsum(all.iter().copied()) / all.len() as f64;
        verdicts.push(VideoVerdict {
            video_id: vid.clone(),
            p_fake_fused: fused,
            predicted_label: Label::from_p_fake(fused),
            per_model_p_fake: per_model,
        });
    }
    Ok(verdicts)
}

/// Ground truth for one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub label: Label,
    pub resolution_tag: Option<ResolutionTag>,
}

/// Per-video truth from manifest entries (which are already validated to
/// agree within a video).
pub fn video_truth(entries: &[ManifestEntry]) -> BTreeMap<String, VideoTruth> {
    entries
        .iter()
        .map(|e| {
            (
                e.video_id.clone(),
                VideoTruth {
                    label: e.label,
                    resolution_tag: Some(e.resolution_tag),
                },
            )
        })
        .collect()
}

/// Video ids of `entries` in first-appearance order.
pub fn video_ids(entries: &[ManifestEntry]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    entries
        .iter()
        .filter(|e| seen.insert(e.video_id.as_str()))
        .map(|e| e.video_id.clone())
        .collect()
}

/// Confusion counts with "fake" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub videos: usize,
    pub accuracy: f64,
    pub log_loss: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub models: Vec<ModelId>,
    #[serde(flatten)]
    pub overall: Metrics,
    pub breakdown: BTreeMap<ResolutionTag, Metrics>,
}

/// Probabilities are clipped to `[CLIP, 1 − CLIP]` before taking logs.
pub const LOG_LOSS_CLIP: f64 = 1e-15;

/// Binary cross-entropy of one prediction, clipped.
pub fn log_loss_term(p_fake: f64, label: Label) -> f64 {
    let p = p_fake.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
    match label {
        Label::Fake => -p.ln(),
        Label::Real => -(1.0 - p).ln(),
    }
}

fn metrics<'a>(rows: impl Iterator<Item = (&'a VideoVerdict, Label)>) -> Metrics {
    let mut c = Confusion::default();
    let mut terms = Vec::new();
    for (v, truth) in rows {
        match (v.predicted_label, truth) {
            (Label::Fake, Label::Fake) => c.tp += 1,
            (Label::Real, Label::Real) => c.tn += 1,
            (Label::Fake, Label::Real) => c.fp += 1,
            (Label::Real, Label::Fake) => c.fn_ += 1,
        }
        terms.push(log_loss_term(v.p_fake_fused, truth));
    }
    let n = c.total();
    let (accuracy, log_loss) = if n == 0 {
        (0.0, 0.0)
    } else {
        ((c.tp + c.tn) as f64 / n as f64, fsum(terms) / n as f64)
    };
    Metrics {
        videos: n,
        accuracy,
        log_loss,
        confusion: c,
    }
}

/// Accuracy, log loss and confusion over `verdicts`, plus a breakdown per
/// resolution tag for videos whose truth carries one.
pub fn score(verdicts: &[VideoVerdict], truth: &BTreeMap<String, VideoTruth>) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let t = truth
            .get(&v.video_id)
            .ok_or_else(|| Error::Data(format!("no truth label for video `{}`", v.video_id)))?;
        rows.push((v, *t));
    }
    let models: BTreeSet<ModelId> = verdicts
        .iter()
        .flat_map(|v| v.per_model_p_fake.keys().copied())
        .collect();
    let tags: BTreeSet<ResolutionTag> = rows.iter().filter_map(|(_, t)| t.resolution_tag).collect();
    let breakdown = tags
        .into_iter()
        .map(|tag| {
            let m = metrics(
                rows.iter()
                    .filter(|(_, t)| t.resolution_tag == Some(tag))
                    .map(|(v, t)| (*v, t.label)),
            );
            (tag, m)
        })
        .collect();
    Ok(MetricsReport {
        models: models.into_iter().collect(),
        overall: metrics(rows.iter().map(|(v, t)| (*v, t.label))),
        breakdown,
    })
}

/// Restricts fused verdicts to a single model's view (its per-model mean
/// becomes the fused value).
pub fn single_model_verdicts(verdicts: &[VideoVerdict], model: ModelId) -> Vec<VideoVerdict> {
    verdicts
        .iter()
        .filter_map(|v| {
            let p = *v.per_model_p_fake.get(&model)?;
            Some(VideoVerdict {
                video_id: v.video_id.clone(),
                p_fake_fused: p,
                predicted_label: Label::from_p_fake(p),
                per_model_p_fake: BTreeMap::from([(model, p)]),
            })
        })
        .collect()
}
