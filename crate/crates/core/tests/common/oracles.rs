//! Independent oracles for fusion, scoring and the FGSM linear case.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use fusedet::eval::{fuse, score, FramePrediction, MetricsReport, VideoTruth};
use fusedet::nets::Checkpoint;
use fusedet::{Label, ModelId, ResolutionTag};

const MODELS: [ModelId; 4] = [ModelId::Plainnet, ModelId::Branchnet, ModelId::Sepnet, ModelId::Linear];

fn random_p(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        2 => 0.5,
        3 => rng.gen_range(0.0..1e-12),
        4 => 1.0 - rng.gen_range(0.0..1e-12),
        _ => rng.gen::<f64>(),
    }
}

pub struct Case {
    pub models: Vec<ModelId>,
    pub videos: Vec<String>,
    pub predictions: Vec<FramePrediction>,
}

/// A complete prediction set: every model covers the same frames of every
/// video.
pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let m = rng.gen_range(1..=MODELS.len());
    let mut models = MODELS.to_vec();
    models.shuffle(rng);
    models.truncate(m);
    let videos: Vec<String> = (0..rng.gen_range(1..=4)).map(|v| format!("v{v}")).collect();
    let mut predictions = Vec::new();
    for v in &videos {
        // Sparse, non-contiguous frame indices.
        let frames: Vec<u32> = (0..rng.gen_range(1..=9)).map(|f| f * 3 + rng.gen_range(0..3)).collect();
        for &model_id in &models {
            for &frame_index in &frames {
                predictions.push(FramePrediction {
                    model_id,
                    video_id: v.clone(),
                    frame_index,
                    p_fake: random_p(rng),
                });
            }
        }
    }
    predictions.shuffle(rng);
    Case {
        models,
        videos,
        predictions,
    }
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

/// The correctly rounded exact sum, divided by the count in f64.
pub fn rounded_mean(values: &[f64]) -> f64 {
    let sum = values.iter().fold(BigRational::from_integer(BigInt::from(0)), |acc, &v| acc + exact(v));
    sum.to_f64().unwrap() / values.len() as f64
}

/// Fuses `case` and compares every verdict with the exact oracle.
pub fn check_fusion_case(case: &Case) -> Result<(), String> {
    let verdicts = fuse(&case.predictions, &case.models, &case.videos).map_err(|e| e.to_string())?;
    if verdicts.len() != case.videos.len() {
        return Err(format!("{} verdicts for {} videos", verdicts.len(), case.videos.len()));
    }
    for (v, verdict) in case.videos.iter().zip(&verdicts) {
        if &verdict.video_id != v {
            return Err(format!("verdict order: {} for {v}", verdict.video_id));
        }
        let all: Vec<f64> = case.predictions.iter().filter(|p| &p.video_id == v).map(|p| p.p_fake).collect();
        let expected = rounded_mean(&all);
        if verdict.p_fake_fused != expected {
            return Err(format!("{v}: fused {} vs oracle {expected}", verdict.p_fake_fused));
        }
        let label = if expected >= 0.5 { Label::Fake } else { Label::Real };
        if verdict.predicted_label != label {
            return Err(format!("{v}: label {} at {expected}", verdict.predicted_label));
        }
        for &m in &case.models {
            let mine: Vec<f64> = case
                .predictions
                .iter()
                .filter(|p| &p.video_id == v && p.model_id == m)
                .map(|p| p.p_fake)
                .collect();
            if verdict.per_model_p_fake[&m] != rounded_mean(&mine) {
                return Err(format!("{v}: {m} mean {} vs oracle", verdict.per_model_p_fake[&m]));
            }
        }
    }
    Ok(())
}

/// `(video, truth, tag, p_fake)`, one frame, one model.
pub fn scored(rows: &[(&str, Label, Option<ResolutionTag>, f64)]) -> MetricsReport {
    let predictions: Vec<FramePrediction> = rows
        .iter()
        .map(|&(v, _, _, p_fake)| FramePrediction {
            model_id: ModelId::Plainnet,
            video_id: v.into(),
            frame_index: 0,
            p_fake,
        })
        .collect();
    let videos: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
    let truth: BTreeMap<String, VideoTruth> = rows
        .iter()
        .map(|&(v, label, resolution_tag, _)| (v.to_string(), VideoTruth { label, resolution_tag }))
        .collect();
    let verdicts = fuse(&predictions, &[ModelId::Plainnet], &videos).unwrap();
    score(&verdicts, &truth).unwrap()
}

/// The hand-enumerated six-video fixture: tp, fn, tn at low resolution;
/// fp, tp (a 0.5 tie), fp at high.
pub const SIX_VIDEOS: [(&str, Label, Option<ResolutionTag>, f64); 6] = [
    ("a", Label::Fake, Some(ResolutionTag::Low), 0.9),
    ("b", Label::Fake, Some(ResolutionTag::Low), 0.3),
    ("c", Label::Real, Some(ResolutionTag::Low), 0.2),
    ("d", Label::Real, Some(ResolutionTag::High), 0.7),
    ("e", Label::Fake, Some(ResolutionTag::High), 0.5),
    ("f", Label::Real, Some(ResolutionTag::High), 0.6),
];

/// Log losses of [`SIX_VIDEOS`] (overall, low, high) in 40-digit decimal:
/// −(ln .9 + ln .3 + ln .8 + ln .3 + ln .5 + ln .4) / 6 and its halves.
#[allow(clippy::excessive_precision)]
pub const SIX_VIDEO_LOG_LOSS: [f64; 3] = [
    0.724314598009668069473341306649835324519,
    0.5108256237659906832055140963036619348783,
    0.937803572253345455741168516996008714160,
];

/// Logistic regression in closed form: with centred input `c = 2x − 1`,
/// `d = (w_other − w_true)·c + (b_other − b_true)` and the loss is
/// `ln(1 + e^d)`, so `∇ₓ loss = 2σ(d)(w_other − w_true)`.
pub struct Logistic {
    w_diff: Vec<f64>,
    b_diff: f64,
}

impl Logistic {
    pub fn of(ckpt: &Checkpoint, truth: Label) -> Self {
        let w = ckpt.param("fc.weight").unwrap().data();
        let b = ckpt.param("fc.bias").unwrap().data();
        let n = w.len() / 2;
        let (own, other) = match truth {
            Label::Real => (0, 1),
            Label::Fake => (1, 0),
        };
        Logistic {
            w_diff: (0..n).map(|i| w[other * n + i] - w[own * n + i]).collect(),
            b_diff: b[other] - b[own],
        }
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        let d: f64 = self.w_diff.iter().zip(x).map(|(w, x)| w * (2.0 * x - 1.0)).sum::<f64>() + self.b_diff;
        d.exp().ln_1p()
    }

    pub fn sign_direction(&self) -> Vec<f64> {
        self.w_diff.iter().map(|&w| if w > 0.0 { 1.0 } else if w < 0.0 { -1.0 } else { 0.0 }).collect()
    }
}

