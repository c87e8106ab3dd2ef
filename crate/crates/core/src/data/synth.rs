//! Synthetic pseudo-video dataset.
//!
//! Every video has a smooth base image (a background gradient plus a few
//! soft colored blobs) that drifts slightly from frame to frame. Fake
//! videos additionally carry a high-frequency checkerboard with a per-video
//! random amplitude, phase and channel tint. At high resolution the
//! checkerboard is drawn in 2×2 blocks at half amplitude, so it is weaker
//! and survives 2× box downsampling.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::encode_ppm;
use super::manifest::{manifest_to_jsonl, ManifestEntry};
use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::tensor::Tensor;
use crate::types::{Label, ResolutionTag, Split};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Videos per label within one (split, resolution) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCounts {
    pub real: usize,
    pub fake: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Real => self.real,
            Label::Fake => self.fake,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataConfig {
    /// Per resolution tag.
    pub train: ClassCounts,
    /// Per resolution tag.
    pub test: ClassCounts,
    pub resolutions: Vec<ResolutionTag>,
    pub frames_per_video: usize,
    /// Checkerboard amplitude range at low resolution; halved at high.
    pub artifact_amplitude_range: (f64, f64),
    /// Per-frame sensor noise standard deviation.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticDataConfig {
    fn default() -> Self {
        SyntheticDataConfig {
            train: ClassCounts { real: 40, fake: 60 },
            test: ClassCounts { real: 20, fake: 20 },
            resolutions: vec![ResolutionTag::Low, ResolutionTag::High],
            frames_per_video: 5,
            artifact_amplitude_range: (0.03, 0.06),
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_video == 0 {
            return Err(Error::Config("frames_per_video must be at least 1".into()));
        }
        let (lo, hi) = self.artifact_amplitude_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!(
                "artifact_amplitude_range [{lo}, {hi}] must be ordered within (0, 0.5]"
            )));
        }
        if !(0.0..=0.1).contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise_sigma {} outside [0, 0.1]",
                self.noise_sigma
            )));
        }
        let mut seen = self.resolutions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.resolutions.len() {
            return Err(Error::Config("resolutions listed twice".into()));
        }
        Ok(())
    }

    /// Video ids in manifest order, with their split, resolution and label.
    pub fn videos(&self) -> Vec<(String, Split, ResolutionTag, Label)> {
        let mut out = Vec::new();
        for (split, counts) in [(Split::Train, self.train), (Split::Test, self.test)] {
            for &res in &self.resolutions {
                for label in [Label::Real, Label::Fake] {
                    for i in 0..counts.get(label) {
                        let id = format!("{}-{}-{}-{i:04}", split.as_str(), res.as_str(), label.as_str());
                        out.push((id, split, res, label));
                    }
                }
            }
        }
        out
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    radius: f64,
    color: [f64; 3],
}

struct VideoPlan {
    background: [[f64; 3]; 2],
    vertical: bool,
    blobs: Vec<Blob>,
    /// `(amplitude, phase, tint)` for fakes.
    artifact: Option<(f64, usize, [f64; 3])>,
}

fn plan_video(rng: &mut ChaCha8Rng, label: Label, cfg: &SyntheticDataConfig) -> VideoPlan {
    let color = |rng: &mut ChaCha8Rng| [0; 3].map(|_| rng.gen_range(0.2..0.8));
    let background = [color(rng), color(rng)];
    let vertical = rng.gen_bool(0.5);
    let n = rng.gen_range(3..=6);
    let blobs = (0..n)
        .map(|_| Blob {
            cy: rng.gen_range(0.15..0.85),
            cx: rng.gen_range(0.15..0.85),
            radius: rng.gen_range(0.08..0.25),
            color: [0; 3].map(|_| rng.gen_range(-0.25..0.25)),
        })
        .collect();
    let artifact = (label == Label::Fake).then(|| {
        let (lo, hi) = cfg.artifact_amplitude_range;
        let amp = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let phase = rng.gen_range(0..2);
        let tint = [0; 3].map(|_| rng.gen_range(0.5..1.0));
        (amp, phase, tint)
    });
    VideoPlan {
        background,
        vertical,
        blobs,
        artifact,
    }
}

fn render_frame(plan: &VideoPlan, res: ResolutionTag, noise_sigma: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let side = res.side();
    let s = side as f64;
    // Per-frame drift: a sub-pixel-to-few-pixel shift and a brightness wobble.
    let (dy, dx) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
    let gain = rng.gen_range(-0.02..0.02);
    let block = side / 64;
    let mut img = Tensor::zeros(&[3, side, side]);
    let data = img.data_mut();
    for y in 0..side {
        for x in 0..side {
            let (v, u) = ((y as f64 + 0.5) / s, (x as f64 + 0.5) / s);
            let t = if plan.vertical { v } else { u };
            let mut px = [0.0; 3];
            for (c, p) in px.iter_mut().enumerate() {
                *p = plan.background[0][c] * (1.0 - t) + plan.background[1][c] * t + gain;
            }
            for b in &plan.blobs {
                let d2 = (v - b.cy - dy).powi(2) + (u - b.cx - dx).powi(2);
                let wgt = (-d2 / (2.0 * b.radius * b.radius)).exp();
                for (p, bc) in px.iter_mut().zip(b.color) {
                    *p += wgt * bc;
                }
            }
            if let Some((amp, phase, tint)) = plan.artifact {
                let sign = if (y / block + x / block + phase).is_multiple_of(2) { 1.0 } else { -1.0 };
                let a = amp / block as f64;
                for (p, tc) in px.iter_mut().zip(tint) {
                    *p += sign * a * tc;
                }
            }
            for (c, p) in px.iter().enumerate() {
                data[(c * side + y) * side + x] = *p;
            }
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for v in img.data_mut() {
            *v += normal.sample(rng);
        }
    }
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

/// Renders every frame of one video. Pure in `(cfg, video_id, label, res)`.
pub fn render_video(cfg: &SyntheticDataConfig, video_id: &str, label: Label, res: ResolutionTag) -> Vec<Tensor> {
    let mut rng = seed::stream(cfg.seed, &["synth", video_id]);
    let plan = plan_video(&mut rng, label, cfg);
    (0..cfg.frames_per_video)
        .map(|_| render_frame(&plan, res, cfg.noise_sigma, &mut rng))
        .collect()
}

/// Writes `<out>/<split>/<video_id>/<frame_index>.ppm` for every frame plus
/// `<out>/manifest.jsonl` (frame paths relative to `out`). Returns the
/// manifest entries.
pub fn generate_synthetic_dataset(cfg: &SyntheticDataConfig, out_dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let videos = cfg.videos();
    let written = par::map(videos.len(), |i| -> Result<Vec<ManifestEntry>> {
        let (id, split, res, label) = &videos[i];
        let rel_dir = format!("{}/{id}", split.as_str());
        let dir = out.join(&rel_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        render_video(cfg, id, *label, *res)
            .iter()
            .enumerate()
            .map(|(f, frame)| {
                let path = dir.join(format!("{f}.ppm"));
                let bytes = encode_ppm(frame).expect("rendered frames are [3, H, W]");
                std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                Ok(ManifestEntry {
                    frame_path: format!("{rel_dir}/{f}.ppm"),
                    video_id: id.clone(),
                    frame_index: f as u32,
                    label: *label,
                    split: *split,
                    resolution_tag: *res,
                })
            })
            .collect()
    });
    let mut entries = Vec::new();
    for v in written {
        entries.extend(v?);
    }
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, manifest_to_jsonl(&entries)).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Mean absolute response of the 4-neighbour Laplacian over interior
/// pixels, averaged over channels.
pub fn laplacian_energy(image: &Tensor) -> f64 {
    let (c, h, w) = image.dims3().expect("[C, H, W] image");
    let d = image.data();
    let at = |ch: usize, y: usize, x: usize| d[(ch * h + y) * w + x];
    let mut total = 0.0;
    for ch in 0..c {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let lap = at(ch, y - 1, x) + at(ch, y + 1, x) + at(ch, y, x - 1) + at(ch, y, x + 1)
                    - 4.0 * at(ch, y, x);
                total += lap.abs();
            }
        }
    }
    total / (c * (h - 2) * (w - 2)) as f64
}
