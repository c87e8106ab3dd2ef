//! Training-time image augmentation on `[C, H, W]` tensors in `[0, 1]`.
//!
//! Operations run in a fixed order (crop-and-resize, horizontal flip,
//! Gaussian blur, Gaussian noise, linear contrast, multiply), each gated by
//! its own apply probability, followed by a clamp to `[0, 1]`. Contrast and
//! multiply are defined on the `[0, 1]` pixel scale.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub crop_prob: f64,
    /// Largest fraction removed from each side, in `[0, 0.2]`.
    pub crop_fraction_max: f64,
    pub hflip_prob: f64,
    pub blur_prob: f64,
    pub blur_sigma_range: (f64, f64),
    pub noise_prob: f64,
    pub noise_sigma_range: (f64, f64),
    pub contrast_prob: f64,
    pub contrast_alpha_range: (f64, f64),
    pub multiply_prob: f64,
    pub multiply_range: (f64, f64),
}

impl Default for AugmentationConfig {
    /// Mild settings that keep single-pixel texture visible.
    fn default() -> Self {
        AugmentationConfig {
            crop_prob: 0.25,
            crop_fraction_max: 0.08,
            hflip_prob: 0.5,
            blur_prob: 0.1,
            blur_sigma_range: (0.0, 0.6),
            noise_prob: 0.5,
            noise_sigma_range: (0.0, 0.03),
            contrast_prob: 0.5,
            contrast_alpha_range: (0.8, 1.2),
            multiply_prob: 0.5,
            multiply_range: (0.8, 1.2),
        }
    }
}

impl AugmentationConfig {
    /// Every apply probability zero: `augment` is the identity.
    pub fn identity() -> Self {
        AugmentationConfig {
            crop_prob: 0.0,
            hflip_prob: 0.0,
            blur_prob: 0.0,
            noise_prob: 0.0,
            contrast_prob: 0.0,
            multiply_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("crop_prob", self.crop_prob),
            ("hflip_prob", self.hflip_prob),
            ("blur_prob", self.blur_prob),
            ("noise_prob", self.noise_prob),
            ("contrast_prob", self.contrast_prob),
            ("multiply_prob", self.multiply_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !(0.0..=0.2).contains(&self.crop_fraction_max) {
            return Err(Error::Config(format!(
                "crop_fraction_max = {} outside [0, 0.2]",
                self.crop_fraction_max
            )));
        }
        let ranges = [
            ("blur_sigma_range", self.blur_sigma_range, (0.0, 2.0)),
            ("noise_sigma_range", self.noise_sigma_range, (0.0, 0.1)),
            ("contrast_alpha_range", self.contrast_alpha_range, (0.6, 1.4)),
            ("multiply_range", self.multiply_range, (0.7, 1.3)),
        ];
        for (name, (lo, hi), (min, max)) in ranges {
            if !(min <= lo && lo <= hi && hi <= max) {
                return Err(Error::Config(format!(
                    "{name} = [{lo}, {hi}] must be ordered within [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn dims(image: &Tensor) -> (usize, usize, usize) {
    image.dims3().expect("augmentation needs a [C, H, W] image")
}

/// Applies the configured augmentations. Random draws happen in operation
/// order, and an operation's parameters are drawn only when it applies.
pub fn augment(image: &Tensor, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Tensor {
    let mut out = image.clone();
    if rng.gen_bool(cfg.crop_prob) {
        let m = cfg.crop_fraction_max;
        let sides = [0; 4].map(|_| if m > 0.0 { rng.gen_range(0.0..=m) } else { 0.0 });
        out = crop_resize(&out, sides);
    }
    if rng.gen_bool(cfg.hflip_prob) {
        out = hflip(&out);
    }
    if rng.gen_bool(cfg.blur_prob) {
        out = gaussian_blur(&out, draw(rng, cfg.blur_sigma_range));
    }
    if rng.gen_bool(cfg.noise_prob) {
        let sigma = draw(rng, cfg.noise_sigma_range);
        add_gaussian_noise(&mut out, sigma, rng);
    }
    if rng.gen_bool(cfg.contrast_prob) {
        linear_contrast(&mut out, draw(rng, cfg.contrast_alpha_range));
    }
    if rng.gen_bool(cfg.multiply_prob) {
        multiply(&mut out, draw(rng, cfg.multiply_range));
    }
    for v in out.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Crops `[top, bottom, left, right]` fractions off the image and resizes
/// the remainder back to the original size by bilinear interpolation
/// (pixel-center alignment, edge-clamped).
pub fn crop_resize(image: &Tensor, [top, bottom, left, right]: [f64; 4]) -> Tensor {
    let (c, h, w) = dims(image);
    let (hf, wf) = (h as f64, w as f64);
    let (y0, x0) = (top * hf, left * wf);
    let (sy, sx) = (1.0 - top - bottom, 1.0 - left - right);
    let src = image.data();
    let sample = |ch: usize, y: f64, x: f64| {
        let y = y.clamp(0.0, hf - 1.0);
        let x = x.clamp(0.0, wf - 1.0);
        let (iy, ix) = (y.floor() as usize, x.floor() as usize);
        let (jy, jx) = ((iy + 1).min(h - 1), (ix + 1).min(w - 1));
        let (fy, fx) = (y - iy as f64, x - ix as f64);
        let at = |r: usize, col: usize| src[(ch * h + r) * w + col];
        let top = at(iy, ix) + fx * (at(iy, jx) - at(iy, ix));
        let bot = at(jy, ix) + fx * (at(jy, jx) - at(jy, ix));
        top + fy * (bot - top)
    };
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, r, col) = (i / (h * w), (i / w) % h, i % w);
        let y = y0 + (r as f64 + 0.5) * sy - 0.5;
        let x = x0 + (col as f64 + 0.5) * sx - 0.5;
        sample(ch, y, x)
    })
}

pub fn hflip(image: &Tensor) -> Tensor {
    let (c, h, w) = dims(image);
    let src = image.data();
    Tensor::from_fn(&[c, h, w], |i| {
        let (row, col) = (i / w, i % w);
        src[row * w + (w - 1 - col)]
    })
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
/// `σ = 0` gives the single tap `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with replicated edges. Each pass is evaluated
/// as `x_c + Σ w_i (x_i − x_c)`, so constant regions stay bit-exact.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Tensor {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return image.clone();
    }
    let (c, h, w) = dims(image);
    let r = (kernel.len() / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let center = src[(ch * h + y) * w + x];
                    let mut acc = 0.0;
                    for (k, &wt) in kernel.iter().enumerate() {
                        let off = k as isize - r;
                        let (yy, xx) = if horizontal {
                            (y, (x as isize + off).clamp(0, w as isize - 1) as usize)
                        } else {
                            ((y as isize + off).clamp(0, h as isize - 1) as usize, x)
                        };
                        acc += wt * (src[(ch * h + yy) * w + xx] - center);
                    }
                    out[(ch * h + y) * w + x] = center + acc;
                }
            }
        }
        out
    };
    let once = pass(image.data(), true);
    Tensor::new(vec![c, h, w], pass(&once, false)).expect("shape preserved")
}

pub fn add_gaussian_noise(image: &mut Tensor, sigma: f64, rng: &mut impl Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for v in image.data_mut() {
        *v += normal.sample(rng);
    }
}

/// `x → α(x − 0.5) + 0.5`.
pub fn linear_contrast(image: &mut Tensor, alpha: f64) {
    for v in image.data_mut() {
        *v = alpha * (*v - 0.5) + 0.5;
    }
}

/// `x → m·x`.
pub fn multiply(image: &mut Tensor, m: f64) {
    for v in image.data_mut() {
        *v *= m;
    }
}
