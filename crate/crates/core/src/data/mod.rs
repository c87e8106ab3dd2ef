//! Manifests, PPM frames, class balancing, augmentation and the synthetic
//! pseudo-video generator.

mod augment;
mod image;
mod manifest;
mod synth;

pub use augment::{
    add_gaussian_noise, augment, crop_resize, gaussian_blur, gaussian_kernel, hflip,
    linear_contrast, multiply, AugmentationConfig,
};
pub use image::{decode_ppm, encode_ppm, load_image, quantize, save_image};
pub use manifest::{
    load_manifest, manifest_to_jsonl, parse_manifest, validate_entries, write_manifest, Manifest,
    ManifestEntry,
};
pub use synth::{
    generate_synthetic_dataset, laplacian_energy, render_video, ClassCounts, SyntheticDataConfig,
    MANIFEST_FILE,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;
use crate::types::Label;

/// Duplicates minority-class entries (uniformly, with replacement) until
/// both classes have the same count, then shuffles. All originals are kept.
pub fn oversample_balance(entries: &[ManifestEntry], seed: u64) -> Result<Vec<ManifestEntry>> {
    let (real, fake): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
        entries.iter().partition(|e| e.label == Label::Real);
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Data(format!(
            "oversampling needs both classes, got {} real and {} fake",
            real.len(),
            fake.len()
        )));
    }
    let mut rng = seed::stream(seed, &["oversample"]);
    let minority = if real.len() < fake.len() { &real } else { &fake };
    let deficit = real.len().abs_diff(fake.len());
    let mut out: Vec<ManifestEntry> = entries.to_vec();
    out.extend((0..deficit).map(|_| minority[rng.gen_range(0..minority.len())].clone()));
    out.shuffle(&mut rng);
    Ok(out)
}

/// Box-downsamples `image` to `[C, H, W]` of `target` when its spatial size
/// is an integer multiple of the target's. Returns it unchanged when the
/// shapes already agree.
pub fn fit_to_input(image: Tensor, target: [usize; 3]) -> Result<Tensor> {
    let [tc, th, tw] = target;
    let (c, h, w) = image.dims3()?;
    if (c, h, w) == (tc, th, tw) {
        return Ok(image);
    }
    if c != tc || h % th != 0 || w % tw != 0 || h / th != w / tw {
        return Err(Error::shape(format!(
            "frame of shape [{c}, {h}, {w}] does not fit network input {target:?}"
        )));
    }
    let f = h / th;
    let src = image.data();
    let norm = (f * f) as f64;
    Ok(Tensor::from_fn(&[c, th, tw], |i| {
        let (ch, y, x) = (i / (th * tw), (i / tw) % th, i % tw);
        let mut s = 0.0;
        for dy in 0..f {
            for dx in 0..f {
                s += src[(ch * h + y * f + dy) * w + x * f + dx];
            }
        }
        s / norm
    }))
}

/// Loads one manifest frame and fits it to a network input shape.
pub fn load_frame(manifest_dir: &Path, entry: &ManifestEntry, input_shape: [usize; 3]) -> Result<Tensor> {
    fit_to_input(load_image(manifest_dir.join(&entry.frame_path))?, input_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ResolutionTag, Split};
    use std::collections::HashMap;

    fn entries(real: usize, fake: usize) -> Vec<ManifestEntry> {
        let mk = |i: usize, label: Label| ManifestEntry {
            frame_path: format!("{i}.ppm"),
            video_id: format!("{label}-{i}"),
            frame_index: 0,
            label,
            split: Split::Train,
            resolution_tag: ResolutionTag::Low,
        };
        (0..real)
            .map(|i| mk(i, Label::Real))
            .chain((0..fake).map(|i| mk(i, Label::Fake)))
            .collect()
    }

    fn counts(v: &[ManifestEntry]) -> HashMap<&ManifestEntry, usize> {
        let mut m = HashMap::new();
        for e in v {
            *m.entry(e).or_default() += 1;
        }
        m
    }

    #[test]
    fn balanced_input_is_permuted_only() {
        let input = entries(5, 5);
        let out = oversample_balance(&input, 1).unwrap();
        assert_eq!(counts(&out), counts(&input));
    }

    #[test]
    fn forced_counts() {
        let input = entries(2, 6);
        let out = oversample_balance(&input, 3).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(out.iter().filter(|e| e.label == Label::Real).count(), 6);
        let c = counts(&out);
        for e in &input[..2] {
            assert!(c[e] >= 1);
        }
        assert_eq!(c[&input[0]] + c[&input[1]], 6);
        for e in &input[2..] {
            assert_eq!(c[e], 1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let input = entries(30, 100);
        assert_eq!(oversample_balance(&input, 7).unwrap(), oversample_balance(&input, 7).unwrap());
        assert_ne!(oversample_balance(&input, 7).unwrap(), oversample_balance(&input, 8).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(oversample_balance(&entries(0, 3), 1), Err(Error::Data(_))));
    }

    #[test]
    fn box_downsample_averages_blocks() {
        let img = Tensor::from_fn(&[3, 4, 4], |i| i as f64);
        let out = fit_to_input(img, [3, 2, 2]).unwrap();
        assert_eq!(&out.data()[..4], &[2.5, 4.5, 10.5, 12.5]);
        assert!(fit_to_input(Tensor::zeros(&[3, 6, 6]), [3, 4, 4]).is_err());
    }
}
