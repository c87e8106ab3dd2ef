use fusedet::data::{AugmentationConfig, ManifestEntry};
use fusedet::nets::{build_net, net_forward, Checkpoint, FreezeMask, NetworkSpec};
use fusedet::train::{train, FrameSet, TrainConfig};
use fusedet::{Error, Label, ModelId, ResolutionTag, Split, Tensor};

fn entry(video: &str, label: Label) -> ManifestEntry {
    ManifestEntry {
        frame_path: format!("{video}/0.ppm"),
        video_id: video.into(),
        frame_index: 0,
        label,
        split: Split::Train,
        resolution_tag: ResolutionTag::Low,
    }
}

/// Two dark real frames and two bright fake frames, [3, 2, 2].
fn toy() -> FrameSet {
    let entries = vec![
        entry("r0", Label::Real),
        entry("r1", Label::Real),
        entry("f0", Label::Fake),
        entry("f1", Label::Fake),
    ];
    let images = [0.1, 0.25, 0.8, 0.9]
        .iter()
        .enumerate()
        .map(|(k, &v)| Tensor::from_fn(&[3, 2, 2], |i| v + 0.01 * ((i + k) % 3) as f64))
        .collect();
    FrameSet::new(entries, images).unwrap()
}

fn linear() -> Checkpoint {
    Checkpoint::init(NetworkSpec::for_model(ModelId::Linear, [3, 2, 2]).unwrap(), 3)
}

fn plain_config() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 1,
        learning_rate: 0.1,
        momentum: 0.0,
        seed: 11,
        augmentation: AugmentationConfig::identity(),
        ..TrainConfig::default()
    }
}

fn dataset_loss(ckpt: &Checkpoint, set: &FrameSet) -> f64 {
    let total: f64 = set
        .entries
        .iter()
        .zip(&set.images)
        .map(|(e, x)| {
            let p = net_forward(ckpt, x).unwrap().p_fake();
            -match e.label {
                Label::Fake => p.ln(),
                Label::Real => (1.0 - p).ln(),
            }
        })
        .sum();
    total / set.entries.len() as f64
}

#[test]
fn one_epoch_lowers_toy_loss() {
    let set = toy();
    let init = linear();
    let (trained, report) = train(&init, &set, &plain_config()).unwrap();
    let before = dataset_loss(&init, &set);
    let after = dataset_loss(&trained, &set);
    assert!(after < before, "loss {before} -> {after}");
    assert_eq!(report.epochs.len(), 1);
    assert_eq!(report.epochs[0].samples, 4);
    assert_eq!(report.epochs[0].batch_losses.len(), 4);

    // Longer training keeps lowering the epoch loss on a separable set.
    let cfg = TrainConfig {
        epochs: 15,
        ..plain_config()
    };
    let (trained, report) = train(&init, &set, &cfg).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.mean_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert_eq!(report.final_accuracy(), Some(1.0));
    assert!(dataset_loss(&trained, &set) < 0.1);
}

#[test]
fn same_seed_same_checkpoint() {
    let set = toy();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 3,
        momentum: 0.9,
        augmentation: AugmentationConfig::default(),
        ..plain_config()
    };
    let (a, ra) = train(&linear(), &set, &cfg).unwrap();
    let (b, rb) = train(&linear(), &set, &cfg).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(ra, rb);
    assert_eq!(ra.final_checkpoint_digest, a.digest());
    let (c, _) = train(&linear(), &set, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn all_frozen_leaves_parameters_unchanged() {
    let set = toy();
    let init = linear();
    let cfg = TrainConfig {
        epochs: 2,
        freeze: FreezeMask::new(["fc"]),
        ..plain_config()
    };
    let (trained, report) = train(&init, &set, &cfg).unwrap();
    assert_eq!(trained.params, init.params);
    assert_eq!(report.epochs.len(), 2);
    assert_eq!(trained.meta.epochs_trained, 2);
}

#[test]
fn frozen_block_is_bit_identical_on_a_detector() {
    let init = build_net(ModelId::Branchnet, [3, 64, 64], 5).unwrap();
    let first = init.spec.first_block();
    assert_eq!(first, ["stem"]);
    let entries = vec![entry("r", Label::Real), entry("f", Label::Fake)];
    let images = vec![
        Tensor::from_fn(&[3, 64, 64], |i| (i % 7) as f64 / 7.0),
        Tensor::from_fn(&[3, 64, 64], |i| (i % 2) as f64),
    ];
    let set = FrameSet::new(entries, images).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        freeze: FreezeMask::new(first),
        ..plain_config()
    };
    let (trained, _) = train(&init, &set, &cfg).unwrap();
    for (name, t) in &init.params {
        let same = trained.params[name].data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert_eq!(same, name.starts_with("stem."), "{name}");
    }
}

#[test]
fn rejects_empty_and_single_class_sets() {
    let empty = FrameSet::new(Vec::new(), Vec::new()).unwrap();
    assert!(matches!(train(&linear(), &empty, &plain_config()), Err(Error::Data(_))));
    let set = toy();
    let only_fake = FrameSet::new(set.entries[2..].to_vec(), set.images[2..].to_vec()).unwrap();
    assert!(matches!(train(&linear(), &only_fake, &plain_config()), Err(Error::Data(_))));
}
