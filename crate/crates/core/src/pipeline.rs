//! Run configuration and the four pipeline stages behind the CLI:
//! synthesize, train, evaluate, attack.
//!
//! Every stage draws its randomness from the single `RunConfig::seed`
//! through named substreams, so a stage rerun with the same config writes
//! the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{render_robustness_markdown, run_attack_experiment, AttackConfig, RobustnessResult};
use crate::data::{
    generate_synthetic_dataset, load_manifest, AugmentationConfig, ClassCounts, Manifest, ManifestEntry,
    SyntheticDataConfig, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{
    fuse, predict_frames, render_report, score, single_model_verdicts, video_ids, video_truth,
    ClassifierReport, FramePrediction, ReportFormat,
};
use crate::nets::{build_net, load_checkpoint, save_checkpoint, Checkpoint, FreezeMask};
use crate::seed::derive_seed;
use crate::train::{train, FrameSet, TrainConfig, TrainReport};
use crate::types::{ModelId, ResolutionTag, Split};

/// The synthetic dataset section of a [`RunConfig`]; the seed comes from
/// the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub train: ClassCounts,
    pub test: ClassCounts,
    pub resolutions: Vec<ResolutionTag>,
    pub frames_per_video: usize,
    pub artifact_amplitude_range: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        let d = SyntheticDataConfig::default();
        DataSettings {
            train: d.train,
            test: d.test,
            resolutions: d.resolutions,
            frames_per_video: d.frames_per_video,
            artifact_amplitude_range: d.artifact_amplitude_range,
            noise_sigma: d.noise_sigma,
        }
    }
}

/// Training hyper-parameters for one model; the seed and freeze mask are
/// derived per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: u32,
    pub warmup_epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Freeze the first block for the epochs after warm-up.
    pub freeze_first_block: bool,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            warmup_epochs: 2,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            freeze_first_block: true,
            augmentation: d.augmentation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            models_dir: "models".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_models")]
    pub models: Vec<ModelId>,
    #[serde(default)]
    pub data: DataSettings,
    #[serde(default)]
    pub train: TrainSettings,
    /// Replaces `train` for the listed models.
    #[serde(default)]
    pub train_overrides: BTreeMap<ModelId, TrainSettings>,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub paths: Paths,
}

fn default_input_size() -> usize {
    64
}

fn default_models() -> Vec<ModelId> {
    ModelId::DETECTORS.to_vec()
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        RunConfig {
            seed,
            input_size: default_input_size(),
            models: default_models(),
            data: DataSettings::default(),
            train: TrainSettings::default(),
            train_overrides: BTreeMap::new(),
            attack: AttackConfig::default(),
            paths: Paths::default(),
        }
    }

    /// Parses a JSON config. A missing `seed` is a configuration error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.input_shape()?;
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        self.synthetic_config().validate()?;
        for m in &self.models {
            self.train_config(*m)?.validate()?;
        }
        self.attack.validate()
    }

    pub fn input_shape(&self) -> Result<[usize; 3]> {
        match self.input_size {
            64 | 128 => Ok([3, self.input_size, self.input_size]),
            n => Err(Error::Config(format!("input_size must be 64 or 128, got {n}"))),
        }
    }

    pub fn synthetic_config(&self) -> SyntheticDataConfig {
        let d = &self.data;
        SyntheticDataConfig {
            train: d.train,
            test: d.test,
            resolutions: d.resolutions.clone(),
            frames_per_video: d.frames_per_video,
            artifact_amplitude_range: d.artifact_amplitude_range,
            noise_sigma: d.noise_sigma,
            seed: derive_seed(self.seed, &["data"]),
        }
    }

    pub fn init_seed(&self, model: ModelId) -> u64 {
        derive_seed(self.seed, &["init", model.as_str()])
    }

    pub fn train_settings(&self, model: ModelId) -> &TrainSettings {
        self.train_overrides.get(&model).unwrap_or(&self.train)
    }

    pub fn train_config(&self, model: ModelId) -> Result<TrainConfig> {
        let s = self.train_settings(model);
        let freeze = if s.freeze_first_block {
            let spec = crate::nets::NetworkSpec::for_model(model, self.input_shape()?)?;
            FreezeMask::new(spec.first_block())
        } else {
            FreezeMask::default()
        };
        Ok(TrainConfig {
            epochs: s.epochs,
            warmup_epochs: s.warmup_epochs,
            batch_size: s.batch_size,
            learning_rate: s.learning_rate,
            momentum: s.momentum,
            seed: derive_seed(self.seed, &["train", model.as_str()]),
            freeze,
            augmentation: s.augmentation.clone(),
        })
    }

    /// Applies `--epochs` to the shared settings and every override.
    pub fn set_epochs(&mut self, epochs: u32) {
        self.train.epochs = epochs;
        for s in self.train_overrides.values_mut() {
            s.epochs = epochs;
        }
    }
}

/// Video and frame counts per split, label and resolution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub videos: BTreeMap<String, usize>,
    pub frames: usize,
}

impl DatasetSummary {
    pub fn of(entries: &[ManifestEntry]) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        let mut videos = BTreeMap::new();
        for e in entries {
            if seen.insert(&e.video_id) {
                let key = format!("{}/{}/{}", e.split.as_str(), e.label, e.resolution_tag.as_str());
                *videos.entry(key).or_insert(0) += 1;
            }
        }
        DatasetSummary {
            videos,
            frames: entries.len(),
        }
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} frames", self.frames)?;
        for (k, n) in &self.videos {
            writeln!(f, "  {k}: {n} videos")?;
        }
        Ok(())
    }
}

/// Writes the synthetic dataset under `out_dir` and returns the manifest path.
pub fn synth(cfg: &RunConfig, out_dir: &Path) -> Result<(PathBuf, DatasetSummary)> {
    let entries = generate_synthetic_dataset(&cfg.synthetic_config(), out_dir)?;
    Ok((out_dir.join(MANIFEST_FILE), DatasetSummary::of(&entries)))
}

/// `<ckpt>.train.json` next to the checkpoint.
pub fn train_report_path(ckpt_path: &Path) -> PathBuf {
    ckpt_path.with_extension("train.json")
}

/// Trains `model` on the train split and writes the checkpoint plus its
/// training report.
pub fn train_model(cfg: &RunConfig, model: ModelId, manifest: &Path, out_ckpt: &Path) -> Result<TrainReport> {
    if !cfg.models.contains(&model) {
        return Err(Error::UnknownModel(format!("{model} is not listed in the config's models")));
    }
    let shape = cfg.input_shape()?;
    let tc = cfg.train_config(model)?;
    let manifest = load_manifest(manifest)?;
    let frames = FrameSet::load(&manifest, Split::Train, shape)?;
    let init = build_net(model, shape, cfg.init_seed(model))?;
    let (ckpt, report) = train(&init, &frames, &tc)?;
    if let Some(dir) = out_ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&ckpt, out_ckpt)?;
    write_file(&train_report_path(out_ckpt), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

pub fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<Checkpoint>> {
    if paths.is_empty() {
        return Err(Error::Config("at least one checkpoint is required".into()));
    }
    let ckpts = paths.iter().map(load_checkpoint).collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for c in &ckpts {
        if !seen.insert(c.spec.model_id) {
            return Err(Error::Config(format!("model {} given twice", c.spec.model_id)));
        }
    }
    Ok(ckpts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<FramePrediction>,
    /// One row per model in input order, then the fused row.
    pub reports: Vec<ClassifierReport>,
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MARKDOWN: &str = "report.md";
pub const ROBUSTNESS_JSON: &str = "robustness.json";
pub const ROBUSTNESS_MARKDOWN: &str = "robustness.md";

/// Predicts every test frame with every model, fuses per video and scores
/// each model alone and the fusion.
pub fn evaluate(ckpts: &[Checkpoint], manifest: &Manifest) -> Result<Evaluation> {
    let test = manifest.split(Split::Test);
    if test.is_empty() {
        return Err(Error::Data("manifest has no test frames".into()));
    }
    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    for c in ckpts {
        let p = predict_frames(c, &manifest.base_dir, &test);
        predictions.extend(p.predictions);
        failures.extend(p.failures);
    }
    // Every manifest frame must be predicted by every model; a failed frame
    // is a coverage gap even when all models fail on it alike.
    if let Some(f) = failures.first() {
        return Err(Error::Data(format!(
            "coverage gap: {} frame predictions failed, first {} on {}/{}: {}",
            failures.len(),
            f.model_id,
            f.video_id,
            f.frame_index,
            f.error
        )));
    }
    let ids: Vec<ModelId> = ckpts.iter().map(|c| c.spec.model_id).collect();
    let verdicts = fuse(&predictions, &ids, &video_ids(&test))?;
    let truth = video_truth(&test);
    let mut reports = Vec::with_capacity(ids.len() + 1);
    for &m in &ids {
        reports.push(ClassifierReport::model(m, score(&single_model_verdicts(&verdicts, m), &truth)?));
    }
    reports.push(ClassifierReport::fused(score(&verdicts, &truth)?));
    Ok(Evaluation { predictions, reports })
}

pub fn predictions_to_jsonl(predictions: &[FramePrediction]) -> String {
    predictions
        .iter()
        .map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n")
        .collect()
}

/// Writes predictions, JSON report and markdown report into `out_dir`.
pub fn write_evaluation(eval: &Evaluation, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_file(&out_dir.join(PREDICTIONS_FILE), &predictions_to_jsonl(&eval.predictions))?;
    write_file(&out_dir.join(REPORT_JSON), &render_report(&eval.reports, ReportFormat::Json))?;
    write_file(&out_dir.join(REPORT_MARKDOWN), &render_report(&eval.reports, ReportFormat::Markdown))
}

/// Runs the attack experiment on the test split.
pub fn attack(ckpts: &[Checkpoint], manifest: &Manifest, cfg: &AttackConfig) -> Result<RobustnessResult> {
    cfg.validate()?;
    let target = ckpts
        .iter()
        .find(|c| c.spec.model_id == cfg.target_model_id)
        .ok_or_else(|| Error::UnknownModel(format!("target {} is not among the checkpoints", cfg.target_model_id)))?;
    let frames = FrameSet::load(manifest, Split::Test, target.spec.input_shape)?;
    run_attack_experiment(ckpts, &frames, cfg)
}

pub fn write_robustness(result: &RobustnessResult, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_file(&out_dir.join(ROBUSTNESS_JSON), &(serde_json::to_string_pretty(result)? + "\n"))?;
    write_file(&out_dir.join(ROBUSTNESS_MARKDOWN), &render_robustness_markdown(result, 10))
}

/// File locations of one full run under a work directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub manifest: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub reports_dir: PathBuf,
}

impl RunLayout {
    pub fn new(cfg: &RunConfig, root: &Path) -> Self {
        let models = root.join(&cfg.paths.models_dir);
        RunLayout {
            manifest: root.join(&cfg.paths.data_dir).join(MANIFEST_FILE),
            checkpoints: cfg.models.iter().map(|m| models.join(format!("{m}.fdck"))).collect(),
            reports_dir: root.join(&cfg.paths.reports_dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub layout: RunLayout,
    pub train_reports: Vec<TrainReport>,
    pub evaluation: Evaluation,
    pub robustness: RobustnessResult,
}

/// synth → train every model → evaluate → attack, with all files under
/// `root` at the locations named by `cfg.paths`.
pub fn run_all(cfg: &RunConfig, root: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let layout = RunLayout::new(cfg, root);
    let data_dir = root.join(&cfg.paths.data_dir);
    synth(cfg, &data_dir)?;
    let train_reports = cfg
        .models
        .iter()
        .zip(&layout.checkpoints)
        .map(|(&m, path)| train_model(cfg, m, &layout.manifest, path))
        .collect::<Result<Vec<_>>>()?;
    let ckpts = load_checkpoints(&layout.checkpoints)?;
    let manifest = load_manifest(&layout.manifest)?;
    let evaluation = evaluate(&ckpts, &manifest)?;
    write_evaluation(&evaluation, &layout.reports_dir)?;
    let robustness = attack(&ckpts, &manifest, &cfg.attack)?;
    write_robustness(&robustness, &layout.reports_dir)?;
    Ok(RunOutput {
        layout,
        train_reports,
        evaluation,
        robustness,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
