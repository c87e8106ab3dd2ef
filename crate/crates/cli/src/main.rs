//! `fusedet synth|train|eval|attack`
//!
//! Exit status: 0 success, 2 configuration error, 3 I/O error, 4 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fusedet::data::load_manifest;
use fusedet::pipeline::{self, RunConfig};
use fusedet::{Error, ModelId, Result};

#[derive(Parser)]
#[command(name = "fusedet", version, about = "Ensemble deepfake detection on synthetic pseudo-videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config. Without one, defaults are used; `synth` and `train` then need `--seed`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: config `paths.data_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write its checkpoint and training report.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: ModelId,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Checkpoint path (default: `<models_dir>/<model>.fdck`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u32>,
    },
    /// Predict the test split, fuse per video and write reports.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoints to evaluate (default: every configured model).
        #[arg(long = "ckpt")]
        ckpts: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report directory (default: config `paths.reports_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attack one model with FGSM and report every classifier before and after.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ckpt")]
        ckpts: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        target: Option<ModelId>,
    },
}

/// Loads the config (or defaults) and applies `--seed`. A seed must come
/// from one of the two when `seed_required`.
fn load_config(common: &Common, seed_required: bool) -> Result<RunConfig> {
    let mut cfg = match (&common.config, common.seed) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(seed)) => RunConfig::new(seed),
        (None, None) if !seed_required => RunConfig::new(0),
        (None, None) => return Err(Error::Config("pass --config or --seed".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn default_manifest(cfg: &RunConfig) -> PathBuf {
    cfg.paths.data_dir.join(fusedet::data::MANIFEST_FILE)
}

fn checkpoint_paths(cfg: &RunConfig, given: Vec<PathBuf>) -> Vec<PathBuf> {
    if given.is_empty() {
        cfg.models
            .iter()
            .map(|m| cfg.paths.models_dir.join(format!("{m}.fdck")))
            .collect()
    } else {
        given
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = load_config(&common, true)?;
            let out = out.unwrap_or_else(|| cfg.paths.data_dir.clone());
            let (manifest, summary) = pipeline::synth(&cfg, &out)?;
            println!("{}", manifest.display());
            print!("{summary}");
        }
        Command::Train {
            common,
            model,
            manifest,
            out,
            epochs,
        } => {
            let mut cfg = load_config(&common, true)?;
            if let Some(e) = epochs {
                cfg.set_epochs(e);
                cfg.validate()?;
            }
            let manifest = manifest.unwrap_or_else(|| default_manifest(&cfg));
            let out = out.unwrap_or_else(|| cfg.paths.models_dir.join(format!("{model}.fdck")));
            let report = pipeline::train_model(&cfg, model, &manifest, &out)?;
            if let Some(last) = report.epochs.last() {
                println!(
                    "{model}: {} epochs, final loss {:.5}, accuracy {:.4}",
                    report.epochs.len(),
                    last.mean_loss,
                    last.accuracy
                );
            }
            wrote(&out);
            wrote(&pipeline::train_report_path(&out));
        }
        Command::Eval {
            common,
            ckpts,
            manifest,
            out,
        } => {
            let cfg = load_config(&common, false)?;
            let ckpts = pipeline::load_checkpoints(&checkpoint_paths(&cfg, ckpts))?;
            let manifest = load_manifest(manifest.unwrap_or_else(|| default_manifest(&cfg)))?;
            let out = out.unwrap_or_else(|| cfg.paths.reports_dir.clone());
            let eval = pipeline::evaluate(&ckpts, &manifest)?;
            pipeline::write_evaluation(&eval, &out)?;
            print!(
                "{}",
                fusedet::eval::render_report(&eval.reports, fusedet::eval::ReportFormat::Markdown)
            );
            for f in [pipeline::PREDICTIONS_FILE, pipeline::REPORT_JSON, pipeline::REPORT_MARKDOWN] {
                wrote(&out.join(f));
            }
        }
        Command::Attack {
            common,
            ckpts,
            manifest,
            out,
            epsilon,
            target,
        } => {
            let mut cfg = load_config(&common, false)?;
            if let Some(e) = epsilon {
                cfg.attack.epsilon = e;
            }
            if let Some(t) = target {
                cfg.attack.target_model_id = t;
            }
            let ckpts = pipeline::load_checkpoints(&checkpoint_paths(&cfg, ckpts))?;
            let manifest = load_manifest(manifest.unwrap_or_else(|| default_manifest(&cfg)))?;
            let out = out.unwrap_or_else(|| cfg.paths.reports_dir.clone());
            let result = pipeline::attack(&ckpts, &manifest, &cfg.attack)?;
            pipeline::write_robustness(&result, &out)?;
            print!("{}", fusedet::attack::render_robustness_markdown(&result, 0));
            for f in [pipeline::ROBUSTNESS_JSON, pipeline::ROBUSTNESS_MARKDOWN] {
                wrote(&out.join(f));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
