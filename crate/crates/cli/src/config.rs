//! Run configuration: one JSON document plus command-line overrides.
//!
//! Every subcommand resolves its settings the same way: start from the
//! defaults, layer the `--config` file on top, then apply individual flags.
//! Flags always win, so a config file can describe the common case while a
//! shell loop varies one knob.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use labelfuse_core::adapt::NoiseParams;
use labelfuse_core::class::ClassId;
use labelfuse_core::fusion::{CategoryGroups, ThresholdProfile};

/// Which cue feeds the fusion stage. The ablations measure what each cue
/// contributes on its own: depth-only stops after the segment vote,
/// cam-only discards the votes before the override pass.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Segment votes refined by activation-map overrides (the full method).
    #[default]
    None,
    /// Segment votes only; the override stage is skipped.
    DepthOnly,
    /// Activation maps only; every segment votes UNKNOWN before overrides.
    CamOnly,
}

/// Everything a pipeline run needs. All fields have defaults, so `{}` is a
/// valid config file and flags alone can drive a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Scene directories, each holding `depth.png`, `labels.png`, `ucm.png`,
    /// `cam.plf`, and `logits.plf` (the layout `gen-fixture` writes).
    pub scenes: Vec<PathBuf>,
    /// Output directory; batch runs add one subdirectory per scene.
    pub out: PathBuf,
    /// Root seed; every random stream is derived from it by name.
    pub seed: u64,
    /// Concurrent scene workers in batch runs.
    pub workers: usize,
    /// Confidence and response-gate thresholds for the fusion stage.
    pub thresholds: ThresholdProfile,
    /// Category split driving the override gates.
    pub groups: CategoryGroups,
    /// Contour strength above which a pixel counts as a boundary.
    pub tau_ucm: f64,
    /// Sensor-artifact simulation applied to depth before anything else;
    /// absent means the stage is skipped.
    pub noise: Option<NoiseParams>,
    /// Class names excluded from mean-IoU aggregation.
    pub exclude: Vec<String>,
    pub ablation: Ablation,
    /// Also write a contour-majority refinement of the pseudo labels.
    pub refine: bool,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            scenes: Vec::new(),
            out: PathBuf::from("out"),
            seed: 7,
            workers: 1,
            thresholds: ThresholdProfile::default(),
            groups: CategoryGroups::default(),
            tau_ucm: 0.2,
            noise: None,
            exclude: Vec::new(),
            ablation: Ablation::None,
            refine: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        if !self.tau_ucm.is_finite() || self.tau_ucm < 0.0 {
            bail!("tau_ucm must be finite and nonnegative, got {}", self.tau_ucm);
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        self.excluded_classes()?;
        Ok(())
    }

    /// Resolve the excluded class names; unknown names are an error rather
    /// than a silently ignored typo.
    pub fn excluded_classes(&self) -> Result<Vec<ClassId>> {
        self.exclude
            .iter()
            .map(|name| {
                ClassId::from_name(name)
                    .with_context(|| format!("unknown class name {name:?} in exclude list"))
            })
            .collect()
    }
}

/// Flags shared by every subcommand. Each one overrides the matching config
/// field when present.
#[derive(clap::Args, Clone, Debug)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for all derived random streams.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Concurrent scene workers in batch runs.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Softmax confidence a teacher pixel needs to keep its label.
    #[arg(long, value_name = "F")]
    pub tau_adapted: Option<f64>,
    /// Contour strength above which a pixel counts as a boundary.
    #[arg(long, value_name = "F")]
    pub tau_ucm: Option<f64>,
    /// Activation level that counts toward response areas.
    #[arg(long, value_name = "F")]
    pub tau_cam: Option<f64>,
    /// Class name to drop from mean-IoU aggregation (repeatable).
    #[arg(long = "exclude-class", value_name = "NAME")]
    pub exclude_class: Vec<String>,
}

impl ConfigArgs {
    /// Defaults ← config file ← flags, then validate.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(tau) = self.tau_adapted {
            cfg.thresholds.tau_adapted = tau;
        }
        if let Some(tau) = self.tau_ucm {
            cfg.tau_ucm = tau;
        }
        if let Some(tau) = self.tau_cam {
            cfg.thresholds.tau_cam = tau;
        }
        if !self.exclude_class.is_empty() {
            cfg.exclude = self.exclude_class.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
