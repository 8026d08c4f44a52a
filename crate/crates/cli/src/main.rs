//! `labelfuse` — deterministic pseudo-label pipeline for indoor scenes.
//!
//! One subcommand per stage plus `pipeline` to chain them and `gen-fixture`
//! for synthetic test scenes. Every command is a pure function of its
//! inputs, the config, and the seed: run it twice, get identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use labelfuse_core::adapt::{
    minmax_normalize, simulate_sensor_noise, train_minmax, NoiseParams, TraceRecord, TrainConfig,
    TRACE_HEADER,
};
use labelfuse_core::class::ClassId;
use labelfuse_core::contours::extract_segments;
use labelfuse_core::eval::{
    confusion, cover_ratio, metrics, restricted_metrics, ucm_refine,
};
use labelfuse_core::fusion::confidence_filter;
use labelfuse_core::io::{read_contour_png, read_depth_png, read_label_png, write_depth_png, write_label_png};
use labelfuse_core::rng::SeedStream;
use labelfuse_core::tensor::Tensor;
use labelfuse_core::weak_local::{compute_cam, head_forward, FeatureVolume, HeadWeights};

use labelfuse_cli::config::{self, ConfigArgs};
use labelfuse_cli::fixture::{generate_scene, write_scene, SceneSpec};
use labelfuse_cli::pipeline::{
    fuse_labels, read_scores, read_segments, run_pipeline, write_normalized, write_report,
};

#[derive(Parser)]
#[command(
    name = "labelfuse",
    about = "Fuse depth-teacher predictions with class activation maps into pseudo labels",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rescale a depth map to [-1, 1] over its valid pixels.
    Normalize {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// 16-bit grayscale depth PNG (millimeters, 0 = hole).
        #[arg(long, value_name = "PNG")]
        input: PathBuf,
    },
    /// Apply simulated sensor artifacts (jitter, quantization, holes).
    SimulateNoise {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "PNG")]
        input: PathBuf,
    },
    /// Train the toy adversarial depth-adaptation pair on two image sets.
    TrainToy {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory of clean (synthetic-domain) depth PNGs.
        #[arg(long, value_name = "DIR")]
        syn: PathBuf,
        /// Directory of sensor-domain depth PNGs.
        #[arg(long, value_name = "DIR")]
        real: PathBuf,
        /// Optimization steps (default from the training config).
        #[arg(long, value_name = "N")]
        steps: Option<usize>,
    },
    /// Project a feature volume through classifier weights into per-class
    /// activation maps.
    Cam {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Feature volume tensor, shape [depth, h, w].
        #[arg(long, value_name = "PLF")]
        features: PathBuf,
        /// Classifier weight tensor, shape [13, depth].
        #[arg(long, value_name = "PLF")]
        weights: PathBuf,
        /// Classifier bias tensor, shape [13].
        #[arg(long, value_name = "PLF")]
        bias: PathBuf,
        /// Output width (default: feature grid width).
        #[arg(long, value_name = "N")]
        width: Option<usize>,
        /// Output height (default: feature grid height).
        #[arg(long, value_name = "N")]
        height: Option<usize>,
    },
    /// Partition an image into segments by thresholding contour strengths.
    Segment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// 8-bit grayscale contour-strength PNG.
        #[arg(long, value_name = "PNG")]
        input: PathBuf,
    },
    /// Keep only confident teacher predictions; the rest become UNKNOWN.
    Filter {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Logit volume tensor, shape [13, h, w].
        #[arg(long, value_name = "PLF")]
        input: PathBuf,
    },
    /// Fuse filtered teacher labels with activation maps over segments.
    Fuse {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "PLF")]
        segments: PathBuf,
        /// Confidence-filtered label PNG.
        #[arg(long, value_name = "PNG")]
        filtered: PathBuf,
        /// Activation-map volume tensor, shape [13, h, w].
        #[arg(long, value_name = "PLF")]
        cam: PathBuf,
    },
    /// Score a label map against ground truth.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "PNG")]
        pred: PathBuf,
        #[arg(long, value_name = "PNG")]
        gt: PathBuf,
        /// Restrict scoring to pixels this label map covers.
        #[arg(long, value_name = "PNG")]
        mask: Option<PathBuf>,
    },
    /// Relabel each segment to its majority predicted class.
    Refine {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "PNG")]
        pred: PathBuf,
        #[arg(long, value_name = "PLF")]
        segments: PathBuf,
    },
    /// Generate a synthetic scene with consistent depth, labels, contours,
    /// activation maps, and teacher logits.
    GenFixture {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "N")]
        width: Option<usize>,
        #[arg(long, value_name = "N")]
        height: Option<usize>,
        /// Boxes to place.
        #[arg(long, value_name = "N")]
        boxes: Option<usize>,
        /// Fraction of teacher pixels corrupted to a random wrong class.
        #[arg(long, value_name = "F")]
        logit_corruption: Option<f64>,
        /// Amplitude of the activation maps' background response.
        #[arg(long, value_name = "F")]
        cam_noise: Option<f64>,
        /// Blind the depth cue to the small classes and the activation cue
        /// to everything else.
        #[arg(long)]
        complementary: bool,
    },
    /// Run the full stage chain over one or more scene directories.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scene directories (override the config's scene list).
        #[arg(value_name = "SCENE_DIR")]
        scenes: Vec<PathBuf>,
    },
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        // Machine-readable failure record on stderr; the exit code says the
        // rest.
        let record = serde_json::json!({ "error": format!("{err:#}") });
        eprintln!("{record}");
        std::process::exit(1);
    }
}

fn out_dir(cfg: &config::PipelineConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Normalize { cfg, input } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?;
            let depth = read_depth_png(&input)?;
            let norm = minmax_normalize(&depth)?;
            write_normalized(out, &norm)?;
        }
        Cmd::SimulateNoise { cfg, input } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?;
            let depth = read_depth_png(&input)?;
            let mut params = cfg.noise.unwrap_or(NoiseParams {
                hole_rate: 0.05,
                hole_blob_radius: 1.5,
                quantization_step: 0.02,
                lateral_jitter_sigma: 0.6,
                seed: 0,
            });
            params.seed = SeedStream::new(cfg.seed).stream("noise").next_u64();
            params.validate()?;
            let noisy = simulate_sensor_noise(&depth, &params);
            write_depth_png(&out.join("noisy.png"), &noisy)?;
        }
        Cmd::TrainToy {
            cfg,
            syn,
            real,
            steps,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?.to_owned();
            let syn_maps = read_depth_dir(&syn)?;
            let real_maps = read_depth_dir(&real)?;
            let mut train_cfg = TrainConfig {
                seed: cfg.seed,
                ..TrainConfig::default()
            };
            if let Some(steps) = steps {
                train_cfg.steps = steps;
            }
            let outcome = train_minmax(&syn_maps, &real_maps, &train_cfg)?;
            let mut trace = String::from(TRACE_HEADER);
            trace.push('\n');
            for record in &outcome.trace {
                trace.push_str(&record.csv_line());
                trace.push('\n');
            }
            fs::write(out.join("trace.csv"), trace).context("writing trace.csv")?;
            outcome.noise.write_file(&out.join("mapping_noise.plf"))?;
            outcome
                .restore
                .write_file(&out.join("mapping_restore.plf"))?;
            let accuracy = outcome.heldout_accuracy(&syn_maps, &real_maps)?;
            let summary = serde_json::json!({
                "steps": train_cfg.steps,
                "discriminator_accuracy": accuracy,
                "final": outcome.trace.last().map(TraceRecord::csv_line),
            });
            fs::write(
                out.join("outcome.json"),
                serde_json::to_string_pretty(&summary)? + "\n",
            )
            .context("writing outcome.json")?;
        }
        Cmd::Cam {
            cfg,
            features,
            weights,
            bias,
            width,
            height,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?;
            let f = FeatureVolume::from_tensor(&Tensor::read_file(&features)?)?;
            let w = HeadWeights::from_tensors(
                &Tensor::read_file(&weights)?,
                &Tensor::read_file(&bias)?,
            )?;
            let scores = head_forward(&f, &w)?;
            let cam = compute_cam(
                &f,
                &w,
                width.unwrap_or_else(|| f.width()),
                height.unwrap_or_else(|| f.height()),
            )?;
            cam.to_tensor().write_file(&out.join("cam.plf"))?;
            let by_class: Vec<serde_json::Value> = ClassId::all()
                .map(|c| serde_json::json!({ "class": c.name(), "score": scores[c.index()] }))
                .collect();
            fs::write(
                out.join("scores.json"),
                serde_json::to_string_pretty(&by_class)? + "\n",
            )
            .context("writing scores.json")?;
        }
        Cmd::Segment { cfg, input } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?;
            let ucm = read_contour_png(&input)?;
            let seg = extract_segments(&ucm, cfg.tau_ucm);
            seg.to_tensor()?.write_file(&out.join("segments.plf"))?;
        }
        Cmd::Filter { cfg, input } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?;
            let logits = read_scores(&input)?;
            let filtered = confidence_filter(&logits, cfg.thresholds.tau_adapted)?;
            write_label_png(&out.join("filtered.png"), &filtered)?;
        }
        Cmd::Fuse {
            cfg,
            segments,
            filtered,
            cam,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?.to_owned();
            let seg = read_segments(&segments)?;
            let filtered = read_label_png(&filtered)?;
            let cam = read_scores(&cam)?;
            let (step1, pseudo) = fuse_labels(&seg, &filtered, &cam, &cfg)?;
            write_label_png(&out.join("step1.png"), &step1)?;
            write_label_png(&out.join("pseudo.png"), &pseudo)?;
        }
        Cmd::Eval {
            cfg,
            pred,
            gt,
            mask,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?.to_owned();
            let exclude = cfg.excluded_classes()?;
            let pred = read_label_png(&pred)?;
            let gt = read_label_png(&gt)?;
            let report = match mask {
                Some(mask_path) => {
                    let mask = read_label_png(&mask_path)?;
                    restricted_metrics(&pred, &gt, &mask, &exclude)?
                }
                None => {
                    let cm = confusion(&pred, &gt, &[])?;
                    metrics(&cm, &exclude)?.with_cover(&cover_ratio(&pred, Some(&gt))?)
                }
            };
            write_report(&out, "report", &report)?;
            print!("{}", report.text_table());
        }
        Cmd::Refine {
            cfg,
            pred,
            segments,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?.to_owned();
            let pred = read_label_png(&pred)?;
            let seg = read_segments(&segments)?;
            let refined = ucm_refine(&pred, &seg)?;
            write_label_png(&out.join("refined.png"), &refined)?;
        }
        Cmd::GenFixture {
            cfg,
            width,
            height,
            boxes,
            logit_corruption,
            cam_noise,
            complementary,
        } => {
            let cfg = cfg.resolve()?;
            let out = out_dir(&cfg)?.to_owned();
            let mut spec = SceneSpec::default();
            if let Some(v) = width {
                spec.width = v;
            }
            if let Some(v) = height {
                spec.height = v;
            }
            if let Some(v) = boxes {
                spec.boxes = v;
            }
            if let Some(v) = logit_corruption {
                spec.logit_corruption = v;
            }
            if let Some(v) = cam_noise {
                spec.cam_noise = v;
            }
            spec.complementary = complementary;
            let scene = generate_scene(cfg.seed, &spec)?;
            write_scene(&scene, &out)?;
        }
        Cmd::Pipeline { cfg, scenes } => {
            let mut cfg = cfg.resolve()?;
            if !scenes.is_empty() {
                cfg.scenes = scenes;
            }
            let outcome = run_pipeline(&cfg)?;
            print!("{}", outcome.merged.text_table());
        }
    }
    Ok(())
}

/// Read every `.png` in a directory as a normalized depth map, in filename
/// order so runs are reproducible regardless of filesystem iteration order.
fn read_depth_dir(dir: &Path) -> Result<Vec<labelfuse_core::adapt::NormalizedDepthMap>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .png depth maps in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let depth = read_depth_png(p)?;
            Ok(minmax_normalize(&depth)?)
        })
        .collect()
}
