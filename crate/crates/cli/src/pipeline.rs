//! Stage orchestration: depth in, scored pseudo labels out.
//!
//! A run reads one or more scene directories, pushes each through
//! normalize → (noise) → filter → segment → vote → override → eval, writes
//! every intermediate artifact, and merges the per-scene confusion matrices
//! into one report. Scenes are independent, so batch runs fan out over a
//! small worker pool; results are merged in scene order, which keeps the
//! output identical for any worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};

use labelfuse_core::adapt::{minmax_normalize, simulate_sensor_noise, NormalizedDepthMap};
use labelfuse_core::class::{ClassId, NUM_CLASSES};
use labelfuse_core::contours::{extract_segments, SegmentMap};
use labelfuse_core::eval::{
    confusion, effective_metrics, metrics, ucm_refine, ConfusionMatrix, MetricReport,
};
use labelfuse_core::fusion::{confidence_filter, step1_vote, step2_integrate, StepOneResult};
use labelfuse_core::io::{read_contour_png, read_depth_png, read_label_png, write_depth_png, write_label_png};
use labelfuse_core::label::LabelMap;
use labelfuse_core::rng::SeedStream;
use labelfuse_core::score::{ScoreKind, ScoreVolume};
use labelfuse_core::tensor::{Tensor, TensorData};

use crate::config::{Ablation, PipelineConfig};

/// Raw coverage tallies. Unlike ratios, counts merge exactly across scenes.
#[derive(Clone, Copy, Debug)]
pub struct CoverCounts {
    labeled: u64,
    total: u64,
    covered: [u64; NUM_CLASSES],
    present: [u64; NUM_CLASSES],
}

impl Default for CoverCounts {
    fn default() -> CoverCounts {
        CoverCounts {
            labeled: 0,
            total: 0,
            covered: [0; NUM_CLASSES],
            present: [0; NUM_CLASSES],
        }
    }
}

impl CoverCounts {
    pub fn tally(pseudo: &LabelMap, gt: &LabelMap) -> CoverCounts {
        let mut c = CoverCounts::default();
        for (x, y, label) in pseudo.enumerate() {
            c.total += 1;
            if label.is_some() {
                c.labeled += 1;
            }
            if let Some(g) = gt.get(x, y) {
                c.present[g.index()] += 1;
                if label.is_some() {
                    c.covered[g.index()] += 1;
                }
            }
        }
        c
    }

    pub fn merge(&mut self, other: &CoverCounts) {
        self.labeled += other.labeled;
        self.total += other.total;
        for c in 0..NUM_CLASSES {
            self.covered[c] += other.covered[c];
            self.present[c] += other.present[c];
        }
    }
}

/// Metrics plus coverage-weighted metrics from raw tallies. Matches what
/// `metrics(..).with_cover(&cover_ratio(..))` computes for a single scene,
/// and extends it exactly to merged batches.
pub fn scored_report(
    cm: &ConfusionMatrix,
    counts: &CoverCounts,
    exclude: &[ClassId],
) -> Result<MetricReport> {
    let mut report = metrics(cm, exclude)?;
    report.cover_global = Some(counts.labeled as f64 / counts.total as f64);
    report.cover_per_class = Some(
        (0..NUM_CLASSES)
            .map(|c| {
                (counts.present[c] > 0).then(|| counts.covered[c] as f64 / counts.present[c] as f64)
            })
            .collect(),
    );
    let (eff_ga, eff_miou) = effective_metrics(&report)?;
    report.effective_ga = Some(eff_ga);
    report.effective_miou = Some(eff_miou);
    Ok(report)
}

/// Segment votes rasterized back onto the pixel grid.
pub fn rasterize_votes(seg: &SegmentMap, votes: &StepOneResult) -> LabelMap {
    let mut out = LabelMap::unknown(seg.width(), seg.height());
    for y in 0..seg.height() {
        for x in 0..seg.width() {
            out.set(x, y, votes.label(seg.id(x, y)));
        }
    }
    out
}

/// The fusion stage: segment votes, then activation-map overrides. Returns
/// the rasterized votes and the final pseudo labels; the configured ablation
/// decides which cue reaches the override pass.
pub fn fuse_labels(
    seg: &SegmentMap,
    filtered: &LabelMap,
    cam: &ScoreVolume,
    cfg: &PipelineConfig,
) -> Result<(LabelMap, LabelMap)> {
    let votes = step1_vote(seg, filtered)?;
    let raster = rasterize_votes(seg, &votes);
    let pseudo = match cfg.ablation {
        Ablation::None => step2_integrate(seg, &votes, cam, &cfg.thresholds, &cfg.groups)?,
        Ablation::DepthOnly => raster.clone(),
        Ablation::CamOnly => {
            let blank = StepOneResult::new(vec![None; seg.segment_count()]);
            step2_integrate(seg, &blank, cam, &cfg.thresholds, &cfg.groups)?
        }
    };
    Ok((raster, pseudo))
}

/// Write the normalized map as a value tensor plus a validity mask.
pub fn write_normalized(dir: &Path, norm: &NormalizedDepthMap) -> Result<()> {
    let (w, h) = (norm.width(), norm.height());
    let values = Tensor::new(vec![h, w], TensorData::F64(norm.values().as_slice().to_vec()))?;
    values.write_file(&dir.join("normalized.plf"))?;
    let mask_bytes: Vec<u8> = norm.mask().as_slice().iter().map(|&v| v as u8).collect();
    let mask = Tensor::new(vec![h, w], TensorData::U8(mask_bytes))?;
    mask.write_file(&dir.join("normalized_mask.plf"))?;
    Ok(())
}

pub fn write_report(dir: &Path, stem: &str, report: &MetricReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).context("encoding metric report")?;
    fs::write(dir.join(format!("{stem}.json")), json + "\n")
        .with_context(|| format!("writing {stem}.json"))?;
    fs::write(dir.join(format!("{stem}.txt")), report.text_table())
        .with_context(|| format!("writing {stem}.txt"))?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<ScoreVolume> {
    let t = Tensor::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScoreVolume::from_tensor(&t, ScoreKind::Logits)?)
}

pub fn read_segments(path: &Path) -> Result<SegmentMap> {
    let t = Tensor::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SegmentMap::from_tensor(&t)?)
}

/// Everything a finished scene contributes to the batch summary.
#[derive(Debug)]
pub struct SceneOutcome {
    pub name: String,
    pub report: MetricReport,
    matrix: ConfusionMatrix,
    counts: CoverCounts,
    refined: Option<(ConfusionMatrix, CoverCounts)>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// Metrics over all scenes combined.
    pub merged: MetricReport,
    /// Same, for the contour-refined labels (when refinement is on).
    pub merged_refined: Option<MetricReport>,
    pub scenes: Vec<SceneOutcome>,
}

/// Run every scene through the full stage chain and merge the results.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    if cfg.scenes.is_empty() {
        bail!("no scenes configured; pass scene directories or set \"scenes\" in the config");
    }
    let names = scene_names(&cfg.scenes)?;
    let exclude = cfg.excluded_classes()?;
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;

    // Fan out over a fixed-size pool. Slots are indexed by scene, so the
    // merge below never depends on completion order.
    let n = cfg.scenes.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SceneOutcome>>>> = Mutex::new((0..n).map(|_| None).collect());
    let workers = cfg.workers.min(n).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let outcome = run_scene(cfg, &cfg.scenes[i], &names[i], &exclude);
                slots.lock().expect("no poisoned scene slots")[i] = Some(outcome);
            });
        }
    });

    let mut scenes = Vec::with_capacity(n);
    for (i, slot) in slots.into_inner().expect("pool finished").into_iter().enumerate() {
        let outcome = slot
            .expect("every scene index was processed")
            .with_context(|| format!("scene {}", cfg.scenes[i].display()))?;
        scenes.push(outcome);
    }

    let mut cm = ConfusionMatrix::zero();
    let mut counts = CoverCounts::default();
    for s in &scenes {
        cm.merge(&s.matrix);
        counts.merge(&s.counts);
    }
    let merged = scored_report(&cm, &counts, &exclude)?;
    write_report(&cfg.out, "report", &merged)?;

    let merged_refined = if cfg.refine {
        let mut cm = ConfusionMatrix::zero();
        let mut counts = CoverCounts::default();
        for s in &scenes {
            let (m, c) = s.refined.as_ref().expect("refine ran for every scene");
            cm.merge(m);
            counts.merge(c);
        }
        let report = scored_report(&cm, &counts, &exclude)?;
        write_report(&cfg.out, "refined_report", &report)?;
        Some(report)
    } else {
        None
    };

    Ok(PipelineOutcome {
        merged,
        merged_refined,
        scenes,
    })
}

/// Output subdirectory names: the scene directories' basenames, which must
/// be unique so artifacts cannot clobber each other.
fn scene_names(scenes: &[PathBuf]) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(scenes.len());
    for dir in scenes {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .filter(|n| !n.is_empty())
            .with_context(|| format!("scene path {} has no directory name", dir.display()))?;
        if names.contains(&name) {
            bail!("duplicate scene name {name:?}; scene directories must have unique basenames");
        }
        names.push(name);
    }
    Ok(names)
}

fn run_scene(
    cfg: &PipelineConfig,
    scene_dir: &Path,
    name: &str,
    exclude: &[ClassId],
) -> Result<SceneOutcome> {
    let out = cfg.out.join(name);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    // Depth: optional sensor-artifact simulation, then normalization. The
    // normalized map is an artifact of record; the label path continues from
    // the teacher's logits.
    let depth = read_depth_png(&scene_dir.join("depth.png"))?;
    let depth = match &cfg.noise {
        Some(params) => {
            let mut p = *params;
            // One root seed drives everything; the field in the config is a
            // placeholder that each scene overrides with its derived stream.
            p.seed = SeedStream::new(cfg.seed).stream(name).next_u64();
            let noisy = simulate_sensor_noise(&depth, &p);
            write_depth_png(&out.join("noisy.png"), &noisy)?;
            noisy
        }
        None => depth,
    };
    let norm = minmax_normalize(&depth)?;
    write_normalized(&out, &norm)?;

    // Teacher confidence filter.
    let logits = read_scores(&scene_dir.join("logits.plf"))?;
    let filtered = confidence_filter(&logits, cfg.thresholds.tau_adapted)?;
    write_label_png(&out.join("filtered.png"), &filtered)?;

    // Contour segments.
    let ucm = read_contour_png(&scene_dir.join("ucm.png"))?;
    let seg = extract_segments(&ucm, cfg.tau_ucm);
    seg.to_tensor()?.write_file(&out.join("segments.plf"))?;

    // Fusion.
    let cam = read_scores(&scene_dir.join("cam.plf"))?;
    let (step1, pseudo) = fuse_labels(&seg, &filtered, &cam, cfg)?;
    write_label_png(&out.join("step1.png"), &step1)?;
    write_label_png(&out.join("pseudo.png"), &pseudo)?;

    // Scoring.
    let gt = read_label_png(&scene_dir.join("labels.png"))?;
    let matrix = confusion(&pseudo, &gt, &[])?;
    let counts = CoverCounts::tally(&pseudo, &gt);
    let report = scored_report(&matrix, &counts, exclude)?;
    write_report(&out, "report", &report)?;

    let refined = if cfg.refine {
        let refined = ucm_refine(&pseudo, &seg)?;
        write_label_png(&out.join("refined.png"), &refined)?;
        let matrix = confusion(&refined, &gt, &[])?;
        let counts = CoverCounts::tally(&refined, &gt);
        write_report(&out, "refined_report", &scored_report(&matrix, &counts, exclude)?)?;
        Some((matrix, counts))
    } else {
        None
    };

    Ok(SceneOutcome {
        name: name.to_owned(),
        report,
        matrix,
        counts,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{generate_scene, write_scene, SceneSpec};

    fn fixture_config(dir: &Path, scenes: &[PathBuf], ablation: Ablation) -> PipelineConfig {
        PipelineConfig {
            scenes: scenes.to_vec(),
            out: dir.join(match ablation {
                Ablation::None => "full",
                Ablation::DepthOnly => "depth-only",
                Ablation::CamOnly => "cam-only",
            }),
            ablation,
            ..PipelineConfig::default()
        }
    }

    fn write_fixture(dir: &Path, seed: u64, complementary: bool) -> PathBuf {
        let spec = SceneSpec {
            complementary,
            ..SceneSpec::default()
        };
        let scene = generate_scene(seed, &spec).unwrap();
        let path = dir.join(format!("scene-{seed}"));
        write_scene(&scene, &path).unwrap();
        path
    }

    #[test]
    fn complementary_fusion_beats_both_ablations() {
        let dir = tempfile::tempdir().unwrap();
        let scene = write_fixture(dir.path(), 21, true);
        let scenes = vec![scene];
        let full = run_pipeline(&fixture_config(dir.path(), &scenes, Ablation::None)).unwrap();
        let depth =
            run_pipeline(&fixture_config(dir.path(), &scenes, Ablation::DepthOnly)).unwrap();
        let cam = run_pipeline(&fixture_config(dir.path(), &scenes, Ablation::CamOnly)).unwrap();
        assert!(
            full.merged.miou > depth.merged.miou,
            "full {} vs depth-only {}",
            full.merged.miou,
            depth.merged.miou
        );
        assert!(
            full.merged.miou > cam.merged.miou,
            "full {} vs cam-only {}",
            full.merged.miou,
            cam.merged.miou
        );
    }

    #[test]
    fn depth_only_never_finds_the_small_classes() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = vec![write_fixture(dir.path(), 33, true)];
        let out = run_pipeline(&fixture_config(dir.path(), &scenes, Ablation::DepthOnly)).unwrap();
        for c in [ClassId::BOOKS, ClassId::PAINTING] {
            assert_eq!(
                out.merged.iou[c.index()],
                Some(0.0),
                "depth cue is blind to {c}, so its IoU must be exactly 0"
            );
        }
    }

    #[test]
    fn batch_merge_is_worker_count_independent() {
        let dir = tempfile::tempdir().unwrap();
        let scenes: Vec<PathBuf> = (0..4)
            .map(|i| write_fixture(dir.path(), 100 + i, false))
            .collect();
        let mut serial_cfg = fixture_config(dir.path(), &scenes, Ablation::None);
        serial_cfg.workers = 1;
        serial_cfg.out = dir.path().join("serial");
        let serial = run_pipeline(&serial_cfg).unwrap();

        let mut pooled_cfg = serial_cfg.clone();
        pooled_cfg.workers = 4;
        pooled_cfg.out = dir.path().join("pooled");
        let pooled = run_pipeline(&pooled_cfg).unwrap();

        assert_eq!(
            serde_json::to_string(&serial.merged).unwrap(),
            serde_json::to_string(&pooled.merged).unwrap()
        );
        // And the merged matrix really is the sum of the scenes.
        let per_scene_pixels: u64 = serial.scenes.iter().map(|s| s.matrix.total()).sum();
        let mut merged = ConfusionMatrix::zero();
        for s in &serial.scenes {
            merged.merge(&s.matrix);
        }
        assert_eq!(merged.total(), per_scene_pixels);
    }

    #[test]
    fn single_scene_merge_equals_the_scene_report() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = vec![write_fixture(dir.path(), 55, false)];
        let out = run_pipeline(&fixture_config(dir.path(), &scenes, Ablation::None)).unwrap();
        assert_eq!(
            serde_json::to_string(&out.merged).unwrap(),
            serde_json::to_string(&out.scenes[0].report).unwrap()
        );
    }

    #[test]
    fn refinement_artifacts_appear_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = vec![write_fixture(dir.path(), 77, false)];
        let mut cfg = fixture_config(dir.path(), &scenes, Ablation::None);
        cfg.refine = true;
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.merged_refined.is_some());
        assert!(cfg.out.join("scene-77").join("refined.png").is_file());
        assert!(cfg.out.join("refined_report.json").is_file());
    }

    #[test]
    fn duplicate_scene_basenames_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a").join("scene");
        let b = dir.path().join("b").join("scene");
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        let cfg = PipelineConfig {
            scenes: vec![a, b],
            out: dir.path().join("out"),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().contains("unique"), "{err:#}");
    }
}
