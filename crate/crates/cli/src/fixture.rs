//! Deterministic synthetic scenes for end-to-end tests.
//!
//! A scene is a ceiling band, a wall band, and a floor, with axis-aligned
//! boxes standing on the floor or hanging on the wall. Depth, ground-truth
//! labels, contour strengths, activation maps, and teacher logits are all
//! drawn from the same layout, so the cues agree by construction — except
//! where an error knob deliberately breaks one of them.
//!
//! The `complementary` mode splits the cues along class lines: the depth
//! teacher is blind to the small flat classes (their boxes sit flush with
//! the support surface, and the teacher reports the support class), while
//! the activation maps respond to nothing else. Fusing both cues is then
//! provably better than either alone, which is what the end-to-end tests
//! lean on.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use labelfuse_core::class::{ClassId, NUM_CLASSES};
use labelfuse_core::depth::DepthMap;
use labelfuse_core::grid::Grid;
use labelfuse_core::io::{write_contour_png, write_depth_png, write_label_png};
use labelfuse_core::label::LabelMap;
use labelfuse_core::rng::SeedStream;
use labelfuse_core::score::{ScoreKind, ScoreVolume};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("bad scene spec: {0}")]
    BadSpec(String),
}

/// Knobs of [`generate_scene`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Boxes to attempt to place (crowded layouts may fit fewer).
    pub boxes: usize,
    /// Fraction of teacher pixels re-rolled to a random wrong class.
    pub logit_corruption: f64,
    /// Amplitude of the activation maps' background response.
    pub cam_noise: f64,
    /// Split the cues: depth blind to small classes, activations blind to
    /// everything else. Forces one books box and one painting box.
    pub complementary: bool,
}

impl Default for SceneSpec {
    fn default() -> SceneSpec {
        SceneSpec {
            width: 48,
            height: 48,
            boxes: 6,
            logit_corruption: 0.03,
            cam_noise: 0.05,
            complementary: false,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<(), FixtureError> {
        if self.width < 24 || self.height < 24 {
            return Err(FixtureError::BadSpec(format!(
                "canvas {}x{} too small; need at least 24x24 for the bands",
                self.width, self.height
            )));
        }
        for (name, rate) in [
            ("logit_corruption", self.logit_corruption),
            ("cam_noise", self.cam_noise),
        ] {
            if !rate.is_finite() || !(0.0..=1.0).contains(&rate) {
                return Err(FixtureError::BadSpec(format!(
                    "{name} must lie in [0,1], got {rate}"
                )));
            }
        }
        if self.complementary && self.boxes < 2 {
            return Err(FixtureError::BadSpec(
                "complementary mode needs at least 2 boxes (books and painting)".to_owned(),
            ));
        }
        Ok(())
    }
}

/// One placed box. `elevation` is its depth contrast against the support
/// surface; 0 means invisible to the depth cue.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlacedBox {
    pub class: ClassId,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub elevation: f64,
    /// The band the box sits in; what a blind teacher reports instead.
    pub support: ClassId,
}

impl PlacedBox {
    fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    /// Overlap check with a 2-pixel moat, so neighboring boxes never share
    /// a boundary and the background stays connected between them.
    fn crowds(&self, other: &PlacedBox) -> bool {
        let gap = 2;
        self.x < other.x + other.w + gap
            && other.x < self.x + self.w + gap
            && self.y < other.y + other.h + gap
            && other.y < self.y + self.h + gap
    }
}

/// A fully materialized scene: every cue the pipeline consumes plus the
/// ground truth it is scored against.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub depth: DepthMap,
    pub gt: LabelMap,
    pub ucm: Grid<f64>,
    pub cam: ScoreVolume,
    pub logits: ScoreVolume,
    pub boxes: Vec<PlacedBox>,
}

/// Classes whose boxes hang on the wall band; everything else stands on the
/// floor.
const WALL_MOUNTED: [ClassId; 3] = [ClassId::PAINTING, ClassId::TV, ClassId::WINDOW];
const FLOOR_STANDING: [ClassId; 7] = [
    ClassId::BED,
    ClassId::BOOKS,
    ClassId::CHAIR,
    ClassId::FURNITURE,
    ClassId::OBJECTS,
    ClassId::SOFA,
    ClassId::TABLE,
];

/// Teacher confidence margin and logit jitter. The margin keeps softmax
/// confidence comfortably above the default keep-threshold even at the
/// jitter's tails, so only corrupted pixels vote wrong.
const LOGIT_MARGIN: f64 = 5.0;
const LOGIT_SIGMA: f64 = 0.25;
/// In-blob activation level; clears every response gate's peak threshold.
const CAM_BLOB_FLOOR: f64 = 0.85;

pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<SyntheticScene, FixtureError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let root = SeedStream::new(seed);
    let mut layout_rng = root.stream("layout");
    let mut logit_rng = root.stream("logits");
    let mut cam_rng = root.stream("cam");

    // Horizontal bands: ceiling, wall, floor.
    let ceil_rows = (h / 8).max(3);
    let wall_rows = (h / 4).max(9);
    let wall_top = ceil_rows;
    let floor_top = ceil_rows + wall_rows;

    let band_of = |y: usize| {
        if y < wall_top {
            ClassId::CEIL
        } else if y < floor_top {
            ClassId::WALL
        } else {
            ClassId::FLOOR
        }
    };
    // Background depth: flat ceiling and wall, floor plane receding with y.
    let background_depth = |y: usize| match band_of(y) {
        ClassId::FLOOR => {
            let t = (y - floor_top) as f64 / (h - floor_top) as f64;
            3.0 - 1.8 * t
        }
        _ => 3.0,
    };

    // Small flat classes: flush (zero elevation) in complementary mode.
    let small = [ClassId::BOOKS, ClassId::PAINTING];
    let mut queue: Vec<ClassId> = Vec::new();
    if spec.complementary {
        queue.push(ClassId::BOOKS);
        queue.push(ClassId::PAINTING);
    }
    while queue.len() < spec.boxes {
        // Alternate bands so both stay populated.
        let pick = if queue.len() % 2 == 0 {
            FLOOR_STANDING[layout_rng.below(FLOOR_STANDING.len())]
        } else {
            WALL_MOUNTED[layout_rng.below(WALL_MOUNTED.len())]
        };
        queue.push(pick);
    }

    let mut boxes: Vec<PlacedBox> = Vec::new();
    for &class in queue.iter().take(spec.boxes) {
        let on_wall = WALL_MOUNTED.contains(&class);
        let (band_top, band_rows) = if on_wall {
            (wall_top, wall_rows)
        } else {
            (floor_top, h - floor_top)
        };
        let support = if on_wall { ClassId::WALL } else { ClassId::FLOOR };
        // Fit the box inside the band with a 1-pixel margin.
        for _attempt in 0..50 {
            let bw = 6 + layout_rng.below(5);
            let bh = 4 + layout_rng.below((band_rows - 3).min(4));
            if bw + 2 > w || bh + 2 > band_rows {
                continue;
            }
            let x = 1 + layout_rng.below(w - bw - 1);
            let y = band_top + 1 + layout_rng.below(band_rows - bh - 1);
            let elevation = if spec.complementary && small.contains(&class) {
                0.0
            } else if on_wall {
                layout_rng.range_f64(0.05, 0.15)
            } else {
                layout_rng.range_f64(0.3, 0.8)
            };
            let candidate = PlacedBox {
                class,
                x,
                y,
                w: bw,
                h: bh,
                elevation,
                support,
            };
            if boxes.iter().all(|b| !candidate.crowds(b)) {
                boxes.push(candidate);
                break;
            }
        }
    }
    if spec.complementary
        && !(boxes.iter().any(|b| b.class == ClassId::BOOKS)
            && boxes.iter().any(|b| b.class == ClassId::PAINTING))
    {
        return Err(FixtureError::BadSpec(
            "complementary layout could not place both small-class boxes".to_owned(),
        ));
    }

    // Rasterize ground truth and depth. Later boxes cannot overwrite earlier
    // ones (placement keeps them disjoint), so paint order is irrelevant.
    let mut gt = LabelMap::unknown(w, h);
    let mut depth_values = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut class = band_of(y);
            let mut d = background_depth(y);
            if let Some(b) = boxes.iter().find(|b| b.contains(x, y)) {
                class = b.class;
                d = (d - b.elevation).max(0.2);
            }
            gt.set(x, y, Some(class));
            depth_values.set(x, y, d);
        }
    }
    let depth = DepthMap::dense(depth_values).expect("constructed depths are finite");

    // Contours: a pixel is a boundary when its label differs from the pixel
    // above or to the left — the exact region borders.
    let mut ucm = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let here = gt.get(x, y);
            let breaks = (x > 0 && gt.get(x - 1, y) != here) || (y > 0 && gt.get(x, y - 1) != here);
            if breaks {
                ucm.set(x, y, 1.0);
            }
        }
    }

    // Teacher logits: confident in the ground truth, except that a blind
    // teacher sees the support surface instead, and corrupted pixels pick a
    // random wrong class.
    let mut logit_data = vec![0.0f64; w * h * NUM_CLASSES];
    for y in 0..h {
        for x in 0..w {
            let mut teacher = gt.get(x, y).expect("fully labeled by construction");
            if spec.complementary && small.contains(&teacher) {
                let b = boxes
                    .iter()
                    .find(|b| b.contains(x, y))
                    .expect("small classes only occur inside boxes");
                teacher = b.support;
            }
            if logit_rng.chance(spec.logit_corruption) {
                let offset = 1 + logit_rng.below(NUM_CLASSES - 1);
                teacher = ClassId::new(((teacher.index() + offset) % NUM_CLASSES) as u8)
                    .expect("index stays in range");
            }
            let base = (y * w + x) * NUM_CLASSES;
            for c in 0..NUM_CLASSES {
                let signal = if c == teacher.index() { LOGIT_MARGIN } else { 0.0 };
                logit_data[base + c] = signal + LOGIT_SIGMA * logit_rng.gaussian();
            }
        }
    }
    let logits = ScoreVolume::new(w, h, ScoreKind::Logits, logit_data)
        .expect("jittered logits are finite");

    // Activation maps: low uniform noise everywhere, plus a strong blob over
    // each box whose class the activation cue can see.
    let mut cam_data = vec![0.0f64; w * h * NUM_CLASSES];
    for v in cam_data.iter_mut() {
        *v = spec.cam_noise * cam_rng.next_f64();
    }
    for b in &boxes {
        if spec.complementary && !small.contains(&b.class) {
            continue; // activation cue blind to this class
        }
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let v = CAM_BLOB_FLOOR + 0.1 * cam_rng.next_f64();
                cam_data[(y * w + x) * NUM_CLASSES + b.class.index()] = v;
            }
        }
    }
    let cam =
        ScoreVolume::new(w, h, ScoreKind::Logits, cam_data).expect("blob values are finite");

    Ok(SyntheticScene {
        depth,
        gt,
        ucm,
        cam,
        logits,
        boxes,
    })
}

/// Standard on-disk layout consumed by the pipeline.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_depth_png(&dir.join("depth.png"), &scene.depth)?;
    write_label_png(&dir.join("labels.png"), &scene.gt)?;
    write_contour_png(&dir.join("ucm.png"), &scene.ucm)?;
    scene.cam.to_tensor().write_file(&dir.join("cam.plf"))?;
    scene
        .logits
        .to_tensor()
        .write_file(&dir.join("logits.plf"))?;
    let meta = serde_json::to_string_pretty(&scene.boxes).context("encoding box metadata")?;
    fs::write(dir.join("scene.json"), meta + "\n").context("writing scene.json")?;
    Ok(())
}
