//! Pseudo-label fusion: confidence filtering, per-segment majority voting,
//! and the area-guided second integration step.
//!
//! The pipeline combines two weak cues into per-pixel pseudo labels:
//!
//! 1. [`confidence_filter`] keeps only depth-stream predictions whose softmax
//!    peak clears `tau_adapted`; everything else becomes UNKNOWN.
//! 2. [`step1_vote`] assigns every contour segment the majority surviving
//!    label (UNKNOWN when nothing survived).
//! 3. [`step2_integrate`] lets the activation maps overrule that vote: per
//!    segment it collects candidate classes (the segment's strongest CAM
//!    class plus the always-considered small classes), keeps those whose
//!    peak and firing rate clear the gate for the segment's vote group, and
//!    picks the survivor with the smallest image-wide response area — small
//!    objects beat the large regions that engulf them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::{ClassId, NUM_CLASSES};
use crate::contours::{segment_histogram, SegmentMap};
use crate::label::LabelMap;
use crate::score::ScoreVolume;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid threshold profile: {0}")]
    InvalidProfile(String),
    #[error("invalid category groups: {0}")]
    InvalidGroups(String),
    #[error("segment has no pixels")]
    EmptySegment,
}

/// One peak/rate gate: a candidate class survives in a segment only when its
/// maximum activation exceeds `peak` AND the fraction of segment pixels
/// firing above `tau_cam` exceeds `rate` (both strictly).
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct GateThresholds {
    pub peak: f64,
    pub rate: f64,
}

/// All fusion thresholds. The per-group gates are selected by the segment's
/// first-step vote: no vote at all, a scene-bounds class, or anything else.
/// Gates above 1.0 are legal and simply unreachable (they disable the
/// override for that group).
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub tau_adapted: f64,
    pub tau_cam: f64,
    pub unknown: GateThresholds,
    pub scene_bounds: GateThresholds,
    pub other: GateThresholds,
}

impl Default for ThresholdProfile {
    fn default() -> ThresholdProfile {
        ThresholdProfile {
            tau_adapted: 0.6,
            tau_cam: 0.5,
            unknown: GateThresholds { peak: 0.6, rate: 0.2 },
            scene_bounds: GateThresholds { peak: 0.7, rate: 0.3 },
            other: GateThresholds { peak: 0.8, rate: 0.4 },
        }
    }
}

impl ThresholdProfile {
    pub fn validate(&self) -> Result<(), FusionError> {
        let named = [
            ("tau_adapted", self.tau_adapted),
            ("tau_cam", self.tau_cam),
            ("unknown.peak", self.unknown.peak),
            ("unknown.rate", self.unknown.rate),
            ("scene_bounds.peak", self.scene_bounds.peak),
            ("scene_bounds.rate", self.scene_bounds.rate),
            ("other.peak", self.other.peak),
            ("other.rate", self.other.rate),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(FusionError::InvalidProfile(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The two special class sets consulted by the second integration step.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "GroupsRepr", into = "GroupsRepr")]
pub struct CategoryGroups {
    scene_bounds: Vec<ClassId>,
    small: Vec<ClassId>,
}

/// JSON form of [`CategoryGroups`]: class names instead of raw ids.
#[derive(Serialize, Deserialize)]
struct GroupsRepr {
    scene_bounds: Vec<String>,
    small: Vec<String>,
}

impl From<CategoryGroups> for GroupsRepr {
    fn from(g: CategoryGroups) -> GroupsRepr {
        GroupsRepr {
            scene_bounds: g.scene_bounds.iter().map(|c| c.name().to_owned()).collect(),
            small: g.small.iter().map(|c| c.name().to_owned()).collect(),
        }
    }
}

impl TryFrom<GroupsRepr> for CategoryGroups {
    type Error = String;

    fn try_from(r: GroupsRepr) -> Result<CategoryGroups, String> {
        let parse = |names: &[String]| -> Result<Vec<ClassId>, String> {
            names
                .iter()
                .map(|n| ClassId::from_name(n).ok_or_else(|| format!("unknown class name {n:?}")))
                .collect()
        };
        CategoryGroups::new(parse(&r.scene_bounds)?, parse(&r.small)?)
            .map_err(|e| e.to_string())
    }
}

impl Default for CategoryGroups {
    fn default() -> CategoryGroups {
        CategoryGroups {
            scene_bounds: vec![ClassId::CEIL, ClassId::FLOOR, ClassId::WALL],
            small: vec![ClassId::BOOKS, ClassId::PAINTING],
        }
    }
}

impl CategoryGroups {
    /// Checked constructor: the two sets must be duplicate-free and disjoint.
    pub fn new(
        scene_bounds: Vec<ClassId>,
        small: Vec<ClassId>,
    ) -> Result<CategoryGroups, FusionError> {
        let mut seen = [0u8; NUM_CLASSES];
        for c in &scene_bounds {
            seen[c.index()] += 1;
        }
        for c in &small {
            seen[c.index()] += 1;
        }
        if let Some(i) = seen.iter().position(|&n| n > 1) {
            return Err(FusionError::InvalidGroups(format!(
                "class {:?} appears more than once across the groups",
                ClassId::new(i as u8).unwrap().name()
            )));
        }
        Ok(CategoryGroups { scene_bounds, small })
    }

    pub fn scene_bounds(&self) -> &[ClassId] {
        &self.scene_bounds
    }

    pub fn small(&self) -> &[ClassId] {
        &self.small
    }
}

/// First-step vote: one label (or UNKNOWN) per segment.
#[derive(Clone, PartialEq, Debug)]
pub struct StepOneResult {
    labels: Vec<Option<ClassId>>,
}

impl StepOneResult {
    pub fn new(labels: Vec<Option<ClassId>>) -> StepOneResult {
        StepOneResult { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, k: u32) -> Option<ClassId> {
        self.labels[k as usize]
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }
}

/// Keep per-pixel predictions only where the softmax peak clears
/// `tau_adapted` (strictly); every other pixel becomes UNKNOWN. Ties at the
/// peak go to the lowest class id.
pub fn confidence_filter(
    logits: &ScoreVolume,
    tau_adapted: f64,
) -> Result<LabelMap, FusionError> {
    if !tau_adapted.is_finite() || tau_adapted < 0.0 {
        return Err(FusionError::InvalidProfile(format!(
            "tau_adapted must be finite and nonnegative, got {tau_adapted}"
        )));
    }
    let probs = logits.softmax();
    let mut out = LabelMap::unknown(probs.width(), probs.height());
    for y in 0..probs.height() {
        for x in 0..probs.width() {
            let class = probs.argmax(x, y);
            if probs.get(x, y, class) > tau_adapted {
                out.set(x, y, Some(class));
            }
        }
    }
    Ok(out)
}

/// Majority vote of the filtered labels inside each segment; ties go to the
/// lowest class id, segments with no surviving label vote UNKNOWN.
pub fn step1_vote(
    seg: &SegmentMap,
    filtered: &LabelMap,
) -> Result<StepOneResult, FusionError> {
    let hist =
        segment_histogram(seg, filtered).map_err(|e| FusionError::ShapeMismatch(e.to_string()))?;
    let labels = hist
        .iter()
        .map(|h| {
            let (best, &count) = h
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("13 bins");
            (count > 0).then(|| ClassId::new(best as u8).unwrap())
        })
        .collect();
    Ok(StepOneResult::new(labels))
}

/// Image-wide response area per class: how many pixels fire strictly above
/// `tau_cam` in each activation channel.
pub fn cam_area(cam: &ScoreVolume, tau_cam: f64) -> [usize; NUM_CLASSES] {
    assert!(
        tau_cam.is_finite() && tau_cam >= 0.0,
        "tau_cam must be finite and nonnegative"
    );
    let mut area = [0usize; NUM_CLASSES];
    for px in cam.as_slice().chunks_exact(NUM_CLASSES) {
        for (c, &v) in px.iter().enumerate() {
            if v > tau_cam {
                area[c] += 1;
            }
        }
    }
    area
}

/// Peak activation and firing rate of one activation channel over a set of
/// pixels: `peak = max`, `rate = (# pixels > tau_cam) / # pixels`.
pub fn response_stats(
    pixels: &[(usize, usize)],
    cam: &ScoreVolume,
    class: ClassId,
    tau_cam: f64,
) -> Result<(f64, f64), FusionError> {
    if pixels.is_empty() {
        return Err(FusionError::EmptySegment);
    }
    let mut peak = f64::NEG_INFINITY;
    let mut firing = 0usize;
    for &(x, y) in pixels {
        if x >= cam.width() || y >= cam.height() {
            return Err(FusionError::ShapeMismatch(format!(
                "pixel ({x},{y}) outside {}x{} activation volume",
                cam.width(),
                cam.height()
            )));
        }
        let v = cam.get(x, y, class);
        peak = peak.max(v);
        if v > tau_cam {
            firing += 1;
        }
    }
    Ok((peak, firing as f64 / pixels.len() as f64))
}

/// Second integration step: per segment, let a confidently-firing candidate
/// class with the smallest image-wide response area replace the first-step
/// vote. See the module docs for the full rule.
pub fn step2_integrate(
    seg: &SegmentMap,
    step1: &StepOneResult,
    cam: &ScoreVolume,
    prof: &ThresholdProfile,
    groups: &CategoryGroups,
) -> Result<LabelMap, FusionError> {
    prof.validate()?;
    if cam.width() != seg.width() || cam.height() != seg.height() {
        return Err(FusionError::ShapeMismatch(format!(
            "segments {}x{} vs activations {}x{}",
            seg.width(),
            seg.height(),
            cam.width(),
            cam.height()
        )));
    }
    if step1.len() != seg.segment_count() {
        return Err(FusionError::ShapeMismatch(format!(
            "{} first-step votes for {} segments",
            step1.len(),
            seg.segment_count()
        )));
    }

    let area = cam_area(cam, prof.tau_cam);
    let members = seg.members();
    let mut out = LabelMap::unknown(seg.width(), seg.height());

    for (k, pixels) in members.iter().enumerate() {
        let vote = step1.label(k as u32);

        // Candidates: the segment's strongest activation channel (by summed
        // activation, ties -> lowest id) plus every always-considered small
        // class, deduplicated, in ascending id order.
        let mut sums = [0.0f64; NUM_CLASSES];
        for &(x, y) in pixels {
            for (c, &v) in cam.pixel(x, y).iter().enumerate() {
                sums[c] += v;
            }
        }
        let mut strongest = 0usize;
        for c in 1..NUM_CLASSES {
            if sums[c] > sums[strongest] {
                strongest = c;
            }
        }
        let mut candidates = vec![ClassId::new(strongest as u8).unwrap()];
        candidates.extend_from_slice(groups.small());
        candidates.sort_by_key(|c| c.index());
        candidates.dedup();

        // Gate selection follows the vote's group.
        let gate = match vote {
            None => prof.unknown,
            Some(c) if groups.scene_bounds().contains(&c) => prof.scene_bounds,
            Some(_) => prof.other,
        };

        // Survivors must clear both the peak and the rate strictly; the
        // winner is the survivor with the smallest image-wide area, and the
        // ascending candidate order makes area ties land on the lowest id.
        let mut winner = None::<(ClassId, usize)>;
        for &c in &candidates {
            let (peak, rate) = response_stats(pixels, cam, c, prof.tau_cam)?;
            if peak > gate.peak && rate > gate.rate {
                let better = match winner {
                    Some((_, best_area)) => area[c.index()] < best_area,
                    None => true,
                };
                if better {
                    winner = Some((c, area[c.index()]));
                }
            }
        }

        let label = match winner {
            Some((c, _)) => Some(c),
            None => vote,
        };
        for &(x, y) in pixels {
            out.set(x, y, label);
        }
    }
    Ok(out)
}
