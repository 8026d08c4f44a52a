//! Evaluation: confusion matrices, IoU/accuracy metrics, abstention-aware
//! cover ratios, and contour-based prediction refinement.
//!
//! Predictions may abstain (UNKNOWN pixels). Abstention never inflates a
//! score: a predicted UNKNOWN on a labeled ground-truth pixel is counted in
//! a dedicated always-wrong column. Cover ratios quantify the abstentions
//! themselves, and the "effective" metrics weigh quality by coverage so a
//! sparse-but-precise label map cannot masquerade as a dense one.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::{ClassId, NUM_CLASSES};
use crate::contours::SegmentMap;
use crate::label::LabelMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("confusion matrix has no evaluated pixels")]
    EmptyMatrix,
    #[error("restriction mask has no labeled pixels")]
    EmptyMask,
    #[error("per-class cover ratios require ground truth")]
    PerClassRequiresGt,
    #[error("report carries no cover ratios; attach them first")]
    MissingCoverRatio,
}

/// Ground truth (rows) versus prediction (columns) pixel counts. The extra
/// final column counts predictions that abstained (UNKNOWN) on a labeled
/// ground-truth pixel; `ignored` counts pixels excluded from evaluation
/// because the ground truth itself is UNKNOWN or an ignored class.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConfusionMatrix {
    cells: [[u64; NUM_CLASSES + 1]; NUM_CLASSES],
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn zero() -> ConfusionMatrix {
        ConfusionMatrix {
            cells: [[0; NUM_CLASSES + 1]; NUM_CLASSES],
            ignored: 0,
        }
    }

    /// Build from explicit 13×13 class-vs-class counts (no abstentions).
    pub fn from_cells(cells: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::zero();
        for (g, row) in cells.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                cm.cells[g][p] = n;
            }
        }
        cm
    }

    pub fn record(&mut self, gt: ClassId, pred: Option<ClassId>) {
        let col = pred.map_or(NUM_CLASSES, ClassId::index);
        self.cells[gt.index()][col] += 1;
    }

    pub fn record_ignored(&mut self) {
        self.ignored += 1;
    }

    pub fn get(&self, gt: ClassId, pred: Option<ClassId>) -> u64 {
        self.cells[gt.index()][pred.map_or(NUM_CLASSES, ClassId::index)]
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    /// Evaluated pixels (everything except ignored ones).
    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Elementwise accumulation, for merging per-image matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (mine, theirs) in self
            .cells
            .iter_mut()
            .flatten()
            .zip(other.cells.iter().flatten())
        {
            *mine += theirs;
        }
        self.ignored += other.ignored;
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.cells[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.cells.iter().map(|row| row[c]).sum()
    }
}

/// Count prediction agreement against ground truth. Ground-truth UNKNOWN
/// pixels and pixels whose ground truth is in `ignore` are excluded (counted
/// as ignored); predicted UNKNOWN lands in the abstention column.
pub fn confusion(
    pred: &LabelMap,
    gt: &LabelMap,
    ignore: &[ClassId],
) -> Result<ConfusionMatrix, EvalError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(EvalError::ShapeMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut cm = ConfusionMatrix::zero();
    for (x, y, gt_label) in gt.enumerate() {
        match gt_label {
            Some(g) if !ignore.contains(&g) => cm.record(g, pred.get(x, y)),
            _ => cm.record_ignored(),
        }
    }
    Ok(cm)
}

/// Evaluation summary. `iou[c]` is `None` when class `c` never occurs (no
/// ground truth, no prediction): absent classes stay out of every mean
/// rather than dragging it to zero. Cover-ratio and effective fields are
/// filled by [`MetricReport::with_cover`].
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    /// Per-class intersection-over-union, `None` for absent classes.
    pub iou: Vec<Option<f64>>,
    /// Mean IoU over present, non-excluded classes.
    pub miou: f64,
    /// Global accuracy: correct pixels / evaluated pixels.
    pub ga: f64,
    /// Names of classes excluded from the mean.
    pub excluded: Vec<String>,
    /// Fraction of pixels with a non-UNKNOWN label in the evaluated map.
    pub cover_global: Option<f64>,
    /// Per ground-truth class: fraction of its pixels that got a label.
    pub cover_per_class: Option<Vec<Option<f64>>>,
    /// GA × global cover.
    pub effective_ga: Option<f64>,
    /// Mean over classes of IoU_c × cover_c.
    pub effective_miou: Option<f64>,
}

/// Per-class and global coverage of a partially labeled map.
#[derive(Clone, PartialEq, Debug)]
pub struct CoverRatio {
    global: f64,
    per_class: Option<Vec<Option<f64>>>,
}

impl CoverRatio {
    pub fn global(&self) -> f64 {
        self.global
    }

    /// Per-class ratios; only available when ground truth was supplied.
    pub fn per_class(&self) -> Result<&[Option<f64>], EvalError> {
        self.per_class
            .as_deref()
            .ok_or(EvalError::PerClassRequiresGt)
    }
}

/// Summarize a confusion matrix. `exclude` removes classes from the mean
/// IoU only; their per-class entries are still reported.
pub fn metrics(cm: &ConfusionMatrix, exclude: &[ClassId]) -> Result<MetricReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace: u64 = (0..NUM_CLASSES).map(|c| cm.cells[c][c]).sum();
    let ga = trace as f64 / total as f64;

    let mut iou = vec![None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let tp = cm.cells[c][c];
        let fales_neg = cm.row_sum(c) - tp;
        let fales_pos = cm.col_sum(c) - tp;
        let union = tp + fales_neg + fales_pos;
        if union > 0 {
            iou[c] = Some(tp as f64 / union as f64);
        }
    }

    let included: Vec<f64> = (0..NUM_CLASSES)
        .filter(|&c| !exclude.contains(&ClassId::new(c as u8).unwrap()))
        .filter_map(|c| iou[c])
        .collect();
    let miou = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };

    Ok(MetricReport {
        iou,
        miou,
        ga,
        excluded: exclude.iter().map(|c| c.name().to_owned()).collect(),
        cover_global: None,
        cover_per_class: None,
        effective_ga: None,
        effective_miou: None,
    })
}

/// Coverage of `pseudo`: globally, the fraction of non-UNKNOWN pixels; per
/// class (requires `gt`), the fraction of each ground-truth class's pixels
/// that carry any label. Classes absent from the ground truth report `None`.
pub fn cover_ratio(pseudo: &LabelMap, gt: Option<&LabelMap>) -> Result<CoverRatio, EvalError> {
    let global = pseudo.labeled_count() as f64 / pseudo.len() as f64;
    let per_class = match gt {
        None => None,
        Some(gt) => {
            if pseudo.width() != gt.width() || pseudo.height() != gt.height() {
                return Err(EvalError::ShapeMismatch(format!(
                    "pseudo {}x{} vs gt {}x{}",
                    pseudo.width(),
                    pseudo.height(),
                    gt.width(),
                    gt.height()
                )));
            }
            let mut gt_count = [0u64; NUM_CLASSES];
            let mut covered = [0u64; NUM_CLASSES];
            for (x, y, gt_label) in gt.enumerate() {
                if let Some(g) = gt_label {
                    gt_count[g.index()] += 1;
                    if pseudo.get(x, y).is_some() {
                        covered[g.index()] += 1;
                    }
                }
            }
            Some(
                (0..NUM_CLASSES)
                    .map(|c| (gt_count[c] > 0).then(|| covered[c] as f64 / gt_count[c] as f64))
                    .collect(),
            )
        }
    };
    Ok(CoverRatio { global, per_class })
}

impl MetricReport {
    /// Attach cover ratios and fill the effective metrics.
    pub fn with_cover(mut self, cover: &CoverRatio) -> MetricReport {
        self.cover_global = Some(cover.global);
        self.cover_per_class = cover.per_class.clone();
        let (eff_ga, eff_miou) = effective_from_parts(&self);
        self.effective_ga = Some(eff_ga);
        self.effective_miou = eff_miou;
        self
    }

    /// Render as an aligned two-row table — class columns in id order, then
    /// mIoU — followed by the scalar summary lines (percentages).
    pub fn text_table(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        for c in ClassId::all() {
            let cell = match self.iou[c.index()] {
                Some(v) => format!("{:.2}", v * 100.0),
                None => "--".to_owned(),
            };
            let width = cell.len().max(c.short_name().len()) + 2;
            let _ = write!(header, "{:>width$}", c.short_name());
            let _ = write!(values, "{cell:>width$}");
        }
        let miou = format!("{:.2}", self.miou * 100.0);
        let width = miou.len().max("mIoU".len()) + 3;
        let _ = write!(header, "{:>width$}", "mIoU");
        let _ = write!(values, "{miou:>width$}");

        let mut out = format!("{header}\n{values}\n");
        let _ = write!(out, "GA {:.2}", self.ga * 100.0);
        if let Some(cover) = self.cover_global {
            let _ = write!(out, "  cover {:.2}", cover * 100.0);
        }
        if let Some(eff) = self.effective_ga {
            let _ = write!(out, "  effective GA {:.2}", eff * 100.0);
        }
        if let Some(eff) = self.effective_miou {
            let _ = write!(out, "  effective mIoU {:.2}", eff * 100.0);
        }
        if !self.excluded.is_empty() {
            let _ = write!(out, "  (mean excludes {})", self.excluded.join(", "));
        }
        out.push('\n');
        out
    }
}

/// Coverage-weighted metrics: `effective GA = GA × global cover` and
/// `effective mIoU = mean over classes of IoU_c × cover_c` (multiplication
/// first, then the mean; classes missing either factor stay out, as do
/// excluded classes).
pub fn effective_metrics(report: &MetricReport) -> Result<(f64, f64), EvalError> {
    if report.cover_global.is_none() || report.cover_per_class.is_none() {
        return Err(EvalError::MissingCoverRatio);
    }
    let (eff_ga, eff_miou) = effective_from_parts(report);
    Ok((eff_ga, eff_miou.unwrap_or(0.0)))
}

fn effective_from_parts(report: &MetricReport) -> (f64, Option<f64>) {
    let eff_ga = report.ga * report.cover_global.unwrap_or(1.0);
    let Some(per_class) = report.cover_per_class.as_ref() else {
        return (eff_ga, None);
    };
    let mut terms = Vec::new();
    for c in ClassId::all() {
        if report.excluded.contains(&c.name().to_owned()) {
            continue;
        }
        if let (Some(iou), Some(cover)) = (report.iou[c.index()], per_class[c.index()]) {
            terms.push(iou * cover);
        }
    }
    let eff_miou = if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    };
    (eff_ga, Some(eff_miou))
}

/// Metrics over only the pixels where `mask` carries a label — the
/// "@pseudo" view that scores a student exactly where its teacher spoke.
pub fn restricted_metrics(
    pred: &LabelMap,
    gt: &LabelMap,
    mask: &LabelMap,
    exclude: &[ClassId],
) -> Result<MetricReport, EvalError> {
    let same = |a: &LabelMap, b: &LabelMap| a.width() == b.width() && a.height() == b.height();
    if !same(pred, gt) || !same(pred, mask) {
        return Err(EvalError::ShapeMismatch(format!(
            "pred {}x{}, gt {}x{}, mask {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
            mask.width(),
            mask.height()
        )));
    }
    if mask.labeled_count() == 0 {
        return Err(EvalError::EmptyMask);
    }
    let mut cm = ConfusionMatrix::zero();
    for (x, y, mask_label) in mask.enumerate() {
        if mask_label.is_none() {
            continue;
        }
        match gt.get(x, y) {
            Some(g) if !exclude.contains(&g) => cm.record(g, pred.get(x, y)),
            _ => cm.record_ignored(),
        }
    }
    metrics(&cm, exclude)
}

/// Contour-wise vote over predictions: every segment is relabeled to its
/// majority non-UNKNOWN predicted class (ties → lowest id); segments whose
/// predictions are all UNKNOWN stay UNKNOWN.
pub fn ucm_refine(pred: &LabelMap, seg: &SegmentMap) -> Result<LabelMap, EvalError> {
    if pred.width() != seg.width() || pred.height() != seg.height() {
        return Err(EvalError::ShapeMismatch(format!(
            "pred {}x{} vs segments {}x{}",
            pred.width(),
            pred.height(),
            seg.width(),
            seg.height()
        )));
    }
    let mut counts = vec![[0u64; NUM_CLASSES]; seg.segment_count()];
    for (x, y, label) in pred.enumerate() {
        if let Some(c) = label {
            counts[seg.id(x, y) as usize][c.index()] += 1;
        }
    }
    let winners: Vec<Option<ClassId>> = counts
        .iter()
        .map(|h| {
            let mut best: Option<usize> = None;
            for (c, &n) in h.iter().enumerate() {
                if n > 0 && best.is_none_or(|b| n > h[b]) {
                    best = Some(c);
                }
            }
            best.map(|c| ClassId::new(c as u8).unwrap())
        })
        .collect();
    let mut out = LabelMap::unknown(pred.width(), pred.height());
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            out.set(x, y, winners[seg.id(x, y) as usize]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contours::extract_segments;
    use crate::grid::Grid;
    use crate::rng::SeedStream;

    fn random_labels(rng: &mut SeedStream, w: usize, h: usize, coverage: f64) -> LabelMap {
        let mut labels = LabelMap::unknown(w, h);
        for y in 0..h {
            for x in 0..w {
                if rng.chance(coverage) {
                    labels.set(x, y, ClassId::new(rng.below(13) as u8));
                }
            }
        }
        labels
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let mut rng = SeedStream::new(0xe0).stream("diag");
        let gt = random_labels(&mut rng, 6, 6, 1.0);
        let cm = confusion(&gt, &gt, &[]).unwrap();
        assert_eq!(cm.total(), 36);
        assert_eq!(cm.ignored(), 0);
        for g in ClassId::all() {
            for p in ClassId::all() {
                if g != p {
                    assert_eq!(cm.get(g, Some(p)), 0);
                }
            }
            assert_eq!(cm.get(g, None), 0);
        }
        let report = metrics(&cm, &[]).unwrap();
        assert_eq!(report.ga, 1.0);
        assert_eq!(report.miou, 1.0);
        for c in ClassId::all() {
            let entry = report.iou[c.index()];
            assert!(entry.is_none() || entry == Some(1.0));
        }
    }

    #[test]
    fn unknown_ground_truth_is_ignored() {
        let gt = LabelMap::unknown(4, 4);
        let pred = LabelMap::filled(4, 4, ClassId::BED);
        let cm = confusion(&pred, &gt, &[]).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.ignored(), 16);
        assert!(matches!(metrics(&cm, &[]), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn confusion_matches_counting_oracle() {
        let mut rng = SeedStream::new(0xe1).stream("cm-oracle");
        let pred = random_labels(&mut rng, 8, 8, 0.7);
        let gt = random_labels(&mut rng, 8, 8, 0.8);
        let ignore = [ClassId::TV];
        let cm = confusion(&pred, &gt, &ignore).unwrap();

        let mut ignored = 0u64;
        let mut cells = std::collections::HashMap::new();
        for y in 0..8 {
            for x in 0..8 {
                match gt.get(x, y) {
                    Some(g) if g != ClassId::TV => {
                        *cells.entry((Some(g), pred.get(x, y))).or_insert(0u64) += 1;
                    }
                    _ => ignored += 1,
                }
            }
        }
        assert_eq!(cm.ignored(), ignored);
        for g in ClassId::all() {
            for p in ClassId::all().map(Some).chain([None]) {
                let expect = cells.get(&(Some(g), p)).copied().unwrap_or(0);
                assert_eq!(cm.get(g, p), expect, "gt {g} pred {p:?}");
            }
        }
        // Conservation: cells + ignored account for every pixel.
        assert_eq!(cm.total() + cm.ignored(), 64);
    }

    #[test]
    fn abstention_counts_against_accuracy() {
        let gt = LabelMap::filled(2, 2, ClassId::WALL);
        let mut pred = LabelMap::filled(2, 2, ClassId::WALL);
        pred.set(0, 0, None);
        pred.set(1, 0, None);
        let cm = confusion(&pred, &gt, &[]).unwrap();
        assert_eq!(cm.get(ClassId::WALL, None), 2);
        let report = metrics(&cm, &[]).unwrap();
        assert_eq!(report.ga, 0.5);
        // IoU wall: TP 2, FN 2, FP 0 -> 0.5.
        assert_eq!(report.iou[ClassId::WALL.index()], Some(0.5));
    }

    #[test]
    fn two_class_hand_matrix_is_exact() {
        let mut cells = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        cells[0][0] = 3;
        cells[0][1] = 1;
        cells[1][0] = 1;
        cells[1][1] = 3;
        let cm = ConfusionMatrix::from_cells(cells);
        let report = metrics(&cm, &[]).unwrap();
        assert!((report.ga - 0.75).abs() < 1e-12);
        assert!((report.miou - 0.6).abs() < 1e-12);
        assert_eq!(report.iou[0], Some(0.6));
        assert_eq!(report.iou[1], Some(0.6));
        assert!(report.iou[2..].iter().all(|v| v.is_none()));
    }

    #[test]
    fn exclusion_changes_only_the_mean() {
        let mut cells = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        cells[0][0] = 3;
        cells[0][1] = 1;
        cells[1][1] = 4; // IoU bed = 3/4, IoU books = 4/5
        let cm = ConfusionMatrix::from_cells(cells);
        let full = metrics(&cm, &[]).unwrap();
        let without = metrics(&cm, &[ClassId::BOOKS]).unwrap();
        assert_eq!(full.iou, without.iou, "per-class entries must not move");
        assert_eq!(full.ga, without.ga);
        assert!((full.miou - (0.75 + 0.8) / 2.0).abs() < 1e-12);
        assert!((without.miou - 0.75).abs() < 1e-12);
        assert_eq!(without.excluded, vec!["books".to_owned()]);
    }

    #[test]
    fn cover_ratio_counts_unknowns() {
        let mut pseudo = LabelMap::filled(4, 2, ClassId::FLOOR);
        assert_eq!(cover_ratio(&pseudo, None).unwrap().global(), 1.0);
        for x in 0..4 {
            pseudo.set(x, 0, None);
        }
        let cover = cover_ratio(&pseudo, None).unwrap();
        assert_eq!(cover.global(), 0.5);
        assert!(matches!(
            cover.per_class(),
            Err(EvalError::PerClassRequiresGt)
        ));
    }

    #[test]
    fn per_class_cover_follows_ground_truth() {
        // gt: top row wall, bottom row floor; pseudo labels cover 1 of 3
        // wall pixels and all floor pixels.
        let mut gt = LabelMap::unknown(3, 2);
        let mut pseudo = LabelMap::unknown(3, 2);
        for x in 0..3 {
            gt.set(x, 0, Some(ClassId::WALL));
            gt.set(x, 1, Some(ClassId::FLOOR));
            pseudo.set(x, 1, Some(ClassId::FLOOR));
        }
        pseudo.set(0, 0, Some(ClassId::BED)); // wrong class still covers
        let cover = cover_ratio(&pseudo, Some(&gt)).unwrap();
        let per = cover.per_class().unwrap();
        assert_eq!(per[ClassId::WALL.index()], Some(1.0 / 3.0));
        assert_eq!(per[ClassId::FLOOR.index()], Some(1.0));
        assert_eq!(per[ClassId::TV.index()], None, "absent from gt");
        assert!((cover.global() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn effective_ga_reproduces_the_reference_product() {
        let report = MetricReport {
            iou: vec![None; NUM_CLASSES],
            miou: 0.0,
            ga: 0.8086,
            excluded: vec![],
            cover_global: Some(0.7277),
            cover_per_class: Some(vec![None; NUM_CLASSES]),
            effective_ga: None,
            effective_miou: None,
        };
        let (eff_ga, _) = effective_metrics(&report).unwrap();
        assert!((eff_ga - 0.5884).abs() < 1e-4);
    }

    #[test]
    fn full_cover_leaves_metrics_unchanged() {
        let mut report = MetricReport {
            iou: (0..NUM_CLASSES).map(|c| Some(c as f64 / 13.0)).collect(),
            miou: 0.4615,
            ga: 0.77,
            excluded: vec![],
            cover_global: Some(1.0),
            cover_per_class: Some(vec![Some(1.0); NUM_CLASSES]),
            effective_ga: None,
            effective_miou: None,
        };
        let (eff_ga, eff_miou) = effective_metrics(&report).unwrap();
        assert_eq!(eff_ga, report.ga);
        let mean: f64 = (0..NUM_CLASSES).map(|c| c as f64 / 13.0).sum::<f64>() / 13.0;
        assert!((eff_miou - mean).abs() < 1e-12);

        report.cover_global = None;
        assert!(matches!(
            effective_metrics(&report),
            Err(EvalError::MissingCoverRatio)
        ));
    }

    #[test]
    fn effective_metrics_match_multiplication_oracle() {
        let mut rng = SeedStream::new(0xe2).stream("eff-oracle");
        for _ in 0..20 {
            let iou: Vec<Option<f64>> = (0..NUM_CLASSES)
                .map(|_| rng.chance(0.8).then(|| rng.next_f64()))
                .collect();
            let cover: Vec<Option<f64>> = (0..NUM_CLASSES)
                .map(|_| rng.chance(0.8).then(|| rng.next_f64()))
                .collect();
            let ga = rng.next_f64();
            let global = rng.next_f64();
            let report = MetricReport {
                iou: iou.clone(),
                miou: 0.0,
                ga,
                excluded: vec!["window".to_owned()],
                cover_global: Some(global),
                cover_per_class: Some(cover.clone()),
                effective_ga: None,
                effective_miou: None,
            };
            let (eff_ga, eff_miou) = effective_metrics(&report).unwrap();
            assert!((eff_ga - ga * global).abs() < 1e-12);
            let mut terms = Vec::new();
            for c in 0..NUM_CLASSES {
                if c == ClassId::WINDOW.index() {
                    continue;
                }
                if let (Some(i), Some(r)) = (iou[c], cover[c]) {
                    terms.push(i * r);
                }
            }
            let expect = if terms.is_empty() {
                0.0
            } else {
                terms.iter().sum::<f64>() / terms.len() as f64
            };
            assert!((eff_miou - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_with_full_mask_is_the_plain_metric() {
        let mut rng = SeedStream::new(0xe3).stream("restrict-full");
        let pred = random_labels(&mut rng, 6, 6, 0.9);
        let gt = random_labels(&mut rng, 6, 6, 0.9);
        let mask = LabelMap::filled(6, 6, ClassId::BED);
        let restricted = restricted_metrics(&pred, &gt, &mask, &[]).unwrap();
        let plain = metrics(&confusion(&pred, &gt, &[]).unwrap(), &[]).unwrap();
        assert_eq!(restricted, plain);
    }

    #[test]
    fn self_masked_accuracy_equals_covered_accuracy() {
        // Evaluating a partial label map on its own mask: GA must equal the
        // fraction of covered, gt-labeled pixels it gets right.
        let mut rng = SeedStream::new(0xe4).stream("self-mask");
        let pseudo = random_labels(&mut rng, 10, 10, 0.6);
        let gt = random_labels(&mut rng, 10, 10, 0.95);
        let report = restricted_metrics(&pseudo, &gt, &pseudo, &[]).unwrap();

        let mut correct = 0u64;
        let mut counted = 0u64;
        for (x, y, p) in pseudo.enumerate() {
            let Some(p) = p else { continue };
            let Some(g) = gt.get(x, y) else { continue };
            counted += 1;
            if p == g {
                correct += 1;
            }
        }
        assert_eq!(report.ga, correct as f64 / counted as f64);
    }

    #[test]
    fn restricted_matches_masked_counting_oracle() {
        let mut rng = SeedStream::new(0xe5).stream("restrict-oracle");
        let pred = random_labels(&mut rng, 7, 7, 0.8);
        let gt = random_labels(&mut rng, 7, 7, 0.8);
        let mask = random_labels(&mut rng, 7, 7, 0.5);
        let report = restricted_metrics(&pred, &gt, &mask, &[]).unwrap();

        let mut cm = ConfusionMatrix::zero();
        for (x, y, m) in mask.enumerate() {
            if m.is_none() {
                continue;
            }
            match gt.get(x, y) {
                Some(g) => cm.record(g, pred.get(x, y)),
                None => cm.record_ignored(),
            }
        }
        assert_eq!(report, metrics(&cm, &[]).unwrap());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let pred = LabelMap::filled(3, 3, ClassId::BED);
        let gt = LabelMap::filled(3, 3, ClassId::BED);
        let mask = LabelMap::unknown(3, 3);
        assert!(matches!(
            restricted_metrics(&pred, &gt, &mask, &[]),
            Err(EvalError::EmptyMask)
        ));
    }

    #[test]
    fn refine_majority_and_fixed_point() {
        let ucm = {
            let mut g = Grid::new(10, 1, 0.0);
            g.set(4, 0, 1.0);
            g
        };
        let seg = extract_segments(&ucm, 0.5);
        assert_eq!(seg.segment_count(), 2);

        // Segment 0 (x <= 4): 3 wall / 2 painting -> all wall.
        let mut pred = LabelMap::unknown(10, 1);
        for x in 0..3 {
            pred.set(x, 0, Some(ClassId::WALL));
        }
        for x in 3..5 {
            pred.set(x, 0, Some(ClassId::PAINTING));
        }
        // Segment 1 stays all UNKNOWN.
        let refined = ucm_refine(&pred, &seg).unwrap();
        for x in 0..5 {
            assert_eq!(refined.get(x, 0), Some(ClassId::WALL));
        }
        for x in 5..10 {
            assert_eq!(refined.get(x, 0), None);
        }

        // Segment-constant input is a fixed point.
        let again = ucm_refine(&refined, &seg).unwrap();
        assert_eq!(again.to_codes(), refined.to_codes());
    }

    #[test]
    fn refine_is_idempotent_on_random_instances() {
        let mut rng = SeedStream::new(0xe6).stream("refine-idem");
        for _ in 0..50 {
            let w = 4 + rng.below(10) as usize;
            let h = 4 + rng.below(10) as usize;
            let ucm =
                Grid::from_vec(w, h, (0..w * h).map(|_| rng.next_f64()).collect()).unwrap();
            let seg = extract_segments(&ucm, 0.6);
            let pred = random_labels(&mut rng, w, h, 0.7);
            let once = ucm_refine(&pred, &seg).unwrap();
            let twice = ucm_refine(&once, &seg).unwrap();
            assert_eq!(once.to_codes(), twice.to_codes());

            // Never introduces a class the segment's predictions lack.
            for (x, y, label) in once.enumerate() {
                if let Some(c) = label {
                    let k = seg.id(x, y);
                    let present = pred
                        .enumerate()
                        .any(|(px, py, pl)| seg.id(px, py) == k && pl == Some(c));
                    assert!(present, "class {c} invented in segment {k}");
                }
            }
        }
    }

    #[test]
    fn refine_ties_go_to_the_lowest_class() {
        let seg = extract_segments(&Grid::new(4, 1, 0.0), 0.5);
        let mut pred = LabelMap::unknown(4, 1);
        pred.set(0, 0, Some(ClassId::WINDOW));
        pred.set(1, 0, Some(ClassId::WINDOW));
        pred.set(2, 0, Some(ClassId::CEIL));
        pred.set(3, 0, Some(ClassId::CEIL));
        let refined = ucm_refine(&pred, &seg).unwrap();
        assert!(refined.enumerate().all(|(_, _, l)| l == Some(ClassId::CEIL)));
    }

    #[test]
    fn report_serializes_and_formats() {
        let mut cells = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        cells[0][0] = 3;
        cells[0][1] = 1;
        cells[1][1] = 4;
        let cm = ConfusionMatrix::from_cells(cells);
        let report = metrics(&cm, &[ClassId::WINDOW]).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let table = report.text_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].len(), lines[1].len(), "columns must align");
        for c in ClassId::all() {
            assert!(lines[0].contains(c.short_name()));
        }
        assert!(lines[0].trim_end().ends_with("mIoU"));
        assert!(lines[2].starts_with("GA"));
        assert!(lines[2].contains("window"));
    }

    #[test]
    fn merge_accumulates_cells_and_ignored() {
        let mut rng = SeedStream::new(0xe7).stream("merge");
        let pred_a = random_labels(&mut rng, 5, 5, 0.8);
        let gt_a = random_labels(&mut rng, 5, 5, 0.8);
        let pred_b = random_labels(&mut rng, 5, 5, 0.8);
        let gt_b = random_labels(&mut rng, 5, 5, 0.8);
        let mut merged = confusion(&pred_a, &gt_a, &[]).unwrap();
        merged.merge(&confusion(&pred_b, &gt_b, &[]).unwrap());

        // Equivalent to evaluating the concatenated image.
        let mut pred_cat = LabelMap::unknown(5, 10);
        let mut gt_cat = LabelMap::unknown(5, 10);
        for y in 0..5 {
            for x in 0..5 {
                pred_cat.set(x, y, pred_a.get(x, y));
                gt_cat.set(x, y, gt_a.get(x, y));
                pred_cat.set(x, y + 5, pred_b.get(x, y));
                gt_cat.set(x, y + 5, gt_b.get(x, y));
            }
        }
        let whole = confusion(&pred_cat, &gt_cat, &[]).unwrap();
        assert_eq!(merged, whole);
    }
}
