//! Contour-map segmentation: threshold a boundary-strength map into a total
//! partition of the image and accumulate per-segment label statistics.
//!
//! Pixels whose strength exceeds the threshold are boundary pixels; the
//! 4-connected components of the remaining pixels become segments, numbered
//! in raster-scan first-touch order. Boundary pixels are then absorbed in
//! synchronized rounds: each still-unassigned pixel joins the neighboring
//! segment with the most adjacent members as of the previous round (ties go
//! to the lowest segment id). The result always covers every pixel; an
//! all-boundary image collapses to one segment.

use std::collections::VecDeque;

use thiserror::Error;

use crate::class::NUM_CLASSES;
use crate::grid::Grid;
use crate::label::LabelMap;
use crate::tensor::{Tensor, TensorData};

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} segments exceed the u16 id space")]
    TooManySegments(usize),
    #[error("not a valid segment partition: {0}")]
    BadPartition(String),
}

/// A total partition of the image into 4-connected segments with ids
/// `0..segment_count()`, each non-empty.
#[derive(Clone, PartialEq, Debug)]
pub struct SegmentMap {
    ids: Grid<u32>,
    sizes: Vec<usize>,
}

impl SegmentMap {
    pub fn width(&self) -> usize {
        self.ids.width()
    }

    pub fn height(&self) -> usize {
        self.ids.height()
    }

    pub fn segment_count(&self) -> usize {
        self.sizes.len()
    }

    /// Segment id at (x, y).
    pub fn id(&self, x: usize, y: usize) -> u32 {
        *self.ids.get(x, y)
    }

    /// Pixel count of segment `k`.
    pub fn size(&self, k: u32) -> usize {
        self.sizes[k as usize]
    }

    pub fn ids(&self) -> &Grid<u32> {
        &self.ids
    }

    /// Pixel coordinates of every segment, indexed by id.
    pub fn members(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.sizes.len()];
        for (x, y, &id) in self.ids.enumerate() {
            out[id as usize].push((x, y));
        }
        out
    }

    /// Encode as a rank-2 [h, w] u16 tensor. Fails when ids exceed u16.
    pub fn to_tensor(&self) -> Result<Tensor, ContourError> {
        if self.segment_count() > usize::from(u16::MAX) + 1 {
            return Err(ContourError::TooManySegments(self.segment_count()));
        }
        let data = self.ids.as_slice().iter().map(|&v| v as u16).collect();
        Ok(
            Tensor::new(vec![self.height(), self.width()], TensorData::U16(data))
                .expect("consistent shape"),
        )
    }

    /// Decode from a rank-2 u16 tensor, re-validating the partition
    /// invariants (contiguous non-empty ids, 4-connected segments).
    pub fn from_tensor(t: &Tensor) -> Result<SegmentMap, ContourError> {
        let shape = t.shape();
        if shape.len() != 2 {
            return Err(ContourError::ShapeMismatch(format!(
                "segment tensor must be rank 2 [h, w], got rank {}",
                shape.len()
            )));
        }
        let TensorData::U16(raw) = t.data() else {
            return Err(ContourError::ShapeMismatch(
                "segment tensor must be u16".into(),
            ));
        };
        let (h, w) = (shape[0], shape[1]);
        if w == 0 || h == 0 {
            return Err(ContourError::BadPartition("empty image".into()));
        }
        let ids = Grid::from_vec(w, h, raw.iter().map(|&v| u32::from(v)).collect())
            .expect("length checked by tensor");
        SegmentMap::validate(ids)
    }

    fn validate(ids: Grid<u32>) -> Result<SegmentMap, ContourError> {
        let count = ids.as_slice().iter().copied().max().unwrap() as usize + 1;
        let mut sizes = vec![0usize; count];
        for &id in ids.as_slice() {
            sizes[id as usize] += 1;
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(ContourError::BadPartition(format!("segment {k} is empty")));
        }
        // Each id must form a single 4-connected component.
        let components = connected_components(&ids, |a, b| a == b).1;
        if components != count {
            return Err(ContourError::BadPartition(format!(
                "{count} ids but {components} connected components"
            )));
        }
        Ok(SegmentMap { ids, sizes })
    }
}

/// Threshold a boundary-strength map into segments. Strength strictly above
/// `tau` marks a boundary pixel; see the module docs for the absorption rule.
pub fn extract_segments(ucm: &Grid<f64>, tau: f64) -> SegmentMap {
    assert!(
        tau.is_finite() && tau >= 0.0,
        "boundary threshold must be finite and nonnegative"
    );
    assert!(
        ucm.as_slice().iter().all(|v| v.is_finite()),
        "contour strengths must be finite"
    );
    let (w, h) = (ucm.width(), ucm.height());

    const UNASSIGNED: u32 = u32::MAX;
    let mut ids = Grid::new(w, h, UNASSIGNED);
    let mut count = 0u32;

    // Raster-scan first-touch flood fill over non-boundary pixels.
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if *ucm.get(sx, sy) > tau || *ids.get(sx, sy) != UNASSIGNED {
                continue;
            }
            let segment = count;
            count += 1;
            ids.set(sx, sy, segment);
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                for (nx, ny) in neighbors4(x, y, w, h) {
                    if *ucm.get(nx, ny) <= tau && *ids.get(nx, ny) == UNASSIGNED {
                        ids.set(nx, ny, segment);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }

    if count == 0 {
        // Every pixel is boundary: the whole image is one segment.
        return SegmentMap {
            ids: Grid::new(w, h, 0),
            sizes: vec![w * h],
        };
    }

    // Absorb boundary pixels round by round. Votes in a round only see the
    // assignments from the previous round, so thick boundaries grow inward
    // symmetrically instead of sweeping in raster order.
    loop {
        let prev = ids.clone();
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if *prev.get(x, y) != UNASSIGNED {
                    continue;
                }
                let mut best: Option<(u32, usize)> = None;
                let mut votes: Vec<(u32, usize)> = Vec::with_capacity(4);
                for (nx, ny) in neighbors4(x, y, w, h) {
                    let id = *prev.get(nx, ny);
                    if id == UNASSIGNED {
                        continue;
                    }
                    match votes.iter_mut().find(|(v, _)| *v == id) {
                        Some((_, n)) => *n += 1,
                        None => votes.push((id, 1)),
                    }
                }
                for (id, n) in votes {
                    best = match best {
                        Some((bid, bn)) if n < bn || (n == bn && id > bid) => Some((bid, bn)),
                        _ => Some((id, n)),
                    };
                }
                if let Some((id, _)) = best {
                    ids.set(x, y, id);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut sizes = vec![0usize; count as usize];
    for &id in ids.as_slice() {
        sizes[id as usize] += 1;
    }
    SegmentMap { ids, sizes }
}

/// Per-segment class histograms: `out[k][c]` counts the pixels of segment
/// `k` labeled `c`. UNKNOWN pixels land in no bin.
pub fn segment_histogram(
    seg: &SegmentMap,
    labels: &LabelMap,
) -> Result<Vec<[usize; NUM_CLASSES]>, ContourError> {
    if seg.width() != labels.width() || seg.height() != labels.height() {
        return Err(ContourError::ShapeMismatch(format!(
            "segments {}x{} vs labels {}x{}",
            seg.width(),
            seg.height(),
            labels.width(),
            labels.height()
        )));
    }
    let mut hist = vec![[0usize; NUM_CLASSES]; seg.segment_count()];
    for (x, y, &id) in seg.ids().enumerate() {
        if let Some(class) = labels.get(x, y) {
            hist[id as usize][class.index()] += 1;
        }
    }
    Ok(hist)
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (x, y, w, h) = (x as i64, y as i64, w as i64, h as i64);
    [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
        .into_iter()
        .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && nx < w && ny < h)
        .map(|(nx, ny)| (nx as usize, ny as usize))
}

/// Label equal-valued 4-connected components; returns (labels, count).
fn connected_components<T: Copy>(
    grid: &Grid<T>,
    same: impl Fn(T, T) -> bool,
) -> (Grid<u32>, usize) {
    let (w, h) = (grid.width(), grid.height());
    const NONE: u32 = u32::MAX;
    let mut labels = Grid::new(w, h, NONE);
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if *labels.get(sx, sy) != NONE {
                continue;
            }
            labels.set(sx, sy, count);
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                for (nx, ny) in neighbors4(x, y, w, h) {
                    if *labels.get(nx, ny) == NONE && same(*grid.get(x, y), *grid.get(nx, ny)) {
                        labels.set(nx, ny, count);
                        queue.push_back((nx, ny));
                    }
                }
            }
            count += 1;
        }
    }
    (labels, count as usize)
}
