//! Per-image min-max normalization of depth.
//!
//! `minmax_normalize` maps the valid pixels of a depth image onto [-1, 1]
//! linearly, pinning the minimum to exactly -1 and the maximum to exactly +1.
//! The transform is invariant to positive rescaling and shifting of the
//! input, which is what makes depth from different sensors comparable.

use crate::adapt::tape::{Tape, Var};
use crate::adapt::AdaptError;
use crate::depth::DepthMap;
use crate::grid::Grid;

/// A depth image after min-max normalization, with the validity mask carried
/// over from the source.
///
/// Freshly normalized maps have valid values in [-1, 1] with the extremes
/// pinned exactly. The container itself only enforces finiteness: derived
/// maps (for example a domain shifted by a constant bias, or the raw output
/// of a mapping network) are allowed to leave the nominal range, and the
/// exact pinning is a property of [`minmax_normalize`], checked by its tests,
/// not re-validated here.
#[derive(Clone, PartialEq, Debug)]
pub struct NormalizedDepthMap {
    values: Grid<f64>,
    valid: Grid<bool>,
}

impl NormalizedDepthMap {
    /// Build from parallel grids. Valid pixels must be finite.
    pub fn new(values: Grid<f64>, valid: Grid<bool>) -> Result<NormalizedDepthMap, AdaptError> {
        if !values.same_shape(&valid) {
            return Err(AdaptError::ShapeMismatch(format!(
                "value grid {}x{} vs mask grid {}x{}",
                values.width(),
                values.height(),
                valid.width(),
                valid.height()
            )));
        }
        for (x, y, &v) in values.enumerate() {
            if *valid.get(x, y) && !v.is_finite() {
                return Err(AdaptError::NonFinite("normalized depth value"));
            }
        }
        Ok(NormalizedDepthMap { values, valid })
    }

    /// All-valid constructor.
    pub fn dense(values: Grid<f64>) -> Result<NormalizedDepthMap, AdaptError> {
        let valid = Grid::new(values.width(), values.height(), true);
        NormalizedDepthMap::new(values, valid)
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if *self.valid.get(x, y) {
            Some(*self.values.get(x, y))
        } else {
            None
        }
    }

    /// Raw value grid, holes included (holes read as their stored filler 0).
    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Grid<bool> {
        &self.valid
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .enumerate()
            .filter(|&(x, y, _)| *self.valid.get(x, y))
            .map(|(x, y, &v)| (x, y, v))
    }
}

/// Map valid depth values linearly onto [-1, 1]:
/// `2 * ((v - min) / (max - min) - 1/2)` with min/max taken over valid pixels
/// only. Invalid pixels stay invalid (stored as 0 behind the mask).
pub fn minmax_normalize(d: &DepthMap) -> Result<NormalizedDepthMap, AdaptError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, v) in d.iter_valid() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == f64::INFINITY {
        return Err(AdaptError::EmptyInput);
    }
    if lo == hi {
        return Err(AdaptError::DegenerateRange(lo));
    }
    let range = hi - lo;
    let mut values = Grid::new(d.width(), d.height(), 0.0);
    let mut valid = Grid::new(d.width(), d.height(), false);
    for (x, y, v) in d.iter_valid() {
        values.set(x, y, 2.0 * ((v - lo) / range - 0.5));
        valid.set(x, y, true);
    }
    Ok(NormalizedDepthMap { values, valid })
}

/// Tape form of the same transform, for differentiating through the
/// normalization. The min/max folds route gradients to the extreme pixels
/// (first in raster order on ties). A degenerate range divides by zero and
/// surfaces as a non-finite loss downstream rather than an error here.
pub(crate) fn eta_vars(t: &mut Tape, xs: &[Var]) -> Vec<Var> {
    assert!(!xs.is_empty(), "eta over an empty pixel list");
    let mut lo = xs[0];
    let mut hi = xs[0];
    for &x in &xs[1..] {
        lo = t.min2(lo, x);
        hi = t.max2(hi, x);
    }
    let range = t.sub(hi, lo);
    xs.iter()
        .map(|&x| {
            let d = t.sub(x, lo);
            let q = t.div(d, range);
            let doubled = t.scale(q, 2.0);
            t.offset(doubled, -1.0)
        })
        .collect()
}

/// Slice form of the same transform, for internal all-valid buffers.
pub(crate) fn eta_slice(values: &[f64]) -> Result<Vec<f64>, AdaptError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == f64::INFINITY {
        return Err(AdaptError::EmptyInput);
    }
    if lo == hi {
        return Err(AdaptError::DegenerateRange(lo));
    }
    let range = hi - lo;
    Ok(values
        .iter()
        .map(|&v| 2.0 * ((v - lo) / range - 0.5))
        .collect())
}
