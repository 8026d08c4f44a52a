//! Metric depth images with an explicit validity mask.
//!
//! Sensor holes (pixels the depth camera failed to measure) are first-class:
//! each pixel carries a validity flag, and every operation in the crate that
//! consumes depth is required to say what it does with invalid pixels. On
//! disk, invalid pixels are stored as the value 0 with the mask cleared,
//! mirroring how raw sensor output encodes holes.

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("depth value at ({x},{y}) is {value}; valid pixels must be finite and >= 0")]
    BadValue { x: usize, y: usize, value: f64 },
    #[error("value grid is {vw}x{vh} but mask grid is {mw}x{mh}")]
    ShapeMismatch {
        vw: usize,
        vh: usize,
        mw: usize,
        mh: usize,
    },
}

/// A per-pixel depth image in meters. Invalid pixels (sensor holes) carry an
/// arbitrary stored value that must never be read; use [`DepthMap::get`].
#[derive(Clone, PartialEq, Debug)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: Grid<bool>,
}

impl DepthMap {
    /// Build from parallel value/mask grids. Valid pixels must hold finite,
    /// nonnegative values; invalid pixels may hold anything.
    pub fn new(values: Grid<f64>, valid: Grid<bool>) -> Result<DepthMap, DepthError> {
        if !values.same_shape(&valid) {
            return Err(DepthError::ShapeMismatch {
                vw: values.width(),
                vh: values.height(),
                mw: valid.width(),
                mh: valid.height(),
            });
        }
        for (x, y, &v) in values.enumerate() {
            if *valid.get(x, y) && !(v.is_finite() && v >= 0.0) {
                return Err(DepthError::BadValue { x, y, value: v });
            }
        }
        Ok(DepthMap { values, valid })
    }

    /// All-valid constructor for fully measured images.
    pub fn dense(values: Grid<f64>) -> Result<DepthMap, DepthError> {
        let valid = Grid::new(values.width(), values.height(), true);
        DepthMap::new(values, valid)
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Depth in meters, or `None` for a sensor hole.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if *self.valid.get(x, y) {
            Some(*self.values.get(x, y))
        } else {
            None
        }
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.valid.get(x, y)
    }

    /// Raw value grid, holes included (holes read as their stored filler).
    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Grid<bool> {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }

    /// Iterate over valid pixels as `(x, y, meters)`.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .enumerate()
            .filter(|&(x, y, _)| *self.valid.get(x, y))
            .map(|(x, y, &v)| (x, y, v))
    }
}
