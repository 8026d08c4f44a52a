//! Per-pixel class label images with an UNKNOWN sentinel.
//!
//! UNKNOWN marks pixels that carry no label: unannotated ground truth, or
//! pixels a pseudo-labeling stage declined to commit to. It is not a class —
//! metrics and losses must treat it per their own contracts (mask it out,
//! count it as uncovered, and so on).

use crate::class::{ClassId, UNKNOWN_CODE};
use crate::grid::Grid;

/// A width×height image of `Option<ClassId>`; `None` is UNKNOWN.
#[derive(Clone, PartialEq, Debug)]
pub struct LabelMap {
    labels: Grid<Option<ClassId>>,
}

impl LabelMap {
    pub fn new(labels: Grid<Option<ClassId>>) -> LabelMap {
        LabelMap { labels }
    }

    /// All-UNKNOWN map.
    pub fn unknown(width: usize, height: usize) -> LabelMap {
        LabelMap {
            labels: Grid::new(width, height, None),
        }
    }

    /// Uniform map of one class.
    pub fn filled(width: usize, height: usize, class: ClassId) -> LabelMap {
        LabelMap {
            labels: Grid::new(width, height, Some(class)),
        }
    }

    /// Decode from raw u8 codes (0..12 = class, 255 = UNKNOWN). Any other
    /// value is reported as `Err(code)` so callers can name the offender.
    pub fn from_codes(width: usize, height: usize, codes: &[u8]) -> Result<LabelMap, u8> {
        assert_eq!(codes.len(), width * height, "code buffer length mismatch");
        let mut labels = Vec::with_capacity(codes.len());
        for &c in codes {
            labels.push(ClassId::from_code(c)?);
        }
        Ok(LabelMap {
            labels: Grid::from_vec(width, height, labels).unwrap(),
        })
    }

    /// Encode to raw u8 codes (UNKNOWN → 255).
    pub fn to_codes(&self) -> Vec<u8> {
        self.labels
            .as_slice()
            .iter()
            .map(|l| l.map_or(UNKNOWN_CODE, ClassId::code))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<ClassId> {
        *self.labels.get(x, y)
    }

    pub fn set(&mut self, x: usize, y: usize, label: Option<ClassId>) {
        self.labels.set(x, y, label);
    }

    pub fn grid(&self) -> &Grid<Option<ClassId>> {
        &self.labels
    }

    /// Pixels that carry a label (non-UNKNOWN).
    pub fn labeled_count(&self) -> usize {
        self.labels
            .as_slice()
            .iter()
            .filter(|l| l.is_some())
            .count()
    }

    pub fn len(&self) -> usize {
        self.labels.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, Option<ClassId>)> + '_ {
        self.labels.enumerate().map(|(x, y, &l)| (x, y, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::ClassId;

    #[test]
    fn code_round_trip_includes_unknown() {
        let codes = [0u8, 12, 255, 5];
        let m = LabelMap::from_codes(2, 2, &codes).unwrap();
        assert_eq!(m.get(0, 0), Some(ClassId::BED));
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.to_codes(), codes);
        assert_eq!(m.labeled_count(), 3);
    }

    #[test]
    fn out_of_range_codes_are_named() {
        assert_eq!(LabelMap::from_codes(1, 1, &[13]), Err(13));
        assert_eq!(LabelMap::from_codes(1, 1, &[254]), Err(254));
    }
}
