//! The fixed 13-class indoor taxonomy shared by every stage.
//!
//! The id assignment is part of the on-disk contract: label files store the
//! raw id per pixel, so the order below must never change.

use std::fmt;

/// Number of valid semantic classes.
pub const NUM_CLASSES: usize = 13;

/// Sentinel for pixels without a class label in 8-bit label files.
///
/// 255 keeps the full 0..12 range free for classes and matches the common
/// ignore-index convention for segmentation label images.
pub const UNKNOWN_CODE: u8 = 255;

/// One of the 13 semantic classes.
///
/// Construction is checked, so a `ClassId` always holds a valid id. The
/// unknown sentinel is deliberately *not* representable here; per-pixel
/// storage uses `Option<ClassId>` (or the raw [`UNKNOWN_CODE`] byte) instead,
/// which keeps "no label" from ever slipping into class arithmetic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ClassId(u8);

const NAMES: [&str; NUM_CLASSES] = [
    "bed",
    "books",
    "ceil",
    "chair",
    "floor",
    "furniture",
    "objects",
    "painting",
    "sofa",
    "table",
    "tv",
    "wall",
    "window",
];

/// Abbreviated column headers for plain-text metric tables.
const SHORT_NAMES: [&str; NUM_CLASSES] = [
    "bed", "books", "ceil", "chair", "floor", "furn.", "objs.", "paint", "sofa", "table", "tv",
    "wall", "window",
];

impl ClassId {
    pub const BED: ClassId = ClassId(0);
    pub const BOOKS: ClassId = ClassId(1);
    pub const CEIL: ClassId = ClassId(2);
    pub const CHAIR: ClassId = ClassId(3);
    pub const FLOOR: ClassId = ClassId(4);
    pub const FURNITURE: ClassId = ClassId(5);
    pub const OBJECTS: ClassId = ClassId(6);
    pub const PAINTING: ClassId = ClassId(7);
    pub const SOFA: ClassId = ClassId(8);
    pub const TABLE: ClassId = ClassId(9);
    pub const TV: ClassId = ClassId(10);
    pub const WALL: ClassId = ClassId(11);
    pub const WINDOW: ClassId = ClassId(12);

    /// Checked constructor; `None` for anything outside `0..13`.
    pub fn new(id: u8) -> Option<ClassId> {
        (usize::from(id) < NUM_CLASSES).then_some(ClassId(id))
    }

    /// Interpret a raw label byte: a class id, `None` for [`UNKNOWN_CODE`].
    ///
    /// Bytes in `13..255` are neither and yield an error at the IO boundary;
    /// see [`crate::label::LabelMap::from_codes`].
    pub fn from_code(code: u8) -> Result<Option<ClassId>, u8> {
        if code == UNKNOWN_CODE {
            Ok(None)
        } else {
            ClassId::new(code).map(Some).ok_or(code)
        }
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    /// Paper-style abbreviation used as a metric-table column header.
    pub fn short_name(self) -> &'static str {
        SHORT_NAMES[self.index()]
    }

    /// Parse a canonical class name (as produced by [`ClassId::name`]).
    pub fn from_name(name: &str) -> Option<ClassId> {
        NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ClassId(i as u8))
    }

    /// All classes in id order.
    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// Serialized form is the class name, not the raw id: JSON artifacts stay
// self-describing, and a renumbering bug cannot slip through unnoticed.
impl serde::Serialize for ClassId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for ClassId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<ClassId, D::Error> {
        let name = <String as serde::Deserialize>::deserialize(d)?;
        ClassId::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format_args!("unknown class name {name:?}")))
    }
}
