//! PNG interchange for label maps, depth maps, and contour maps.
//!
//! Conventions, fixed across the whole artifact:
//! - label maps: 8-bit grayscale, pixel value = class id, 255 = UNKNOWN;
//!   values 13..=254 are malformed and rejected on read
//! - depth maps: 16-bit grayscale, millimeters, 0 = invalid (sensor hole)
//! - contour (UCM) maps: 8-bit grayscale, strength = value / 255
//!
//! Depth written through [`write_depth_png`] saturates at 65.535 m and
//! quantizes to whole millimeters; exact round-trips hold for hole-free
//! values that are already whole millimeters under 65.536 m.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{GrayImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use thiserror::Error;

use crate::depth::DepthMap;
use crate::grid::Grid;
use crate::label::LabelMap;

#[derive(Debug, Error)]
pub enum PngError {
    #[error("failed to read {path}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to write {path}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error("io error on {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: expected {expected}, got {got}")]
    WrongFormat {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("{path}: pixel value {value} is not a class id or the UNKNOWN sentinel")]
    BadLabelValue { path: String, value: u8 },
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Read an 8-bit grayscale PNG as a label map.
pub fn read_label_png(path: &Path) -> Result<LabelMap, PngError> {
    let img = open(path)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(PngError::WrongFormat {
                path: path_str(path),
                expected: "8-bit grayscale",
                got: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    LabelMap::from_codes(w, h, gray.as_raw()).map_err(|value| PngError::BadLabelValue {
        path: path_str(path),
        value,
    })
}

/// Write a label map as 8-bit grayscale PNG (UNKNOWN → 255).
pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<(), PngError> {
    let img = GrayImage::from_raw(
        labels.width() as u32,
        labels.height() as u32,
        labels.to_codes(),
    )
    .expect("code buffer matches dimensions");
    save(path, |w| img.write_to(w, ImageFormat::Png))
}

/// Read a 16-bit grayscale PNG as metric depth (millimeters on disk,
/// 0 = sensor hole).
pub fn read_depth_png(path: &Path) -> Result<DepthMap, PngError> {
    let img = open(path)?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(PngError::WrongFormat {
                path: path_str(path),
                expected: "16-bit grayscale",
                got: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut values = Grid::new(w, h, 0.0f64);
    let mut valid = Grid::new(w, h, false);
    for (x, y, px) in gray.enumerate_pixels() {
        let mm = px.0[0];
        if mm > 0 {
            values.set(x as usize, y as usize, mm as f64 / 1000.0);
            valid.set(x as usize, y as usize, true);
        }
    }
    Ok(DepthMap::new(values, valid).expect("millimeter values are finite and nonnegative"))
}

/// Write metric depth as 16-bit grayscale PNG. Holes become 0; valid values
/// are rounded to millimeters and saturate at u16::MAX. A valid pixel that
/// would round to 0 mm is bumped to 1 mm so it stays distinguishable from a
/// hole.
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<(), PngError> {
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::new(depth.width() as u32, depth.height() as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let mm = match depth.get(x as usize, y as usize) {
            Some(m) => {
                let mm = (m * 1000.0).round().min(u16::MAX as f64) as u16;
                mm.max(1)
            }
            None => 0,
        };
        *px = Luma([mm]);
    }
    save(path, |w| img.write_to(w, ImageFormat::Png))
}

/// Write contour strengths in [0,1] as an 8-bit grayscale PNG (value × 255,
/// rounded, saturating). Values 0 and 1 survive a round trip exactly.
pub fn write_contour_png(path: &Path, ucm: &Grid<f64>) -> Result<(), PngError> {
    let mut img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::new(ucm.width() as u32, ucm.height() as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = ucm.get(x as usize, y as usize).clamp(0.0, 1.0);
        *px = Luma([(v * 255.0).round() as u8]);
    }
    save(path, |w| img.write_to(w, ImageFormat::Png))
}

/// Read an 8-bit grayscale PNG as contour strengths in [0,1] (value / 255).
pub fn read_contour_png(path: &Path) -> Result<Grid<f64>, PngError> {
    let img = open(path)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(PngError::WrongFormat {
                path: path_str(path),
                expected: "8-bit grayscale",
                got: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(Grid::from_vec(w, h, data).expect("buffer matches dimensions"))
}

fn open(path: &Path) -> Result<image::DynamicImage, PngError> {
    let file = File::open(path).map_err(|source| PngError::Io {
        path: path_str(path),
        source,
    })?;
    ImageReader::with_format(BufReader::new(file), ImageFormat::Png)
        .decode()
        .map_err(|source| PngError::Read {
            path: path_str(path),
            source,
        })
}

fn save<F>(path: &Path, write: F) -> Result<(), PngError>
where
    F: FnOnce(&mut BufWriter<File>) -> image::ImageResult<()>,
{
    let file = File::create(path).map_err(|source| PngError::Io {
        path: path_str(path),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    write(&mut writer).map_err(|source| PngError::Write {
        path: path_str(path),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::ClassId;

    #[test]
    fn label_png_round_trips_including_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let mut m = LabelMap::unknown(3, 2);
        m.set(0, 0, Some(ClassId::BED));
        m.set(2, 1, Some(ClassId::WINDOW));
        write_label_png(&path, &m).unwrap();
        let back = read_label_png(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn label_png_rejects_values_between_classes_and_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        let img = GrayImage::from_raw(1, 1, vec![200]).unwrap();
        img.save(&path).unwrap();
        assert!(matches!(
            read_label_png(&path),
            Err(PngError::BadLabelValue { value: 200, .. })
        ));
    }

    #[test]
    fn depth_png_round_trips_whole_millimeters_and_holes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        let values = Grid::from_vec(2, 2, vec![1.234, 0.001, 65.535, 0.0]).unwrap();
        let mut valid = Grid::new(2, 2, true);
        valid.set(1, 1, false);
        let d = DepthMap::new(values, valid).unwrap();
        write_depth_png(&path, &d).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert_eq!(back.get(0, 0), Some(1.234));
        assert_eq!(back.get(1, 0), Some(0.001));
        assert_eq!(back.get(0, 1), Some(65.535));
        assert_eq!(back.get(1, 1), None);
    }

    #[test]
    fn valid_zero_depth_is_kept_distinct_from_holes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.png");
        let d = DepthMap::dense(Grid::new(1, 1, 0.0)).unwrap();
        write_depth_png(&path, &d).unwrap();
        let back = read_depth_png(&path).unwrap();
        // 0 m valid becomes 1 mm on disk: still valid, minimally perturbed.
        assert_eq!(back.get(0, 0), Some(0.001));
    }

    #[test]
    fn contour_png_scales_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ucm.png");
        let img = GrayImage::from_raw(2, 1, vec![0, 255]).unwrap();
        img.save(&path).unwrap();
        let g = read_contour_png(&path).unwrap();
        assert_eq!(*g.get(0, 0), 0.0);
        assert_eq!(*g.get(1, 0), 1.0);
    }

    #[test]
    fn contour_round_trip_preserves_binary_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ucm-rt.png");
        let mut g = Grid::new(3, 2, 0.0);
        g.set(1, 0, 1.0);
        g.set(2, 1, 0.5);
        write_contour_png(&path, &g).unwrap();
        let back = read_contour_png(&path).unwrap();
        assert_eq!(*back.get(0, 0), 0.0);
        assert_eq!(*back.get(1, 0), 1.0);
        // Interior strengths survive to 8-bit precision.
        assert!((back.get(2, 1) - 0.5).abs() < 1.0 / 255.0);
    }

    #[test]
    fn wrong_bit_depth_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth8.png");
        let img = GrayImage::from_raw(1, 1, vec![5]).unwrap();
        img.save(&path).unwrap();
        assert!(matches!(
            read_depth_png(&path),
            Err(PngError::WrongFormat { .. })
        ));
    }
}
