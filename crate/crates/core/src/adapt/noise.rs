//! Parametric simulation of depth-sensor artifacts.
//!
//! A deterministic stand-in for a learned clean→noisy mapping, useful for
//! exercising the rest of the pipeline without training anything. Three
//! artifact families, applied in a fixed order:
//!
//! 1. lateral jitter — every pixel is resampled from a position displaced by
//!    rounded Gaussian offsets, so depth edges (and hole edges) wobble
//!    sideways while flat regions are untouched;
//! 2. quantization — valid depths snap to the nearest multiple of the step;
//! 3. holes — round blobs of pixels lose their validity, covering roughly
//!    `hole_rate` of the image.
//!
//! Every phase is skipped when its parameter is zero, so degenerate
//! parameters give back the input unchanged.

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptError;
use crate::depth::DepthMap;
use crate::rng::SeedStream;

/// Knobs of [`simulate_sensor_noise`]. All rates and sizes are nonnegative;
/// `hole_rate` is a fraction of the image area in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub hole_rate: f64,
    pub hole_blob_radius: f64,
    pub quantization_step: f64,
    pub lateral_jitter_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> NoiseParams {
        NoiseParams {
            hole_rate: 0.0,
            hole_blob_radius: 0.0,
            quantization_step: 0.0,
            lateral_jitter_sigma: 0.0,
            seed: 0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), AdaptError> {
        let fields = [
            self.hole_rate,
            self.hole_blob_radius,
            self.quantization_step,
            self.lateral_jitter_sigma,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) || self.hole_rate > 1.0 {
            return Err(AdaptError::NonFinite(
                "noise parameters must be nonnegative (hole_rate at most 1)",
            ));
        }
        Ok(())
    }
}

/// Apply the simulated sensor artifacts. Deterministic for a given seed.
/// Panics if `p` violates its own invariants; validate at the boundary.
pub fn simulate_sensor_noise(d: &DepthMap, p: &NoiseParams) -> DepthMap {
    p.validate().expect("noise parameters must be valid");
    let (w, h) = (d.width(), d.height());
    let mut values = d.values().clone();
    let mut valid = d.mask().clone();
    let root = SeedStream::new(p.seed);

    if p.lateral_jitter_sigma > 0.0 {
        let mut rng = root.stream("jitter");
        let mut new_values = values.clone();
        let mut new_valid = valid.clone();
        for y in 0..h {
            for x in 0..w {
                let dx = (rng.gaussian() * p.lateral_jitter_sigma).round() as i64;
                let dy = (rng.gaussian() * p.lateral_jitter_sigma).round() as i64;
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                new_values.set(x, y, *values.get(sx, sy));
                new_valid.set(x, y, *valid.get(sx, sy));
            }
        }
        values = new_values;
        valid = new_valid;
    }

    if p.quantization_step > 0.0 {
        let step = p.quantization_step;
        for y in 0..h {
            for x in 0..w {
                if *valid.get(x, y) {
                    let q = (*values.get(x, y) / step).round() * step;
                    values.set(x, y, q);
                }
            }
        }
    }

    if p.hole_rate > 0.0 {
        let mut rng = root.stream("holes");
        let stencil = disk_stencil(p.hole_blob_radius);
        let blobs =
            (p.hole_rate * (w * h) as f64 / stencil.len() as f64).round() as usize;
        for _ in 0..blobs {
            let cx = rng.below(w) as i64;
            let cy = rng.below(h) as i64;
            for &(dx, dy) in &stencil {
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    valid.set(px as usize, py as usize, false);
                }
            }
        }
    }

    DepthMap::new(values, valid).expect("noise phases preserve value validity")
}

/// Offsets of the pixels within `radius` of a center (always includes it).
fn disk_stencil(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn ramp_map(w: usize, h: usize) -> DepthMap {
        let values = (0..w * h).map(|i| 0.5 + i as f64 * 0.01).collect();
        DepthMap::dense(Grid::from_vec(w, h, values).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_params_are_the_identity() {
        let d = ramp_map(7, 5);
        let out = simulate_sensor_noise(&d, &NoiseParams::default());
        assert_eq!(out, d);
    }

    #[test]
    fn quantization_snaps_to_the_nearest_grid_point() {
        let d = DepthMap::dense(Grid::from_vec(2, 1, vec![0.12, 0.14]).unwrap()).unwrap();
        let p = NoiseParams {
            quantization_step: 0.05,
            ..NoiseParams::default()
        };
        let out = simulate_sensor_noise(&d, &p);
        assert!((out.get(0, 0).unwrap() - 0.10).abs() < 1e-12);
        assert!((out.get(1, 0).unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn hole_fraction_tracks_the_rate_across_seeds() {
        let d = DepthMap::dense(Grid::new(100, 100, 2.0)).unwrap();
        for seed in 0..10 {
            let p = NoiseParams {
                hole_rate: 0.25,
                hole_blob_radius: 2.0,
                seed,
                ..NoiseParams::default()
            };
            let out = simulate_sensor_noise(&d, &p);
            let frac = 1.0 - out.valid_count() as f64 / 10_000.0;
            assert!(
                (0.15..=0.35).contains(&frac),
                "seed {seed}: hole fraction {frac}"
            );
        }
    }

    #[test]
    fn holes_do_not_disturb_surviving_values() {
        let d = ramp_map(20, 20);
        let p = NoiseParams {
            hole_rate: 0.2,
            hole_blob_radius: 1.0,
            seed: 3,
            ..NoiseParams::default()
        };
        let out = simulate_sensor_noise(&d, &p);
        assert!(out.valid_count() < 400);
        for (x, y, v) in out.iter_valid() {
            assert_eq!(v, d.get(x, y).unwrap());
        }
    }

    #[test]
    fn jitter_resamples_existing_values_only() {
        // Step edge: left half 1 m, right half 2 m.
        let values: Vec<f64> = (0..200)
            .map(|i| if i % 20 < 10 { 1.0 } else { 2.0 })
            .collect();
        let d = DepthMap::dense(Grid::from_vec(20, 10, values).unwrap()).unwrap();
        let p = NoiseParams {
            lateral_jitter_sigma: 1.0,
            seed: 11,
            ..NoiseParams::default()
        };
        let out = simulate_sensor_noise(&d, &p);
        assert_ne!(out, d, "jitter should move the edge for this seed");
        for (_, _, v) in out.iter_valid() {
            assert!(v == 1.0 || v == 2.0, "unexpected value {v}");
        }
    }

    #[test]
    fn jitter_leaves_constant_regions_unchanged() {
        let d = DepthMap::dense(Grid::new(15, 15, 1.75)).unwrap();
        let p = NoiseParams {
            lateral_jitter_sigma: 2.0,
            seed: 4,
            ..NoiseParams::default()
        };
        assert_eq!(simulate_sensor_noise(&d, &p), d);
    }

    #[test]
    fn same_seed_same_output_different_seed_different_holes() {
        let d = ramp_map(30, 30);
        let p = NoiseParams {
            hole_rate: 0.3,
            hole_blob_radius: 1.5,
            quantization_step: 0.02,
            lateral_jitter_sigma: 0.8,
            seed: 42,
        };
        let a = simulate_sensor_noise(&d, &p);
        let b = simulate_sensor_noise(&d, &p);
        assert_eq!(a, b);
        let other = NoiseParams { seed: 43, ..p };
        assert_ne!(simulate_sensor_noise(&d, &other), a);
    }

    #[test]
    fn out_of_range_params_are_rejected_by_validate() {
        let bad = NoiseParams {
            hole_rate: 1.5,
            ..NoiseParams::default()
        };
        assert!(bad.validate().is_err());
        let neg = NoiseParams {
            quantization_step: -0.1,
            ..NoiseParams::default()
        };
        assert!(neg.validate().is_err());
    }
}
