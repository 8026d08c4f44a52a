//! Weak localization: classifier-head math and class activation maps.
//!
//! The image-level classifier is a frozen feature extractor followed by a
//! 2×2 max pool (stride 2), global average pooling, and a linear head. Its
//! class activation map (CAM) projects the *unpooled* feature grid through
//! the head's weights — no bias — then upsamples bilinearly to image size
//! and min-max normalizes each class channel to [0, 1] so a single threshold
//! is meaningful across classes. A constant (information-free) channel
//! normalizes to all zeros.

use thiserror::Error;

use crate::class::NUM_CLASSES;
use crate::grid::Grid;
use crate::score::{ScoreKind, ScoreVolume};
use crate::tensor::{Tensor, TensorData};

#[derive(Debug, Error)]
pub enum WeakLocalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A d-channel feature grid, all channels the same (h, w), each at least 2.
#[derive(Clone, PartialEq, Debug)]
pub struct FeatureVolume {
    channels: Vec<Grid<f64>>,
}

impl FeatureVolume {
    pub fn new(channels: Vec<Grid<f64>>) -> Result<FeatureVolume, WeakLocalError> {
        let first = channels
            .first()
            .ok_or_else(|| WeakLocalError::ShapeMismatch("no feature channels".into()))?;
        let (w, h) = (first.width(), first.height());
        if w < 2 || h < 2 {
            return Err(WeakLocalError::ShapeMismatch(format!(
                "feature grid {w}x{h} too small for 2x2 pooling"
            )));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.width() != w || ch.height() != h {
                return Err(WeakLocalError::ShapeMismatch(format!(
                    "channel {i} is {}x{}, expected {w}x{h}",
                    ch.width(),
                    ch.height()
                )));
            }
            if ch.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(WeakLocalError::NonFinite("feature volume"));
            }
        }
        Ok(FeatureVolume { channels })
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, d: usize) -> &Grid<f64> {
        &self.channels[d]
    }

    /// Read from a rank-3 tensor of shape [d, h, w] (f32 or f64).
    pub fn from_tensor(t: &Tensor) -> Result<FeatureVolume, WeakLocalError> {
        let shape = t.shape();
        if shape.len() != 3 {
            return Err(WeakLocalError::ShapeMismatch(format!(
                "feature tensor must be rank 3 [d, h, w], got rank {}",
                shape.len()
            )));
        }
        let (d, h, w) = (shape[0], shape[1], shape[2]);
        let data: Vec<f64> = match t.data() {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            _ => {
                return Err(WeakLocalError::ShapeMismatch(
                    "feature tensor must be f32 or f64".into(),
                ))
            }
        };
        let channels = (0..d)
            .map(|c| Grid::from_vec(w, h, data[c * h * w..(c + 1) * h * w].to_vec()).unwrap())
            .collect();
        FeatureVolume::new(channels)
    }

    pub fn to_tensor(&self) -> Tensor {
        let (d, h, w) = (self.depth(), self.height(), self.width());
        let mut data = Vec::with_capacity(d * h * w);
        for ch in &self.channels {
            data.extend_from_slice(ch.as_slice());
        }
        Tensor::new(vec![d, h, w], TensorData::F64(data)).expect("consistent shape")
    }
}

/// Linear classifier head: one weight row per class plus a bias.
#[derive(Clone, PartialEq, Debug)]
pub struct HeadWeights {
    rows: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl HeadWeights {
    pub fn new(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<HeadWeights, WeakLocalError> {
        if rows.is_empty() || rows.len() != bias.len() {
            return Err(WeakLocalError::ShapeMismatch(format!(
                "{} weight rows vs {} bias entries",
                rows.len(),
                bias.len()
            )));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(WeakLocalError::ShapeMismatch(format!(
                    "weight row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
        }
        if rows
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(WeakLocalError::NonFinite("head weights"));
        }
        Ok(HeadWeights { rows, bias })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn depth(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.rows[c]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Read from a rank-2 weight tensor [C, d] and rank-1 bias tensor [C].
    pub fn from_tensors(weights: &Tensor, bias: &Tensor) -> Result<HeadWeights, WeakLocalError> {
        let wshape = weights.shape();
        if wshape.len() != 2 || bias.shape().len() != 1 || bias.shape()[0] != wshape[0] {
            return Err(WeakLocalError::ShapeMismatch(format!(
                "expected weights [C, d] with bias [C]; got {:?} and {:?}",
                wshape,
                bias.shape()
            )));
        }
        let to_f64 = |t: &Tensor| -> Result<Vec<f64>, WeakLocalError> {
            match t.data() {
                TensorData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
                TensorData::F64(v) => Ok(v.clone()),
                _ => Err(WeakLocalError::ShapeMismatch(
                    "head tensors must be f32 or f64".into(),
                )),
            }
        };
        let wdata = to_f64(weights)?;
        let (c, d) = (wshape[0], wshape[1]);
        let rows = (0..c).map(|i| wdata[i * d..(i + 1) * d].to_vec()).collect();
        HeadWeights::new(rows, to_f64(bias)?)
    }
}

/// Class scores of the whole image: `W · GAP(MaxPool2x2(f)) + bias`.
/// Odd feature sizes drop the trailing row/column in the pool.
pub fn head_forward(f: &FeatureVolume, w: &HeadWeights) -> Result<Vec<f64>, WeakLocalError> {
    if w.depth() != f.depth() {
        return Err(WeakLocalError::ShapeMismatch(format!(
            "head expects {} channels, features have {}",
            w.depth(),
            f.depth()
        )));
    }
    let gap: Vec<f64> = (0..f.depth())
        .map(|d| {
            let pooled = maxpool2(f.channel(d));
            pooled.as_slice().iter().sum::<f64>() / pooled.as_slice().len() as f64
        })
        .collect();
    Ok((0..w.classes())
        .map(|c| {
            w.row(c)
                .iter()
                .zip(&gap)
                .map(|(wi, gi)| wi * gi)
                .sum::<f64>()
                + w.bias()[c]
        })
        .collect())
}

fn maxpool2(g: &Grid<f64>) -> Grid<f64> {
    let (ow, oh) = (g.width() / 2, g.height() / 2);
    let mut out = Grid::new(ow, oh, f64::NEG_INFINITY);
    for y in 0..oh {
        for x in 0..ow {
            let m = g
                .get(2 * x, 2 * y)
                .max(*g.get(2 * x + 1, 2 * y))
                .max(*g.get(2 * x, 2 * y + 1))
                .max(*g.get(2 * x + 1, 2 * y + 1));
            out.set(x, y, m);
        }
    }
    out
}

/// Class activation maps: per class, project the feature grid through the
/// head's weight row (no bias), upsample bilinearly to `out_w`×`out_h`
/// (half-pixel centers, clamped borders), then min-max normalize the channel
/// to [0, 1]. Constant channels become all zeros. Requires a 13-row head.
pub fn compute_cam(
    f: &FeatureVolume,
    w: &HeadWeights,
    out_w: usize,
    out_h: usize,
) -> Result<ScoreVolume, WeakLocalError> {
    if w.classes() != NUM_CLASSES {
        return Err(WeakLocalError::ShapeMismatch(format!(
            "CAM head must have {NUM_CLASSES} rows, got {}",
            w.classes()
        )));
    }
    if w.depth() != f.depth() {
        return Err(WeakLocalError::ShapeMismatch(format!(
            "head expects {} channels, features have {}",
            w.depth(),
            f.depth()
        )));
    }
    if out_w < f.width() || out_h < f.height() {
        return Err(WeakLocalError::ShapeMismatch(format!(
            "output {out_w}x{out_h} smaller than feature grid {}x{}",
            f.width(),
            f.height()
        )));
    }

    let mut data = vec![0.0; out_w * out_h * NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let mut plane = Grid::new(f.width(), f.height(), 0.0);
        for y in 0..f.height() {
            for x in 0..f.width() {
                let v = (0..f.depth())
                    .map(|d| w.row(c)[d] * f.channel(d).get(x, y))
                    .sum::<f64>();
                plane.set(x, y, v);
            }
        }
        let up = bilinear_upsample(&plane, out_w, out_h);
        let lo = up.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = up
            .as_slice()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for y in 0..out_h {
            for x in 0..out_w {
                let v = if range == 0.0 {
                    0.0
                } else {
                    (up.get(x, y) - lo) / range
                };
                data[(y * out_w + x) * NUM_CLASSES + c] = v;
            }
        }
    }
    ScoreVolume::new(out_w, out_h, ScoreKind::Logits, data)
        .map_err(|e| WeakLocalError::ShapeMismatch(e.to_string()))
}

/// Bilinear resize with half-pixel sample centers and clamped borders.
fn bilinear_upsample(src: &Grid<f64>, out_w: usize, out_h: usize) -> Grid<f64> {
    let (sw, sh) = (src.width(), src.height());
    let mut out = Grid::new(out_w, out_h, 0.0);
    let sx_scale = sw as f64 / out_w as f64;
    let sy_scale = sh as f64 / out_h as f64;
    for y in 0..out_h {
        let sy = (y as f64 + 0.5) * sy_scale - 0.5;
        let y0 = sy.floor();
        let ty = sy - y0;
        let y0c = (y0 as i64).clamp(0, sh as i64 - 1) as usize;
        let y1c = (y0 as i64 + 1).clamp(0, sh as i64 - 1) as usize;
        for x in 0..out_w {
            let sx = (x as f64 + 0.5) * sx_scale - 0.5;
            let x0 = sx.floor();
            let tx = sx - x0;
            let x0c = (x0 as i64).clamp(0, sw as i64 - 1) as usize;
            let x1c = (x0 as i64 + 1).clamp(0, sw as i64 - 1) as usize;
            let top = src.get(x0c, y0c) * (1.0 - tx) + src.get(x1c, y0c) * tx;
            let bot = src.get(x0c, y1c) * (1.0 - tx) + src.get(x1c, y1c) * tx;
            out.set(x, y, top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::ClassId;
    use crate::rng::SeedStream;

    fn volume(rng: &mut SeedStream, d: usize, w: usize, h: usize) -> FeatureVolume {
        let channels = (0..d)
            .map(|_| {
                Grid::from_vec(w, h, (0..w * h).map(|_| rng.range_f64(-2.0, 2.0)).collect())
                    .unwrap()
            })
            .collect();
        FeatureVolume::new(channels).unwrap()
    }

    fn head_13(rng: &mut SeedStream, d: usize) -> HeadWeights {
        let rows = (0..NUM_CLASSES)
            .map(|_| (0..d).map(|_| rng.range_f64(-1.0, 1.0)).collect())
            .collect();
        HeadWeights::new(rows, vec![0.0; NUM_CLASSES]).unwrap()
    }

    #[test]
    fn constant_features_pool_to_the_constant() {
        let f = FeatureVolume::new(vec![Grid::new(4, 4, 2.5), Grid::new(4, 4, 2.5)]).unwrap();
        let w = HeadWeights::new(vec![vec![1.0, 2.0]], vec![0.5]).unwrap();
        let scores = head_forward(&f, &w).unwrap();
        // GAP of a constant is the constant; score = (1+2)*2.5 + 0.5.
        assert!((scores[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_two_by_two_example() {
        let f = FeatureVolume::new(vec![Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()])
            .unwrap();
        let w = HeadWeights::new(vec![vec![1.0]], vec![0.0]).unwrap();
        let scores = head_forward(&f, &w).unwrap();
        assert_eq!(scores, vec![4.0]);
    }

    #[test]
    fn head_forward_matches_loop_oracle() {
        let mut rng = SeedStream::new(0xca1).stream("head-oracle");
        let f = volume(&mut rng, 4, 6, 8);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.range_f64(-1.0, 1.0)).collect())
            .collect();
        let bias: Vec<f64> = (0..3).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        let w = HeadWeights::new(rows.clone(), bias.clone()).unwrap();
        let scores = head_forward(&f, &w).unwrap();

        // Explicit pooling + averaging, written independently.
        let mut gap = vec![0.0; 4];
        for (d, g) in gap.iter_mut().enumerate() {
            let ch = f.channel(d);
            let mut sum = 0.0;
            for py in 0..4 {
                for px in 0..3 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(*ch.get(2 * px + dx, 2 * py + dy));
                        }
                    }
                    sum += m;
                }
            }
            *g = sum / 12.0;
        }
        for c in 0..3 {
            let expect: f64 =
                rows[c].iter().zip(&gap).map(|(a, b)| a * b).sum::<f64>() + bias[c];
            assert!((scores[c] - expect).abs() < 1e-10, "class {c}");
        }
    }

    #[test]
    fn odd_sizes_drop_the_trailing_row_and_column() {
        // 3x3 with a huge value in the dropped row/column: it must not leak.
        let mut g = Grid::new(3, 3, 1.0);
        g.set(2, 0, 100.0);
        g.set(0, 2, 100.0);
        g.set(2, 2, 100.0);
        let f = FeatureVolume::new(vec![g]).unwrap();
        let w = HeadWeights::new(vec![vec![1.0]], vec![0.0]).unwrap();
        assert_eq!(head_forward(&f, &w).unwrap(), vec![1.0]);
    }

    #[test]
    fn permuting_head_rows_permutes_scores() {
        let mut rng = SeedStream::new(0xca2).stream("head-permute");
        let f = volume(&mut rng, 3, 4, 4);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.range_f64(-1.0, 1.0)).collect())
            .collect();
        let bias: Vec<f64> = (0..4).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let w = HeadWeights::new(rows.clone(), bias.clone()).unwrap();
        let perm = [2usize, 0, 3, 1];
        let w_perm = HeadWeights::new(
            perm.iter().map(|&i| rows[i].clone()).collect(),
            perm.iter().map(|&i| bias[i]).collect(),
        )
        .unwrap();
        let s = head_forward(&f, &w).unwrap();
        let sp = head_forward(&f, &w_perm).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(sp[j], s[i]);
        }
    }

    #[test]
    fn one_hot_head_selects_a_channel() {
        let mut rng = SeedStream::new(0xca3).stream("cam-onehot");
        let f = volume(&mut rng, 2, 4, 4);
        let mut rows = vec![vec![0.0, 0.0]; NUM_CLASSES];
        rows[0] = vec![1.0, 0.0];
        let w = HeadWeights::new(rows, vec![0.0; NUM_CLASSES]).unwrap();
        let cam = compute_cam(&f, &w, 4, 4).unwrap();

        let ch = f.channel(0);
        let lo = ch.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch
            .as_slice()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        for y in 0..4 {
            for x in 0..4 {
                let expect = (ch.get(x, y) - lo) / (hi - lo);
                let got = cam.get(x, y, ClassId::new(0).unwrap());
                assert!((got - expect).abs() < 1e-12);
            }
        }
        // All other channels are constant 0 -> normalized to zeros.
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(cam.get(x, y, ClassId::new(5).unwrap()), 0.0);
            }
        }
    }

    #[test]
    fn constant_features_normalize_to_zero_cams() {
        let f = FeatureVolume::new(vec![Grid::new(3, 3, 7.0)]).unwrap();
        let mut rng = SeedStream::new(0xca4).stream("cam-const");
        let w = head_13(&mut rng, 1);
        let cam = compute_cam(&f, &w, 6, 6).unwrap();
        assert!(cam.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cam_matches_bilinear_loop_oracle() {
        let mut rng = SeedStream::new(0xca5).stream("cam-oracle");
        let f = volume(&mut rng, 3, 4, 4);
        let w = head_13(&mut rng, 3);
        let cam = compute_cam(&f, &w, 8, 8).unwrap();

        for c in 0..NUM_CLASSES {
            // Projection on the feature grid.
            let mut plane = vec![0.0; 16];
            for y in 0..4 {
                for x in 0..4 {
                    plane[y * 4 + x] = (0..3)
                        .map(|d| w.row(c)[d] * f.channel(d).get(x, y))
                        .sum::<f64>();
                }
            }
            // Bilinear with half-pixel centers, clamped reads.
            let sample = |fx: f64, fy: f64| -> f64 {
                let x0 = fx.floor();
                let y0 = fy.floor();
                let (tx, ty) = (fx - x0, fy - y0);
                let read = |ix: i64, iy: i64| -> f64 {
                    plane[(iy.clamp(0, 3) * 4 + ix.clamp(0, 3)) as usize]
                };
                let (x0, y0) = (x0 as i64, y0 as i64);
                read(x0, y0) * (1.0 - tx) * (1.0 - ty)
                    + read(x0 + 1, y0) * tx * (1.0 - ty)
                    + read(x0, y0 + 1) * (1.0 - tx) * ty
                    + read(x0 + 1, y0 + 1) * tx * ty
            };
            let mut up = vec![0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    up[y * 8 + x] =
                        sample((x as f64 + 0.5) * 0.5 - 0.5, (y as f64 + 0.5) * 0.5 - 0.5);
                }
            }
            let lo = up.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = up.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for y in 0..8 {
                for x in 0..8 {
                    let expect = if hi == lo {
                        0.0
                    } else {
                        (up[y * 8 + x] - lo) / (hi - lo)
                    };
                    let got = cam.get(x, y, ClassId::new(c as u8).unwrap());
                    assert!(
                        (got - expect).abs() < 1e-10,
                        "class {c} ({x},{y}): {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn cam_values_stay_in_unit_interval_and_keep_argmax() {
        let mut rng = SeedStream::new(0xca6).stream("cam-range");
        let f = volume(&mut rng, 2, 5, 4);
        let w = head_13(&mut rng, 2);
        let cam = compute_cam(&f, &w, 10, 8).unwrap();
        assert!(cam.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // Normalization is monotone: the per-class argmax location survives.
        for c in 0..NUM_CLASSES {
            let class = ClassId::new(c as u8).unwrap();
            let mut plane = Grid::new(5, 4, 0.0);
            for y in 0..4 {
                for x in 0..5 {
                    let v = (0..2)
                        .map(|d| w.row(c)[d] * f.channel(d).get(x, y))
                        .sum::<f64>();
                    plane.set(x, y, v);
                }
            }
            let up = bilinear_upsample(&plane, 10, 8);
            let mut best = (0, 0);
            for y in 0..8 {
                for x in 0..10 {
                    if up.get(x, y) > up.get(best.0, best.1) {
                        best = (x, y);
                    }
                }
            }
            let mut cam_best = (0, 0);
            for y in 0..8 {
                for x in 0..10 {
                    if cam.get(x, y, class) > cam.get(cam_best.0, cam_best.1, class) {
                        cam_best = (x, y);
                    }
                }
            }
            assert_eq!(cam_best, best, "class {c}");
        }
    }

    #[test]
    fn upsampling_preserves_constants() {
        let g = Grid::new(3, 2, 4.2);
        let up = bilinear_upsample(&g, 9, 5);
        assert!(up.as_slice().iter().all(|&v| (v - 4.2).abs() < 1e-12));
    }

    #[test]
    fn shape_errors_are_reported() {
        let f = FeatureVolume::new(vec![Grid::new(4, 4, 0.0)]).unwrap();
        let w = HeadWeights::new(vec![vec![1.0, 2.0]], vec![0.0]).unwrap();
        assert!(head_forward(&f, &w).is_err());
        let w13 = HeadWeights::new(vec![vec![1.0]; NUM_CLASSES], vec![0.0; NUM_CLASSES]).unwrap();
        assert!(compute_cam(&f, &w13, 2, 2).is_err()); // smaller than grid
        assert!(FeatureVolume::new(vec![Grid::new(1, 4, 0.0)]).is_err());
    }

    #[test]
    fn feature_volume_tensor_round_trip() {
        let mut rng = SeedStream::new(0xca7).stream("feature-tensor");
        let f = volume(&mut rng, 2, 3, 2);
        let t = f.to_tensor();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(FeatureVolume::from_tensor(&t).unwrap(), f);
    }
}
