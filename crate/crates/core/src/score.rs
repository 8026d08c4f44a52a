//! Per-pixel per-class score volumes (logits or probabilities).
//!
//! A `ScoreVolume` is an H×W×13 array stored channel-minor: the 13 scores of
//! a pixel are contiguous. The `kind` flag records whether values are free
//! logits or a normalized distribution; the probability invariant (channels
//! nonnegative, summing to 1 within 1e-6) is enforced at construction.

use thiserror::Error;

use crate::class::{ClassId, NUM_CLASSES};
use crate::tensor::{Tensor, TensorData};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("data length {got} does not match {w}x{h}x{c}")]
    LengthMismatch {
        got: usize,
        w: usize,
        h: usize,
        c: usize,
    },
    #[error("non-finite score at ({x},{y}) channel {ch}")]
    NonFinite { x: usize, y: usize, ch: usize },
    #[error("pixel ({x},{y}) is not a probability vector (negative entry or sum {sum} outside 1 +/- 1e-6)")]
    NotAProbability { x: usize, y: usize, sum: f64 },
    #[error("width and height must be >= 1")]
    EmptyShape,
    #[error("bad score tensor: {0}")]
    BadTensor(String),
}

/// Whether scores are unconstrained logits or per-pixel distributions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

/// H×W×13 real scores, channel-minor row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct ScoreVolume {
    width: usize,
    height: usize,
    kind: ScoreKind,
    data: Vec<f64>,
}

impl ScoreVolume {
    pub fn new(
        width: usize,
        height: usize,
        kind: ScoreKind,
        data: Vec<f64>,
    ) -> Result<ScoreVolume, ScoreError> {
        if width == 0 || height == 0 {
            return Err(ScoreError::EmptyShape);
        }
        let want = width * height * NUM_CLASSES;
        if data.len() != want {
            return Err(ScoreError::LengthMismatch {
                got: data.len(),
                w: width,
                h: height,
                c: NUM_CLASSES,
            });
        }
        let vol = ScoreVolume {
            width,
            height,
            kind,
            data,
        };
        for y in 0..height {
            for x in 0..width {
                let px = vol.pixel(x, y);
                let mut sum = 0.0;
                for (ch, &v) in px.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ScoreError::NonFinite { x, y, ch });
                    }
                    sum += v;
                }
                if kind == ScoreKind::Probabilities
                    && (px.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-6)
                {
                    return Err(ScoreError::NotAProbability { x, y, sum });
                }
            }
        }
        Ok(vol)
    }

    /// All-zero logits volume.
    pub fn zeros(width: usize, height: usize) -> ScoreVolume {
        ScoreVolume::new(
            width,
            height,
            ScoreKind::Logits,
            vec![0.0; width * height * NUM_CLASSES],
        )
        .expect("zero logits are always valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// The 13 scores of one pixel.
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let base = (y * self.width + x) * NUM_CLASSES;
        &self.data[base..base + NUM_CLASSES]
    }

    pub fn get(&self, x: usize, y: usize, class: ClassId) -> f64 {
        self.pixel(x, y)[class.index()]
    }

    pub fn set(&mut self, x: usize, y: usize, class: ClassId, value: f64) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let base = (y * self.width + x) * NUM_CLASSES;
        self.data[base + class.index()] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-pixel argmax with deterministic ties: the lowest class id wins.
    pub fn argmax(&self, x: usize, y: usize) -> ClassId {
        let px = self.pixel(x, y);
        let mut best = 0usize;
        for (i, &v) in px.iter().enumerate().skip(1) {
            if v > px[best] {
                best = i;
            }
        }
        ClassId::new(best as u8).expect("index in range")
    }

    /// Per-pixel softmax, computed stably (max-shifted).
    pub fn softmax(&self) -> ScoreVolume {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(NUM_CLASSES) {
            let m = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = px.iter().map(|&v| (v - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|&e| e / z));
        }
        ScoreVolume::new(self.width, self.height, ScoreKind::Probabilities, data)
            .expect("softmax output is a distribution")
    }

    /// Encode as a rank-3 `[13, h, w]` f32 tensor (one plane per class).
    ///
    /// f32 is the interchange precision for score files; in-memory math
    /// stays f64.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mut planes = vec![0f32; NUM_CLASSES * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..NUM_CLASSES {
                    planes[c * h * w + y * w + x] =
                        self.data[(y * w + x) * NUM_CLASSES + c] as f32;
                }
            }
        }
        Tensor::new(vec![NUM_CLASSES, h, w], TensorData::F32(planes))
            .expect("consistent shape")
    }

    /// Decode from a rank-3 `[13, h, w]` f32 or f64 tensor. The stated
    /// `kind`'s invariants are re-checked (probability volumes survive the
    /// f32 round trip: the sum tolerance is far wider than f32 noise).
    pub fn from_tensor(t: &Tensor, kind: ScoreKind) -> Result<ScoreVolume, ScoreError> {
        let shape = t.shape();
        if shape.len() != 3 || shape[0] != NUM_CLASSES {
            return Err(ScoreError::BadTensor(format!(
                "expected shape [{NUM_CLASSES}, h, w], got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        let planes: Vec<f64> = match t.data() {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
            _ => {
                return Err(ScoreError::BadTensor(
                    "score tensors must be f32 or f64".into(),
                ))
            }
        };
        let mut data = vec![0.0; planes.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..NUM_CLASSES {
                    data[(y * w + x) * NUM_CLASSES + c] = planes[c * h * w + y * w + x];
                }
            }
        }
        ScoreVolume::new(w, h, kind, data)
    }
}
