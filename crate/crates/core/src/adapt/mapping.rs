//! The tiny mapping networks translated between depth domains.
//!
//! Each mapping is a per-pixel function of the 3×3 window around the pixel
//! (replicate padding at borders): an affine path through the window center
//! plus a one-hidden-layer perceptron over the window, clamped to [-1, 1].
//!
//! ```text
//! out(x,y) = clamp( a·center + b + Σ_j w2[j]·tanh(W1[j]·win + b1[j]) + b2 )
//! ```
//!
//! With `a = 1` and the output layer zeroed the mapping is exactly the
//! identity, which is how training starts. The same forward pass exists in
//! a plain form (for inference) and a tape form (for differentiation); the
//! two must agree to machine precision.

use crate::adapt::tape::{Tape, Var};
use crate::adapt::{AdaptError, NormalizedDepthMap};
use crate::grid::Grid;
use crate::rng::SeedStream;
use crate::tensor::{Tensor, TensorData, TensorError};

/// Window size: 3×3 neighborhood, row-major, center at index 4.
pub const WINDOW: usize = 9;

/// Which direction a mapping translates.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MappingRole {
    /// Clean synthetic depth → sensor-like depth.
    Noise,
    /// Sensor-like depth → clean depth.
    Restore,
}

/// Flat parameter vector of one mapping, with its direction tag.
///
/// Layout: `[a, b, W1 (hidden×9 row-major), b1 (hidden), w2 (hidden), b2]`,
/// `3 + 11·hidden` values total.
#[derive(Clone, PartialEq, Debug)]
pub struct MappingParams {
    role: MappingRole,
    hidden: usize,
    theta: Vec<f64>,
}

pub(crate) fn param_count(hidden: usize) -> usize {
    3 + 11 * hidden
}

impl MappingParams {
    /// Identity-initialized mapping: affine path is the identity, output
    /// layer is zeroed, hidden layer gets small seeded gaussians so training
    /// can break symmetry.
    pub fn identity(role: MappingRole, hidden: usize, rng: &mut SeedStream) -> MappingParams {
        let mut theta = vec![0.0; param_count(hidden)];
        theta[0] = 1.0;
        for j in 0..hidden {
            for k in 0..WINDOW {
                theta[2 + j * WINDOW + k] = 0.2 * rng.gaussian();
            }
            theta[2 + WINDOW * hidden + j] = 0.2 * rng.gaussian();
        }
        MappingParams {
            role,
            hidden,
            theta,
        }
    }

    /// Wrap an existing parameter vector; the length must fit the layout.
    pub fn from_theta(role: MappingRole, theta: Vec<f64>) -> Result<MappingParams, AdaptError> {
        if theta.len() < 3 || (theta.len() - 3) % 11 != 0 {
            return Err(AdaptError::ParamCount { got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(AdaptError::NonFinite("mapping parameters"));
        }
        let hidden = (theta.len() - 3) / 11;
        Ok(MappingParams {
            role,
            hidden,
            theta,
        })
    }

    pub fn role(&self) -> MappingRole {
        self.role
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.theta.len()], TensorData::F64(self.theta.clone()))
            .expect("parameter vector matches its own length")
    }

    pub fn from_tensor(role: MappingRole, t: &Tensor) -> Result<MappingParams, AdaptError> {
        let data = t.as_f64().ok_or(AdaptError::NonFinite(
            "mapping tensor must hold f64 parameters",
        ))?;
        MappingParams::from_theta(role, data.to_vec())
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), TensorError> {
        self.to_tensor().write_file(path)
    }

    /// Plain forward pass over a value grid (no differentiation).
    pub fn forward(&self, input: &Grid<f64>) -> Grid<f64> {
        let (w, h) = (input.width(), input.height());
        let mut out = Grid::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let win = gather_window(input, x, y);
                out.set(x, y, self.forward_pixel(&win));
            }
        }
        out
    }

    fn forward_pixel(&self, win: &[f64; WINDOW]) -> f64 {
        let t = &self.theta;
        let mut acc = t[0] * win[4] + t[1] + t[2 + 11 * self.hidden];
        for j in 0..self.hidden {
            let mut pre = t[2 + WINDOW * self.hidden + j];
            for k in 0..WINDOW {
                pre += t[2 + j * WINDOW + k] * win[k];
            }
            acc += t[2 + 10 * self.hidden + j] * pre.tanh();
        }
        acc.clamp(-1.0, 1.0)
    }

    /// Tape forward pass: identical math over tape variables. `theta` must
    /// hold one [`Var`] per parameter (same layout as [`MappingParams`]) and
    /// `input` one per pixel, row-major.
    pub fn forward_tape(
        tape: &mut Tape,
        theta: &[Var],
        hidden: usize,
        input: &[Var],
        width: usize,
        height: usize,
    ) -> Vec<Var> {
        assert_eq!(theta.len(), param_count(hidden), "theta length vs hidden");
        assert_eq!(input.len(), width * height, "input length vs shape");
        let mut out = Vec::with_capacity(input.len());
        for y in 0..height {
            for x in 0..width {
                let win = window_vars(input, width, height, x, y);
                let center = tape.mul(theta[0], win[4]);
                let mut acc = tape.add(center, theta[1]);
                acc = tape.add(acc, theta[2 + 11 * hidden]);
                for j in 0..hidden {
                    let mut pre = theta[2 + WINDOW * hidden + j];
                    for k in 0..WINDOW {
                        let term = tape.mul(theta[2 + j * WINDOW + k], win[k]);
                        pre = tape.add(pre, term);
                    }
                    let act = tape.tanh(pre);
                    let contrib = tape.mul(theta[2 + 10 * hidden + j], act);
                    acc = tape.add(acc, contrib);
                }
                out.push(tape.clamp(acc, -1.0, 1.0));
            }
        }
        out
    }
}

fn gather_window(input: &Grid<f64>, x: usize, y: usize) -> [f64; WINDOW] {
    let mut win = [0.0; WINDOW];
    let mut i = 0;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let sx = (x as i64 + dx).clamp(0, input.width() as i64 - 1) as usize;
            let sy = (y as i64 + dy).clamp(0, input.height() as i64 - 1) as usize;
            win[i] = *input.get(sx, sy);
            i += 1;
        }
    }
    win
}

fn window_vars(input: &[Var], width: usize, height: usize, x: usize, y: usize) -> [Var; WINDOW] {
    let mut win = [input[0]; WINDOW];
    let mut i = 0;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let sx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
            let sy = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
            win[i] = input[sy * width + sx];
            i += 1;
        }
    }
    win
}

/// Run a mapping over a normalized map. The validity mask is carried through
/// unchanged; invalid pixels contribute their stored filler (0) to windows
/// that overlap them and receive a mapped value that stays hidden behind the
/// mask.
pub fn apply_mapping(params: &MappingParams, x: &NormalizedDepthMap) -> NormalizedDepthMap {
    let values = params.forward(x.values());
    NormalizedDepthMap::new(values, x.mask().clone())
        .expect("clamped forward output is always finite")
}
