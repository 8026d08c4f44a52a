//! Depth-domain adaptation: normalization, adversarial + cycle losses, a
//! desk-scale min-max trainer for tiny window mappings, gradient checking,
//! and a parametric sensor-noise simulator.
//!
//! The adversarial setup is symmetric: a "noise" mapping pushes clean
//! synthetic depth toward sensor-like depth, a "restore" mapping pulls
//! sensor-like depth back, and one discriminator per direction tries to tell
//! mapped samples from genuine ones. Everything here runs on small images
//! with hand-rolled reverse-mode differentiation — no external ML stack.

mod gradcheck;
mod loss;
mod mapping;
mod noise;
mod normalize;
pub mod tape;
mod train;

pub use gradcheck::{grad_check, objective_evaluator};
pub use loss::{cycle_loss, gan_loss, total_objective};
pub use mapping::{apply_mapping, MappingParams, MappingRole, WINDOW};
pub use noise::{simulate_sensor_noise, NoiseParams};
pub use normalize::{minmax_normalize, NormalizedDepthMap};
pub use train::{
    discriminator_accuracy, train_minmax, DiscriminatorParams, TraceRecord, TrainConfig,
    TrainOutcome, TRACE_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("cannot normalize: no valid pixels")]
    EmptyInput,
    #[error("cannot normalize: all valid pixels equal {0}")]
    DegenerateRange(f64),
    #[error("score batch is empty")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    StepOutOfRange(f64),
    #[error("parameter vector length {got} does not fit the window-perceptron layout (3 + 11*hidden)")]
    ParamCount { got: usize },
    #[error("training diverged at step {step}: {term} became non-finite")]
    DivergenceDetected { step: usize, term: &'static str },
}
