//! Building blocks for generating pseudo ground truth for indoor scene
//! parsing from cheap cues instead of dense annotation.
//!
//! The crate covers four areas:
//!
//! - **Depth adaptation math** ([`adapt`]): per-image min-max depth
//!   normalization, adversarial noise/restore losses with a cycle-consistency
//!   term, a toy min-max trainer over small residual window mappings, a
//!   finite-difference gradient checker, and a parametric depth-sensor noise
//!   simulator.
//! - **Weak localization** ([`weak_local`]): the classifier-head forward pass
//!   (2x2 max pool, global average pool, linear head) and class activation
//!   map extraction with bilinear upsampling.
//! - **Cue fusion over contours** ([`contours`], [`fusion`]): thresholding a
//!   contour strength map into segments, per-segment label histograms,
//!   confidence filtering, majority voting, and the two-step integration that
//!   lets confident, small-area activation responses override segment votes.
//! - **Evaluation** ([`eval`], [`losses`]): confusion matrices, IoU / mIoU /
//!   global accuracy, cover ratios and their "effective" variants, metrics
//!   restricted to labeled pixels, contour-wise refinement, and the
//!   class-balanced / masked negative log likelihood losses.
//!
//! Shared plumbing lives in the small leaf modules: the fixed 13-class
//! taxonomy ([`class`]), dense grids ([`grid`]), deterministic seed streams
//! ([`rng`]), a bit-exact binary tensor codec ([`tensor`]), and PNG
//! interchange for label and depth maps ([`io`]).

pub mod adapt;
pub mod class;
pub mod contours;
pub mod depth;
pub mod eval;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod label;
pub mod losses;
pub mod rng;
pub mod score;
pub mod tensor;
pub mod weak_local;

pub use class::{ClassId, NUM_CLASSES, UNKNOWN_CODE};
pub use depth::DepthMap;
pub use grid::Grid;
pub use label::LabelMap;
pub use score::{ScoreKind, ScoreVolume};
