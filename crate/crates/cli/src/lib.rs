//! Library surface of the `labelfuse` binary: run configuration, the
//! synthetic-scene generator, and the stage orchestration. The binary is a
//! thin argument-parsing shell over these modules, and the integration
//! tests drive them directly.

pub mod config;
pub mod fixture;
pub mod pipeline;
