//! Resolution-adaptation video coding workflow with rate-quality evaluation.
//!
//! The pieces follow a decode chain: raw planar I/O ([`frame_io`]), Lanczos
//! downscaling and nearest-neighbour upscaling ([`resample`]), a CNN
//! post-processing inference engine ([`cnn`]), objective quality
//! ([`metrics`]), Bjøntegaard-delta statistics ([`bd`]) and the experiment
//! runner that ties them together ([`pipeline`]).

pub mod bd;
pub mod cnn;
pub mod error;
pub mod frame_io;
pub mod metrics;
pub mod pipeline;
pub mod resample;

pub use error::{Error, Result};
pub use frame_io::{frame_size_bytes, ChromaFormat, Frame, Plane, VideoSpec};
pub use resample::{ResampleFilter, Resampler, ScaleFactor};
