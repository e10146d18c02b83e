//! Per-dimension uncertainty intervals over the latent factors of a generator.
//!
//! A quantile encoder maps a corrupted image to a point estimate of its
//! latent code plus lower and upper conditional-quantile estimates. The
//! intervals are then rescaled by a single factor chosen on held-out data so
//! that, with probability at least `1 - delta`, the expected fraction of
//! relevant latent factors falling outside their intervals is at most `alpha`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and
//! the command-line pipeline live in the companion `latent-rcps` crate.

#![no_std]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod eval;
pub mod rcps;
pub mod rng;
pub mod synth;
pub mod viz;

pub use encoder::{DimMask, EncoderOutput, EncoderParams, TrainConfig};
pub use error::{Error, Result};
pub use rcps::{BoundKind, CalibrationResult, IntervalSet, LambdaGrid, RiskSpec};
pub use synth::{
    CorruptionPolicy, CorruptionSpec, DatasetSplit, Generator, ImageGrid, LatentVector, Sample,
};
