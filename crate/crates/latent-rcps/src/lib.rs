//! File formats, reports and the command-line pipeline around
//! [`latent_rcps_core`].

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod fsutil;
pub mod pgm;
pub mod pipeline;
pub mod reports;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use latent_rcps_core as core;
