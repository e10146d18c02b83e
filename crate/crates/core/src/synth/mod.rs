//! The known-ground-truth world: generator, corruptions and dataset sampling.

mod corrupt;
mod dataset;
mod latent;
mod render;

pub use corrupt::{
    corrupt_downsample, corrupt_mask, CorruptionPolicy, CorruptionSpec, MaskedImage,
    DOWNSAMPLE_FACTORS, MASK_THRESHOLDS,
};
pub use dataset::{
    generate_sample, generate_samples, make_dataset, make_dataset_with_ratio, sample_latent,
    DatasetSplit, Sample, SplitRatio,
};
pub use latent::{ImageGrid, LatentVector};
pub use render::{factor_name, Generator, FACTOR_NAMES, VISUAL_FACTORS};
