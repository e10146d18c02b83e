//! Seeded sampling of `(X, Z)` pairs and train / calibration / validation splits.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use super::corrupt::{CorruptionPolicy, CorruptionSpec};
use super::latent::{ImageGrid, LatentVector};
use super::render::Generator;
use crate::error::{invalid, Result};
use crate::rng;

/// One observation: corrupted input, ground-truth latent and the corruption used.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: ImageGrid,
    pub z: LatentVector,
    pub corruption: CorruptionSpec,
}

/// `dim` independent standard-normal draws.
pub fn sample_latent<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> LatentVector {
    LatentVector(
        (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// Fraction of samples assigned to training and calibration; the remainder
/// goes to validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatio {
    pub train: f64,
    pub calibration: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 0.8,
            calibration: 0.1,
        }
    }
}

impl SplitRatio {
    /// `(train, calibration, validation)` counts for `n` samples.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let ok = |f: f64| (0.0..=1.0).contains(&f);
        if !ok(self.train) || !ok(self.calibration) || self.train + self.calibration > 1.0 {
            return invalid("split fractions must be in [0, 1] and sum to at most 1");
        }
        let train = (self.train * n as f64) as usize;
        let calibration = (self.calibration * n as f64) as usize;
        Ok((train, calibration, n - train - calibration))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub calibration: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.calibration.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw the sample with global index `index` from its own substream of `seed`.
///
/// The latent is rounded to `f32` precision so a sample survives a trip
/// through the on-disk format unchanged.
pub fn generate_sample(
    generator: &Generator,
    policy: &CorruptionPolicy,
    seed: u64,
    label: &str,
    index: u64,
) -> Result<Sample> {
    let mut rng = rng::substream(seed, label, index);
    let mut z = sample_latent(generator.dim, &mut rng);
    for v in z.iter_mut() {
        *v = f64::from(*v as f32);
    }
    let corruption = policy.draw(&mut rng);
    let y = generator.render(&z)?;
    let x = corruption.apply(&y, &mut rng)?;
    Ok(Sample { x, z, corruption })
}

/// `count` samples with indices `0..count` under `label`.
pub fn generate_samples(
    generator: &Generator,
    policy: &CorruptionPolicy,
    seed: u64,
    label: &str,
    count: usize,
) -> Result<Vec<Sample>> {
    policy.validate(generator.height, generator.width)?;
    (0..count as u64)
        .map(|i| generate_sample(generator, policy, seed, label, i))
        .collect()
}

/// `n` fresh samples split 80/10/10.
pub fn make_dataset(
    generator: &Generator,
    n: usize,
    policy: &CorruptionPolicy,
    seed: u64,
) -> Result<DatasetSplit> {
    make_dataset_with_ratio(generator, n, policy, SplitRatio::default(), seed)
}

pub fn make_dataset_with_ratio(
    generator: &Generator,
    n: usize,
    policy: &CorruptionPolicy,
    ratio: SplitRatio,
    seed: u64,
) -> Result<DatasetSplit> {
    if n < 10 {
        return invalid(alloc::format!("dataset needs at least 10 samples, got {n}"));
    }
    let (n_train, n_calib, _) = ratio.sizes(n)?;
    let mut samples = generate_samples(generator, policy, seed, "sample", n)?;
    let validation = samples.split_off(n_train + n_calib);
    let calibration = samples.split_off(n_train);
    Ok(DatasetSplit {
        train: samples,
        calibration,
        validation,
    })
}
