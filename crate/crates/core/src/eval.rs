//! Experimental protocols: coverage trials, risk before and after
//! calibration, and set size across corruption difficulty.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::encoder::{DimMask, EncoderOutput, EncoderParams};
use crate::error::{invalid, Result};
use crate::rcps::{
    calibrate_predictions, interval_at, mean_coverage_loss, predict, BoundKind, LambdaGrid,
    Prediction, RiskSpec,
};
use crate::rng;
use crate::synth::{generate_sample, CorruptionPolicy, CorruptionSpec, Generator, Sample};

/// Scale at which "before calibration" risk is measured: the raw quantiles.
pub const UNCALIBRATED_LAMBDA: f64 = 1.0;

/// Mean coverage loss of the encoder's intervals at `lambda` over `data`.
pub fn empirical_risk(
    params: &EncoderParams,
    lambda: f64,
    data: &[Sample],
    mask: &DimMask,
) -> Result<f64> {
    if data.is_empty() {
        return invalid("evaluation data is empty");
    }
    mean_coverage_loss(&predict(params, data)?, lambda, mask)
}

/// One calibrate-then-evaluate split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub lambda_hat: Option<f64>,
    /// Eval-half risk at the raw quantiles.
    pub pre_risk: f64,
    /// Eval-half risk at `lambda_hat`, or at the largest grid point when
    /// calibration was infeasible.
    pub post_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTrialReport {
    pub rows: Vec<TrialRow>,
    pub spec: RiskSpec,
    pub bound_kind: BoundKind,
    pub n_calibration: usize,
    pub n_eval: usize,
}

impl CoverageTrialReport {
    pub fn n_trials(&self) -> usize {
        self.rows.len()
    }

    /// Trials whose post-calibration risk exceeds alpha, counting
    /// infeasible calibrations as violations.
    pub fn violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.lambda_hat.is_none() || r.post_risk > self.spec.alpha)
            .count()
    }

    pub fn mean_pre_risk(&self) -> f64 {
        self.rows.iter().map(|r| r.pre_risk).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_post_risk(&self) -> f64 {
        self.rows.iter().map(|r| r.post_risk).sum::<f64>() / self.rows.len() as f64
    }
}

/// Smallest pool accepted by [`coverage_trials`].
pub const MIN_TRIAL_POOL: usize = 100;

/// Repeated random 50-50 splits of `pool`: calibrate on one half, evaluate
/// before and after calibration on the other (the same) half.
#[allow(clippy::too_many_arguments)]
pub fn coverage_trials(
    params: &EncoderParams,
    pool: &[Sample],
    mask: &DimMask,
    spec: &RiskSpec,
    bound: BoundKind,
    grid: &LambdaGrid,
    n_trials: usize,
    seed: u64,
) -> Result<CoverageTrialReport> {
    if pool.len() < MIN_TRIAL_POOL {
        return invalid(alloc::format!(
            "coverage trials need at least {MIN_TRIAL_POOL} samples, got {}",
            pool.len()
        ));
    }
    coverage_trials_from(
        &predict(params, pool)?,
        mask,
        spec,
        bound,
        grid,
        n_trials,
        seed,
    )
}

/// [`coverage_trials`] on precomputed predictions.
pub fn coverage_trials_from(
    pool: &[Prediction],
    mask: &DimMask,
    spec: &RiskSpec,
    bound: BoundKind,
    grid: &LambdaGrid,
    n_trials: usize,
    seed: u64,
) -> Result<CoverageTrialReport> {
    spec.validate()?;
    if pool.len() < MIN_TRIAL_POOL {
        return invalid(alloc::format!(
            "coverage trials need at least {MIN_TRIAL_POOL} samples, got {}",
            pool.len()
        ));
    }
    let n_cal = pool.len() / 2;
    let mut rows = Vec::with_capacity(n_trials);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for trial in 0..n_trials {
        order.sort_unstable();
        order.shuffle(&mut rng::substream(seed, "coverage-trial", trial as u64));
        let cal: Vec<Prediction> = order[..n_cal].iter().map(|&i| pool[i].clone()).collect();
        let eval: Vec<Prediction> = order[n_cal..].iter().map(|&i| pool[i].clone()).collect();
        let result = calibrate_predictions(&cal, mask, grid, spec, bound)?;
        let pre_risk = mean_coverage_loss(&eval, UNCALIBRATED_LAMBDA, mask)?;
        let post_risk = mean_coverage_loss(&eval, result.lambda_hat.unwrap_or(grid.max()), mask)?;
        rows.push(TrialRow {
            trial,
            lambda_hat: result.lambda_hat,
            pre_risk,
            post_risk,
        });
    }
    Ok(CoverageTrialReport {
        rows,
        spec: *spec,
        bound_kind: bound,
        n_calibration: n_cal,
        n_eval: pool.len() - n_cal,
    })
}

/// Mean calibrated interval width over the relevant dimensions.
pub fn set_size(out: &EncoderOutput, lambda_hat: f64, mask: &DimMask) -> Result<f64> {
    if mask.dim() != out.dim() {
        return invalid("mask and encoder output dimensions disagree");
    }
    let set = interval_at(out, lambda_hat)?;
    Ok(mask.indices().map(|d| set.width(d)).sum::<f64>() / mask.count() as f64)
}

/// A named corruption level.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyLevel {
    pub label: String,
    pub corruption: CorruptionSpec,
}

impl DifficultyLevel {
    pub fn new(label: &str, corruption: CorruptionSpec) -> Self {
        Self {
            label: String::from(label),
            corruption,
        }
    }

    /// Single-level policy that always applies this corruption.
    pub fn policy(&self) -> CorruptionPolicy {
        match self.corruption {
            CorruptionSpec::None => CorruptionPolicy::None,
            CorruptionSpec::Downsample(f) => CorruptionPolicy::Downsample(alloc::vec![f]),
            CorruptionSpec::Mask(t) => CorruptionPolicy::Mask(alloc::vec![t]),
        }
    }
}

/// Easy / medium / hard super-resolution levels: 1x, 8x and 32x downsampling.
pub fn downsample_levels() -> Vec<DifficultyLevel> {
    [("easy", 1), ("medium", 8), ("hard", 32)]
        .into_iter()
        .map(|(l, f)| DifficultyLevel::new(l, CorruptionSpec::Downsample(f)))
        .collect()
}

/// Easy / medium / hard inpainting levels: mask thresholds 0.3, 0.6 and 0.9.
pub fn mask_levels() -> Vec<DifficultyLevel> {
    [("easy", 0.3), ("medium", 0.6), ("hard", 0.9)]
        .into_iter()
        .map(|(l, t)| DifficultyLevel::new(l, CorruptionSpec::Mask(t)))
        .collect()
}

/// Set-size distribution at one difficulty level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSizes {
    pub level: DifficultyLevel,
    /// Per-sample set sizes in sample order.
    pub sizes: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivityReport {
    pub lambda_hat: f64,
    pub levels: Vec<LevelSizes>,
}

impl AdaptivityReport {
    /// Whether mean set size strictly increases from level to level.
    pub fn strictly_increasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[0].mean < w[1].mean)
    }
}

/// Nearest-rank empirical quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let rank = libm::ceil(q * sorted.len() as f64).max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Render `n_per_level` fresh samples at every level and record the
/// calibrated set size of each.
///
/// Sample `i` uses the same latent at every level, so the levels differ only
/// in their corruption.
pub fn adaptivity_study(
    params: &EncoderParams,
    generator: &Generator,
    lambda_hat: f64,
    levels: &[DifficultyLevel],
    n_per_level: usize,
    mask: &DimMask,
    seed: u64,
) -> Result<AdaptivityReport> {
    if levels.len() < 2 {
        return invalid("adaptivity study needs at least two difficulty levels");
    }
    if n_per_level == 0 {
        return invalid("adaptivity study needs samples at each level");
    }
    let mut out = Vec::with_capacity(levels.len());
    for level in levels {
        let policy = level.policy();
        policy.validate(generator.height, generator.width)?;
        let mut sizes = Vec::with_capacity(n_per_level);
        for i in 0..n_per_level as u64 {
            let s = generate_sample(generator, &policy, seed, "adaptivity", i)?;
            sizes.push(set_size(&params.forward(&s.x)?, lambda_hat, mask)?);
        }
        let mut sorted = sizes.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        out.push(LevelSizes {
            level: level.clone(),
            median: sorted_quantile(&sorted, 0.5),
            q10: sorted_quantile(&sorted, 0.1),
            q90: sorted_quantile(&sorted, 0.9),
            mean,
            sizes,
        });
    }
    Ok(AdaptivityReport {
        lambda_hat,
        levels: out,
    })
}
