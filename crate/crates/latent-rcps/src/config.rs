//! Run configuration, read from a TOML file.
//!
//! Missing keys take their defaults and unknown keys are rejected. A typical
//! file:
//!
//! ```toml
//! experiment = "disc"
//! seed = 0
//!
//! [data]
//! n = 50000
//! policy = "downsample:1,4,8,16,32"
//!
//! [train]
//! epochs = 50
//! hidden = [256, 128]
//! ```

use std::path::{Path, PathBuf};

use latent_rcps_core::encoder::Optimizer;
use latent_rcps_core::eval::{downsample_levels, mask_levels, DifficultyLevel};
use latent_rcps_core::synth::VISUAL_FACTORS;
use latent_rcps_core::{
    BoundKind, CorruptionPolicy, DimMask, Generator, LambdaGrid, RiskSpec, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest dataset the split accepts.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Names the run directory together with the seed.
    pub experiment: String,
    /// Master seed; every random draw of the pipeline derives from it.
    pub seed: u64,
    pub generator: GeneratorSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub risk: RiskSection,
    pub grid: GridSection,
    pub coverage: CoverageSection,
    pub adaptivity: AdaptivitySection,
    pub visualize: VisualizeSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub dim: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Total samples, split 80/10/10.
    pub n: usize,
    /// `none`, `downsample:<factors>` or `mask:<thresholds>`.
    pub policy: String,
    /// Leading latent dimensions that count towards the risk.
    pub relevant_dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub recon_weight: f64,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSection {
    /// Target risk; also sets the quantile levels the encoder is trained for.
    pub alpha: f64,
    pub delta: f64,
    /// `hoeffding-bentkus` or `hoeffding`.
    pub bound: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageSection {
    pub trials: usize,
    /// Fresh samples drawn under the data policy and split 50-50 per trial.
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptivitySection {
    pub per_level: usize,
    /// `downsample`, `mask` or `auto` (follow the data policy).
    pub levels: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualizeSection {
    /// Index into the validation split.
    pub sample: usize,
    /// Dimensions to draw panels for; all relevant dimensions when absent.
    pub dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "disc".into(),
            seed: 0,
            generator: GeneratorSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            risk: RiskSection::default(),
            grid: GridSection::default(),
            coverage: CoverageSection::default(),
            adaptivity: AdaptivitySection::default(),
            visualize: VisualizeSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = Generator::default();
        Self {
            dim: g.dim,
            height: g.height,
            width: g.width,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n: 50_000,
            policy: CorruptionPolicy::default().to_text(),
            relevant_dims: VISUAL_FACTORS,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer.name().into(),
            recon_weight: t.recon_weight,
            hidden: t.hidden,
        }
    }
}

impl Default for RiskSection {
    fn default() -> Self {
        let r = RiskSpec::default();
        Self {
            alpha: r.alpha,
            delta: r.delta,
            bound: BoundKind::default().name().into(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        let g = LambdaGrid::default();
        Self {
            max: g.max(),
            count: g.len(),
        }
    }
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            trials: 100,
            pool: 10_000,
        }
    }
}

impl Default for AdaptivitySection {
    fn default() -> Self {
        Self {
            per_level: 500,
            levels: "auto".into(),
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
        }
    }
}

fn config_err(e: latent_rcps_core::Error) -> Error {
    match e {
        latent_rcps_core::Error::InvalidArgument(msg) => Error::Config(msg),
        other => Error::Core(other),
    }
}

impl RunConfig {
    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text)?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Check every field and every cross-field constraint.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_empty()
            || !self
                .experiment
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::Config(format!(
                "experiment id `{}` must be nonempty and use only letters, digits, `-` and `_`",
                self.experiment
            )));
        }
        let generator = self.generator()?;
        let policy = self.policy()?;
        policy
            .validate(generator.height, generator.width)
            .map_err(config_err)?;
        if self.data.n < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "data.n = {} is below the minimum of {MIN_SAMPLES}",
                self.data.n
            )));
        }
        self.mask()?;
        self.train_config()?.validate().map_err(config_err)?;
        self.risk_spec()?;
        self.grid()?;
        self.bound()?;
        if self.coverage.trials == 0 {
            return Err(Error::Config("coverage.trials must be positive".into()));
        }
        if self.coverage.pool < latent_rcps_core::eval::MIN_TRIAL_POOL {
            return Err(Error::Config(format!(
                "coverage.pool must be at least {}",
                latent_rcps_core::eval::MIN_TRIAL_POOL
            )));
        }
        if self.adaptivity.per_level == 0 {
            return Err(Error::Config(
                "adaptivity.per_level must be positive".into(),
            ));
        }
        for level in self.difficulty_levels()? {
            let lp = level.policy();
            lp.validate(generator.height, generator.width)
                .map_err(config_err)?;
            if lp.input_channels() != policy.input_channels() {
                return Err(Error::Config(format!(
                    "adaptivity level `{}` does not match the input channels of policy `{}`",
                    level.label, self.data.policy
                )));
            }
        }
        let mask = self.mask()?;
        for &d in self.visualize_dims()?.iter() {
            if !mask.is_set(d) {
                return Err(Error::Config(format!(
                    "visualize dimension {d} is not a relevant dimension"
                )));
            }
        }
        let (_, _, n_val) = latent_rcps_core::synth::SplitRatio::default()
            .sizes(self.data.n)
            .map_err(config_err)?;
        if self.visualize.sample >= n_val {
            return Err(Error::Config(format!(
                "visualize.sample = {} but the validation split holds {n_val} samples",
                self.visualize.sample
            )));
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Generator> {
        Generator::new(
            self.generator.dim,
            self.generator.height,
            self.generator.width,
        )
        .map_err(config_err)
    }

    pub fn policy(&self) -> Result<CorruptionPolicy> {
        CorruptionPolicy::parse(&self.data.policy).map_err(config_err)
    }

    pub fn mask(&self) -> Result<DimMask> {
        DimMask::leading(self.generator.dim, self.data.relevant_dims).map_err(config_err)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            alpha: self.risk.alpha,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: Optimizer::parse(&self.train.optimizer).map_err(config_err)?,
            recon_weight: self.train.recon_weight,
            hidden: self.train.hidden.clone(),
            seed: self.seed,
        })
    }

    pub fn risk_spec(&self) -> Result<RiskSpec> {
        RiskSpec::new(self.risk.alpha, self.risk.delta).map_err(config_err)
    }

    pub fn grid(&self) -> Result<LambdaGrid> {
        LambdaGrid::uniform(self.grid.max, self.grid.count).map_err(config_err)
    }

    pub fn bound(&self) -> Result<BoundKind> {
        BoundKind::parse(&self.risk.bound).map_err(config_err)
    }

    pub fn difficulty_levels(&self) -> Result<Vec<DifficultyLevel>> {
        match self.adaptivity.levels.as_str() {
            "downsample" => Ok(downsample_levels()),
            "mask" => Ok(mask_levels()),
            "auto" => match self.policy()? {
                CorruptionPolicy::Mask(_) => Ok(mask_levels()),
                _ => Ok(downsample_levels()),
            },
            other => Err(Error::Config(format!(
                "unknown adaptivity levels `{other}`"
            ))),
        }
    }

    pub fn visualize_dims(&self) -> Result<Vec<usize>> {
        Ok(match &self.visualize.dims {
            Some(dims) => dims.clone(),
            None => self.mask()?.indices().collect(),
        })
    }

    /// `<output.dir>/<experiment>-seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output
            .dir
            .join(format!("{}-seed{}", self.experiment, self.seed))
    }
}
