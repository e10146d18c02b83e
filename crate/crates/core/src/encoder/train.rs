//! Joint minibatch training of the point and quantile heads.

use alloc::vec::Vec;
use rand::seq::SliceRandom;

use super::loss::{grad, loss_terms, LossBreakdown};
use super::mask::DimMask;
use super::network::EncoderParams;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::synth::{Generator, Sample};

/// Update rule applied to each minibatch gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `theta -= lr * g`
    Sgd,
    /// Bias-corrected first and second moment estimates.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::ADAM),
            other => invalid(alloc::format!("unknown optimizer `{other}`")),
        }
    }
}

struct OptimizerState {
    rule: Optimizer,
    lr: f64,
    step: i32,
    moments: Option<(EncoderParams, EncoderParams)>,
}

impl OptimizerState {
    fn new(rule: Optimizer, lr: f64, like: &EncoderParams) -> Self {
        let moments = match rule {
            Optimizer::Sgd => None,
            Optimizer::Adam { .. } => Some((like.zeros_like(), like.zeros_like())),
        };
        Self {
            rule,
            lr,
            step: 0,
            moments,
        }
    }

    fn apply(&mut self, params: &mut EncoderParams, g: &EncoderParams) {
        self.step += 1;
        match (self.rule, self.moments.as_mut()) {
            (Optimizer::Adam { beta1, beta2, eps }, Some((m, v))) => {
                let c1 = 1.0 - libm::pow(beta1, f64::from(self.step));
                let c2 = 1.0 - libm::pow(beta2, f64::from(self.step));
                let lr = self.lr;
                for (((p, g), m), v) in params
                    .slices_mut()
                    .into_iter()
                    .zip(g.slices())
                    .zip(m.slices_mut())
                    .zip(v.slices_mut())
                {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + eps);
                    }
                }
            }
            _ => params.add_scaled(-self.lr, g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Miscoverage level; heads target the `alpha/2` and `1 - alpha/2` quantiles.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Weight of the pixel-space reconstruction term.
    pub recon_weight: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::ADAM,
            recon_weight: 10.0,
            hidden: alloc::vec![256, 128],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(alloc::format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if !(self.recon_weight >= 0.0 && self.recon_weight.is_finite()) {
            return invalid("reconstruction weight must be nonnegative");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if self.hidden.contains(&0) {
            return invalid("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Batch-weighted mean of the loss terms seen during one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub terms: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub trace: Vec<EpochLoss>,
}

/// The initial parameters [`train`] starts from for this configuration.
pub fn initial_params(input_len: usize, dim: usize, cfg: &TrainConfig) -> Result<EncoderParams> {
    EncoderParams::init(
        input_len,
        &cfg.hidden,
        dim,
        &mut rng::substream(cfg.seed, "init", 0),
    )
}

/// Train from a fresh initialisation.
///
/// Each epoch visits the training samples in a freshly shuffled order and
/// takes one optimizer step per minibatch.
pub fn train(
    generator: &Generator,
    train: &[Sample],
    mask: &DimMask,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some(first) = train.first() else {
        return invalid("training split is empty");
    };
    let params = initial_params(first.x.len(), generator.dim, cfg)?;
    train_from(params, generator, train, mask, cfg)
}

/// Continue training `params`; see [`train`].
pub fn train_from(
    mut params: EncoderParams,
    generator: &Generator,
    train: &[Sample],
    mask: &DimMask,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return invalid("training split is empty");
    }
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate, &params);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::substream(cfg.seed, "shuffle", epoch as u64));
        let mut epoch_terms = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk.iter().map(|&i| &train[i]);
            let (g, terms) =
                grad(&params, generator, batch, mask, cfg).map_err(|e| diverged(epoch, e))?;
            let w = chunk.len() as f64 / train.len() as f64;
            epoch_terms.point += w * terms.point;
            epoch_terms.pinball_lo += w * terms.pinball_lo;
            epoch_terms.pinball_hi += w * terms.pinball_hi;
            epoch_terms.recon += w * terms.recon;
            optimizer.apply(&mut params, &g);
            if !params.is_finite() {
                return Err(diverged(
                    epoch,
                    Error::Numerical("non-finite parameters".into()),
                ));
            }
        }
        if !epoch_terms.is_finite() {
            return Err(diverged(
                epoch,
                Error::Numerical("non-finite epoch loss".into()),
            ));
        }
        trace.push(EpochLoss {
            epoch,
            terms: epoch_terms,
        });
    }
    Ok(TrainOutcome { params, trace })
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numerical(reason) => Error::TrainingFailure { epoch, reason },
        other => other,
    }
}

/// Mean L1 point error of `params` over `data`.
pub fn mean_point_error(
    params: &EncoderParams,
    generator: &Generator,
    data: &[Sample],
    mask: &DimMask,
) -> Result<f64> {
    let cfg = TrainConfig {
        recon_weight: 0.0,
        ..TrainConfig::default()
    };
    Ok(loss_terms(params, generator, data, mask, &cfg)?.point)
}
