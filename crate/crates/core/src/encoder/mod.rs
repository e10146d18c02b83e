//! Quantile encoder: corrupted image to point prediction plus lower and upper
//! conditional-quantile estimates per latent dimension.

mod loss;
mod mask;
mod network;
mod train;

pub use loss::{grad, loss_terms, pinball_loss, point_loss, recon_loss, total_loss, LossBreakdown};
pub use mask::DimMask;
pub use network::{Dense, EncoderOutput, EncoderParams, LEAKY_SLOPE};
pub use train::{
    initial_params, mean_point_error, train, train_from, EpochLoss, Optimizer, TrainConfig,
    TrainOutcome,
};
