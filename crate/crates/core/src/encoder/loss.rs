//! Training objectives and their gradient.

use alloc::vec::Vec;

use super::mask::DimMask;
use super::network::{self, axpy, leaky_slope, EncoderParams};
use super::train::TrainConfig;
use crate::error::{invalid, Error, Result};
use crate::synth::{Generator, ImageGrid, LatentVector, Sample};

/// Quantile (pinball) loss of estimate `q` for target `z` at level `beta`.
///
/// A tie `z == q` falls on the `(1 - beta)` branch.
pub fn pinball_loss(q: f64, z: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(alloc::format!("quantile level {beta} outside (0, 1)"));
    }
    Ok(pinball(q, z, beta))
}

#[inline]
fn pinball(q: f64, z: f64, beta: f64) -> f64 {
    if z > q {
        (z - q) * beta
    } else {
        (q - z) * (1.0 - beta)
    }
}

/// d pinball / d q
#[inline]
fn pinball_slope(q: f64, z: f64, beta: f64) -> f64 {
    if z > q {
        -beta
    } else {
        1.0 - beta
    }
}

/// L1 distance between a point prediction and the true latent.
pub fn point_loss(pred: &LatentVector, z: &LatentVector) -> Result<f64> {
    if pred.dim() != z.dim() {
        return invalid("point loss on vectors of different length");
    }
    Ok(pred.iter().zip(z.iter()).map(|(p, t)| (p - t).abs()).sum())
}

/// Mean absolute pixel difference between two renders.
pub fn recon_loss(g_pred: &ImageGrid, g_true: &ImageGrid) -> Result<f64> {
    if !g_pred.same_shape(g_true) {
        return invalid("reconstruction loss on images of different shape");
    }
    let sum: f64 = g_pred
        .pixels()
        .iter()
        .zip(g_true.pixels())
        .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
        .sum();
    Ok(sum / g_pred.len() as f64)
}

/// Batch means of the individual loss terms (reconstruction unweighted).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub point: f64,
    pub pinball_lo: f64,
    pub pinball_hi: f64,
    pub recon: f64,
}

impl LossBreakdown {
    pub fn total(&self, recon_weight: f64) -> f64 {
        self.point + recon_weight * self.recon + self.pinball_lo + self.pinball_hi
    }

    pub fn is_finite(&self) -> bool {
        self.point.is_finite()
            && self.pinball_lo.is_finite()
            && self.pinball_hi.is_finite()
            && self.recon.is_finite()
    }

    fn add_scaled(&mut self, a: f64, o: &LossBreakdown) {
        self.point += a * o.point;
        self.pinball_lo += a * o.pinball_lo;
        self.pinball_hi += a * o.pinball_hi;
        self.recon += a * o.recon;
    }
}

/// Quantile levels `(alpha / 2, 1 - alpha / 2)`.
pub(crate) fn quantile_levels(alpha: f64) -> (f64, f64) {
    (alpha / 2.0, 1.0 - alpha / 2.0)
}

struct Objective<'a> {
    params: &'a EncoderParams,
    generator: &'a Generator,
    mask: &'a DimMask,
    alpha: f64,
    recon_weight: f64,
}

impl Objective<'_> {
    fn check(&self, batch_len: usize) -> Result<()> {
        if batch_len == 0 {
            return invalid("empty batch");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if self.recon_weight < 0.0 {
            return invalid("reconstruction weight must be nonnegative");
        }
        let dim = self.params.dim();
        if self.mask.dim() != dim || self.generator.dim != dim {
            return invalid("encoder, generator and mask disagree on latent dimension");
        }
        Ok(())
    }

    /// Loss terms for one sample, accumulating `scale * gradient` into `grad`
    /// when given.
    fn sample(&self, s: &Sample, grad: Option<(&mut EncoderParams, f64)>) -> Result<LossBreakdown> {
        let params = self.params;
        if s.x.len() != params.input_len() {
            return invalid("sample input does not match the encoder input width");
        }
        if s.z.dim() != params.dim() {
            return invalid("sample latent does not match the encoder dimension");
        }
        let input = network::encoder_input(&s.x);
        let acts = params.forward_cached(input);
        let out = &acts.out;
        let dim = params.dim();
        if !out
            .point
            .iter()
            .chain(out.q_lo.iter())
            .chain(out.q_hi.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::Numerical(alloc::string::String::from(
                "non-finite encoder activations",
            )));
        }
        let (beta_lo, beta_hi) = quantile_levels(self.alpha);

        let mut terms = LossBreakdown::default();
        let mut g_point = alloc::vec![0.0; dim];
        let mut g_lo = alloc::vec![0.0; dim];
        let mut g_hi = alloc::vec![0.0; dim];
        for ((g, &f), &z) in g_point.iter_mut().zip(out.point.iter()).zip(s.z.iter()) {
            terms.point += (f - z).abs();
            *g = if f >= z { 1.0 } else { -1.0 };
        }
        for d in self.mask.indices() {
            let z = s.z[d];
            terms.pinball_lo += pinball(out.q_lo[d], z, beta_lo);
            terms.pinball_hi += pinball(out.q_hi[d], z, beta_hi);
            g_lo[d] = pinball_slope(out.q_lo[d], z, beta_lo);
            g_hi[d] = pinball_slope(out.q_hi[d], z, beta_hi);
        }

        let target = self.generator.render_f64(&s.z)?;
        let want_recon_grad = grad.is_some() && self.recon_weight > 0.0;
        let (rendered, jac) = if want_recon_grad {
            let (v, j) = self.generator.render_with_jacobian(&out.point)?;
            (v, Some(j))
        } else {
            (self.generator.render_f64(&out.point)?, None)
        };
        let npix = rendered.len() as f64;
        terms.recon = rendered
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / npix;
        if !terms.is_finite() {
            return Err(Error::Numerical(alloc::string::String::from(
                "non-finite loss",
            )));
        }
        if let Some(jac) = jac {
            let w = self.recon_weight / npix;
            for (p, (a, b)) in rendered.iter().zip(&target).enumerate() {
                let sign = if a >= b { 1.0 } else { -1.0 };
                axpy(w * sign, &jac[p * dim..(p + 1) * dim], &mut g_point);
            }
        }

        if let Some((acc, scale)) = grad {
            backprop(
                params,
                &acts.pre,
                &acts.post,
                [&g_point, &g_lo, &g_hi],
                scale,
                acc,
            );
        }
        Ok(terms)
    }
}

fn backprop(
    params: &EncoderParams,
    pre: &[Vec<f64>],
    post: &[Vec<f64>],
    head_grads: [&Vec<f64>; 3],
    scale: f64,
    acc: &mut EncoderParams,
) {
    let features = post.last().expect("features");
    let mut delta = alloc::vec![0.0; features.len()];
    let heads = [&params.point, &params.lower, &params.upper];
    let acc_heads = [&mut acc.point, &mut acc.lower, &mut acc.upper];
    for ((head, acc_head), g) in heads.into_iter().zip(acc_heads).zip(head_grads) {
        let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
        axpy(1.0, &g, &mut acc_head.bias);
        for (fi, acc_row) in features
            .iter()
            .zip(acc_head.weights.chunks_exact_mut(head.outputs))
        {
            axpy(*fi, &g, acc_row);
        }
        for (di, row) in delta
            .iter_mut()
            .zip(head.weights.chunks_exact(head.outputs))
        {
            *di += row.iter().zip(&g).map(|(w, gj)| w * gj).sum::<f64>();
        }
    }

    for l in (0..params.trunk.len()).rev() {
        let layer = &params.trunk[l];
        for (di, z) in delta.iter_mut().zip(&pre[l]) {
            *di *= leaky_slope(*z);
        }
        let input = &post[l];
        let acc_layer = &mut acc.trunk[l];
        axpy(1.0, &delta, &mut acc_layer.bias);
        for (xi, acc_row) in input
            .iter()
            .zip(acc_layer.weights.chunks_exact_mut(layer.outputs))
        {
            if *xi != 0.0 {
                axpy(*xi, &delta, acc_row);
            }
        }
        if l > 0 {
            delta = layer
                .weights
                .chunks_exact(layer.outputs)
                .map(|row| row.iter().zip(&delta).map(|(w, d)| w * d).sum())
                .collect();
        }
    }
}

/// Batch-mean loss terms.
pub fn loss_terms<'a>(
    params: &EncoderParams,
    generator: &Generator,
    batch: impl IntoIterator<Item = &'a Sample>,
    mask: &DimMask,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let batch: Vec<&Sample> = batch.into_iter().collect();
    let obj = Objective {
        params,
        generator,
        mask,
        alpha: cfg.alpha,
        recon_weight: cfg.recon_weight,
    };
    obj.check(batch.len())?;
    let mut mean = LossBreakdown::default();
    let w = 1.0 / batch.len() as f64;
    for s in batch {
        mean.add_scaled(w, &obj.sample(s, None)?);
    }
    Ok(mean)
}

/// Mean over the batch of point loss + c * reconstruction + masked pinball sums.
pub fn total_loss<'a>(
    params: &EncoderParams,
    generator: &Generator,
    batch: impl IntoIterator<Item = &'a Sample>,
    mask: &DimMask,
    cfg: &TrainConfig,
) -> Result<f64> {
    Ok(loss_terms(params, generator, batch, mask, cfg)?.total(cfg.recon_weight))
}

/// Gradient of [`total_loss`] with respect to every encoder parameter.
///
/// At kinks of the absolute value, pinball and leaky-rectifier functions the
/// right-hand derivative is used. Samples are reduced in batch order.
pub fn grad<'a>(
    params: &EncoderParams,
    generator: &Generator,
    batch: impl IntoIterator<Item = &'a Sample>,
    mask: &DimMask,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, LossBreakdown)> {
    let batch: Vec<&Sample> = batch.into_iter().collect();
    let obj = Objective {
        params,
        generator,
        mask,
        alpha: cfg.alpha,
        recon_weight: cfg.recon_weight,
    };
    obj.check(batch.len())?;
    let mut acc = params.zeros_like();
    let mut mean = LossBreakdown::default();
    let w = 1.0 / batch.len() as f64;
    for s in batch {
        let terms = obj.sample(s, Some((&mut acc, w)))?;
        mean.add_scaled(w, &terms);
    }
    if !acc.is_finite() {
        return Err(Error::Numerical(alloc::string::String::from(
            "non-finite gradient",
        )));
    }
    Ok((acc, mean))
}
