use alloc::vec::Vec;

use crate::encoder::{DimMask, EncoderOutput, EncoderParams};
use crate::error::{invalid, Result};
use crate::synth::{LatentVector, Sample};

/// Closed per-dimension intervals `[lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub lo: LatentVector,
    pub hi: LatentVector,
}

impl IntervalSet {
    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn contains(&self, d: usize, value: f64) -> bool {
        self.lo[d] <= value && value <= self.hi[d]
    }
}

/// Endpoints of the scaled interval for one dimension.
///
/// The gaps to the quantiles go through a positive part, so crossed
/// quantiles collapse that side onto the point prediction. At `lambda == 1`
/// an uncrossed side is the raw quantile itself, bit for bit.
#[inline]
pub(crate) fn scaled_endpoints(point: f64, q_lo: f64, q_hi: f64, lambda: f64) -> (f64, f64) {
    if lambda == 1.0 {
        return (q_lo.min(point), q_hi.max(point));
    }
    let below = (point - q_lo).max(0.0);
    let above = (q_hi - point).max(0.0);
    (point - lambda * below, point + lambda * above)
}

#[inline]
pub(crate) fn covers(point: f64, q_lo: f64, q_hi: f64, lambda: f64, z: f64) -> bool {
    let (lo, hi) = scaled_endpoints(point, q_lo, q_hi, lambda);
    lo <= z && z <= hi
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(alloc::format!(
            "lambda must be a finite nonnegative number, got {lambda}"
        ));
    }
    Ok(())
}

/// The interval family indexed by `lambda >= 0`.
pub fn interval_at(out: &EncoderOutput, lambda: f64) -> Result<IntervalSet> {
    check_lambda(lambda)?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..out.dim())
        .map(|d| scaled_endpoints(out.point[d], out.q_lo[d], out.q_hi[d], lambda))
        .unzip();
    Ok(IntervalSet {
        lo: LatentVector(lo),
        hi: LatentVector(hi),
    })
}

/// Calibrated lower and upper quantiles at the selected scale.
pub fn calibrated_quantiles(
    out: &EncoderOutput,
    lambda_hat: f64,
) -> Result<(LatentVector, LatentVector)> {
    let set = interval_at(out, lambda_hat)?;
    Ok((set.lo, set.hi))
}

fn uncovered_count(set: &IntervalSet, z: &LatentVector, mask: &DimMask) -> Result<usize> {
    if set.dim() != z.dim() || mask.dim() != z.dim() {
        return invalid("interval set, latent and mask lengths disagree");
    }
    if mask.count() == 0 {
        return invalid("empty dimension mask");
    }
    Ok(mask.indices().filter(|&d| !set.contains(d, z[d])).count())
}

/// Fraction of relevant dimensions whose true value falls outside its interval.
/// A value on an endpoint counts as covered.
pub fn coverage_loss(intervals: &IntervalSet, z: &LatentVector, mask: &DimMask) -> Result<f64> {
    Ok(uncovered_count(intervals, z, mask)? as f64 / mask.count() as f64)
}

/// Encoder output paired with the true latent.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub out: EncoderOutput,
    pub z: LatentVector,
}

/// Run the encoder over `samples`.
pub fn predict(params: &EncoderParams, samples: &[Sample]) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prediction {
                out: params.forward(&s.x)?,
                z: s.z.clone(),
            })
        })
        .collect()
}

/// Mean coverage loss at `lambda`: total uncovered relevant dimensions over
/// `n * |mask|`.
pub fn mean_coverage_loss(predictions: &[Prediction], lambda: f64, mask: &DimMask) -> Result<f64> {
    check_lambda(lambda)?;
    if predictions.is_empty() {
        return invalid("no predictions to evaluate");
    }
    let mut uncovered = 0usize;
    for p in predictions {
        uncovered += uncovered_count(&interval_at(&p.out, lambda)?, &p.z, mask)?;
    }
    Ok(uncovered as f64 / (predictions.len() * mask.count()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn out(point: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> EncoderOutput {
        EncoderOutput::new(LatentVector(point), LatentVector(lo), LatentVector(hi)).unwrap()
    }

    #[test]
    fn zero_lambda_degenerates_to_the_point() {
        let o = out(vec![0.5, -1.0], vec![0.0, -2.0], vec![1.0, 3.0]);
        let s = interval_at(&o, 0.0).unwrap();
        assert_eq!(s.lo, o.point);
        assert_eq!(s.hi, o.point);
    }

    #[test]
    fn unit_lambda_recovers_ordered_quantiles() {
        let o = out(vec![0.5, -1.0], vec![0.0, -2.0], vec![1.0, 3.0]);
        let s = interval_at(&o, 1.0).unwrap();
        assert_eq!(s.lo, o.q_lo);
        assert_eq!(s.hi, o.q_hi);
    }

    #[test]
    fn crossed_quantiles_clamp_to_the_point() {
        let o = out(vec![0.0], vec![0.4], vec![-0.3]);
        for lambda in [0.0, 1.0, 7.5] {
            let s = interval_at(&o, lambda).unwrap();
            assert_eq!(s.lo[0], 0.0);
            assert_eq!(s.hi[0], 0.0);
        }
        assert!(interval_at(&o, -0.1).is_err());
    }

    #[test]
    fn calibrated_quantiles_arithmetic() {
        let o = out(vec![0.0; 3], vec![-1.0; 3], vec![1.0; 3]);
        let (lo, hi) = calibrated_quantiles(&o, 2.0).unwrap();
        assert_eq!(lo.0, vec![-2.0; 3]);
        assert_eq!(hi.0, vec![2.0; 3]);
        let (lo, hi) = calibrated_quantiles(&o, 1.0).unwrap();
        assert_eq!((lo, hi), (o.q_lo.clone(), o.q_hi.clone()));
    }

    #[test]
    fn coverage_counting() {
        let set = IntervalSet {
            lo: LatentVector(vec![0.0; 4]),
            hi: LatentVector(vec![1.0; 4]),
        };
        let mask = DimMask::all(4);
        assert_eq!(
            coverage_loss(&set, &LatentVector(vec![0.5; 4]), &mask).unwrap(),
            0.0
        );
        assert_eq!(
            coverage_loss(&set, &LatentVector(vec![0.5, 0.2, 1.5, 0.9]), &mask).unwrap(),
            0.25
        );
        // endpoints are inside
        assert_eq!(
            coverage_loss(&set, &LatentVector(vec![0.0, 1.0, 0.0, 1.0]), &mask).unwrap(),
            0.0
        );
        // unmasked dims are ignored
        let partial = DimMask::new(vec![true, true, false, false]).unwrap();
        assert_eq!(
            coverage_loss(&set, &LatentVector(vec![0.5, 2.0, 9.0, 9.0]), &partial).unwrap(),
            0.5
        );
        assert!(DimMask::new(vec![false; 4]).is_err());
    }
}
