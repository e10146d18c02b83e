//! Risk curves over a lambda grid and selection of the calibrated scale.

use alloc::vec::Vec;

use super::bounds::BoundKind;
use super::interval::{covers, predict, Prediction};
use crate::encoder::{DimMask, EncoderParams};
use crate::error::{invalid, Result};
use crate::synth::Sample;

/// Target risk level `alpha` and failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSpec {
    pub alpha: f64,
    pub delta: f64,
}

impl Default for RiskSpec {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            delta: 0.1,
        }
    }
}

impl RiskSpec {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        let spec = Self { alpha, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.alpha) || !open(self.delta) {
            return invalid(alloc::format!(
                "alpha {} and delta {} must lie in (0, 1)",
                self.alpha,
                self.delta
            ));
        }
        Ok(())
    }
}

/// Strictly increasing candidate scales starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid(Vec<f64>);

impl Default for LambdaGrid {
    /// 1000 evenly spaced points on `[0, 10]`.
    fn default() -> Self {
        Self::uniform(10.0, 1000).expect("default grid is valid")
    }
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return invalid("lambda grid must start at 0");
        }
        if values
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(core::cmp::Ordering::Greater))
            || values.iter().any(|v| !v.is_finite())
        {
            return invalid("lambda grid must be finite and strictly increasing");
        }
        Ok(Self(values))
    }

    /// `count` evenly spaced points on `[0, max]`.
    pub fn uniform(max: f64, count: usize) -> Result<Self> {
        if count < 2 || max.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater) {
            return invalid("uniform grid needs a positive maximum and at least two points");
        }
        let last = (count - 1) as f64;
        Self::new((0..count).map(|k| max * k as f64 / last).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("grid is nonempty")
    }
}

/// Mean coverage loss at every grid point.
///
/// For each relevant `(sample, dim)` pair the first grid index at which the
/// interval covers the truth is found by bisection; coverage is monotone in
/// lambda, so the curve is assembled from a histogram of those indices. The
/// result equals direct evaluation at each grid point exactly.
pub fn risk_curve_from(
    predictions: &[Prediction],
    mask: &DimMask,
    grid: &LambdaGrid,
) -> Result<Vec<f64>> {
    if predictions.is_empty() {
        return invalid("calibration set is empty");
    }
    let m = mask.count();
    let lambdas = grid.values();
    // first_cover[k] = number of pairs first covered at grid index k; index
    // len() collects pairs never covered on the grid
    let mut first_cover = alloc::vec![0usize; lambdas.len() + 1];
    for p in predictions {
        if p.out.dim() != mask.dim() || p.z.dim() != mask.dim() {
            return invalid("prediction and mask dimensions disagree");
        }
        for d in mask.indices() {
            let (f, lo, hi, z) = (p.out.point[d], p.out.q_lo[d], p.out.q_hi[d], p.z[d]);
            let k = lambdas.partition_point(|&lambda| !covers(f, lo, hi, lambda, z));
            first_cover[k] += 1;
        }
    }
    let denom = (predictions.len() * m) as f64;
    let mut uncovered = predictions.len() * m;
    Ok(first_cover[..lambdas.len()]
        .iter()
        .map(|&c| {
            uncovered -= c;
            uncovered as f64 / denom
        })
        .collect())
}

/// Encode `calib` and compute its risk curve.
pub fn risk_curve(
    params: &EncoderParams,
    calib: &[Sample],
    mask: &DimMask,
    grid: &LambdaGrid,
) -> Result<Vec<f64>> {
    if calib.is_empty() {
        return invalid("calibration set is empty");
    }
    risk_curve_from(&predict(params, calib)?, mask, grid)
}

/// Upper confidence bound at every grid point. Consecutive equal risks reuse
/// the previous bound.
pub fn ucb_curve(risks: &[f64], n: usize, spec: &RiskSpec, bound: BoundKind) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(risks.len());
    for (k, &r) in risks.iter().enumerate() {
        let u = if k > 0 && risks[k - 1] == r {
            out[k - 1]
        } else {
            bound.ucb(r, n, spec.delta)?
        };
        out.push(u);
    }
    Ok(out)
}

/// Index of the smallest grid point such that every UCB from there to the
/// end of the grid is at most `alpha`; `None` when even the last fails.
pub fn select_index(ucbs: &[f64], alpha: f64) -> Option<usize> {
    let mut chosen = None;
    for k in (0..ucbs.len()).rev() {
        if ucbs[k] <= alpha {
            chosen = Some(k);
        } else {
            break;
        }
    }
    chosen
}

/// Calibrated scale, or `None` when no grid point controls the risk.
pub fn select_lambda(
    grid: &LambdaGrid,
    risks: &[f64],
    n: usize,
    spec: &RiskSpec,
    bound: BoundKind,
) -> Result<Option<f64>> {
    spec.validate()?;
    if risks.len() != grid.len() {
        return invalid("risk curve length does not match the grid");
    }
    // Scan from the top, stopping at the first violation.
    let mut chosen = None;
    for k in (0..grid.len()).rev() {
        if bound.ucb(risks[k], n, spec.delta)? <= spec.alpha {
            chosen = Some(grid.values()[k]);
        } else {
            break;
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// `None` means infeasible: no grid point keeps the UCB below alpha.
    pub lambda_hat: Option<f64>,
    pub grid: LambdaGrid,
    pub risk_curve: Vec<f64>,
    pub ucb_curve: Vec<f64>,
    pub n: usize,
    pub spec: RiskSpec,
    pub bound_kind: BoundKind,
}

impl CalibrationResult {
    pub fn is_feasible(&self) -> bool {
        self.lambda_hat.is_some()
    }
}

/// Full calibration on precomputed predictions.
pub fn calibrate_predictions(
    predictions: &[Prediction],
    mask: &DimMask,
    grid: &LambdaGrid,
    spec: &RiskSpec,
    bound: BoundKind,
) -> Result<CalibrationResult> {
    spec.validate()?;
    let risks = risk_curve_from(predictions, mask, grid)?;
    let n = predictions.len();
    let ucbs = ucb_curve(&risks, n, spec, bound)?;
    let lambda_hat = select_index(&ucbs, spec.alpha).map(|k| grid.values()[k]);
    Ok(CalibrationResult {
        lambda_hat,
        grid: grid.clone(),
        risk_curve: risks,
        ucb_curve: ucbs,
        n,
        spec: *spec,
        bound_kind: bound,
    })
}

/// Encode the calibration samples and calibrate.
pub fn calibrate(
    params: &EncoderParams,
    calib: &[Sample],
    mask: &DimMask,
    grid: &LambdaGrid,
    spec: &RiskSpec,
    bound: BoundKind,
) -> Result<CalibrationResult> {
    if calib.is_empty() {
        return invalid("calibration set is empty");
    }
    calibrate_predictions(&predict(params, calib)?, mask, grid, spec, bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderOutput;
    use crate::rcps::interval::mean_coverage_loss;
    use crate::synth::LatentVector;
    use alloc::vec;

    fn pred(f: &[f64], lo: &[f64], hi: &[f64], z: &[f64]) -> Prediction {
        Prediction {
            out: EncoderOutput::new(
                LatentVector(f.to_vec()),
                LatentVector(lo.to_vec()),
                LatentVector(hi.to_vec()),
            )
            .unwrap(),
            z: LatentVector(z.to_vec()),
        }
    }

    #[test]
    fn select_from_definition() {
        let ucbs = [0.5, 0.2, 0.12, 0.09, 0.05];
        assert_eq!(select_index(&ucbs, 0.1), Some(3));
        assert_eq!(select_index(&[0.5, 0.4, 0.3], 0.1), None);
        // the dip at index 1 is not reachable past the violation at index 2
        assert_eq!(select_index(&[0.5, 0.08, 0.12, 0.09, 0.05], 0.1), Some(3));
        assert_eq!(select_index(&[0.05, 0.05], 0.1), Some(0));
    }

    #[test]
    fn hand_counted_risk_curve() {
        // 3 samples x 2 dims, f = 0, quantile gaps 1 on both sides, grid {0, 0.5, 1, 2}.
        // |z| per pair: s0 (0.3, 1.5), s1 (0.0, 0.8), s2 (-0.6, -2.5)
        // covered when lambda >= |z|:
        //  lambda 0:   covered {s1d0}                  -> 5 uncovered
        //  lambda 0.5: + s0d0                          -> 4
        //  lambda 1:   + s1d1, s2d0                    -> 2
        //  lambda 2:   + s0d1                          -> 1 (s2d1 never)
        let g = LambdaGrid::new(vec![0.0, 0.5, 1.0, 2.0]).unwrap();
        let one = [1.0, 1.0];
        let neg = [-1.0, -1.0];
        let zero = [0.0, 0.0];
        let preds = [
            pred(&zero, &neg, &one, &[0.3, 1.5]),
            pred(&zero, &neg, &one, &[0.0, 0.8]),
            pred(&zero, &neg, &one, &[-0.6, -2.5]),
        ];
        let mask = DimMask::all(2);
        let curve = risk_curve_from(&preds, &mask, &g).unwrap();
        assert_eq!(curve, vec![5.0 / 6.0, 4.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
        for (k, &lambda) in g.values().iter().enumerate() {
            assert_eq!(curve[k], mean_coverage_loss(&preds, lambda, &mask).unwrap());
        }
        assert!(risk_curve_from(&[], &mask, &g).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::new(vec![0.1, 1.0]).is_err());
        assert!(LambdaGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        let d = LambdaGrid::default();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.values()[0], 0.0);
        assert_eq!(d.max(), 10.0);
    }

    #[test]
    fn select_lambda_agrees_with_full_curve() {
        let grid = LambdaGrid::uniform(2.0, 5).unwrap();
        let risks = [0.9, 0.3, 0.08, 0.03, 0.0];
        let spec = RiskSpec::default();
        for bound in [BoundKind::Hoeffding, BoundKind::HoeffdingBentkus] {
            let ucbs = ucb_curve(&risks, 500, &spec, bound).unwrap();
            let via_index = select_index(&ucbs, spec.alpha).map(|k| grid.values()[k]);
            assert_eq!(
                select_lambda(&grid, &risks, 500, &spec, bound).unwrap(),
                via_index
            );
        }
    }
}
