//! Endpoint propagation: render the generator at the point prediction with a
//! single coordinate moved to a calibrated interval endpoint.

use alloc::vec::Vec;

use crate::encoder::{DimMask, EncoderOutput, EncoderParams};
use crate::error::{invalid, Result};
use crate::rcps::interval_at;
use crate::synth::{Generator, ImageGrid, LatentVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Lower,
    Upper,
}

impl Endpoint {
    pub fn name(&self) -> &'static str {
        match self {
            Endpoint::Lower => "lower",
            Endpoint::Upper => "upper",
        }
    }
}

/// Copy of the point prediction with coordinate `d` replaced by the
/// calibrated lower or upper endpoint.
pub fn endpoint_latent(
    out: &EncoderOutput,
    lambda_hat: f64,
    d: usize,
    which: Endpoint,
) -> Result<LatentVector> {
    if d >= out.dim() {
        return invalid(alloc::format!(
            "dimension {d} out of range for {} latents",
            out.dim()
        ));
    }
    let set = interval_at(out, lambda_hat)?;
    let mut z = out.point.clone();
    z[d] = match which {
        Endpoint::Lower => set.lo[d],
        Endpoint::Upper => set.hi[d],
    };
    Ok(z)
}

/// Renders for one dimension's interval endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointPanel {
    pub dim: usize,
    pub lower_value: f64,
    pub upper_value: f64,
    pub lower: ImageGrid,
    pub upper: ImageGrid,
    pub point: ImageGrid,
}

/// Panels for an input image, one per requested dimension.
pub fn endpoint_panels(
    params: &EncoderParams,
    generator: &Generator,
    lambda_hat: f64,
    x: &ImageGrid,
    dims: &[usize],
    mask: &DimMask,
) -> Result<(EncoderOutput, Vec<EndpointPanel>)> {
    let out = params.forward(x)?;
    let point = generator.render(&out.point)?;
    let mut panels = Vec::with_capacity(dims.len());
    for &d in dims {
        if !mask.is_set(d) {
            return invalid(alloc::format!("dimension {d} is not a relevant dimension"));
        }
        let lo = endpoint_latent(&out, lambda_hat, d, Endpoint::Lower)?;
        let hi = endpoint_latent(&out, lambda_hat, d, Endpoint::Upper)?;
        panels.push(EndpointPanel {
            dim: d,
            lower_value: lo[d],
            upper_value: hi[d],
            lower: generator.render(&lo)?,
            upper: generator.render(&hi)?,
            point: point.clone(),
        });
    }
    Ok((out, panels))
}

/// One row of interval plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub dim: usize,
    pub point: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub q_cal_lo: f64,
    pub q_cal_hi: f64,
    pub z_true: f64,
    pub covered: bool,
}

/// Raw and calibrated interval edges for each relevant dimension.
pub fn interval_rows(
    out: &EncoderOutput,
    lambda_hat: f64,
    z_true: &LatentVector,
    mask: &DimMask,
) -> Result<Vec<IntervalRow>> {
    if z_true.dim() != out.dim() || mask.dim() != out.dim() {
        return invalid("encoder output, latent and mask dimensions disagree");
    }
    let cal = interval_at(out, lambda_hat)?;
    Ok(mask
        .indices()
        .map(|d| IntervalRow {
            dim: d,
            point: out.point[d],
            q_lo: out.q_lo[d],
            q_hi: out.q_hi[d],
            q_cal_lo: cal.lo[d],
            q_cal_hi: cal.hi[d],
            z_true: z_true[d],
            covered: cal.contains(d, z_true[d]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcps::coverage_loss;
    use alloc::vec;

    fn out() -> EncoderOutput {
        EncoderOutput::new(
            LatentVector(vec![0.2, -0.4, 1.0]),
            LatentVector(vec![-0.3, -0.4, 1.5]),
            LatentVector(vec![0.9, 0.1, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn single_coordinate_edits() {
        let o = out();
        for d in 0..3 {
            for which in [Endpoint::Lower, Endpoint::Upper] {
                let z = endpoint_latent(&o, 1.5, d, which).unwrap();
                for k in 0..3 {
                    if k != d {
                        assert_eq!(z[k], o.point[k]);
                    }
                }
            }
            let lo = endpoint_latent(&o, 1.5, d, Endpoint::Lower).unwrap();
            let hi = endpoint_latent(&o, 1.5, d, Endpoint::Upper).unwrap();
            assert!(lo[d] <= o.point[d] && o.point[d] <= hi[d]);
        }
        // dim 1 has a zero lower gap, so the lower endpoint is the point itself
        assert_eq!(
            endpoint_latent(&o, 1.5, 1, Endpoint::Lower).unwrap(),
            o.point
        );
        assert_eq!(
            endpoint_latent(&o, 0.0, 0, Endpoint::Upper).unwrap(),
            o.point
        );
        assert!(endpoint_latent(&o, 1.0, 3, Endpoint::Upper).is_err());
    }

    #[test]
    fn rows_agree_with_coverage_loss() {
        let o = out();
        let z = LatentVector(vec![0.8, -0.9, 1.9]);
        let mask = DimMask::all(3);
        let rows = interval_rows(&o, 1.0, &z, &mask).unwrap();
        let uncovered = rows.iter().filter(|r| !r.covered).count() as f64 / 3.0;
        let set = interval_at(&o, 1.0).unwrap();
        assert_eq!(uncovered, coverage_loss(&set, &z, &mask).unwrap());
        // lambda 1 with the quantiles straddling f leaves dim 0 unchanged
        assert_eq!(
            (rows[0].q_cal_lo, rows[0].q_cal_hi),
            (rows[0].q_lo, rows[0].q_hi)
        );
    }
}
