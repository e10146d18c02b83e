//! Procedural renderer with one visual factor per latent coordinate.
//!
//! A soft-edged disc on a flat background, with horizontal stripes across the
//! disc. Each raw latent coordinate goes through a logistic squash and is then
//! mapped affinely into the valid range of its factor:
//!
//! | dim | factor            | range          |
//! |-----|-------------------|----------------|
//! | 0   | center x          | 0.25 ..= 0.75  |
//! | 1   | center y          | 0.25 ..= 0.75  |
//! | 2   | radius            | 0.08 ..= 0.25  |
//! | 3   | disc intensity    | 0.55 ..= 1.00  |
//! | 4   | background        | 0.00 ..= 0.40  |
//! | 5   | edge softness     | 0.02 ..= 0.12  |
//! | 6   | stripe phase      | 0 ..= pi       |
//! | 7   | stripe contrast   | 0.00 ..= 0.50  |
//!
//! Coordinates beyond the eighth have no visual effect. They model the
//! irrelevant (non-disentangled) dimensions of a larger latent space.
//!
//! The disc edge uses a clamped smoothstep, so the radius and center factors
//! only touch pixels inside a bounded annulus around the edge.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::latent::{ImageGrid, LatentVector};
use crate::error::{invalid, Result};

/// Number of latent coordinates with a visual effect.
pub const VISUAL_FACTORS: usize = 8;

/// Stripe frequency in cycles per image height.
const STRIPE_CYCLES: f64 = 3.0;

/// `(offset, span)` of each factor's affine range.
const FACTOR_RANGES: [(f64, f64); VISUAL_FACTORS] = [
    (0.25, 0.5),
    (0.25, 0.5),
    (0.08, 0.17),
    (0.55, 0.45),
    (0.0, 0.4),
    (0.02, 0.10),
    (0.0, PI),
    (0.0, 0.5),
];

pub const FACTOR_NAMES: [&str; VISUAL_FACTORS] = [
    "center_x",
    "center_y",
    "radius",
    "disc_intensity",
    "background",
    "edge_softness",
    "stripe_phase",
    "stripe_contrast",
];

pub fn factor_name(d: usize) -> &'static str {
    FACTOR_NAMES.get(d).copied().unwrap_or("nuisance")
}

/// The deterministic generator `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Generator {
    pub dim: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for Generator {
    fn default() -> Self {
        Self {
            dim: 8,
            height: 32,
            width: 32,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

struct Factors {
    values: [f64; VISUAL_FACTORS],
    /// d factor / d raw coordinate
    slopes: [f64; VISUAL_FACTORS],
}

impl Factors {
    fn from_latent(z: &[f64]) -> Self {
        let mut values = [0.0; VISUAL_FACTORS];
        let mut slopes = [0.0; VISUAL_FACTORS];
        for d in 0..VISUAL_FACTORS {
            let s = sigmoid(z[d]);
            let (offset, span) = FACTOR_RANGES[d];
            values[d] = offset + span * s;
            slopes[d] = span * s * (1.0 - s);
        }
        Self { values, slopes }
    }
}

impl Generator {
    pub fn new(dim: usize, height: usize, width: usize) -> Result<Self> {
        if dim < VISUAL_FACTORS {
            return invalid(alloc::format!(
                "latent dimension must be at least {VISUAL_FACTORS}, got {dim}"
            ));
        }
        if height == 0 || width == 0 {
            return invalid("render size must be positive");
        }
        Ok(Self { dim, height, width })
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return invalid(alloc::format!(
                "latent has length {}, generator expects {}",
                z.len(),
                self.dim
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return invalid("latent has non-finite entries");
        }
        Ok(())
    }

    /// `G(z)` as a single-channel image.
    pub fn render(&self, z: &LatentVector) -> Result<ImageGrid> {
        let values = self.render_f64(z)?;
        let pixels = values.into_iter().map(|v| v as f32).collect();
        Ok(ImageGrid::from_raw(self.height, self.width, 1, pixels))
    }

    /// `G(z)` at full precision, row-major.
    pub fn render_f64(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let mut out = Vec::with_capacity(self.pixel_count());
        self.shade(z, |_, value, _| out.push(value));
        Ok(out)
    }

    /// `G(z)` together with its Jacobian.
    ///
    /// The Jacobian is returned pixel-major: entry `p * dim + d` holds
    /// `d G(z)_p / d z_d`. Where the edge smoothstep is clamped the derivative
    /// is taken as zero.
    pub fn render_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(z)?;
        let dim = self.dim;
        let mut values = Vec::with_capacity(self.pixel_count());
        let mut jac = alloc::vec![0.0; self.pixel_count() * dim];
        self.shade(z, |p, value, grad| {
            values.push(value);
            jac[p * dim..p * dim + VISUAL_FACTORS].copy_from_slice(grad);
        });
        Ok((values, jac))
    }

    fn shade(&self, z: &[f64], mut emit: impl FnMut(usize, f64, &[f64; VISUAL_FACTORS])) {
        let f = Factors::from_latent(z);
        let [cx, cy, radius, intensity, background, softness, phase, contrast] = f.values;
        let mut grad = [0.0; VISUAL_FACTORS];
        for row in 0..self.height {
            let v = (row as f64 + 0.5) / self.height as f64;
            let angle = 2.0 * PI * STRIPE_CYCLES * v + phase;
            let stripe = 0.5 + 0.5 * libm::sin(angle);
            let dstripe_dphase = 0.5 * libm::cos(angle);
            let disc = intensity * (1.0 - contrast * stripe);
            for col in 0..self.width {
                let u = (col as f64 + 0.5) / self.width as f64;
                let dx = u - cx;
                let dy = v - cy;
                let dist = libm::sqrt(dx * dx + dy * dy);
                let t_raw = (radius - dist) / softness + 0.5;
                let (t, inside_ramp) = if t_raw <= 0.0 {
                    (0.0, false)
                } else if t_raw >= 1.0 {
                    (1.0, false)
                } else {
                    (t_raw, true)
                };
                let m = t * t * (3.0 - 2.0 * t);
                let value = background + m * (disc - background);

                // d value / d factor
                let dv_dm = disc - background;
                let dm_dt = if inside_ramp {
                    6.0 * t * (1.0 - t)
                } else {
                    0.0
                };
                let dv_dt = dv_dm * dm_dt;
                let (ddist_dcx, ddist_dcy) = if dist > 0.0 {
                    (-dx / dist, -dy / dist)
                } else {
                    (0.0, 0.0)
                };
                let dt_ddist = -1.0 / softness;
                grad[0] = dv_dt * dt_ddist * ddist_dcx;
                grad[1] = dv_dt * dt_ddist * ddist_dcy;
                grad[2] = dv_dt / softness;
                grad[3] = m * (1.0 - contrast * stripe);
                grad[4] = 1.0 - m;
                grad[5] = dv_dt * (-(radius - dist) / (softness * softness));
                grad[6] = -m * intensity * contrast * dstripe_dphase;
                grad[7] = -m * intensity * stripe;
                for (g, slope) in grad.iter_mut().zip(f.slopes.iter()) {
                    *g *= slope;
                }
                emit(row * self.width + col, value.clamp(0.0, 1.0), &grad);
            }
        }
    }
}
